"""Command-line front end: ``pondsl run|sweep|schedule|order|trace``.

Results go to standard output as CSV.  Exit status is 0 on success, 1 for a
bad configuration and 2 when a run fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from .config import ConfigError, load_settings, parse_overrides
from .engine.sim import Simulator, run
from .engine.sweep import SweepRow, grid, sweep
from .flowcontrol import build_gated_cycle
from .model import NetworkConfig
from .ordering import best_order
from .schedule import ScheduleError, single_cpe_timeline

COLUMNS = ("protocol", "dba", "load", "hurst", "seed", "max_cpe_bytes", "max_onu_bytes",
           "loss_rate", "mean_dsl_delay_s", "mean_pon_delay_s", "packets")

# named flags and the config keys they set
RUN_FLAGS = ("protocol", "dba", "load", "hurst", "seed", "packets")
SWEEP_FLAGS = ("loads", "hursts", "protocols", "dbas", "jobs")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def fmt(x) -> str:
    """Six significant digits; ``nan`` for missing values."""
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "nan"
    return f"{float(x):.6g}"


def output_row(row: SweepRow) -> list:
    m = row.metrics
    head = [row.protocol, row.dba, fmt(row.load), fmt(row.hurst), str(row.seed)]
    if m is None:
        return head + ["nan"] * 6
    return head + [str(math.ceil(m.max_cpe_occupancy / 8)), str(math.ceil(m.max_onu_occupancy / 8)),
                   fmt(m.loss_rate), fmt(m.mean_dsl_delay), fmt(m.mean_pon_delay),
                   str(m.packets_delivered)]


def write_csv(rows, out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(output_row(r))


def gnuplot_script(csv_path: str, rows) -> str:
    """Plot script for the four headline metrics against load."""
    groups = []
    for r in rows:
        key = (r.protocol, r.dba, r.hurst)
        if key not in groups:
            groups.append(key)
    panels = (("max_cpe_bytes", 6, "Max CPE occupancy (bytes)", True),
              ("max_onu_bytes", 7, "Max ONU occupancy (bytes)", True),
              ("mean_dsl_delay_s", 9, "Mean DSL delay (s)", True),
              ("mean_pon_delay_s", 10, "Mean PON delay (s)", True))
    lines = [
        "# gnuplot script; run with: gnuplot -p <this file>",
        'set datafile separator ","',
        "set key outside right",
        "set xlabel 'Load'",
        "set multiplot layout 2,2",
    ]
    for _, col, label, log in panels:
        lines.append(f"set ylabel '{label}'")
        lines.append("set logscale y" if log else "unset logscale y")
        parts = []
        for proto, dba, h in groups:
            sel = f'(strcol(1) eq "{proto}" && strcol(2) eq "{dba}" && abs($4 - {h!r}) < 1e-9)'
            parts.append(f"'{csv_path}' every ::1 using 3:({sel} ? ${col} : NaN) "
                         f"with linespoints title '{proto} {dba} H={h:g}'")
        lines.append("plot " + ", \\\n     ".join(parts))
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def _overrides(args, flags) -> dict:
    out = parse_overrides(args.set)
    for name in flags:
        v = getattr(args, name, None)
        if v is not None:
            out[name] = str(v)
    return out


def _emit(args, rows) -> None:
    if args.output:
        with open(args.output, "w", newline="") as f:
            write_csv(rows, f)
    else:
        write_csv(rows, sys.stdout)
    if args.gnuplot:
        Path(args.gnuplot).write_text(gnuplot_script(args.output, rows))


def _check_gnuplot(args) -> None:
    if args.gnuplot and not args.output:
        raise ConfigError("--gnuplot", "needs --output so the script can reference the CSV")


def cmd_run(args) -> int:
    _check_gnuplot(args)
    st = load_settings(args.config, _overrides(args, RUN_FLAGS))
    rc = st.run
    try:
        m = run(rc)
    except ConfigError:
        raise
    except Exception as exc:
        print(f"pondsl: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    tr = rc.traffic
    _emit(args, [SweepRow(rc.protocol, rc.dba, tr.load, tr.hurst, tr.seed, m)])
    return 0


def cmd_sweep(args) -> int:
    _check_gnuplot(args)
    st = load_settings(args.config, _overrides(args, RUN_FLAGS + SWEEP_FLAGS))
    rc = st.run
    loads = st.loads or (rc.traffic.load,)
    hursts = st.hursts or (rc.traffic.hurst,)
    protocols = st.protocols or (rc.protocol,)
    dbas = st.dbas or (rc.dba,)
    for cfg in grid(rc, loads, hursts, protocols, dbas):  # bad axes are config errors
        cfg.check()
    rows = sweep(rc, loads, hursts, protocols, dbas, jobs=st.jobs)
    _emit(args, rows)
    failed = [r for r in rows if r.error]
    for r in failed:
        print(f"pondsl: row {r.protocol},{r.dba},{r.load:g},{r.hurst:g} failed: {r.error}",
              file=sys.stderr)
    return 2 if failed else 0


def _ns(t: Fraction) -> str:
    return f"{float(t * 10**9):.3f}"


def _network(args, E: int) -> NetworkConfig:
    ov = parse_overrides(args.set)
    if "E" not in ov:
        ov["E"] = str(E)
    net = load_settings(args.config, ov).run.net
    if net.E != E:
        raise ConfigError("E", f"config has E={net.E} but {E} grants were given")
    return net


def cmd_schedule(args) -> int:
    grants = [int(g) for g in args.grants.split(",") if g.strip()]
    if not grants:
        raise ConfigError("--grants", "need at least one grant")
    net = _network(args, len(grants))
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    if len(grants) == 1:
        tl = single_cpe_timeline(net, 0, grants[0])
        print(f"# single CPE, G = {grants[0]} bits, times in ns from the cycle origin")
        names = ("sigma", "alpha", "omega", "mu", "beta", "T")
        vals = (tl.sigma_c, tl.alpha_c, tl.omega_c, tl.mu_c, tl.beta_c, tl.T)
        for n, v in zip(names, vals):
            print(f"#   {n:<6} {_ns(v)}")
        w.writerow(names)
        w.writerow([_ns(v) for v in vals])
        sys.stdout.write(out.getvalue())
        return 0
    mode = "seg" if args.mode == "seg" else "mux"
    sched, _, order = build_gated_cycle(mode, net, grants, ptm=False)
    print(f"# {sched.mode} cycle, E = {net.E}, times in ns from the cycle origin")
    if mode == "seg":
        if order != sorted(order):
            print(f"# grants are served in ascending size: CPE order {' '.join(map(str, order))}")
        else:
            print("# grants already ascending, served in the order given")
    print(f"#   ONU start {_ns(sched.onu_start)}   ONU end {_ns(sched.onu_end)}")
    w.writerow(("cpe", "grant_bits", "cpe_start_ns", "sub_window_start_ns", "service_rank"))
    rank = {c: k for k, c in enumerate(order)}
    for c, g in enumerate(grants):
        sub = _ns(sched.sub_window_starts[c]) if sched.sub_window_starts else ""
        w.writerow((c, g, _ns(sched.cpe_starts[c]), sub, rank[c]))
    sys.stdout.write(out.getvalue())
    return 0


def cmd_order(args) -> int:
    ov = parse_overrides(args.set)
    ov.setdefault("E", "2")
    net = load_settings(args.config, ov).run.net
    d = best_order(net, args.g1, args.g2, args.delta1, args.delta2)
    print(f"# thresholds G1_th1 = {float(d.G1_th1):.1f} bits, G1_th2 = {float(d.G1_th2):.1f} bits")
    print(f"# T_12 = {_ns(d.T_12)} ns, T_21 = {_ns(d.T_21)} ns")
    print(f"# best order {d.order}" + (" (tie)" if d.tie else ""))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("G1", "G2", "G1_th1", "G1_th2", "T_12_ns", "T_21_ns", "order", "tie"))
    w.writerow((args.g1, args.g2, f"{float(d.G1_th1):.3f}", f"{float(d.G1_th2):.3f}",
                _ns(d.T_12), _ns(d.T_21), d.order, int(d.tie)))
    return 0


def cmd_trace(args) -> int:
    st = load_settings(args.config, _overrides(args, RUN_FLAGS))
    rc = replace(st.run, record_cycles=True)
    try:
        sim = Simulator(rc)
        sim.simulate()
    except ConfigError:
        raise
    except Exception as exc:
        print(f"pondsl: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("time_s", "onu", "request_bits", "grant_bits", "pool_bits"))
        for t, o, want, grant, pool in sim.cycles:
            w.writerow((fmt(t / 1e9), o, want, grant, pool))
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _common(p) -> None:
    p.add_argument("-c", "--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one setting (repeatable); beats the config file")


def _run_flags(p) -> None:
    p.add_argument("--protocol", choices=("none", "pause", "gated_seg", "gated_mux"))
    p.add_argument("--dba", choices=("gated", "limited", "excess"))
    p.add_argument("--load", type=float, help="fraction of R_p offered by all CPEs together")
    p.add_argument("--hurst", type=float)
    p.add_argument("--seed", type=int, help="run seed (default: $PONDSL_SEED, then 1)")
    p.add_argument("--packets", type=int, help="packet budget")


def make_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pondsl", description="Drop-point buffering in hybrid PON/xDSL networks.")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="one simulation, one CSV row")
    _common(p)
    _run_flags(p)
    p.add_argument("-o", "--output", help="write the CSV here instead of standard output")
    p.add_argument("--gnuplot", metavar="SCRIPT", help="also write a gnuplot script for the CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid of runs, rows ordered protocol, dba, hurst, load")
    _common(p)
    _run_flags(p)
    p.add_argument("--loads", help="comma-separated loads")
    p.add_argument("--hursts", help="comma-separated Hurst parameters")
    p.add_argument("--protocols", help="comma-separated protocols")
    p.add_argument("--dbas", help="comma-separated DBA kinds")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("-o", "--output")
    p.add_argument("--gnuplot", metavar="SCRIPT")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("schedule", help="timing of one gated cycle")
    _common(p)
    p.add_argument("--mode", choices=("seg", "mux"), default="seg")
    p.add_argument("--grants", required=True, help="comma-separated CPE grants, bits")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("order", help="which of two CPEs to serve first")
    _common(p)
    p.add_argument("--g1", type=int, required=True, help="grant of CPE 1, bits")
    p.add_argument("--g2", type=int, required=True, help="grant of CPE 2, bits")
    p.add_argument("--delta1", type=float, default=0.0, help="DSL delay of CPE 1, s")
    p.add_argument("--delta2", type=float, default=0.0, help="DSL delay of CPE 2, s")
    p.set_defaults(func=cmd_order)

    p = sub.add_parser("trace", help="per-cycle grant trace of one run")
    _common(p)
    _run_flags(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_trace)
    return ap


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"pondsl: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ScheduleError, ValueError) as exc:
        print(f"pondsl: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        # reader went away (e.g. piped into head); keep quiet on exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0


__all__ = ["COLUMNS", "main", "make_parser", "write_csv", "output_row", "gnuplot_script"]
