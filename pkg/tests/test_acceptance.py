"""The acceptance criteria, one test each.

Every test prints ``PASS`` or ``FAIL`` for its criterion, and the lines are
repeated together in the terminal summary.  Long simulations are marked
``slow``; ``--skip-slow`` leaves them out.
"""

import random
import subprocess
import sys
import time
from fractions import Fraction

import pytest

from conftest import VERDICTS
from pondsl.engine import RunConfig, Simulator, oracle_replay, run
from pondsl.model import NS_PER_S, NetworkConfig, reference_network
from pondsl.ordering import best_order, completion_time, thresholds
from pondsl.schedule import max_buffer_occupancy
from pondsl.traffic import DEFAULT_MIX, TrafficConfig, summarize_network

M = 12144
PACKETS = 10**6
LIMIT = 233_250  # 3 ms * 2.488 Gb/s / 32
PTM_CODEWORD = 65 * 8
ALLOWANCE = 8 * M + 8 * PTM_CODEWORD  # E frames plus one codeword per CPE


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)
    assert ok, line


_runs: dict = {}


def sim(protocol, dba, load, hurst, seed=1, **kw):
    """Memoised 10^6-packet run; several criteria share points."""
    key = (protocol, dba, load, hurst, seed, tuple(sorted(kw.items())))
    if key not in _runs:
        rc = RunConfig(traffic=TrafficConfig(load=load, hurst=hurst, seed=seed),
                       protocol=protocol, dba=dba, packets=PACKETS, **kw)
        _runs[key] = run(rc)
    return _runs[key]


def test_criterion_1_schedules_have_no_gaps_or_underruns():
    t0 = time.time()
    rng = random.Random(11)
    bad = []
    for k in range(1000):
        E = rng.randint(1, 8)
        delta = tuple(rng.randint(0, 5000) * 1e-9 for _ in range(E))
        net = reference_network(E=E, delta=delta)
        grants = [rng.randint(M, 20 * M) for _ in range(E)]
        for mode in ("seg", "mux"):
            tr = oracle_replay(net, grants, mode, peaks=False)
            if not tr.clean:
                bad.append((k, mode, tr.gaps[:1], tr.underruns[:1]))
    dt = time.time() - t0
    verdict(1, not bad and dt < 60,
            f"2000 replays (1000 configs x seg/mux), {len(bad)} with gaps or underruns, {dt:.1f} s")


def test_criterion_2_peak_occupancy_identity():
    t0 = time.time()
    rng = random.Random(5)
    net = reference_network(E=1, O=1)
    tol = Fraction(net.R_d, NS_PER_S)
    worst = Fraction(0)
    for _ in range(100):
        # frames fill the grant exactly and the last one is full size
        sizes = [rng.randint(64, 1518) for _ in range(rng.randint(0, 19))] + [1518]
        G = 8 * sum(sizes)
        rc = RunConfig(net=net, traffic=None, protocol="gated_seg", dba="gated", ptm=False,
                       preload=tuple((0, 0, b) for b in sizes))
        peak = run(rc).max_cpe_occupancy
        worst = max(worst, abs(Fraction(peak) - max_buffer_occupancy(net, G, exact=True)))
    dt = time.time() - t0
    verdict(2, worst <= tol and dt < 5,
            f"worst |peak - B_max| = {float(worst):.4f} bits over 100 grants "
            f"(tolerance {float(tol):.3f}), {dt:.1f} s")


GRID = [(h, load) for h in (0.5, 0.8) for load in (0.3, 0.6, 0.9)]


@pytest.mark.slow
def test_criterion_3_limited_dba_bound():
    bound = LIMIT + ALLOWANCE
    seen = {p: sim("gated_seg", "limited", p[1], p[0]).max_onu_occupancy for p in GRID}
    worst = max(seen.values())
    verdict(3, worst <= bound, f"max ONU occupancy {worst:.0f} bits over the H x load grid "
                               f"(bound {bound})")


@pytest.mark.slow
def test_criterion_4_excess_dba_bound_and_doubling():
    bound = 2 * LIMIT + ALLOWANCE
    seen = {p: sim("gated_seg", "excess", p[1], p[0]).max_onu_occupancy for p in GRID}
    worst = max(seen.values())
    ex = sim("gated_seg", "excess", 0.2, 0.925).max_onu_occupancy
    lim = sim("gated_seg", "limited", 0.2, 0.925).max_onu_occupancy
    ratio = ex / lim
    verdict(4, worst <= bound and ratio >= 1.5,
            f"max ONU occupancy {worst:.0f} bits (bound {bound}); "
            f"excess/limited at load 0.2, H 0.925 = {ratio:.2f} (need >= 1.5)")


def test_criterion_5_excess_degenerates_to_limited():
    net = NetworkConfig()
    # enough full frames that every CPE stays backlogged past the measured span
    pre = tuple((o, c, 1518) for o in range(net.O) for c in range(net.E) for _ in range(400))
    rc = RunConfig(traffic=TrafficConfig(load=0.95, hurst=0.5, seed=3), protocol="gated_seg",
                   dba="excess", packets=100_000, preload=pre, record_cycles=True)
    s = Simulator(rc)
    s.simulate()
    L = net.limit_bits
    cycles = [c for c in s.cycles if s.t_warm <= c[0] <= s.t_end]
    same = sum(1 for _, _, want, grant, _ in cycles if grant == min(want, L))
    frac = same / len(cycles)
    verdict(5, frac >= 0.99, f"{same}/{len(cycles)} measured cycles grant the limited size "
                             f"({100 * frac:.2f}%, need >= 99%)")


@pytest.mark.slow
def test_criterion_6_knee_without_flow_control():
    r = {(h, load): sim("none", "excess", load, h).max_onu_occupancy
         for h in (0.925, 0.5) for load in (0.2, 0.9)}
    hi = r[0.925, 0.9] / r[0.925, 0.2]
    lo = r[0.5, 0.9] / r[0.5, 0.2]
    verdict(6, hi >= 10 and lo < 10,
            f"max ONU occupancy ratio load 0.9 / 0.2: H 0.925 {hi:.1f} (need >= 10), "
            f"H 0.5 {lo:.2f} (need < 10)")


@pytest.mark.slow
def test_criterion_7_pause_and_loss():
    cap = 2**20  # 1 MiB drop-point buffer per line
    pos = sim("pause", "excess", 0.7, 0.675, onu_capacity=cap)
    neg = sim("pause", "gated", 0.8, 0.925, onu_capacity=cap)
    verdict(7, pos.loss_rate == 0 and neg.loss_rate > 0,
            f"excess + PAUSE loss {pos.loss_rate:.3g} (need 0, {pos.pause_frames} PAUSE frames); "
            f"negative control gated + PAUSE loss {neg.loss_rate:.3g} (need > 0, "
            f"{neg.pause_frames} PAUSE frames, max CPE occupancy {neg.max_cpe_occupancy:.0f} of "
            f"{8 * cap} bits)")


def test_criterion_8_ordering_is_the_argmin():
    t0 = time.time()
    net = reference_network(E=2)
    rng = random.Random(8)
    wrong = disordered = jumps = 0
    one_ns = Fraction(1, NS_PER_S)
    eps = Fraction(1, 10**6)  # bits
    for _ in range(10_000):
        g1, g2 = rng.randint(M, 20 * M), rng.randint(M, 20 * M)
        d1, d2 = rng.randint(0, 5000) * 1e-9, rng.randint(0, 5000) * 1e-9
        d = best_order(net, g1, g2, d1, d2)
        T12 = completion_time(net, 12, g1, g2, d1, d2)
        T21 = completion_time(net, 21, g1, g2, d1, d2)
        brute = 12 if T12 <= T21 else 21
        wrong += d.order != brute
        disordered += not d.G1_th1 <= d.G1_th2
        # label so that CPE 1 has the shorter DSL delay; CPE 2's grant fixes the thresholds
        lo, hi = sorted((d1, d2))
        ref = g2 if d1 <= d2 else g1
        th1, th2 = thresholds(net, ref, lo, hi)
        if th1 - eps >= M:
            below = completion_time(net, 12, th1 - eps, ref, lo, hi)
            above = completion_time(net, 12, th1 + eps, ref, lo, hi)
            jumps += abs(above - below) > one_ns
        # at th2 the best order flips, and the two orders finish together
        if th2 >= M:
            jumps += abs(completion_time(net, 12, th2, ref, lo, hi)
                         - completion_time(net, 21, th2, ref, lo, hi)) > one_ns
    dt = time.time() - t0
    verdict(8, not (wrong or disordered or jumps) and dt < 10,
            f"10^4 instances: {wrong} wrong orders, {disordered} with th1 > th2, "
            f"{jumps} discontinuities over 1 ns, {dt:.1f} s")


@pytest.mark.slow
def test_criterion_9_traffic_validity():
    net = NetworkConfig()
    horizon = 800 * NS_PER_S
    notes, ok = [], True
    for H in (0.675, 0.8, 0.925):
        tc = TrafficConfig(load=0.5, hurst=H, seed=1)
        sm = summarize_network(tc, net, horizon, nbins=10**6)
        h = sm.hurst()
        load = sm.load(net) / tc.load
        freq = max(abs(sm.frequency(b) - p) for b, p in DEFAULT_MIX)
        good = abs(h - H) <= 0.08 and freq <= 0.005 and abs(load - 1) <= 0.02
        ok &= good
        notes.append(f"H {H}: est {h:.3f}, load ratio {load:.4f}, freq err {freq:.5f}")
    verdict(9, ok, "; ".join(notes))


def test_criterion_10_sweep_csv_is_byte_identical(tmp_path):
    argv = [sys.executable, "-m", "pondsl", "sweep", "--packets", "10000", "--seed", "7",
            "--loads", "0.3,0.6", "--hursts", "0.5,0.8", "--protocols", "gated_seg,none"]
    outs = []
    for k, jobs in enumerate(("1", "2")):
        path = tmp_path / f"s{k}.csv"
        subprocess.run(argv + ["--jobs", jobs, "-o", str(path)], check=True)
        outs.append(path.read_bytes())
    verdict(10, outs[0] == outs[1] and outs[0].count(b"\n") == 9,
            f"two invocations, {len(outs[0])} bytes each, identical: {outs[0] == outs[1]}")


@pytest.mark.slow
def test_criterion_11_mux_not_slower_than_seg():
    seg = sim("gated_seg", "excess", 0.8, 0.5).mean_pon_delay
    mux = sim("gated_mux", "excess", 0.8, 0.5).mean_pon_delay
    verdict(11, mux <= seg, f"mean PON delay mux {mux * 1e6:.2f} us, seg {seg * 1e6:.2f} us")
