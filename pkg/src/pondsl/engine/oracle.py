"""Independent replay of one gated cycle, used to check the schedule.

Each CPE sends its grant as raw bits at ``R_d`` from its quantized start;
the ONU sends at ``R_p`` from its quantized start.  A frame can only leave
the ONU once it is complete, and frames are at most ``M`` bits, so until a
CPE's last bit is in, the last ``M`` bits received may still be unusable.
The replay flags every instant at which the ONU is due to send a bit it
cannot have.

``method="event"`` evaluates everything exactly at the breakpoints of the
piecewise-linear curves.  ``method="ns"`` steps through every nanosecond
with an explicit worst-case frame split; it is slow and meant for small
instances.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..flowcontrol import build_gated_cycle
from ..model import NetworkConfig, to_ns
from ..schedule import scale_of


@dataclass(frozen=True)
class Hop:
    first: Fraction  # ns
    last: Fraction  # ns


@dataclass
class CpeTrace:
    cpe: int
    G: int
    dsl: Hop  # first/last bit leaving the CPE
    drop_point: Hop  # first/last bit reaching the drop point
    pon: Hop | None  # sub-window on the PON (segregated only)
    olt: Hop | None
    peak: Fraction | None  # bits


@dataclass
class OracleTrace:
    mode: str
    onu_start: int  # ns
    onu_end: Fraction  # ns
    cpes: list
    gaps: list = field(default_factory=list)  # (start_ns, end_ns) idle inside the burst
    underruns: list = field(default_factory=list)  # (cpe or -1, t_ns, missing bits)
    aggregate_peak: Fraction | None = Fraction(0)

    @property
    def clean(self) -> bool:
        return not self.gaps and not self.underruns


def _negative_spans(points: list, f) -> list:
    """Sub-intervals of [points[0], points[-1]) where ``f < 0``.

    ``f(t, side)`` is linear between consecutive points; ``side`` is -1 for the
    left limit and +1 for the right limit at ``t``.
    """
    spans = []
    for a, b in zip(points, points[1:]):
        if a >= b:
            continue
        fa, fb = f(a, +1), f(b, -1)
        if fa >= 0 and fb >= 0:
            continue
        if fa < 0 and fb < 0:
            lo, hi = a, b
        elif fa < 0:
            lo, hi = a, a + (b - a) * fa / (fa - fb)
        else:
            lo, hi = a + (b - a) * fa / (fa - fb), b
        spans.append((lo, hi, min(fa, fb)))
    return spans


def oracle_replay(config: NetworkConfig, grants: Sequence[int], mode: str = "seg",
                  onu_shift_ns: int = 0, method: str = "event",
                  peaks: bool = True) -> OracleTrace:
    """Replay one cycle scheduled by the schedule module.

    ``onu_shift_ns`` moves the ONU start (negative = earlier) while the CPE
    starts stay put; it exists for negative controls.  ``peaks=False`` skips
    the occupancy peaks, which cost more than the gap check.
    """
    sched, _, _ = build_gated_cycle(mode, config, grants, ptm=False)
    onu_ns, cpe_ns = sched.quantized()
    onu_ns += onu_shift_ns
    if method == "ns":
        return _replay_ns(config, grants, mode, sched, onu_ns, cpe_ns)
    if method != "event":
        raise ValueError(f"method must be 'event' or 'ns', got {method!r}")

    s = scale_of(config)
    pbd, pbp = Fraction(s.per_bit_d, s.per_ns), Fraction(s.per_bit_p, s.per_ns)  # ns per bit
    M, E = config.M, config.E
    alpha = [cpe_ns[c] + to_ns(config.delta[c]) for c in range(E)]
    omega = [alpha[c] + grants[c] * pbd for c in range(E)]
    total = sum(grants)
    end = onu_ns + total * pbp

    def arrived(c, t):
        return min(Fraction(grants[c]), max(Fraction(0), (t - alpha[c]) / pbd))

    def usable(c, t, side):
        done = t > omega[c] or (t == omega[c] and side > 0)
        return Fraction(grants[c]) if done else max(Fraction(0), arrived(c, t) - M)

    if mode == "seg":
        order = sorted(range(E), key=lambda i: grants[i])
        u = {}
        acc = 0
        for c in order:
            u[c] = onu_ns + acc * pbp
            acc += grants[c]
    else:
        u = None

    underruns, gaps = [], []
    if mode == "seg":
        for c in order:
            lo, hi = u[c], u[c] + grants[c] * pbp
            pts = sorted({lo, hi} | {x for x in (alpha[c] + M * pbd, omega[c]) if lo < x < hi})

            def f(t, side, c=c):
                return usable(c, t, side) - (t - u[c]) / pbp

            for a, b, worst in _negative_spans(pts, f):
                underruns.append((c, a, -worst))
                gaps.append((a, b))
    else:
        inner = {x for c in range(E) for x in (alpha[c] + M * pbd, omega[c])}
        pts = sorted({Fraction(onu_ns), end} | {x for x in inner if onu_ns < x < end})

        def f(t, side):
            return sum(usable(c, t, side) for c in range(E)) - (t - onu_ns) / pbp

        for a, b, worst in _negative_spans(pts, f):
            underruns.append((-1, a, -worst))
            gaps.append((a, b))

    # fluid occupancy, bits leave in arrival order
    tau = to_ns(config.tau)
    if not peaks:
        pass
    elif mode == "seg":
        def sent(c, t):
            return min(Fraction(grants[c]), max(Fraction(0), (t - u[c]) / pbp))
        cands = {c: {alpha[c], omega[c], u[c], u[c] + grants[c] * pbp} for c in range(E)}
    else:
        bps = sorted(set(alpha) | set(omega))
        cum = [sum(arrived(c, t) for c in range(E)) for t in bps]

        def t_star(x):
            """Earliest instant by which ``x`` bits have arrived in total."""
            for i in range(1, len(bps)):
                if cum[i] >= x:
                    a, b = bps[i - 1], bps[i]
                    return a + (b - a) * (x - cum[i - 1]) / (cum[i] - cum[i - 1])
            return bps[-1]

        shared = {Fraction(onu_ns), end} | set(bps)
        shared |= {onu_ns + v * pbp for v in cum}
        star = {}
        for t in shared:
            x = min(Fraction(total), max(Fraction(0), (t - onu_ns) / pbp))
            star[t] = t_star(x) if x > 0 else None

        def sent(c, t):
            return arrived(c, star[t]) if star[t] is not None else Fraction(0)

        cands = {c: shared for c in range(E)}

    traces = []
    for c in range(E):
        peak = max(arrived(c, t) - sent(c, t) for t in cands[c]) if peaks else None
        pon = Hop(u[c], u[c] + grants[c] * pbp) if mode == "seg" else None
        olt = Hop(pon.first + tau, pon.last + tau) if pon else None
        traces.append(CpeTrace(c, grants[c], Hop(Fraction(cpe_ns[c]), cpe_ns[c] + grants[c] * pbd),
                               Hop(Fraction(alpha[c]), omega[c]), pon, olt, peak))
    agg = None
    if peaks:
        all_c = set().union(*cands.values())
        agg = max(sum(arrived(c, t) - sent(c, t) for c in range(E)) for t in all_c)
    return OracleTrace(mode, onu_ns, end, traces, gaps, underruns, agg)


def _replay_ns(config, grants, mode, sched, onu_ns, cpe_ns) -> OracleTrace:
    s = scale_of(config)
    M, E = config.M, config.E
    alpha_t = [(cpe_ns[c] + to_ns(config.delta[c])) * s.per_ns for c in range(E)]
    total = sum(grants)
    onu_t = onu_ns * s.per_ns
    end_t = onu_t + total * s.per_bit_p
    grid = np.arange(min(alpha_t) // s.per_ns, -(-end_t // s.per_ns) + 1, dtype=np.int64)
    tt = grid * s.per_ns
    if mode == "seg":
        order = sorted(range(E), key=lambda i: grants[i])
        u, acc = {}, 0
        for c in order:
            u[c] = onu_t + acc * s.per_bit_p
            acc += grants[c]
    underruns, gaps = [], []
    usable_sum = np.zeros(len(grid), dtype=np.int64)
    traces = []
    for c in range(E):
        G = grants[c]
        n = -(-G // M)
        bounds = np.array([0] + [G - (n - 1 - k) * M for k in range(n)], dtype=np.int64)
        got = np.clip((tt - alpha_t[c]) // s.per_bit_d, 0, G)
        usable = bounds[np.searchsorted(bounds, got, side="right") - 1]
        usable_sum += usable
        if mode == "seg":
            begun = np.clip((tt - u[c]) // s.per_bit_p + 1, 0, G)
            active = (tt >= u[c]) & (tt < u[c] + G * s.per_bit_p)
            bad = active & (begun > usable)
            for i in np.flatnonzero(bad)[:1]:
                underruns.append((c, Fraction(int(grid[i])), int(begun[i] - usable[i])))
                gaps.append((Fraction(int(grid[i])), Fraction(int(grid[np.flatnonzero(bad)[-1]]))))
            left = np.clip((tt - u[c]) // s.per_bit_p, 0, G)
            peak = Fraction(int((got - left).max()))
        else:
            peak = Fraction(0)
        traces.append(CpeTrace(c, G, Hop(Fraction(cpe_ns[c]), Fraction(cpe_ns[c]) + Fraction(G * s.per_bit_d, s.per_ns)),
                               Hop(Fraction(alpha_t[c], s.per_ns), Fraction(alpha_t[c] + G * s.per_bit_d, s.per_ns)),
                               None, None, peak))
    if mode == "mux":
        begun = np.clip((tt - onu_t) // s.per_bit_p + 1, 0, total)
        active = (tt >= onu_t) & (tt < end_t)
        bad = active & (begun > usable_sum)
        idx = np.flatnonzero(bad)
        if len(idx):
            underruns.append((-1, Fraction(int(grid[idx[0]])), int((begun - usable_sum)[idx].max())))
            gaps.append((Fraction(int(grid[idx[0]])), Fraction(int(grid[idx[-1]]))))
    return OracleTrace(mode, onu_ns, Fraction(end_t, s.per_ns), traces, gaps, underruns, Fraction(0))
