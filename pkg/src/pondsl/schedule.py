"""Closed-form polling-cycle timing and drop-point occupancy envelopes.

All instants are measured from the moment the OLT starts sending the GATE for
the cycle.  Arithmetic is exact: internally times are integer *ticks*, where
one tick is ``1 / lcm(1e9, R_d, R_p)`` seconds, so a bit on either link and a
nanosecond are all whole numbers of ticks.  The public functions return
``fractions.Fraction`` seconds.

Rounding to the 1 ns simulation quantum happens only in ``quantize``: the ONU
start is rounded up and every CPE start is then placed at or before its exact
offset from that ONU start (rounded down), so a CPE never starts late relative
to the ONU it feeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

from .model import NS_PER_S, NetworkConfig, mux_feasible, to_ns


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class TickScale:
    per_second: int
    per_ns: int
    per_bit_d: int  # ticks to send one bit on a DSL line
    per_bit_p: int  # ticks to send one bit on the PON

    def seconds(self, ticks: int) -> Fraction:
        return Fraction(ticks, self.per_second)

    def ns(self, ns: int) -> int:
        return ns * self.per_ns

    def ceil_ns(self, ticks: int) -> int:
        return -((-ticks) // self.per_ns)

    def floor_ns(self, ticks: int) -> int:
        return ticks // self.per_ns


@lru_cache(maxsize=64)
def tick_scale(R_d: int, R_p: int) -> TickScale:
    per_second = math.lcm(NS_PER_S, R_d, R_p)
    return TickScale(per_second, per_second // NS_PER_S, per_second // R_d, per_second // R_p)


def scale_of(config: NetworkConfig) -> TickScale:
    return tick_scale(config.R_d, config.R_p)


# ---------------------------------------------------------------------------
# tick-level core, shared with the event engine


def earliest_service_ticks(s: TickScale, lead: int, delta: int, dsl_bits: int,
                           pon_bits: int, M: int) -> int:
    """Earliest ONU service start for one CPE considered alone.

    ``lead`` is the CPE's earliest transmission start; ``delta`` its one-way
    DSL delay (both ticks).
    """
    return lead + delta + dsl_bits * s.per_bit_d + (M - pon_bits) * s.per_bit_p


def segregated_ticks(s: TickScale, leads: Sequence[int], deltas: Sequence[int],
                     dsl: Sequence[int], pon: Sequence[int], M):
    """Back-to-back sub-window schedule for CPEs served in the given order.

    ``M`` is the largest frame, or one tail per CPE (the most a CPE can still
    have in flight when its window closes).  Returns
    ``(mu_E, sub_window_starts, cpe_starts)`` in ticks.
    """
    tails = [M] * len(pon) if isinstance(M, int) else list(M)
    mu_E = None
    sent = 0  # PON bits of the CPEs already placed ahead
    for lead, d, D, G, m in zip(leads, deltas, dsl, pon, tails):
        mu_c = earliest_service_ticks(s, lead, d, D, G, m)
        if mu_E is None:
            mu_E = mu_c
        else:
            mu_E += max(0, mu_c - mu_E - sent * s.per_bit_p)
        sent += G
    subs = []
    starts = []
    acc = 0
    for d, D, G, m in zip(deltas, dsl, pon, tails):
        mu_s = mu_E + acc * s.per_bit_p
        subs.append(mu_s)
        starts.append(mu_s + (G - m) * s.per_bit_p - D * s.per_bit_d - d)
        acc += G
    return mu_E, subs, starts


def multiplexed_ticks(s: TickScale, gate_lead: int, deltas: Sequence[int],
                      dsl: Sequence[int], pon: Sequence[int], tail_bits: int):
    """Joint-window schedule; ``tail_bits`` is what may still be in flight after the last arrival.

    Returns ``(mu_m, cpe_starts)`` in ticks.
    """
    omega = gate_lead + max(2 * d + D * s.per_bit_d for d, D in zip(deltas, dsl))
    total = sum(pon)
    mu_m = omega + (tail_bits - total) * s.per_bit_p
    starts = [mu_m + (total - tail_bits) * s.per_bit_p - D * s.per_bit_d - d
              for d, D in zip(deltas, dsl)]
    return mu_m, starts


def quantize(s: TickScale, onu_start: int, cpe_starts: Sequence[int], origin_ns: int = 0):
    """Round a schedule to whole ns: ONU start up, CPE starts down relative to it."""
    onu_ns = s.ceil_ns(onu_start)
    onu_ticks = onu_ns * s.per_ns
    cpe_ns = [s.floor_ns(onu_ticks - (onu_start - st)) for st in cpe_starts]
    return origin_ns + onu_ns, [origin_ns + c for c in cpe_ns]


# ---------------------------------------------------------------------------
# public surface, exact seconds


@dataclass(frozen=True)
class SingleCpeTimeline:
    sigma_c: Fraction
    alpha_c: Fraction
    omega_c: Fraction
    mu_c: Fraction
    beta_c: Fraction
    T: Fraction
    G_c: int


@dataclass(frozen=True)
class CycleSchedule:
    mode: str  # "segregated" | "multiplexed"
    onu_start: Fraction
    cpe_starts: tuple
    sub_window_starts: tuple | None
    grants: tuple
    scale: TickScale

    @property
    def onu_end(self) -> Fraction:
        """Instant the ONU finishes sending all granted CPE data."""
        return self.onu_start + Fraction(sum(self.grants), 1) * self.scale.seconds(self.scale.per_bit_p)

    def quantized(self) -> tuple:
        """``(onu_start_ns, cpe_starts_ns)`` at the 1 ns quantum."""
        s = self.scale
        onu = self.onu_start * s.per_second
        starts = [st * s.per_second for st in self.cpe_starts]
        return quantize(s, int(onu), [int(x) for x in starts])


def _check_grant(config: NetworkConfig, G_c: int) -> None:
    if G_c < config.M:
        raise ScheduleError(f"grant {G_c} bits is below the maximum packet size M={config.M}")


def _lead_ticks(config: NetworkConfig, s: TickScale, c: int) -> int:
    lead_ns = 2 * to_ns(config.g_p) + to_ns(config.tau) + to_ns(config.g_d) + to_ns(config.delta[c])
    return lead_ns * s.per_ns


def single_cpe_timeline(config: NetworkConfig, c: int, G_c: int) -> SingleCpeTimeline:
    """All instants of one CPE polled alone, starting as early as its GATE allows."""
    if not 0 <= c < config.E:
        raise ScheduleError(f"CPE index {c} outside 0..{config.E - 1}")
    _check_grant(config, G_c)
    s = scale_of(config)
    sigma = _lead_ticks(config, s, c)
    delta = to_ns(config.delta[c]) * s.per_ns
    alpha = sigma + delta
    omega = alpha + G_c * s.per_bit_d
    beta = omega + config.M * s.per_bit_p
    mu = beta - G_c * s.per_bit_p
    T = beta + to_ns(config.tau) * s.per_ns
    sec = s.seconds
    return SingleCpeTimeline(sec(sigma), sec(alpha), sec(omega), sec(mu), sec(beta), sec(T), G_c)


def max_buffer_occupancy(config: NetworkConfig, G_c: int, exact: bool = False):
    """Peak drop-point occupancy of one CPE, ``G - (R_d/R_p)(G - M)``.

    Rounded up to whole bits unless ``exact``.
    """
    _check_grant(config, G_c)
    b = G_c - Fraction(config.R_d, config.R_p) * (G_c - config.M)
    return b if exact else math.ceil(b)


@dataclass(frozen=True)
class OccupancyEnvelope:
    """Piecewise-linear drop-point occupancy of one CPE over one cycle (bits vs seconds)."""

    alpha: Fraction
    mu: Fraction
    omega: Fraction
    beta: Fraction
    B_max: Fraction
    R_d: int
    R_p: int
    M: int

    @classmethod
    def from_timeline(cls, config: NetworkConfig, tl: SingleCpeTimeline) -> "OccupancyEnvelope":
        return cls(tl.alpha_c, tl.mu_c, tl.omega_c, tl.beta_c,
                   max_buffer_occupancy(config, tl.G_c, exact=True),
                   config.R_d, config.R_p, config.M)

    def shifted(self, dt: Fraction) -> "OccupancyEnvelope":
        return OccupancyEnvelope(self.alpha + dt, self.mu + dt, self.omega + dt, self.beta + dt,
                                 self.B_max, self.R_d, self.R_p, self.M)

    @property
    def breakpoints(self) -> tuple:
        return (self.alpha, self.mu, self.omega, self.beta)


def occupancy_at(env: OccupancyEnvelope, t) -> Fraction:
    t = Fraction(t)
    if t < env.alpha or t > env.beta:
        return Fraction(0)
    if t <= env.mu:
        return env.R_d * (t - env.alpha)
    if t <= env.omega:
        return env.B_max - (env.R_p - env.R_d) * (t - env.mu)
    return env.M - env.R_p * (t - env.omega)


def aggregate_occupancy(envelopes: Sequence[OccupancyEnvelope], t) -> Fraction:
    return sum((occupancy_at(e, t) for e in envelopes), Fraction(0))


def aggregate_peak(envelopes: Sequence[OccupancyEnvelope]) -> tuple:
    """``(instant, bits)`` of the maximum of the summed envelopes.

    A sum of piecewise-linear functions peaks at one of its breakpoints.
    """
    best = (Fraction(0), Fraction(0))
    for t in sorted({b for e in envelopes for b in e.breakpoints}):
        v = aggregate_occupancy(envelopes, t)
        if v > best[1]:
            best = (t, v)
    return best


def segregated_schedule(config: NetworkConfig, grants: Sequence[int]) -> CycleSchedule:
    """Earliest gap-free ONU start for sub-windows served in the order given.

    Serving grants in ascending size is the caller's job; see
    ``ordering.sort_cpes``.  ``grants[i]`` belongs to CPE ``i``.
    """
    if len(grants) != config.E:
        raise ScheduleError(f"expected {config.E} grants, got {len(grants)}")
    for g in grants:
        _check_grant(config, g)
    s = scale_of(config)
    leads = [_lead_ticks(config, s, c) for c in range(config.E)]
    deltas = [to_ns(d) * s.per_ns for d in config.delta]
    mu_E, subs, starts = segregated_ticks(s, leads, deltas, grants, grants, config.M)
    sec = s.seconds
    return CycleSchedule("segregated", sec(mu_E), tuple(sec(x) for x in starts),
                         tuple(sec(x) for x in subs), tuple(grants), s)


def multiplexed_schedule(config: NetworkConfig, grants: Sequence[int]) -> CycleSchedule:
    """Earliest continuous start of the ONU sending all CPE data interleaved."""
    if not mux_feasible(config):
        raise ScheduleError(f"E*R_d = {config.E * config.R_d} exceeds R_p = {config.R_p}")
    if len(grants) != config.E:
        raise ScheduleError(f"expected {config.E} grants, got {len(grants)}")
    for g in grants:
        _check_grant(config, g)
    s = scale_of(config)
    lead_ns = (config.E + 1) * to_ns(config.g_p) + to_ns(config.tau) + to_ns(config.g_d)
    deltas = [to_ns(d) * s.per_ns for d in config.delta]
    mu_m, starts = multiplexed_ticks(s, lead_ns * s.per_ns, deltas, grants, grants,
                                     config.E * config.M)
    sec = s.seconds
    return CycleSchedule("multiplexed", sec(mu_m), tuple(sec(x) for x in starts), None,
                         tuple(grants), s)


@dataclass(frozen=True)
class PonDelayStats:
    first_packet_delay: Fraction  # queueing at the drop point
    last_packet_delay: Fraction  # queueing at the drop point, always 0
    mean_delay: Fraction  # mean queueing + transmission + propagation
    per_packet_fixed: Fraction  # M/R_p + tau, added to every packet


def pon_delay_stats(config: NetworkConfig, G_c: int) -> PonDelayStats:
    """PON-segment delays of one CPE window of maximum-size packets.

    Queueing falls linearly from the first packet's ``(B_max - M)/R_d`` to zero
    for the last one, so the mean queueing is half the first packet's.
    """
    b_max = max_buffer_occupancy(config, G_c, exact=True)
    first_q = (b_max - config.M) / config.R_d
    fixed = Fraction(config.M, config.R_p) + Fraction(to_ns(config.tau), NS_PER_S)
    return PonDelayStats(first_q, Fraction(0), first_q / 2 + fixed, fixed)
