"""Which of two CPEs should go first on the PON, and the resulting cycle time.

Each CPE ``i`` is ready to start its PON sub-window at
``mu_i = 2 delta_i + G_i/R_d - (G_i - M)/R_p`` and, left alone, would finish at
``beta_i = mu_i + G_i/R_p`` (both measured from the end of the ONU's GATE
forwarding).  Sending ``i`` then ``j`` back-to-back finishes at
``max(beta_j, beta_i + G_j/R_p)``.  Everything is exact (``Fraction`` seconds).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .model import NS_PER_S, NetworkConfig, to_ns
from .schedule import TickScale, scale_of


@dataclass(frozen=True)
class OrderDecision:
    order: int  # 12 or 21
    G1_th1: Fraction
    G1_th2: Fraction
    T_12: Fraction
    T_21: Fraction

    @property
    def tie(self) -> bool:
        return self.T_12 == self.T_21


def thresholds(config: NetworkConfig, G_2: int, delta_1, delta_2) -> tuple:
    """``(G1_th1, G1_th2)`` in bits, for ``delta_1 <= delta_2``.

    Below ``G1_th1`` CPE 1 is done before CPE 2 is ready; above ``G1_th2``
    CPE 2 is done before CPE 1 is ready.
    """
    gap = to_ns(delta_2) - to_ns(delta_1)
    if gap < 0:
        raise ValueError("thresholds need delta_1 <= delta_2; swap the CPE labels")
    R_d, R_p = config.R_d, config.R_p
    th1 = G_2 - Fraction(G_2 * R_d, R_p) + Fraction(2 * R_d * gap, NS_PER_S)
    th2 = G_2 + Fraction(2 * gap * R_d * R_p, NS_PER_S * (R_p - R_d))
    return th1, th2


def _done_ticks(config: NetworkConfig, s: TickScale, G, delta_ns: int):
    """``beta`` in ticks: ready at ``mu``, then ``G`` bits on the PON."""
    mu = 2 * delta_ns * s.per_ns + G * s.per_bit_d - (G - config.M) * s.per_bit_p
    return mu + G * s.per_bit_p


def completion_time(config: NetworkConfig, order: int, G_1: int, G_2: int,
                    delta_1, delta_2) -> Fraction:
    """Instant, from the start of the cycle, when the OLT has all data of both CPEs."""
    if order not in (12, 21):
        raise ValueError(f"order must be 12 or 21, got {order!r}")
    for g in (G_1, G_2):
        if g < config.M:
            raise ValueError(f"grant {g} is below the frame size M={config.M}")
    s = scale_of(config)
    beta_1 = _done_ticks(config, s, G_1, to_ns(delta_1))
    beta_2 = _done_ticks(config, s, G_2, to_ns(delta_2))
    if order == 12:
        end = max(beta_2, beta_1 + G_2 * s.per_bit_p)
    else:
        end = max(beta_1, beta_2 + G_1 * s.per_bit_p)
    # three GATE frames on the PON (ONU + two CPEs), one on the DSL, and the
    # fiber round trip
    lead = (3 * config.g_p_ns + config.g_d_ns + 2 * config.tau_ns) * s.per_ns
    return Fraction(lead + end, s.per_second)


def best_order(config: NetworkConfig, G_1: int, G_2: int, delta_1, delta_2) -> OrderDecision:
    """Order 12 iff ``G_1 <= G1_th2``; ties go to 12.

    When ``delta_1 > delta_2`` the rule is applied with the labels swapped, and
    the returned thresholds are those of the swapped pair.
    """
    T_12 = completion_time(config, 12, G_1, G_2, delta_1, delta_2)
    T_21 = completion_time(config, 21, G_1, G_2, delta_1, delta_2)
    if to_ns(delta_1) <= to_ns(delta_2):
        th1, th2 = thresholds(config, G_2, delta_1, delta_2)
        order = 12 if G_1 <= th2 else 21
    else:
        th1, th2 = thresholds(config, G_1, delta_2, delta_1)
        order = 21 if G_2 <= th2 else 12
    if T_12 == T_21:
        order = 12
    return OrderDecision(order, th1, th2, T_12, T_21)


def sort_cpes(grants: Sequence[int]) -> list:
    """Service order: ascending grant size, stable on ties."""
    return sorted(range(len(grants)), key=lambda i: grants[i])
