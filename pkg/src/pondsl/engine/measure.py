"""Fluid drop-point occupancy from recorded arrival and departure ramps.

Bits of a frame piece arrive linearly between its first and last byte on the
DSL; bits leave linearly while the frame is on the PON.  Occupancy is
piecewise linear, so its maxima sit where an arrival ramp ends or a
departure ramp starts.  All times are engine ticks.
"""

from __future__ import annotations

import numpy as np


def ramp_total(t0: np.ndarray, t1: np.ndarray, bits: np.ndarray, cum: np.ndarray,
               t: np.ndarray) -> np.ndarray:
    """Bits moved by each instant of ``t`` along non-overlapping sorted ramps."""
    if len(t0) == 0:
        return np.zeros(len(t))
    j = np.searchsorted(t1, t, side="right")
    out = cum[j].astype(float)
    inside = j < len(t0)
    jj = j[inside]
    tt = t[inside]
    a, b = t0[jj], t1[jj]
    frac = np.clip((tt - a) / (b - a), 0.0, 1.0)
    out[inside] += bits[jj] * frac
    return out


class Ramps:
    """Arrival and departure ramps of one CPE's drop-point buffer."""

    def __init__(self, a0, a1, abits, d0, dbits, per_bit_p: int):
        self.a0 = np.asarray(a0, dtype=np.int64)
        self.a1 = np.asarray(a1, dtype=np.int64)
        self.ab = np.asarray(abits, dtype=np.int64)
        self.d0 = np.asarray(d0, dtype=np.int64)
        self.db = np.asarray(dbits, dtype=np.int64)
        self.d1 = self.d0 + self.db * per_bit_p
        self.acum = np.concatenate(([0], np.cumsum(self.ab)))
        self.dcum = np.concatenate(([0], np.cumsum(self.db)))

    def candidates(self) -> np.ndarray:
        return np.concatenate((self.a1, self.d0))

    def level(self, t: np.ndarray) -> np.ndarray:
        t = t.astype(float)
        return (ramp_total(self.a0, self.a1, self.ab, self.acum, t)
                - ramp_total(self.d0, self.d1, self.db, self.dcum, t))

    def peak(self) -> float:
        c = self.candidates()
        return max(0.0, float(self.level(c).max())) if len(c) else 0.0


def aggregate_peak(ramps: list) -> float:
    """Largest sum of the occupancies of several buffers (one ONU)."""
    cands = [r.candidates() for r in ramps]
    c = np.unique(np.concatenate(cands)) if cands else np.zeros(0, np.int64)
    if not len(c):
        return 0.0
    total = np.zeros(len(c))
    for r in ramps:
        total += r.level(c)
    return max(0.0, float(total.max()))
