"""Domain types and static configuration of the hybrid PON/xDSL network.

Simulation time is carried as integer nanoseconds (``SimTime``).  Rates are
integer bits per second and sizes are integer bits, so every transmission time
is an exact rational number of nanoseconds.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

NS_PER_S = 10**9

#: Ethernet frame sizes of the quad-mode mixture, bytes.
FRAME_SIZES_BYTES = (64, 300, 580, 1518)
#: Size of a GATE/REPORT/PAUSE control frame, bytes.
CONTROL_FRAME_BYTES = 64

SimTime = int


class ConfigError(ValueError):
    """A configuration value violates one of its invariants."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def to_ns(seconds, field_name: str = "time") -> SimTime:
    """Convert seconds to integer nanoseconds, refusing inexact values."""
    if isinstance(seconds, Fraction):
        scaled = seconds * NS_PER_S
        if scaled.denominator != 1:
            raise ConfigError(field_name, f"{seconds} s is not a whole number of ns")
        return int(scaled)
    scaled = float(seconds) * NS_PER_S
    n = round(scaled)
    if abs(scaled - n) > 1e-6 * max(1.0, abs(scaled)):
        raise ConfigError(field_name, f"{seconds!r} s is not a whole number of ns")
    return int(n)


def to_seconds(ns: SimTime) -> Fraction:
    return Fraction(ns, NS_PER_S)


def tx_ns(bits: int, rate: int) -> SimTime:
    """Transmission time of ``bits`` at ``rate`` bit/s, rounded up to whole ns."""
    return -((-bits * NS_PER_S) // rate)


@dataclass(frozen=True)
class NetworkConfig:
    """Static network parameters (rates in bit/s, times in seconds, sizes in bits)."""

    R_d: int = 77_000_000
    R_p: int = 2_488_000_000
    E: int = 8
    O: int = 32
    delta: tuple = (0.0,) * 8
    tau: float = 100e-6
    g_p: float = 206e-9
    g_d: float = 6650e-9
    M: int = 12144
    Z: float = 3e-3
    guard: float = 30e-9

    def __post_init__(self):
        if not isinstance(self.delta, tuple):
            object.__setattr__(self, "delta", tuple(self.delta))

    # integer-nanosecond views used by the event loop
    @property
    def tau_ns(self) -> SimTime:
        return to_ns(self.tau, "tau")

    @property
    def g_p_ns(self) -> SimTime:
        return to_ns(self.g_p, "g_p")

    @property
    def g_d_ns(self) -> SimTime:
        return to_ns(self.g_d, "g_d")

    @property
    def guard_ns(self) -> SimTime:
        return to_ns(self.guard, "guard")

    @property
    def Z_ns(self) -> SimTime:
        return to_ns(self.Z, "Z")

    @property
    def delta_ns(self) -> tuple:
        return tuple(to_ns(d, "delta") for d in self.delta)

    @property
    def limit_bits(self) -> int:
        """Limited-DBA maximum ONU grant, Z * R_p / O (floored to whole bits)."""
        return int(Fraction(to_ns(self.Z, "Z"), NS_PER_S) * self.R_p // self.O)

    def with_delta(self, delta: Sequence[float]) -> "NetworkConfig":
        return replace(self, delta=tuple(delta))


def reference_network(**overrides) -> NetworkConfig:
    """XGPON/VDSL2 evaluation parameters: 2.488 Gb/s PON, 32 ONUs x 8 CPEs at 77 Mb/s."""
    cfg = NetworkConfig()
    if "E" in overrides and "delta" not in overrides:
        overrides["delta"] = (0.0,) * overrides["E"]
    return replace(cfg, **overrides)


def validate(config: NetworkConfig) -> NetworkConfig:
    """Return ``config`` unchanged if every invariant holds, else raise ConfigError."""
    c = config
    for name in ("R_d", "R_p", "E", "O", "M"):
        v = getattr(c, name)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(name, f"must be an integer, got {v!r}")
    if c.R_d <= 0:
        raise ConfigError("R_d", "must be > 0")
    if not c.R_p > c.R_d:
        raise ConfigError("R_p", "R_p must exceed R_d")
    if c.E < 1:
        raise ConfigError("E", "must be >= 1")
    if c.O < 1:
        raise ConfigError("O", "must be >= 1")
    if c.M <= 0:
        raise ConfigError("M", "must be > 0")
    if not c.Z > 0:
        raise ConfigError("Z", "must be > 0")
    if len(c.delta) != c.E:
        raise ConfigError("delta", f"needs {c.E} entries, got {len(c.delta)}")
    for name in ("tau", "g_p", "g_d", "guard", "Z"):
        v = getattr(c, name)
        if v < 0:
            raise ConfigError(name, "must be >= 0")
        to_ns(v, name)
    for i, d in enumerate(c.delta):
        if d < 0:
            raise ConfigError("delta", f"entry {i} must be >= 0")
        to_ns(d, "delta")
    return config


def mux_feasible(config: NetworkConfig) -> bool:
    """Multiplexed scheduling needs the aggregate DSL rate not to exceed the PON rate."""
    return config.E * config.R_d <= config.R_p


@dataclass(slots=True)
class Packet:
    """One upstream Ethernet frame.  Times are integer ns; -1 means not yet reached."""

    size: int
    onu: int
    cpe: int
    birth: SimTime
    dp_arrival: SimTime = -1
    olt_arrival: SimTime = -1
    sent_bytes: int = 0  # bytes already carried over the DSL (partial PTM frames)

    @property
    def size_bytes(self) -> int:
        return self.size // 8

    @property
    def birth_time(self) -> Fraction:
        return to_seconds(self.birth)


@dataclass
class CpeGrant:
    cpe: int
    G_c: int  # PON payload bits of the CPE's sub-window
    dsl_bits: int  # bits the CPE may put on the DSL, after PTM expansion
    start_time: SimTime = 0  # sigma_c^s or sigma_c^m, absolute ns


@dataclass
class GrantSet:
    cycle_id: int
    onu_id: int
    onu_grant_bits: int
    cpe_grants: list = field(default_factory=list)
    origin: SimTime = 0

    def check(self) -> "GrantSet":
        if sum(g.G_c for g in self.cpe_grants) > self.onu_grant_bits:
            raise ValueError("CPE grants exceed the ONU grant")
        for g in self.cpe_grants:
            if g.dsl_bits < g.G_c:
                raise ValueError(f"CPE {g.cpe}: DSL window smaller than its PON grant")
            if g.start_time < self.origin:
                raise ValueError(f"CPE {g.cpe}: starts before the cycle origin")
        return self


class BufferState:
    """Drop-point buffer of one CPE.

    ``committed`` counts bits of accepted frames that have not finished leaving
    on the PON; departures are booked ahead of time and retired lazily.
    """

    __slots__ = ("queue", "capacity", "committed", "_departures", "peak")

    def __init__(self, capacity: float = math.inf):
        self.queue: deque = deque()
        self.capacity = capacity
        self.committed = 0
        self._departures: deque = deque()  # (end_ns, bits), nondecreasing end_ns
        self.peak = 0.0

    def book_departure(self, end_ns: SimTime, bits: int) -> None:
        self._departures.append((end_ns, bits))

    def occupancy(self, now: SimTime) -> int:
        deps = self._departures
        while deps and deps[0][0] <= now:
            self.committed -= deps.popleft()[1]
        return self.committed

    def admits(self, bits: int, now: SimTime) -> bool:
        return self.occupancy(now) + bits <= self.capacity

    def commit(self, bits: int) -> None:
        """Accept a frame; call after ``admits`` said yes."""
        self.committed += bits
        if self.committed > self.peak:
            self.peak = self.committed

    @property
    def residue(self) -> int:
        """Bits of completely received frames still waiting for the PON."""
        return sum(p.size for p in self.queue)
