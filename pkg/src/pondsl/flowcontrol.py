"""Flow-control behaviors: none, PAUSE frames, and gated ONU:CPE polling.

The DSL carries frames in PTM codewords: a 65-byte codeword holds one sync
byte and 64 bytes of the frame stream, and every frame is followed by one
end-of-frame control byte.  Idle codewords are not sent.  With ``ptm=False``
frames go out back to back as raw bits, which is the framing the closed-form
cycle analysis assumes.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .dba import PTM_CODEWORD_BITS, ptm_codewords
from .model import CONTROL_FRAME_BYTES, ConfigError, NetworkConfig, to_ns
from .ordering import sort_cpes
from .schedule import (CycleSchedule, ScheduleError, multiplexed_schedule, scale_of,
                       segregated_schedule)

PROTOCOLS = ("none", "pause", "gated_seg", "gated_mux")
GATED = ("gated_seg", "gated_mux")

CW_PAYLOAD = 64
CW_BYTES = 65


@dataclass(frozen=True)
class PauseConfig:
    threshold: float = 0.35
    duration: float = 2e-3

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ConfigError("pause_threshold", "must lie in (0, 1)")
        if not self.duration > 0:
            raise ConfigError("pause_duration", "must be > 0")

    def trigger_bits(self, capacity_bits: int) -> int:
        """Occupancy at which a PAUSE goes out: ``ceil(threshold * capacity)``."""
        return math.ceil(Fraction(repr(self.threshold)) * capacity_bits)


@dataclass(frozen=True)
class PauseFrame:
    cpe: int
    sent: int  # ns, leaves the drop point
    arrives: int  # ns, reaches the CPE
    until: int  # ns, end of the squelch


class PauseState:
    """PAUSE bookkeeping of one CPE line: the squelch interval last requested."""

    __slots__ = ("start", "until")

    def __init__(self):
        self.start = 0
        self.until = 0

    def squelched(self, now: int) -> bool:
        return self.start <= now < self.until


def pause_check(state: PauseState, before: int, after: int, trigger: int, now: int,
                delay_ns: int, duration_ns: int, cpe: int = 0) -> PauseFrame | None:
    """Send a PAUSE when occupancy crosses ``trigger`` upward.

    Edge triggered, and only once the previous squelch interval is over.
    ``delay_ns`` is the DSL delay plus the PAUSE frame's own transmission time.
    """
    if not (before < trigger <= after) or now < state.until:
        return None
    arrives = now + delay_ns
    state.start, state.until = arrives, arrives + duration_ns
    return PauseFrame(cpe, now, arrives, state.until)


@dataclass(frozen=True)
class CpeLinkState:
    """What a CPE may do on its line right now."""

    mode: str  # "free" | "squelched" | "gated"
    until: int = 0  # squelched: ns
    window_start: int = 0  # gated: ns
    dsl_bits: int = 0  # gated

    def may_start(self, now: int) -> bool:
        if self.mode == "squelched":
            return now >= self.until
        if self.mode == "gated":
            return now >= self.window_start
        return True


# ---------------------------------------------------------------------------
# CPE queue and DSL framing


class CpeQueue:
    """Upstream queue of one CPE over a precomputed arrival sequence.

    ``births`` (ns) and ``sizes`` (bytes) list every packet the CPE will
    generate.  A packet enters the queue, or is dropped when the queue is
    full, the first time the transmitter looks past its birth.
    """

    __slots__ = ("births", "sizes", "look", "fifo", "head_sent", "backlog", "capacity",
                 "dropped")

    def __init__(self, births: Sequence[int], sizes: Sequence[int], capacity_bits: float = math.inf):
        self.births = births
        self.sizes = sizes
        self.look = 0
        self.fifo: deque = deque()
        self.head_sent = 0  # stream bytes of the head frame already on the line
        self.backlog = 0  # bits of queued frames not yet on the line
        self.capacity = capacity_bits
        self.dropped: list = []

    def pull(self, now: int) -> None:
        """Admit every packet born at or before ``now`` ns."""
        births, n = self.births, len(self.births)
        k = self.look
        while k < n and births[k] <= now:
            bits = 8 * self.sizes[k]
            if self.backlog + bits <= self.capacity:
                self.fifo.append(k)
                self.backlog += bits
            else:
                self.dropped.append(k)
            k += 1
        self.look = k

    def next_birth(self) -> int | None:
        return self.births[self.look] if self.look < len(self.births) else None

    @property
    def request_bits(self) -> int:
        """Bits to report.

        A window can close after the last data byte of the head frame but
        before its end-of-frame byte.  That frame still needs a window, so it
        asks for one byte.
        """
        if not self.backlog and self.fifo and self.head_sent >= self.sizes[self.fifo[0]]:
            return 8
        return self.backlog


def transmit_window(q: CpeQueue, start: int, dsl_bits: int, byte_ticks: int, per_ns: int,
                    ptm: bool = True) -> list:
    """Send from ``q`` inside one granted window starting at tick ``start``.

    Returns frame pieces ``(packet, t_first, t_last, data_bits, complete)`` in
    ticks.  With PTM the window is ``dsl_bits/520`` codeword slots; bytes of
    codeword ``k`` go out after its sync byte.  When the queue runs dry the
    rest of the codeword is idle and the next frame waits for a fresh slot.
    A frame that does not fit is cut at the window end and finished in a
    later window.
    """
    pieces = []
    if ptm:
        slots = dsl_bits // PTM_CODEWORD_BITS
        cap = CW_PAYLOAD * slots
        slot_ticks = CW_BYTES * byte_ticks
    else:
        cap = dsl_bits // 8
    births, sizes, fifo = q.births, q.sizes, q.fifo
    extra = 1 if ptm else 0
    p = 0
    while p < cap:
        t_p = (start + ((p >> 6) * CW_BYTES + 1 + (p & 63)) * byte_ticks if ptm
               else start + p * byte_ticks)
        if not fifo:
            q.pull(t_p // per_ns)
            if not fifo:
                b = q.next_birth()
                if b is None:
                    break
                bt = b * per_ns
                if ptm:
                    k = max(-(-p // CW_PAYLOAD), -(-(bt - start) // slot_ticks))
                    p = CW_PAYLOAD * k
                else:
                    p = max(p + 1, -(-(bt - start) // byte_ticks))
                continue
        i = fifo[0]
        size = sizes[i]
        rem = size + extra - q.head_sent
        k = min(rem, cap - p)
        last = p + k - 1
        t_last = (start + ((last >> 6) * CW_BYTES + 2 + (last & 63)) * byte_ticks if ptm
                  else start + (last + 1) * byte_ticks)
        data = min(q.head_sent + k, size) - min(q.head_sent, size)
        q.backlog -= 8 * data
        done = k == rem
        pieces.append((i, t_p, t_last, 8 * data, done))
        p += k
        if done:
            fifo.popleft()
            q.head_sent = 0
        else:
            q.head_sent += k
    return pieces


class FreeRunLine:
    """Timing of a CPE that sends whenever it has data.

    Frames that queue up behind each other share codewords; after the queue
    runs dry the current codeword is padded and a new run starts later.
    """

    __slots__ = ("origin", "pos", "byte_ticks", "ptm")

    def __init__(self, byte_ticks: int, ptm: bool = True):
        self.origin = 0
        self.pos = 0
        self.byte_ticks = byte_ticks
        self.ptm = ptm

    def byte_time(self, p: int) -> int:
        if self.ptm:
            return self.origin + ((p >> 6) * CW_BYTES + 1 + (p & 63)) * self.byte_ticks
        return self.origin + p * self.byte_ticks

    def run_end(self) -> int:
        """Tick at which the line is free once the current run is padded out."""
        if self.ptm:
            return self.origin + -(-self.pos // CW_PAYLOAD) * CW_BYTES * self.byte_ticks
        return self.origin + self.pos * self.byte_ticks

    def send(self, size_bytes: int, earliest: int, contiguous: bool) -> tuple:
        """Put one frame on the line no earlier than tick ``earliest``.

        ``contiguous`` continues the current run when the frame is already
        waiting at the next byte slot.  Returns ``(t_first, t_last)``.
        """
        if not (contiguous and earliest <= self.byte_time(self.pos)):
            self.origin = max(earliest, self.run_end())
            self.pos = 0
        n = size_bytes + (1 if self.ptm else 0)
        t_first = self.byte_time(self.pos)
        self.pos += n
        return t_first, self.byte_time(self.pos - 1) + self.byte_ticks


# ---------------------------------------------------------------------------
# gated cycles


@dataclass(frozen=True)
class GateMessage:
    cpe: int
    start: Fraction  # seconds from the cycle origin
    dsl_bits: int
    G_c: int


def build_gated_cycle(mode: str, config: NetworkConfig, grants: Sequence[int],
                      ptm: bool = True) -> tuple:
    """Schedule one gated cycle and the E gate messages that carry it.

    ``mode`` is ``"seg"`` or ``"mux"``.  Segregated cycles serve CPEs in
    ascending grant order.  Returns ``(schedule, gates, order)``.
    """
    if mode not in ("seg", "mux"):
        raise ScheduleError(f"mode must be 'seg' or 'mux', got {mode!r}")
    if mode == "seg":
        order = sort_cpes(grants)
        sub = config.with_delta([config.delta[i] for i in order])
        sched = segregated_schedule(sub, [grants[i] for i in order])
        starts = [None] * config.E
        subs = [None] * config.E
        for pos, i in enumerate(order):
            starts[i] = sched.cpe_starts[pos]
            subs[i] = sched.sub_window_starts[pos]
        sched = CycleSchedule("segregated", sched.onu_start, tuple(starts), tuple(subs),
                              tuple(grants), sched.scale)
    else:
        order = list(range(config.E))
        sched = multiplexed_schedule(config, grants)
    gates = [GateMessage(i, sched.cpe_starts[i], dsl_grant(grants[i], ptm), grants[i])
             for i in range(config.E)]
    return sched, gates, order


def dsl_grant(bits: int, ptm: bool = True) -> int:
    """DSL window for ``bits`` of frames: PTM codewords, or the raw bit count."""
    return ptm_codewords(bits) * PTM_CODEWORD_BITS if ptm else bits


def pause_delay_ns(config: NetworkConfig, cpe: int) -> int:
    """PAUSE frame flight from drop point to CPE: its transmission plus delta_c."""
    return to_ns(config.g_d) + to_ns(config.delta[cpe])


def control_bits() -> int:
    return 8 * CONTROL_FRAME_BYTES


__all__ = [
    "PROTOCOLS", "GATED", "PauseConfig", "PauseFrame", "PauseState", "pause_check",
    "CpeLinkState", "CpeQueue", "transmit_window", "FreeRunLine", "GateMessage",
    "build_gated_cycle", "dsl_grant", "pause_delay_ns", "control_bits", "scale_of",
]
