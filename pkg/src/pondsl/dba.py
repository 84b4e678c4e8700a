"""ONU grant sizing, fair split of an ONU grant over its CPEs, PTM grant expansion."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .model import NetworkConfig

KINDS = ("gated", "limited", "excess")

PTM_CODEWORD_BITS = 65 * 8
PTM_PAYLOAD_BITS = 64 * 8


@dataclass(frozen=True)
class DbaPolicy:
    kind: str
    limit: int  # Z*R_p/O, the limited per-ONU grant
    excess_cap: int  # ceiling of the shared excess pool, Z*R_p
    O: int

    @property
    def max_onu_grant(self) -> int:
        return 2 * self.limit if self.kind == "excess" else self.limit


def make_policy(kind: str, config: NetworkConfig) -> DbaPolicy:
    if kind not in KINDS:
        raise ValueError(f"dba must be one of {KINDS}, got {kind!r}")
    limit = config.limit_bits
    return DbaPolicy(kind, limit, limit * config.O, config.O)


@dataclass(frozen=True)
class Request:
    onu_id: int
    backlogs: tuple  # bits per CPE
    report_time: int = 0  # ns

    def __post_init__(self):
        if any(b < 0 for b in self.backlogs):
            raise ValueError("backlog must be >= 0")

    @property
    def total(self) -> int:
        return sum(self.backlogs)


def size_onu_grant(policy: DbaPolicy, request, pool: int = 0) -> tuple:
    """``(grant, new_pool)`` for one ONU report.

    ``request`` is a Request or a total backlog in bits.  Limited and excess
    ONUs that ask for less than the limit credit the difference to the shared
    pool; an excess ONU may draw up to ``min(pool/O, limit)`` on top of it.
    """
    want = request.total if isinstance(request, Request) else int(request)
    if policy.kind == "gated":
        return want, pool
    limit = policy.limit
    if policy.kind == "limited":
        grant = min(want, limit)
        return grant, min(pool + limit - grant, policy.excess_cap)
    extra = min(pool // policy.O, limit)
    grant = min(want, limit + extra)
    pool += max(0, limit - grant) - max(0, grant - limit)
    return grant, max(0, min(pool, policy.excess_cap))


def distribute_to_cpes(onu_grant: int, backlogs: Sequence[int]) -> list:
    """Water-filling split of ``onu_grant`` bits.

    Every round, CPEs whose remaining need fits in the equal share of what is
    left are served in full and drop out.  When none fits, the remainder is
    split evenly; the few bits that do not divide go one CPE at a time, lowest
    index first.
    """
    if onu_grant < 0:
        raise ValueError("onu_grant must be >= 0")
    grants = [0] * len(backlogs)
    left = onu_grant
    hungry = [i for i, b in enumerate(backlogs) if b > 0]
    while hungry and left > 0:
        share = Fraction(left, len(hungry))
        full = [i for i in hungry if backlogs[i] <= share]
        if full:
            for i in full:
                grants[i] = backlogs[i]
                left -= backlogs[i]
            hungry = [i for i in hungry if i not in full]
            continue
        base, spare = divmod(left, len(hungry))
        # every hungry CPE needs more than the share, so each can take one spare bit
        for n, i in enumerate(hungry):
            grants[i] = base + (1 if n < spare else 0)
        left = 0
    return grants


def ptm_codewords(bits: int) -> int:
    """Codewords the OLT allows for ``bits`` of frames: one per 64 bytes, plus one."""
    return -(-bits // PTM_PAYLOAD_BITS) + 1


def ptm_expand(bits: int) -> int:
    """DSL bits granted to carry ``bits`` of Ethernet frames in 65-byte codewords."""
    if bits < 0:
        raise ValueError("bits must be >= 0")
    return ptm_codewords(bits) * PTM_CODEWORD_BITS


def report_backlog(queued_sizes: Sequence[int], head_sent_bytes: int = 0) -> int:
    """Bits still to send: the unsent part of the head frame plus every queued frame.

    ``queued_sizes`` are in bits; ``head_sent_bytes`` counts frame bytes of
    the head already on the line.
    """
    total = sum(queued_sizes)
    if queued_sizes and head_sent_bytes:
        total -= min(8 * head_sent_bytes, queued_sizes[0])
    return total
