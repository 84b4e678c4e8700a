"""Per-CPE self-similar packet sources.

``H = 0.5`` gives a Poisson source.  For ``H > 0.5`` each CPE superposes
``subsources`` on/off sources.  An on period is a run of back-to-back packets
at the DSL line rate whose length in packets is Pareto with shape ``3 - 2H``;
off periods are Pareto with the same shape, scaled so the long-run rate hits
the target.  Sources start in their stationary state, so the expected rate
over any window is exact.

Both tails are truncated.  With shape close to 1 the mean of a long-tailed
period is carried by very rare, very long periods, so the realised rate of a
finite trace is skewed.  The on cap trades that skew against how much
long-range dependence survives: a lower cap tightens the realised load of one
CPE but flattens the variance-time slope at large aggregation levels.  The
default keeps the aggregate load of a full network within a few percent over
a long trace and the estimated Hurst parameter close to its target.
"""

from __future__ import annotations

import bisect
import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .model import FRAME_SIZES_BYTES, NS_PER_S, ConfigError, NetworkConfig

DEFAULT_MIX = tuple(zip(FRAME_SIZES_BYTES, (0.60, 0.04, 0.11, 0.25)))


@dataclass(frozen=True)
class TrafficConfig:
    load: float = 0.5  # fraction of R_p, summed over every CPE
    hurst: float = 0.5
    seed: int = 1
    size_mix: tuple = DEFAULT_MIX
    subsources: int = 16
    on_scale: float = 1.0  # Pareto scale of the on-period length, packets
    on_cap: float = 1e5  # longest on period, packets
    off_cap: float = 1e6  # longest off period, multiples of its Pareto scale

    def __post_init__(self):
        if not 0 < self.load < 1:
            raise ConfigError("load", "must lie in (0, 1)")
        if not 0.5 <= self.hurst < 1:
            raise ConfigError("hurst", "must lie in [0.5, 1)")
        if not self.size_mix:
            raise ConfigError("size_mix", "needs at least one size")
        probs = [p for _, p in self.size_mix]
        if any(p < 0 for p in probs) or abs(sum(probs) - 1) > 1e-9:
            raise ConfigError("size_mix", "probabilities must be >= 0 and sum to 1")
        if any(int(b) != b or b <= 0 for b, _ in self.size_mix):
            raise ConfigError("size_mix", "sizes must be positive whole bytes")
        if self.subsources < 1:
            raise ConfigError("subsources", "must be >= 1")
        if self.on_scale <= 0 or self.on_cap <= self.on_scale:
            raise ConfigError("on_cap", "must exceed on_scale > 0")
        if self.off_cap <= 1:
            raise ConfigError("off_cap", "must exceed 1")

    @property
    def shape(self) -> float:
        """Pareto shape of on/off periods, ``3 - 2H``."""
        return 3 - 2 * self.hurst

    @property
    def mean_size_bits(self) -> float:
        return sum(8 * b * p for b, p in self.size_mix)


def sample_size(rng: np.random.Generator, size_mix=DEFAULT_MIX, n: int | None = None):
    """Draw frame sizes in bits from the size mixture."""
    sizes = np.array([8 * b for b, _ in size_mix], dtype=np.int64)
    probs = np.array([p for _, p in size_mix], dtype=float)
    if n is None:
        return int(rng.choice(sizes, p=probs))
    return rng.choice(sizes, size=n, p=probs)


def cpe_rate(traffic: TrafficConfig, net: NetworkConfig) -> float:
    """Mean offered bit rate of one CPE, ``load * R_p / (O * E)``."""
    return traffic.load * net.R_p / (net.O * net.E)


def stream_seed(seed: int, onu: int, cpe: int) -> np.random.SeedSequence:
    """Independent child seed for one CPE."""
    return np.random.SeedSequence(seed, spawn_key=(onu, cpe))


# -- truncated Pareto ---------------------------------------------------------


def _bpareto(rng, alpha: float, lo: float, ratio: float, n: int) -> np.ndarray:
    """Inverse-CDF draws of a Pareto(alpha, lo) truncated to [lo, lo*ratio]."""
    u = rng.random(n)
    return lo * (1 - u * (1 - ratio ** (-alpha))) ** (-1 / alpha)


def _bpareto_mean(alpha: float, lo: float, ratio: float) -> float:
    norm = 1 - ratio ** (-alpha)
    if alpha == 1:
        return lo * math.log(ratio) / norm
    return lo * (alpha / (alpha - 1)) * (1 - ratio ** (1 - alpha)) / norm


def _ceil_bpareto_mean(alpha: float, lo: float, ratio: float) -> float:
    """Mean of ceil(X) for truncated Pareto X, as the sum over k >= 0 of P(X > k)."""
    k = np.arange(0, math.ceil(lo * ratio), dtype=float)
    surv = ((lo / np.maximum(k, lo)) ** alpha - ratio ** (-alpha)) / (1 - ratio ** (-alpha))
    return float(np.clip(surv, 0.0, 1.0).sum())


# -- streams -----------------------------------------------------------------


@dataclass
class _OnOffSource:
    rng: np.random.Generator
    alpha: float
    on_lo: float
    on_ratio: float
    off_lo: float
    off_ratio: float
    peak: int
    sizes: np.ndarray
    probs: np.ndarray
    clock: float = 0.0  # ns, start of the next on period not yet generated
    births: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    bits: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))

    def start_stationary(self, p_on: float) -> None:
        """Begin mid-cycle, as if the source had been running forever.

        The period straddling time zero is length-biased, which for a Pareto
        of shape ``a`` is again a truncated Pareto, of shape ``a - 1``.
        """
        rng = self.rng
        if rng.random() < p_on:
            n = int(np.ceil(_bpareto(rng, self.alpha - 1, self.on_lo, self.on_ratio, 1)[0]))
            self._batch(first_on=int(rng.integers(1, n + 1)))
        else:
            length = _bpareto(rng, self.alpha - 1, self.off_lo, self.off_ratio, 1)[0]
            self.clock = float(rng.random() * length)

    def _batch(self, cycles: int = 256, first_on: int = 0) -> None:
        rng = self.rng
        n_on = np.ceil(_bpareto(rng, self.alpha, self.on_lo, self.on_ratio, cycles)).astype(np.int64)
        if first_on:
            n_on[0] = first_on
        off = _bpareto(rng, self.alpha, self.off_lo, self.off_ratio, cycles)
        size = rng.choice(self.sizes, size=int(n_on.sum()), p=self.probs)
        tx = size * (NS_PER_S / self.peak)
        first = np.concatenate(([0], np.cumsum(n_on)[:-1]))
        on_dur = np.add.reduceat(tx, first)
        cycle_start = self.clock + np.concatenate(([0.0], np.cumsum(on_dur + off)[:-1]))
        before = np.concatenate(([0.0], np.cumsum(tx)[:-1]))
        births = np.repeat(cycle_start, n_on) + before - np.repeat(before[first], n_on)
        self.clock = float(cycle_start[-1] + on_dur[-1] + off[-1])
        self.births = np.concatenate((self.births, np.floor(births).astype(np.int64)))
        self.bits = np.concatenate((self.bits, size))

    def take_until(self, horizon: float):
        while self.clock <= horizon:
            self._batch()
        k = int(np.searchsorted(self.births, horizon, side="left"))
        out = self.births[:k], self.bits[:k]
        self.births, self.bits = self.births[k:], self.bits[k:]
        return out


class PacketStream:
    """Lazily generated ``(birth_ns, size_bits)`` arrivals of one CPE.

    Births are strictly increasing integer nanoseconds.  ``peek``/``pop``
    serve the event loop one packet at a time; ``take``/``take_until`` return
    numpy arrays for analysis.
    """

    def __init__(self, traffic: TrafficConfig, net: NetworkConfig, onu: int, cpe: int):
        self.traffic = traffic
        self.onu = onu
        self.cpe = cpe
        self.rate = cpe_rate(traffic, net)
        ss = stream_seed(traffic.seed, onu, cpe)
        self._sizes = np.array([8 * b for b, _ in traffic.size_mix], dtype=np.int64)
        self._probs = np.array([p for _, p in traffic.size_mix], dtype=float)
        mean_bits = traffic.mean_size_bits
        pkt_gap_ns = mean_bits / self.rate * NS_PER_S
        self._chunk = max(1e6, 2048 * pkt_gap_ns)  # about 2k packets per refill
        self._horizon = 0.0
        self._last = -1
        self._buf_t: list = []
        self._buf_s: list = []
        self._pos = 0
        if traffic.hurst == 0.5:
            self._rng = np.random.default_rng(ss)
            self._gap_ns = pkt_gap_ns
            self._clock = 0.0
            self._sources = None
            return
        a = traffic.shape
        peak = net.R_d
        sub_rate = self.rate / traffic.subsources
        if sub_rate >= peak:
            raise ConfigError("load", "per-source rate would reach the DSL line rate")
        on_ratio = traffic.on_cap / traffic.on_scale
        on_ns = _ceil_bpareto_mean(a, traffic.on_scale, on_ratio) * mean_bits / peak * NS_PER_S
        off_ns = on_ns * (peak / sub_rate - 1)
        off_lo = off_ns / _bpareto_mean(a, 1.0, traffic.off_cap)
        self._sources = []
        for child in ss.spawn(traffic.subsources):
            src = _OnOffSource(np.random.default_rng(child), a, traffic.on_scale, on_ratio,
                               off_lo, traffic.off_cap, peak, self._sizes, self._probs)
            src.start_stationary(on_ns / (on_ns + off_ns))
            self._sources.append(src)

    def _refill(self) -> None:
        if self._sources is None:
            rng = self._rng
            n = 2048
            t = self._clock + np.cumsum(rng.exponential(self._gap_ns, n))
            self._clock = float(t[-1])
            births = np.floor(t).astype(np.int64)
            bits = rng.choice(self._sizes, size=n, p=self._probs)
        else:
            self._horizon += self._chunk
            parts = [src.take_until(self._horizon) for src in self._sources]
            births = np.concatenate([p[0] for p in parts])
            bits = np.concatenate([p[1] for p in parts])
            order = np.argsort(births, kind="stable")
            births, bits = births[order], bits[order]
        if len(births):
            # coincident births are pushed apart by 1 ns
            births[0] = max(births[0], self._last + 1)
            ramp = np.arange(len(births))
            births = np.maximum.accumulate(births - ramp) + ramp
            self._last = int(births[-1])
        self._buf_t = births.tolist()
        self._buf_s = bits.tolist()
        self._pos = 0

    def peek(self) -> int:
        """Birth time of the next packet."""
        while self._pos >= len(self._buf_t):
            self._refill()
        return self._buf_t[self._pos]

    def pop(self) -> tuple:
        while self._pos >= len(self._buf_t):
            self._refill()
        i = self._pos
        self._pos += 1
        return self._buf_t[i], self._buf_s[i]

    def __iter__(self):
        while True:
            yield self.pop()

    def take(self, n: int) -> tuple:
        """The next ``n`` arrivals as ``(births, sizes)`` int64 arrays."""
        ts, ss, got = [], [], 0
        while got < n:
            if self._pos >= len(self._buf_t):
                self._refill()
            k = min(len(self._buf_t), self._pos + n - got)
            ts.append(self._buf_t[self._pos:k])
            ss.append(self._buf_s[self._pos:k])
            got += k - self._pos
            self._pos = k
        return _arrays(ts, ss)

    def take_until(self, horizon_ns: int) -> tuple:
        """All remaining arrivals born before ``horizon_ns``."""
        ts, ss = [], []
        while True:
            if self._pos >= len(self._buf_t):
                self._refill()
                continue
            k = bisect.bisect_left(self._buf_t, horizon_ns, self._pos)
            ts.append(self._buf_t[self._pos:k])
            ss.append(self._buf_s[self._pos:k])
            self._pos = k
            if k < len(self._buf_t):
                return _arrays(ts, ss)


def _arrays(ts, ss) -> tuple:
    t = np.fromiter(itertools.chain.from_iterable(ts), np.int64)
    s = np.fromiter(itertools.chain.from_iterable(ss), np.int64)
    return t, s


def make_stream(traffic: TrafficConfig, net: NetworkConfig, onu: int, cpe: int) -> PacketStream:
    return PacketStream(traffic, net, onu, cpe)


def network_trace(traffic: TrafficConfig, net: NetworkConfig, horizon_ns: int,
                  cpes=None) -> dict:
    """Arrivals of every CPE (or of ``cpes``, a list of ``(onu, cpe)``) up to a horizon."""
    if cpes is None:
        cpes = [(o, c) for o in range(net.O) for c in range(net.E)]
    return {key: make_stream(traffic, net, *key).take_until(horizon_ns) for key in cpes}


def write_trace(path, trace: dict) -> int:
    """Dump a trace as CSV ``birth_ns,cpe,onu,bytes`` in birth order; returns rows."""
    rows = []
    for (onu, cpe), (births, bits) in trace.items():
        rows.extend(zip(births.tolist(), itertools.repeat(cpe), itertools.repeat(onu),
                        (bits // 8).tolist()))
    rows.sort()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("birth_ns", "cpe", "onu", "bytes"))
        w.writerows(rows)
    return len(rows)


# -- analysis ----------------------------------------------------------------


def binned_bits(births_ns: np.ndarray, bits: np.ndarray, bin_ns: float, nbins: int | None = None):
    """Bits born in each consecutive window of ``bin_ns``."""
    idx = (np.asarray(births_ns) // bin_ns).astype(np.int64)
    out = np.bincount(idx, weights=bits, minlength=nbins or 0).astype(float)
    return out[:nbins] if nbins else out


def aggregated_variance_hurst(series, min_blocks: int = 1000, levels: int = 20) -> float:
    """Hurst parameter from the variance of block means against block size.

    Fits ``Var(X^(m)) ~ m^(2H-2)`` over log-spaced block sizes ``m`` that
    leave at least ``min_blocks`` blocks.  The sample variance of ``k`` block
    means of a self-similar series is biased low by the factor
    ``1 - k^(2H-2)``; the fit includes that factor instead of ignoring it.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    top = n // min_blocks
    if top < 4:
        raise ValueError(f"series of {n} bins is too short for {min_blocks} blocks")
    ms = np.unique(np.logspace(0, math.log10(top), levels).astype(int))
    v = np.array([x[: (n // m) * m].reshape(-1, m).mean(axis=1).var() for m in ms])
    keep = v > 0
    ms, v = ms[keep], np.log(v[keep])
    k = (n // ms).astype(float)
    hs = np.linspace(0.5, 0.999, 500)
    b = 2 * hs[:, None] - 2
    model = b * np.log(ms) + np.log1p(-(k ** b))
    resid = v - model
    resid -= resid.mean(axis=1, keepdims=True)
    return float(hs[np.argmin((resid ** 2).sum(axis=1))])


def trace_hurst(trace: dict, horizon_ns: int, nbins: int = 10**6, min_blocks: int = 1000) -> float:
    """Hurst estimate of the superposed bit-arrival process of a trace."""
    x = np.zeros(nbins)
    w = horizon_ns / nbins
    for births, bits in trace.values():
        x += binned_bits(births, bits, w, nbins)
    return aggregated_variance_hurst(x, min_blocks=min_blocks)


@dataclass
class TraceSummary:
    """What the validity checks need from a trace, without keeping the packets."""

    horizon_ns: int
    bins: np.ndarray  # bits born per bin
    bits: int = 0
    packets: int = 0
    sizes: dict = field(default_factory=dict)  # bits -> count

    def hurst(self, min_blocks: int = 1000) -> float:
        return aggregated_variance_hurst(self.bins, min_blocks=min_blocks)

    def load(self, net: NetworkConfig) -> float:
        return self.bits / (self.horizon_ns / NS_PER_S) / net.R_p

    def frequency(self, size_bytes: int) -> float:
        return self.sizes.get(8 * size_bytes, 0) / self.packets if self.packets else 0.0


def summarize_network(traffic: TrafficConfig, net: NetworkConfig, horizon_ns: int,
                      nbins: int = 10**6, cpes=None) -> TraceSummary:
    """Stream every CPE up to ``horizon_ns`` one at a time and keep only summaries.

    A whole network over hundreds of seconds is far too many packets to hold;
    this needs memory for one CPE plus the bins.
    """
    if cpes is None:
        cpes = [(o, c) for o in range(net.O) for c in range(net.E)]
    out = TraceSummary(horizon_ns, np.zeros(nbins))
    w = horizon_ns / nbins
    for key in cpes:
        births, bits = make_stream(traffic, net, *key).take_until(horizon_ns)
        out.bins += binned_bits(births, bits, w, nbins)
        out.bits += int(bits.sum())
        out.packets += len(bits)
        vals, counts = np.unique(bits, return_counts=True)
        for v, c in zip(vals.tolist(), counts.tolist()):
            out.sizes[v] = out.sizes.get(v, 0) + c
    return out


def trace_load(trace: dict, horizon_ns: int, net: NetworkConfig) -> float:
    """Offered load of a trace as a fraction of R_p."""
    total = sum(int(bits.sum()) for _, bits in trace.values())
    return total / (horizon_ns / NS_PER_S) / net.R_p
