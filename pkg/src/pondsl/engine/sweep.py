"""Grids of runs over protocol, DBA, Hurst parameter and load."""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .sim import MetricsRecord, RunConfig, run


@dataclass
class SweepRow:
    protocol: str
    dba: str
    load: float
    hurst: float
    seed: int
    metrics: MetricsRecord | None = None
    error: str | None = None


def point_seed(base_seed: int, k: int) -> int:
    """Seed of the k-th (hurst, load) point, drawn from the base seed.

    Every protocol and DBA at the same point sees the same traffic.
    """
    ss = np.random.SeedSequence(base_seed, spawn_key=(k,))
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def grid(base: RunConfig, loads: Sequence[float], hursts: Sequence[float],
         protocols: Sequence[str], dbas: Sequence[str] | None = None) -> list:
    """Run configs in row order: protocol, dba, hurst, load."""
    dbas = list(dbas) if dbas else [base.dba]
    points = list(itertools.product(hursts, loads))
    seeds = {p: point_seed(base.seed, k) for k, p in enumerate(points)}
    out = []
    for proto, dba, h, load in itertools.product(protocols, dbas, hursts, loads):
        rc = replace(base, protocol=proto, dba=dba)
        out.append(rc.with_traffic(load=load, hurst=h, seed=seeds[(h, load)]))
    return out


def _one(rc: RunConfig) -> SweepRow:
    tr = rc.traffic
    row = SweepRow(rc.protocol, rc.dba, tr.load, tr.hurst, tr.seed)
    try:
        row.metrics = run(rc)
    except Exception as exc:  # recorded, the sweep goes on
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def sweep(base: RunConfig, loads: Sequence[float], hursts: Sequence[float],
          protocols: Sequence[str], dbas: Sequence[str] | None = None,
          jobs: int = 1) -> list:
    """One SweepRow per combination, always in the same order.

    Runs are independent; with ``jobs > 1`` they go to worker processes and
    the rows are put back in grid order.
    """
    if base.traffic is None:
        raise ValueError("a sweep needs a traffic model")
    if not (loads and hursts and protocols):
        raise ValueError("loads, hursts and protocols must be nonempty")
    configs = grid(base, loads, hursts, protocols, dbas)
    if jobs <= 1:
        return [_one(rc) for rc in configs]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_one, configs))
