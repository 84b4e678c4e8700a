"""Event-driven simulation of the hybrid network, sweeps and the schedule oracle."""

from .oracle import OracleTrace, oracle_replay
from .sim import MetricsRecord, RunConfig, Simulator, draw_taus, generate_packets, run
from .sweep import SweepRow, grid, point_seed, sweep

__all__ = ["MetricsRecord", "OracleTrace", "RunConfig", "Simulator", "SweepRow", "draw_taus",
           "generate_packets", "grid", "oracle_replay", "point_seed", "run", "sweep"]
