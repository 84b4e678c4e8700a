"""Hybrid PON/xDSL drop-point simulator and exact polling-cycle scheduler."""

__version__ = "0.1.0"
