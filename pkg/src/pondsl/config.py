"""Flat ``key = value`` run configuration.

A file holds one setting per line; ``#`` and ``;`` start comments and a
section header is optional.  Network keys use the usual symbols (``R_d``,
``R_p``, ``E``, ``O``, ``tau_min``, ``tau_max``, ``g_p``, ``g_d``, ``M``,
``Z``, ``guard``); times are in seconds, rates in bit/s, ``M`` in bits and
capacities in bytes.  Command-line ``--set`` values beat the file, the file
beats ``PONDSL_SEED`` and the built-in defaults.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .engine.sim import RunConfig
from .flowcontrol import PauseConfig
from .model import ConfigError, NetworkConfig
from .traffic import TrafficConfig

SECTION = "pondsl"
SEED_ENV = "PONDSL_SEED"

INT_KEYS = {"R_d", "R_p", "E", "O", "M", "seed", "packets", "cpe_capacity", "onu_capacity", "jobs"}
FLOAT_KEYS = {"g_p", "g_d", "Z", "guard", "tau", "tau_min", "tau_max", "load", "hurst",
              "pause_threshold", "pause_duration", "warmup"}
STR_KEYS = {"protocol", "dba"}
LIST_KEYS = {"delta": float, "loads": float, "hursts": float, "protocols": str, "dbas": str}
BOOL_KEYS = {"ptm"}
KEYS = INT_KEYS | FLOAT_KEYS | STR_KEYS | BOOL_KEYS | set(LIST_KEYS)


@dataclass(frozen=True)
class Settings:
    run: RunConfig
    loads: tuple = ()
    hursts: tuple = ()
    protocols: tuple = ()
    dbas: tuple = ()
    jobs: int = 1
    raw: dict = field(default_factory=dict)


def read_file(path) -> dict:
    """Key/value pairs of a config file; a missing section header is allowed."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror or exc}") from None
    first = next((ln.strip() for ln in text.splitlines()
                  if ln.strip() and not ln.lstrip().startswith(("#", ";"))), "")
    if not first.startswith("["):
        text = f"[{SECTION}]\n" + text
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str  # keys are case sensitive (R_d vs r_d)
    try:
        cp.read_string(text, source=str(p))
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    out = {}
    for sec in cp.sections():
        out.update(cp[sec])
    return out


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError("--set", f"expected key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _int(key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(key, f"not a number: {text!r}") from None
    if not v.is_integer():
        raise ConfigError(key, f"must be a whole number, got {text!r}")
    return int(v)


def _float(key: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(key, f"not a number: {text!r}") from None


def _bool(key: str, text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"not a boolean: {text!r}")


def parse_value(key: str, text: str):
    if key not in KEYS:
        raise ConfigError(key, "unknown setting")
    if key in INT_KEYS:
        return _int(key, text)
    if key in FLOAT_KEYS:
        return _float(key, text)
    if key in BOOL_KEYS:
        return _bool(key, text)
    if key in LIST_KEYS:
        conv = LIST_KEYS[key]
        parts = [p.strip() for p in text.split(",") if p.strip()]
        return tuple(_float(key, p) if conv is float else p for p in parts)
    return text.strip()


def build(values: dict) -> Settings:
    """Settings from parsed values; anything absent keeps its default."""
    v = dict(values)
    net_kw = {k: v[k] for k in ("R_d", "R_p", "E", "O", "M", "g_p", "g_d", "Z", "guard", "tau")
              if k in v}
    E = net_kw.get("E", NetworkConfig.E)
    if "delta" in v:
        d = v["delta"]
        net_kw["delta"] = d * E if len(d) == 1 else d
    else:
        net_kw["delta"] = (0.0,) * E
    net = NetworkConfig(**net_kw)
    tr_kw = {k: v[k] for k in ("load", "hurst", "seed") if k in v}
    traffic = TrafficConfig(**tr_kw)
    pause_kw = {}
    if "pause_threshold" in v:
        pause_kw["threshold"] = v["pause_threshold"]
    if "pause_duration" in v:
        pause_kw["duration"] = v["pause_duration"]
    run_kw = {k: v[k] for k in ("protocol", "dba", "packets", "warmup", "tau_min", "tau_max",
                                "cpe_capacity", "onu_capacity", "ptm") if k in v}
    rc = RunConfig(net=net, traffic=traffic, pause=PauseConfig(**pause_kw), **run_kw)
    jobs = v.get("jobs", 1)
    if jobs < 1:
        raise ConfigError("jobs", "must be >= 1")
    return Settings(rc, v.get("loads", ()), v.get("hursts", ()), v.get("protocols", ()),
                    v.get("dbas", ()), jobs, v)


def load_settings(path=None, overrides: dict | None = None, env=None) -> Settings:
    """Defaults, then ``PONDSL_SEED``, then the file, then ``overrides`` (raw strings)."""
    env = os.environ if env is None else env
    raw = {}
    if env.get(SEED_ENV):
        raw["seed"] = env[SEED_ENV]
    if path is not None:
        raw.update(read_file(path))
    raw.update(overrides or {})
    values = {k: parse_value(k, t) for k, t in raw.items()}
    settings = build(values)
    settings.run.check()
    return settings

