"""Deterministic discrete-event simulator of LTE uplink traffic carried over
an EPON, with auction-based upstream allocation and learned pricing."""
from .config import ConfigError, RunConfig, SchedulerMode, build_config
from .network import run

__all__ = ["ConfigError", "RunConfig", "SchedulerMode", "build_config", "run"]
__version__ = "0.1.0"
