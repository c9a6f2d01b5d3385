"""Uplink radio model: log-distance pathloss with static shadowing, open-loop
power control, aggregate interference from neighbour-cell UEs, block
Rayleigh fading and an SINR -> MCS lookup giving bytes per resource chunk."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ChannelConfig


def pathloss(d_m: float, a_db: float = 128.1, b_db: float = 37.6) -> float:
    if d_m <= 0:
        raise ValueError("distance must be positive")
    return a_db + b_db * math.log10(d_m / 1000.0)


def tx_power(pl_db, n_prb: int, p_max_dbm: float = 24.0, p0_dbm: float = -106.0,
             pathloss_factor: float = 1.0, mode: str = "min"):
    """Open-loop uplink power in dBm; accepts scalars or arrays of pathloss."""
    if n_prb < 1:
        raise ValueError("n_prb must be >= 1")
    target = p0_dbm + pathloss_factor * np.asarray(pl_db, float) + 10 * math.log10(n_prb)
    out = np.minimum(p_max_dbm, target) if mode == "min" else np.maximum(p_max_dbm, target)
    return float(out) if out.ndim == 0 else out


def noise_dbm(cfg: ChannelConfig) -> float:
    bw = cfg.prbs_per_rc * cfg.prb_bandwidth_hz
    return cfg.noise_psd_dbm_hz + 10 * math.log10(bw) + cfg.noise_figure_db


@dataclass(frozen=True)
class McsTable:
    thresholds_db: np.ndarray
    bytes_per_rc: np.ndarray

    def __post_init__(self):
        t, b = self.thresholds_db, self.bytes_per_rc
        if len(t) == 0 or len(t) != len(b):
            raise ValueError("MCS table needs matching, non-empty threshold and byte columns")
        if np.any(np.diff(t) <= 0):
            raise ValueError("MCS thresholds must strictly increase")
        if np.any(np.diff(b) < 0) or b[0] < 0:
            raise ValueError("MCS bytes_per_rc must be non-negative and non-decreasing")

    @property
    def max_bytes(self) -> int:
        return int(self.bytes_per_rc[-1])

    def lookup(self, sinr_db):
        """Bytes per RC for an SINR (scalar or array); 0 below the first threshold."""
        idx = np.searchsorted(self.thresholds_db, np.asarray(sinr_db, float), side="right")
        table = np.concatenate(([0], self.bytes_per_rc)).astype(np.int64)
        out = table[idx]
        return int(out) if out.ndim == 0 else out


def load_mcs_table(path: Optional[str | Path] = None) -> McsTable:
    if path is None:
        text = resources.files("woin_sim").joinpath("data/mcs_default.json").read_text()
    else:
        text = Path(path).read_text()
    rows = json.loads(text)
    try:
        t = np.array([float(r["threshold_db"]) for r in rows])
        b = np.array([int(r["bytes_per_rc"]) for r in rows])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"MCS table rows need threshold_db and bytes_per_rc: {exc}") from None
    return McsTable(t, b)


def bytes_per_rc(sinr_db: float, table: Optional[McsTable] = None) -> int:
    return (table or default_table()).lookup(sinr_db)


_DEFAULT: Optional[McsTable] = None


def default_table() -> McsTable:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_mcs_table()
    return _DEFAULT


@dataclass
class UeLinks:
    """Static per-UE link budget: pathloss including shadowing and the
    resulting transmit power."""
    pathloss_db: np.ndarray
    tx_dbm: np.ndarray

    @property
    def rx_dbm(self) -> np.ndarray:
        return self.tx_dbm - self.pathloss_db

    def __len__(self):
        return len(self.pathloss_db)


def ue_links(positions: np.ndarray, cfg: ChannelConfig, rng: np.random.Generator) -> UeLinks:
    d = np.hypot(positions[:, 0], positions[:, 1]) if len(positions) else np.zeros(0)
    if np.any(d <= 0):
        raise ValueError("UE positions must not coincide with the base station")
    pl = cfg.pathloss_a_db + cfg.pathloss_b_db * np.log10(d / 1000.0)
    pl = pl + rng.normal(0.0, cfg.shadowing_db, len(d))
    tx = tx_power(pl, cfg.prbs_per_rc, cfg.p_max_dbm, cfg.p0_dbm, cfg.pathloss_factor, cfg.power_control)
    return UeLinks(pl, np.atleast_1d(tx))


@dataclass
class LinkState:
    pathloss_db: np.ndarray  # (N,)
    fading_db: np.ndarray  # (N, M)
    interference_dbm: np.ndarray  # (M,), -inf when absent
    sinr_db: np.ndarray  # (N, M)
    q: np.ndarray  # (N, M) bytes


def interference_mw(cfg: ChannelConfig, rng: np.random.Generator, radius_m: float,
                    min_distance_m: float = 1.0) -> np.ndarray:
    """Aggregate interference per RC from one UE in each of the first-tier
    neighbour cells, redrawn every call."""
    m, k = cfg.rc_count, cfg.interferer_count
    if k == 0:
        return np.zeros(m)
    r = np.sqrt(rng.uniform(min_distance_m ** 2, radius_m ** 2, (m, k)))
    th = rng.uniform(0, 2 * math.pi, (m, k))
    # distance to the victim cell centre from a point at (r, th) around a
    # neighbour centre one inter-site distance away
    isd = cfg.isd_m
    d_victim = np.maximum(np.sqrt(isd * isd + r * r + 2 * isd * r * np.cos(th)), 1.0)
    shadow = rng.normal(0.0, cfg.shadowing_db, (m, k))
    pl_victim = cfg.pathloss_a_db + cfg.pathloss_b_db * np.log10(d_victim / 1000.0) + shadow
    if cfg.interferer_power == "full":
        p = np.full((m, k), cfg.p_max_dbm)
    else:
        pl_own = cfg.pathloss_a_db + cfg.pathloss_b_db * np.log10(r / 1000.0) + shadow
        p = tx_power(pl_own, cfg.prbs_per_rc, cfg.p_max_dbm, cfg.p0_dbm, cfg.pathloss_factor, cfg.power_control)
    mw = 10 ** ((p - pl_victim) / 10)
    if cfg.interferer_activity < 1:
        mw = mw * (rng.random((m, k)) < cfg.interferer_activity)
    return mw.sum(axis=1)


def refresh_links(ues: UeLinks, cfg: ChannelConfig, rng: np.random.Generator,
                  table: Optional[McsTable] = None, radius_m: float = 288.7,
                  interference: Optional[np.ndarray] = None) -> LinkState:
    """Redraw block fading and interference for one TTI and fill q.

    ``interference`` (mW per RC) overrides the random interferers.
    """
    table = table or default_table()
    n, m = len(ues), cfg.rc_count
    if interference is None:
        interference = interference_mw(cfg, rng, radius_m)
    i_mw = np.asarray(interference, float)
    if n == 0:
        empty = np.zeros((0, m))
        return LinkState(ues.pathloss_db, empty, _to_dbm(i_mw), empty, empty.astype(np.int64))
    if cfg.fading == "rayleigh":
        fading = 10 * np.log10(rng.exponential(1.0, (n, m)))
    else:
        fading = np.zeros((n, m))
    n_mw = 10 ** (noise_dbm(cfg) / 10)
    sinr = ues.rx_dbm[:, None] + fading - 10 * np.log10(n_mw + i_mw)[None, :]
    return LinkState(ues.pathloss_db, fading, _to_dbm(i_mw), sinr, table.lookup(sinr))


def _to_dbm(mw: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 10 * np.log10(mw)
