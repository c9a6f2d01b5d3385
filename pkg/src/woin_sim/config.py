"""Run configuration.

Every knob of a simulation run lives here, with defaults taken from the
EPON/LTE parameter tables (1 Gb/s link, 16 ONUs, 5 us guard, 2 ms maximum
cycle, 10 MB ONU buffers, 6-PRB resource chunks, ...).  Values the model
needs but the tables do not give are declared defaults and are documented in
``docs/parameters.md``.

Configs are pydantic models so a JSON overlay can be validated with
field-level diagnostics (``woin-sim validate --config file.json``).
"""
from __future__ import annotations

import json
from enum import Enum
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

US_PER_S = 1_000_000
TTI_US = 1000


class SchedulerMode(str, Enum):
    AUORA_LASA = "AUORA_LASA"
    IPACT = "IPACT"


class LteScheduler(str, Enum):
    PCA = "PCA"
    THROUGHPUT = "THROUGHPUT"


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, use_enum_values=False)


class VoipConfig(_Model):
    mean_on_s: float = Field(1.0, gt=0)
    mean_off_s: float = Field(1.5, gt=0)
    talkspurt_rate_bps: float = Field(64_000.0, gt=0)
    packet_interval_ms: float = Field(20.0, gt=0)
    payload_bytes: int = Field(160, ge=1)
    # Per-UE load scaling keeps the payload and shortens the packet interval.
    scale_with_load: bool = True

    @property
    def on_fraction(self) -> float:
        return self.mean_on_s / (self.mean_on_s + self.mean_off_s)


class BackgroundConfig(_Model):
    min_packet_bytes: int = Field(64, ge=1)
    max_packet_bytes: int = Field(1518, ge=1)
    packet_class: str = "data"
    asla_price: float = Field(1.0, gt=0)
    # Relative offered-load weights of the background ONUs (None: equal split).
    weights: Optional[list[float]] = None

    @model_validator(mode="after")
    def _sizes(self):
        if self.max_packet_bytes < self.min_packet_bytes:
            raise ValueError("max_packet_bytes must be >= min_packet_bytes")
        if self.packet_class not in ("voice", "video", "data"):
            raise ValueError("packet_class must be voice, video or data")
        if self.weights is not None and (not self.weights or any(w < 0 for w in self.weights) or sum(self.weights) <= 0):
            raise ValueError("weights must be non-negative with a positive sum")
        return self


class ChannelConfig(_Model):
    pathloss_a_db: float = 128.1
    pathloss_b_db: float = 37.6
    shadowing_db: float = Field(4.0, ge=0)
    p_max_dbm: float = 24.0
    p0_dbm: float = -106.0
    pathloss_factor: float = Field(1.0, ge=0, le=1)
    # "min" is the standard open-loop rule; "max" reproduces the printed table entry.
    power_control: str = "min"
    data_prbs: int = Field(48, ge=1)
    prbs_per_rc: int = Field(6, ge=1)
    prb_bandwidth_hz: float = Field(180e3, gt=0)
    center_frequency_ghz: float = Field(2.0, gt=0)
    noise_figure_db: float = 5.0
    noise_psd_dbm_hz: float = -174.0
    interferer_count: int = Field(6, ge=0)
    # "pc": interferers run power control toward their own cell; "full": P_max.
    interferer_power: str = "pc"
    # Probability that a neighbour cell's UE occupies a given RC in a TTI.
    interferer_activity: float = Field(0.5, ge=0, le=1)
    isd_m: float = Field(500.0, gt=0)
    fading: str = "rayleigh"
    mcs_table_path: Optional[str] = None

    @model_validator(mode="after")
    def _enums(self):
        if self.power_control not in ("min", "max"):
            raise ValueError("power_control must be 'min' or 'max'")
        if self.interferer_power not in ("pc", "full"):
            raise ValueError("interferer_power must be 'pc' or 'full'")
        if self.fading not in ("rayleigh", "none"):
            raise ValueError("fading must be 'rayleigh' or 'none'")
        if self.data_prbs < self.prbs_per_rc:
            raise ValueError("data_prbs must hold at least one resource chunk")
        return self

    @property
    def rc_count(self) -> int:
        return self.data_prbs // self.prbs_per_rc


class CellConfig(_Model):
    ue_intensity_per_km2: float = Field(60.0, ge=0)
    radius_m: float = Field(288.7, gt=0)
    min_distance_m: float = Field(35.0, ge=0)
    ue_buffer_bytes: int = Field(20_000, ge=1)
    sla_window_ttis: int = Field(100, ge=1)
    buffer_states: int = Field(4, ge=1)
    base_price: float = Field(1.0, gt=0)
    price_levels: list[float] = Field(default_factory=lambda: [2.0, 3.0, 4.0, 5.0])
    # Marked-UE experiments: the first `marked_ues` UEs learn, the rest pay the base price.
    marked_ues: int = Field(0, ge=0)
    marked_load: float = Field(0.0, ge=0)
    marked_gaa: bool = True
    learning: bool = True

    @model_validator(mode="after")
    def _prices(self):
        lv = self.price_levels
        if not lv:
            raise ValueError("price_levels must not be empty")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError("price_levels must strictly increase")
        if lv[0] <= self.base_price:
            raise ValueError("every price level must exceed base_price")
        if lv[0] < 1:
            raise ValueError("price levels must be >= 1 (reward normalization)")
        if self.min_distance_m >= self.radius_m:
            raise ValueError("min_distance_m must be below radius_m")
        return self

    @property
    def p_bar(self) -> float:
        return max(self.price_levels) + 1


class DeadlineConfig(_Model):
    voice_ms: float = Field(100.0, gt=0)
    video_ms: float = Field(150.0, gt=0)
    data_ms: float = Field(300.0, gt=0)

    def budget_us(self, cls: str) -> int:
        return int(round(getattr(self, f"{cls}_ms") * 1000))


class LaConfig(_Model):
    # Use the penalty term exactly as printed, v/(1-|A|); breaks normalization.
    printed_penalty: bool = False


class RunConfig(_Model):
    seed: int = Field(1, ge=0, lt=2**64)
    sim_duration_s: float = Field(10.0, ge=0)
    onu_count: int = Field(16, ge=1)
    lte_onus: int = Field(1, ge=0)
    link_rate_bps: float = Field(1e9, gt=0)
    guard_interval_us: int = Field(5, ge=0)
    max_cycle_us: int = Field(2000, gt=0)
    min_cycle_us: int = Field(1000, ge=0)
    report_bytes: int = Field(64, ge=0)
    propagation_delay_us: tuple[int, int] = (50, 100)
    onu_buffer_bytes: int = Field(10_000_000, ge=1)
    lte_share: float = Field(0.1, gt=0, le=1)
    load: float = Field(1.0, ge=0)
    sla_fraction: float = Field(0.1, ge=0, le=1)
    scheduler_mode: SchedulerMode = SchedulerMode.AUORA_LASA
    lte_scheduler: Optional[LteScheduler] = None
    voip: VoipConfig = Field(default_factory=VoipConfig)
    background: BackgroundConfig = Field(default_factory=BackgroundConfig)
    channel: ChannelConfig = Field(default_factory=ChannelConfig)
    cell: CellConfig = Field(default_factory=CellConfig)
    deadlines: DeadlineConfig = Field(default_factory=DeadlineConfig)
    la: LaConfig = Field(default_factory=LaConfig)

    @field_validator("propagation_delay_us")
    @classmethod
    def _prop(cls, v):
        lo, hi = v
        if lo < 0 or hi < lo:
            raise ValueError("propagation delay range must satisfy 0 <= min <= max")
        return v

    @model_validator(mode="after")
    def _cross(self):
        if self.lte_onus > self.onu_count:
            raise ValueError("lte_onus cannot exceed onu_count")
        if self.min_cycle_us > self.max_cycle_us:
            raise ValueError("min_cycle_us cannot exceed max_cycle_us")
        if self.cycle_capacity_bytes <= 0:
            raise ValueError("max_cycle_us leaves no capacity after guard and report overheads")
        bg = self.onu_count - self.lte_onus
        if self.background.weights is not None and len(self.background.weights) != bg:
            raise ValueError(f"background.weights needs {bg} entries (one per background ONU)")
        return self

    @property
    def effective_lte_scheduler(self) -> LteScheduler:
        if self.lte_scheduler is not None:
            return self.lte_scheduler
        if self.scheduler_mode is SchedulerMode.IPACT:
            return LteScheduler.THROUGHPUT
        return LteScheduler.PCA

    @property
    def duration_us(self) -> int:
        return int(round(self.sim_duration_s * US_PER_S))

    @property
    def cycle_capacity_bytes(self) -> int:
        """Upstream bytes grantable in one maximum-length cycle.

        The first burst cannot arrive before the longest round trip, and
        each ONU slot costs a guard interval, a report and up to 1 us of
        rounding when its duration is converted to whole microseconds.
        """
        usable_us = (self.max_cycle_us - 2 * self.propagation_delay_us[1]
                     - self.onu_count * (self.guard_interval_us + 1))
        return int(usable_us * self.link_rate_bps / 8e6) - self.onu_count * self.report_bytes

    @property
    def lte_cell_rate_bps(self) -> float:
        """Offered rate of one LTE cell at network load 1.0."""
        if self.lte_onus == 0:
            return 0.0
        return self.lte_share * self.link_rate_bps / self.lte_onus

    @property
    def background_rate_bps(self) -> float:
        """Aggregate background offered rate at network load 1.0."""
        if self.lte_onus == self.onu_count:
            return 0.0
        share = self.lte_share if self.lte_onus else 0.0
        return (1.0 - share) * self.link_rate_bps


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists (field path, message) pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{loc}: {msg}" for loc, msg in errors))


def deep_merge(base: dict, overlay: dict) -> dict:
    out = dict(base)
    for key, val in overlay.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], val)
        else:
            out[key] = val
    return out


def build_config(*overlays: dict[str, Any]) -> RunConfig:
    """Defaults overlaid left to right; raises ConfigError with field paths."""
    data: dict = {}
    for ov in overlays:
        if ov:
            data = deep_merge(data, ov)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        errors = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            errors.append((loc, err["msg"]))
        raise ConfigError(errors) from None


def load_overlay(path: str | Path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError([("<file>", f"cannot read {path}: {exc.strerror}")]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([("<file>", f"invalid JSON in {path}: {exc.msg} (line {exc.lineno})")]) from None
    if not isinstance(data, dict):
        raise ConfigError([("<root>", "config file must hold a JSON object")])
    return data
