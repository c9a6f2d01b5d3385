"""UE uplink traffic (two-state Markov VoIP), UE placement and EPON
background traffic."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import count
from typing import Iterator, Optional

import numpy as np

from .pca import SlaTracker

CLASSES = ("voice", "video", "data")


@dataclass(slots=True, eq=False)
class Packet:
    id: int
    source: int  # UE id, or -1 for background traffic
    size: int
    gen_time: int
    deadline: int
    cls: str = "voice"
    sla: bool = True
    value_per_byte: float = 1.0
    # simulation bookkeeping
    sent: int = 0  # bytes already sent over the air
    tail: int = 0  # bytes sent in the TTI that completed the packet
    batch: Optional[tuple] = None  # LA feedback batch (ue, tti)
    onu_seq: int = -1  # arrival order at the ONU
    done: bool = False

    @property
    def value(self) -> float:
        return self.value_per_byte * self.size


@dataclass
class VoipSource:
    ue: int
    mean_on_s: float
    mean_off_s: float
    talkspurt_rate_bps: float
    payload_bytes: int
    deadline_us: int
    cls: str = "voice"
    on: bool = False
    clock: int = 0
    next_switch: float = 0.0
    next_emit: float = 0.0

    @property
    def packet_interval_us(self) -> float:
        return self.payload_bytes * 8e6 / self.talkspurt_rate_bps

    @property
    def on_fraction(self) -> float:
        return self.mean_on_s / (self.mean_on_s + self.mean_off_s)

    def start(self, rng: np.random.Generator, now: int = 0) -> "VoipSource":
        """Draw the initial state from the stationary distribution."""
        self.clock = now
        self.on = bool(rng.random() < self.on_fraction)
        mean = self.mean_on_s if self.on else self.mean_off_s
        self.next_switch = now + rng.exponential(mean) * 1e6
        # talkspurt phase is uniform when starting mid-spurt
        self.next_emit = now + rng.random() * self.packet_interval_us
        return self


def voip_step(src: VoipSource, rng: np.random.Generator, dt: int,
              ids: Iterator[int] | None = None) -> list[Packet]:
    """Advance ``src`` by ``dt`` microseconds; return the packets emitted."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if ids is None:
        ids = count()
    end = src.clock + dt
    out = []
    interval = src.packet_interval_us
    t = float(src.clock)
    while True:
        seg_end = min(src.next_switch, end)
        if src.on:
            while src.next_emit < seg_end:
                g = int(src.next_emit)
                out.append(Packet(next(ids), src.ue, src.payload_bytes, g, g + src.deadline_us, src.cls))
                src.next_emit += interval
        if src.next_switch >= end:
            break
        t = src.next_switch
        src.on = not src.on
        src.next_switch = t + rng.exponential(src.mean_on_s if src.on else src.mean_off_s) * 1e6
        if src.on:
            src.next_emit = t
    src.clock = end
    return out


def place_ues(rng: np.random.Generator, intensity: float, radius: float,
              min_distance: float = 0.0) -> np.ndarray:
    """Poisson point process in a disc; intensity in UEs/km^2, radius in m.

    Returns an (n, 2) array of positions relative to the cell centre.
    """
    if intensity < 0:
        raise ValueError("intensity must be non-negative")
    area_km2 = math.pi * radius ** 2 / 1e6
    n = int(rng.poisson(intensity * area_km2))
    r = np.sqrt(rng.uniform(min_distance ** 2, radius ** 2, n))
    angle = rng.uniform(0, 2 * math.pi, n)
    return np.column_stack([r * np.cos(angle), r * np.sin(angle)])


@dataclass
class BackgroundSource:
    offered_load: float  # fraction of link_rate_bps
    link_rate_bps: float
    deadline_us: int
    min_bytes: int = 64
    max_bytes: int = 1518
    cls: str = "data"
    base_price: float = 1.0
    asla_price: float = 1.0
    sla: Optional[SlaTracker] = None  # None: every packet is SLA
    clock: int = 0
    _ids: Iterator[int] = field(default_factory=count, repr=False)

    @property
    def mean_bytes(self) -> float:
        return (self.min_bytes + self.max_bytes) / 2

    @property
    def rate_bps(self) -> float:
        return self.offered_load * self.link_rate_bps


def background_step(src: BackgroundSource, rng: np.random.Generator, dt: int,
                    ids: Iterator[int] | None = None) -> list[Packet]:
    """Poisson arrivals over the next ``dt`` microseconds, marked SLA/ASLA
    against the source's SLA window."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    ids = ids if ids is not None else src._ids
    t0 = src.clock
    src.clock += dt
    expected_arrivals = src.rate_bps * dt / 8e6 / src.mean_bytes
    n = int(rng.poisson(expected_arrivals)) if expected_arrivals > 0 else 0
    if n == 0:
        if src.sla is not None:
            src.sla.advance(0)
        return []
    times = np.sort(rng.integers(t0, t0 + dt, n))
    sizes = rng.integers(src.min_bytes, src.max_bytes + 1, n)
    if src.sla is None:
        budget = None
    else:
        budget, _ = src.sla.classify(int(sizes.sum()))
    out = []
    used = 0
    for t, s in zip(times.tolist(), sizes.tolist()):
        is_sla = budget is None or used + s <= budget
        if is_sla:
            used += s
        else:
            budget = -1  # straddlers and everything after are above SLA
        out.append(Packet(next(ids), -1, s, t, t + src.deadline_us, src.cls, is_sla,
                          src.base_price if is_sla else src.asla_price))
    if src.sla is not None:
        src.sla.advance(used)
    return out
