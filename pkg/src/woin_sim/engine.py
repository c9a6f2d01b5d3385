"""Deterministic discrete-event core: integer-microsecond clock, ordered
event queue and named RNG substreams."""
from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any

import numpy as np


class EventKind(IntEnum):
    # Value doubles as the equal-time rank: traffic generated in a TTI is
    # visible to that TTI's scheduler, and both precede the cycle start.
    PACKET_GEN = 0
    TTI_TICK = 1
    CYCLE_START = 2
    REPORT_ARRIVAL = 3
    GRANT_ARRIVAL = 4
    DATA_ARRIVAL = 5


@dataclass(slots=True)
class SimEvent:
    time: int
    kind: EventKind
    target: int
    payload: Any = None
    seq: int = -1


class SchedulingError(RuntimeError):
    pass


class EventQueue:
    """Min-queue ordered by (time, kind rank, seq)."""

    def __init__(self):
        self._heap: list[tuple[int, int, int, SimEvent]] = []
        self._seq = 0
        self.now = 0

    def __len__(self):
        return len(self._heap)

    def schedule(self, event: SimEvent) -> SimEvent:
        if event.time < self.now:
            raise SchedulingError(f"event {event.kind.name} at t={event.time} is before clock t={self.now}")
        event.seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (event.time, int(event.kind), event.seq, event))
        return event

    def at(self, time: int, kind: EventKind, target: int = 0, payload: Any = None) -> SimEvent:
        return self.schedule(SimEvent(time, kind, target, payload))

    def pop_next(self) -> SimEvent:
        ev = heapq.heappop(self._heap)[3]
        self.now = ev.time
        return ev

    def peek_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None


@dataclass
class RngStreams:
    """Independent numpy generators keyed by stream name.

    The stream for ``(seed, name)`` depends on nothing else, so adding a new
    consumer never perturbs the draws of an existing one.
    """

    seed: int
    _cache: dict[str, np.random.Generator] = field(default_factory=dict, repr=False)

    def get(self, name: str) -> np.random.Generator:
        gen = self._cache.get(name)
        if gen is None:
            digest = hashlib.sha256(name.encode()).digest()
            words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
            ss = np.random.SeedSequence([self.seed & 0xFFFFFFFF, self.seed >> 32, *words])
            gen = self._cache[name] = np.random.default_rng(ss)
        return gen
