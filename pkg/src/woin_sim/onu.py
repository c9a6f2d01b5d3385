"""ONU-side queueing: class queues with per-packet weight and value, bid
reports, deadline drops with refunds, greedy packet selection for a grant and
the limited-service IPACT baseline.

Packets of one class are kept in sub-queues keyed by (SLA mark, price per
byte, delay budget).  Within a sub-queue, order is (gen_time, id), which is
also deadline order because every packet in it has the same budget.  That
makes head-of-queue expiry checks and the greedy ratio order cheap without
sorting per cycle.
"""
from __future__ import annotations

import bisect
import heapq
from dataclasses import dataclass, field
from itertools import chain
from typing import Iterable, Iterator, Optional

from .traffic import CLASSES, Packet


@dataclass(frozen=True)
class OnuReport:
    r_sla: int
    r_asla: int
    v: float

    def __post_init__(self):
        if self.r_sla < 0 or self.r_asla < 0 or self.v < 0:
            raise ValueError("report fields must be non-negative")
        if self.r_asla == 0 and self.v > 0:
            raise ValueError("a positive bid needs above-SLA bytes to price")


class _SubQueue:
    """Packets sorted by (gen_time, id); selected or dropped packets are
    flagged ``done`` and compacted away lazily."""

    __slots__ = ("items", "keys", "head")

    def __init__(self):
        self.items: list[Packet] = []
        self.keys: list[tuple[int, int]] = []
        self.head = 0

    def add(self, pkt: Packet) -> None:
        key = (pkt.gen_time, pkt.id)
        if not self.keys or key > self.keys[-1]:
            self.items.append(pkt)
            self.keys.append(key)
        else:
            i = bisect.bisect_right(self.keys, key, lo=self.head)
            self.items.insert(i, pkt)
            self.keys.insert(i, key)

    def __iter__(self) -> Iterator[Packet]:
        items = self.items
        for i in range(self.head, len(items)):
            p = items[i]
            if not p.done:
                yield p

    def tidy(self) -> None:
        items, h = self.items, self.head
        n = len(items)
        while h < n and items[h].done:
            h += 1
        if h > 256 and h * 2 > n:
            del items[:h]
            del self.keys[:h]
            h = 0
        self.head = h


@dataclass
class OnuQueues:
    capacity: int
    min_size: int = 1 << 30
    bytes: int = 0
    sla_bytes: int = 0
    asla_bytes: int = 0
    asla_value: float = 0.0
    count: int = 0
    income: float = 0.0  # payments collected from senders, net of refunds
    refunds: float = 0.0
    subqueues: dict = field(default_factory=dict)

    def _sub(self, pkt: Packet) -> _SubQueue:
        key = (pkt.cls, pkt.sla, pkt.value_per_byte, pkt.deadline - pkt.gen_time)
        sq = self.subqueues.get(key)
        if sq is None:
            sq = self.subqueues[key] = _SubQueue()
        return sq

    def enqueue(self, pkt: Packet) -> bool:
        """Add ``pkt``; returns False (with a refund) if the buffer is full."""
        if pkt.cls not in CLASSES:
            raise ValueError(f"unknown traffic class {pkt.cls!r}")
        self.income += pkt.value
        if self.bytes + pkt.size > self.capacity:
            self._refund(pkt)
            return False
        self._sub(pkt).add(pkt)
        self.bytes += pkt.size
        self.count += 1
        if pkt.sla:
            self.sla_bytes += pkt.size
        else:
            self.asla_bytes += pkt.size
            self.asla_value += pkt.value
        if pkt.size < self.min_size:
            self.min_size = pkt.size
        return True

    def _refund(self, pkt: Packet) -> None:
        self.income -= pkt.value
        self.refunds += pkt.value

    def _remove(self, pkt: Packet) -> None:
        pkt.done = True
        self.bytes -= pkt.size
        self.count -= 1
        if pkt.sla:
            self.sla_bytes -= pkt.size
        else:
            self.asla_bytes -= pkt.size
            self.asla_value -= pkt.value
            if self.asla_bytes == 0:
                self.asla_value = 0.0  # shed float residue

    def packets(self) -> list[Packet]:
        return [p for sq in self.subqueues.values() for p in sq]

    def by_class(self, cls: str) -> list[Packet]:
        """Arrival-ordered view of one class queue."""
        subs = [sq for (c, *_), sq in self.subqueues.items() if c == cls]
        return sorted(chain.from_iterable(subs), key=lambda p: p.onu_seq)

    def make_report(self) -> OnuReport:
        return OnuReport(self.sla_bytes, self.asla_bytes, self.asla_value if self.asla_bytes else 0.0)

    def drop_expired(self, now: int) -> list[Packet]:
        """Remove every packet whose deadline has passed; refund each one."""
        dropped = []
        for sq in self.subqueues.values():
            items = sq.items
            i, n = sq.head, len(items)
            while i < n:
                p = items[i]
                if not p.done:
                    if p.deadline >= now:
                        break
                    self._remove(p)
                    self._refund(p)
                    dropped.append(p)
                i += 1
            sq.tidy()
        return dropped

    def _take(self, candidates: Iterable[Packet], budget: int) -> tuple[list[Packet], int]:
        chosen = []
        floor = self.min_size
        for p in candidates:
            if budget < floor:
                break
            if p.size <= budget:
                budget -= p.size
                chosen.append(p)
        for p in chosen:
            self._remove(p)
        return chosen, budget

    def select_for_transmission(self, grant: int) -> list[Packet]:
        """SLA packets oldest first, then above-SLA packets greedily by value
        per byte (ties: older, then lower id); packets that do not fit are
        skipped, never split.  Selected packets leave the queues."""
        if grant < 0:
            raise ValueError("grant must be non-negative")
        sla = [sq for (_, s, *_), sq in self.subqueues.items() if s]
        chosen, budget = self._take(_oldest_first(sla), grant)
        by_price: dict[float, list[_SubQueue]] = {}
        for (_, s, price, _), sq in self.subqueues.items():
            if not s:
                by_price.setdefault(price, []).append(sq)
        for price in sorted(by_price, reverse=True):
            if budget < self.min_size:
                break
            more, budget = self._take(_oldest_first(by_price[price]), budget)
            chosen.extend(more)
        for sq in self.subqueues.values():
            sq.tidy()
        return chosen

    def select_fifo(self, grant: int) -> list[Packet]:
        """IPACT service: oldest packets first, stopping at the first one that
        does not fit."""
        if grant < 0:
            raise ValueError("grant must be non-negative")
        chosen = []
        budget = grant
        for p in _oldest_first(list(self.subqueues.values())):
            if p.size > budget:
                break
            budget -= p.size
            chosen.append(p)
        for p in chosen:
            self._remove(p)
        for sq in self.subqueues.values():
            sq.tidy()
        return chosen


def _age_key(p: Packet) -> tuple[int, int]:
    return (p.gen_time, p.id)


def _oldest_first(subs: list[_SubQueue]) -> Iterable[Packet]:
    if len(subs) == 1:
        return iter(subs[0])
    return heapq.merge(*subs, key=_age_key)


def make_report(queues: OnuQueues) -> OnuReport:
    return queues.make_report()


def ipact_grant(requested: int, w_max: int) -> int:
    if requested < 0 or w_max < 0:
        raise ValueError("request and window must be non-negative")
    return min(requested, w_max)


@dataclass
class Batch:
    """Packets a UE sent in one TTI, tracked until each is forwarded by the
    ONU or dropped somewhere on the way."""
    pending: object  # lasa.PendingFeedback
    outstanding: int = 0
    delivered: int = 0
    closed: bool = False  # all packets of the TTI have been handed over


class BatchBook:
    """Feedback bookkeeping keyed by (ue, tti); each batch resolves once."""

    def __init__(self):
        self.open: dict[tuple[int, int], Batch] = {}
        self.resolved: set[tuple[int, int]] = set()

    def register(self, key: tuple[int, int], pending, packets: list[Packet]) -> Optional[Batch]:
        if key in self.open or key in self.resolved:
            raise KeyError(f"batch {key} registered twice")
        b = Batch(pending, outstanding=len(packets), closed=True)
        for p in packets:
            p.batch = key
        self.open[key] = b
        return b

    def dispose(self, pkt: Packet, forwarded: bool) -> Optional[tuple[Batch, int]]:
        """Account for one packet leaving the system; returns (batch, delivered
        bytes) when that completes the batch."""
        key = pkt.batch
        if key is None:
            return None
        b = self.open.get(key)
        if b is None:
            raise KeyError(f"packet {pkt.id} refers to unknown batch {key}")
        b.outstanding -= 1
        if forwarded:
            b.delivered += pkt.tail
        if b.outstanding == 0:
            return self.finish(key), b.delivered
        return None

    def finish(self, key: tuple[int, int]) -> Batch:
        if key in self.resolved:
            raise KeyError(f"batch {key} already resolved")
        b = self.open.pop(key)
        self.resolved.add(key)
        return b
