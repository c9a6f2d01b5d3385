"""OLT-side bandwidth auction: SLA reservation, fractional-knapsack
allocation of the residual cycle capacity, VCG discounts and payments, and
the placement of grants on the upstream timeline.

Allocation arithmetic runs on exact rationals.  Reports and capacity are
whole bytes, so every grant, including the single fractional one, comes out
as a whole number of bytes and the VCG differences carry no rounding error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .onu import OnuReport


class CapacityError(RuntimeError):
    pass


def reserve_sla(r_sla: Sequence[int], capacity: int) -> tuple[list[int], int, bool]:
    """Return (per-ONU SLA grant, residual capacity, oversubscribed flag).

    Oversubscription scales every request by capacity / total, rounding down.
    """
    if capacity <= 0:
        raise ValueError("capacity must be positive")
    total = sum(r_sla)
    if total <= capacity:
        return list(r_sla), capacity - total, False
    return [r * capacity // total for r in r_sla], 0, True


@dataclass
class AllocationPlan:
    grants: list[int]  # above-SLA bytes per ONU
    requests: list[int]
    value: Fraction  # total bid value of the granted bytes

    @property
    def total(self) -> int:
        return sum(self.grants)

    @property
    def fractions(self) -> list[Fraction]:
        """Share of each ONU's above-SLA request that was granted."""
        return [Fraction(g, r) if r else Fraction(0) for g, r in zip(self.grants, self.requests)]


def _rate(b: OnuReport) -> Fraction:
    return Fraction(b.v) / b.r_asla


def _bid_order(bids: Sequence[OnuReport]) -> tuple[list[int], list[Fraction]]:
    rates = [_rate(b) if b.r_asla > 0 else Fraction(0) for b in bids]
    order = sorted((i for i in range(len(bids)) if bids[i].r_asla > 0), key=lambda i: (-rates[i], i))
    return order, rates


def _fill(bids, order, rates, capacity: int, exclude: int | None) -> AllocationPlan:
    n = len(bids)
    grants = [0] * n
    left = capacity
    value = Fraction(0)
    for i in order:
        if left == 0:
            break
        if i == exclude:
            continue
        r = bids[i].r_asla
        g = r if r <= left else left
        grants[i] = g
        value += rates[i] * g
        left -= g
    return AllocationPlan(grants, [b.r_asla for b in bids], value)


def allocate(bids: Sequence[OnuReport], capacity: int, exclude: int | None = None) -> AllocationPlan:
    """Greedy by bid per byte (ties: lower index); the first request that
    does not fit gets the leftover capacity."""
    if capacity < 0:
        raise ValueError("capacity must be non-negative")
    order, rates = _bid_order(bids)
    return _fill(bids, order, rates, capacity, exclude)


@dataclass
class Settlement:
    plan: AllocationPlan
    discounts: list[Fraction]  # VCG discount per ONU
    payments: list[Fraction]  # what each ONU pays the OLT
    gross: list[Fraction]  # bid value of each ONU's granted bytes

    @property
    def revenue(self) -> Fraction:
        return sum(self.payments, Fraction(0))


def vcg_settle(bids: Sequence[OnuReport], capacity: int) -> Settlement:
    if capacity < 0:
        raise ValueError("capacity must be non-negative")
    n = len(bids)
    zero = Fraction(0)
    requests = [b.r_asla for b in bids]
    if sum(requests) <= capacity:
        # every request fits: each bidder gets its whole request, worth its
        # whole bid, and removing a bidder frees nothing anyone else needs
        gross = [Fraction(b.v) if b.r_asla else zero for b in bids]
        plan = AllocationPlan(list(requests), requests, sum(gross, zero))
        return Settlement(plan, list(gross), [zero] * n, gross)
    order, rates = _bid_order(bids)
    plan = _fill(bids, order, rates, capacity, None)
    gross = [rates[i] * plan.grants[i] if plan.grants[i] else zero for i in range(n)]
    discounts = [zero] * n
    payments = [zero] * n
    for i in range(n):
        if plan.grants[i] == 0:
            continue
        without = _fill(bids, order, rates, capacity, i).value
        discounts[i] = plan.value - without
        payments[i] = gross[i] - discounts[i]
    return Settlement(plan, discounts, payments, gross)


@dataclass
class Grant:
    onu: int
    start_us: int  # first bit arrives at the OLT
    end_us: int
    sla_bytes: int
    asla_bytes: int
    payment: float = 0.0

    @property
    def length(self) -> int:
        return self.sla_bytes + self.asla_bytes


@dataclass
class CycleSchedule:
    start_us: int
    grants: list[Grant] = field(default_factory=list)

    @property
    def end_us(self) -> int:
        return max((g.end_us for g in self.grants), default=self.start_us)


def slot_us(nbytes: int, link_rate_bps: float) -> int:
    return math.ceil(nbytes * 8e6 / link_rate_bps)


def schedule_cycle(sla: Sequence[int], asla: Sequence[int], prop_us: Sequence[int], start_us: int,
                   link_rate_bps: float, guard_us: int, report_bytes: int, max_cycle_us: int,
                   payments: Sequence[float] | None = None) -> CycleSchedule:
    """Lay out one polling cycle, nearest ONU first.

    Grants leave the OLT at ``start_us``; an ONU's burst cannot reach the OLT
    before a round trip has elapsed, and consecutive bursts are separated by
    the guard interval.
    """
    order = sorted(range(len(prop_us)), key=lambda i: (prop_us[i], i))
    sched = CycleSchedule(start_us)
    t = start_us
    first = True
    for i in order:
        earliest = start_us + 2 * prop_us[i]
        begin = max(earliest, t if first else t + guard_us)
        end = begin + slot_us(report_bytes + sla[i] + asla[i], link_rate_bps)
        sched.grants.append(Grant(i, begin, end, sla[i], asla[i], payments[i] if payments else 0.0))
        t = end
        first = False
    if sched.end_us - start_us > max_cycle_us:
        raise CapacityError(f"cycle of {sched.end_us - start_us} us exceeds the {max_cycle_us} us maximum")
    return sched
