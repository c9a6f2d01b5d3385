"""Packet classification and assignment at the eNodeB.

Per UE and TTI: split the buffer into SLA / above-SLA (ASLA) bytes against a
sliding window of transmitted SLA bytes, derive the buffer state used by the
pricing automaton, then assign resource chunks (RCs) by a payment-weighted
maximum assignment in which UEs left on a dummy RC pay a penalty for SLA
bytes about to expire.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment


class SlaTracker:
    """Sliding window over the last ``window`` TTIs of SLA bytes sent.

    ``sla_rate`` is the per-TTI SLA rate in bytes; ``sla_rate == 0`` models a GAA
    user whose bytes are all above SLA.
    """

    __slots__ = ("sla_rate", "window", "entries", "sla_used")

    def __init__(self, sla_rate: float, window: int = 100):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.sla_rate = sla_rate
        self.window = window
        self.entries: deque[int] = deque([0] * window, maxlen=window)
        self.sla_used = 0

    @property
    def allowance(self) -> float:
        return (self.window + 1) * self.sla_rate

    def classify(self, backlog: int) -> tuple[int, int]:
        return classify(self.sla_used, self.allowance, backlog)

    def advance(self, sla_sent: int) -> None:
        if sla_sent < 0:
            raise ValueError("sla_sent must be non-negative")
        self.sla_used += sla_sent - self.entries[0]
        self.entries.append(sla_sent)


def classify(sla_used: float, allowance: float, backlog: int) -> tuple[int, int]:
    """Return (sla_bytes, asla_bytes) for a buffer of ``backlog`` bytes."""
    if backlog < 0:
        raise ValueError("backlog must be non-negative")
    if sla_used >= allowance:
        return 0, backlog
    room = allowance - sla_used
    if sla_used + backlog > allowance:
        # fractional SLA rates leave a fractional room; whole bytes only
        sla = int(math.floor(room))
        return sla, backlog - sla
    return backlog, 0


def advance_window(tracker: SlaTracker, sla_sent: int) -> None:
    tracker.advance(sla_sent)


def buffer_state(asla_bytes: float, capacity: float, n_states: int) -> int:
    if n_states < 1:
        raise ValueError("need at least one buffer state")
    if not 0 <= asla_bytes <= capacity:
        raise ValueError("asla_bytes must lie in [0, capacity]")
    if float(asla_bytes).is_integer() and float(capacity).is_integer():
        # exact integer ceil at state boundaries
        return -((-int(asla_bytes) * n_states) // int(capacity))
    return math.ceil(asla_bytes * n_states / capacity)


def payment_entry(sla_used: float, allowance: float, base_price: float, price: float, w: float) -> float:
    """Payment received if the UE sends ``w`` bytes on an RC."""
    if sla_used >= allowance:
        return price * w
    if sla_used + w > allowance:
        return (allowance - sla_used) * base_price + (w - allowance + sla_used) * price
    return base_price * w


def payment_matrix(sla_used, allowance, base_price, price, w) -> np.ndarray:
    """Vectorized :func:`payment_entry`; per-UE vectors, ``w`` is N x M."""
    sla_used = np.asarray(sla_used, float)[:, None]
    allowance = np.asarray(allowance, float)[:, None]
    base_price = np.broadcast_to(np.asarray(base_price, float), sla_used.shape[:1])[:, None]
    price = np.asarray(price, float)[:, None]
    w = np.asarray(w, float)
    room = allowance - sla_used
    over = sla_used >= allowance
    split = ~over & (sla_used + w > allowance)
    return np.where(over, price * w,
                    np.where(split, room * base_price + (w - room) * price, base_price * w))


def traffic_entry(q: float, backlog: float) -> float:
    return min(q, backlog)


def estimate_drop_risk(packets: Iterable, now: int, tti_us: int = 1000) -> int:
    """SLA bytes still buffered whose deadline falls before ``now + tti``."""
    horizon = now + tti_us
    return sum(p.size - p.sent for p in packets if p.sla and p.deadline < horizon)


@dataclass
class AssignmentProblem:
    """Square weight matrix: real RCs first, then dummy columns (or, when
    there are fewer UEs than RCs, zero-weight dummy rows)."""
    n_ues: int
    n_rcs: int
    weights: np.ndarray

    @classmethod
    def build(cls, payoff: np.ndarray, drop_risk: Optional[np.ndarray] = None, p_bar: float = 0.0):
        payoff = np.asarray(payoff, float)
        n, m = payoff.shape
        drop_risk = np.zeros(n) if drop_risk is None else np.asarray(drop_risk, float)
        size = max(n, m)
        weights = np.zeros((size, size))
        weights[:n, :m] = payoff
        if n > m:
            weights[:n, m:] = (-p_bar * drop_risk)[:, None]
        return cls(n, m, weights)


def solve_assignment(problem: AssignmentProblem) -> tuple[list[Optional[int]], float]:
    """Maximum-weight perfect matching on the padded square matrix.

    Returns the RC index per UE (None for a dummy RC) and the objective:
    payments collected minus the dummy penalties.
    """
    w = problem.weights
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("assignment weights must be square")
    if w.shape[0] != max(problem.n_ues, problem.n_rcs):
        raise ValueError("weights do not match the padded problem size")
    rows, cols = linear_sum_assignment(w, maximize=True)
    col_of = dict(zip(rows.tolist(), cols.tolist()))
    out: list[Optional[int]] = []
    obj = 0.0
    for i in range(problem.n_ues):
        j = col_of[i]
        obj += w[i, j]
        out.append(j if j < problem.n_rcs else None)
    return out, obj
