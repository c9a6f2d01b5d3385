"""Learning-automata pricing: per-UE, per-buffer-state probability vectors
over price levels, updated with a linear reward-penalty scheme once the
end-to-end fate of a TTI's transmission is known."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class FeedbackError(RuntimeError):
    pass


def init_probs(n_actions: int) -> np.ndarray:
    if n_actions < 1:
        raise ValueError("action set must not be empty")
    return np.full(n_actions, 1.0 / n_actions)


def select_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    u = rng.random()
    ps = probs.tolist() if isinstance(probs, np.ndarray) else list(probs)
    x = u * sum(ps)
    acc = 0.0
    last = 0
    for i, p in enumerate(ps):
        if p > 0:
            last = i
            acc += p
            if x < acc:
                return i
    # rounding left x at the upper edge: take the last action with mass
    return last


def reward(asla_bytes: float, price: float) -> tuple[float, float]:
    """Raw and normalized reward for a fully delivered TTI batch."""
    if asla_bytes <= 0:
        raise ValueError("no above-SLA decision to reward")
    r = asla_bytes / price
    return r, r / asla_bytes


def penalty(sla_bytes: float, asla_bytes: float, delivered: float, price: float,
            p_bar: float) -> tuple[float, float]:
    """Raw and normalized penalty for a batch that was not fully delivered."""
    if asla_bytes <= 0:
        raise ValueError("no above-SLA decision to penalize")
    if sla_bytes <= delivered:
        raw = (delivered - sla_bytes - asla_bytes) * price
    else:
        raw = -asla_bytes * price
    lo = -asla_bytes * p_bar
    return raw, (raw - lo) / (0.0 - lo)


def update(probs, action, failed, v, printed_penalty: bool = False):
    """Linear reward-penalty step.

    Works on a single vector or on a batch (leading dimensions on ``probs``
    with matching ``action``/``failed``/``v`` arrays).  The penalty spreads
    ``v / (K - 1)`` to the other actions; ``printed_penalty`` uses
    ``v / (1 - K)`` instead, which does not conserve probability mass.
    """
    p = np.asarray(probs, float)
    k = p.shape[-1]
    if p.ndim == 1:
        return _update_one(p, int(action), bool(failed), float(v), printed_penalty)
    a = np.asarray(action)
    failed = np.asarray(failed, bool)
    v = np.asarray(v, float)
    if k == 1:
        return p.copy()
    onehot = np.arange(k) == a[..., None]
    v_ = v[..., None]
    win_others = (1 - v_) * p
    win_chosen = p + v_ * (1 - p)
    share = v_ / ((1 - k) if printed_penalty else (k - 1))
    lose_others = share + (1 - v_) * p
    lose_chosen = (1 - v_) * p
    chosen = np.where(failed[..., None], lose_chosen, win_chosen)
    others = np.where(failed[..., None], lose_others, win_others)
    return np.where(onehot, chosen, others)


def _update_one(p: np.ndarray, a: int, failed: bool, v: float, printed_penalty: bool) -> np.ndarray:
    k = len(p)
    if k == 1:
        return p.copy()
    out = p * (1 - v)
    if failed:
        out += v / ((1 - k) if printed_penalty else (k - 1))
        out[a] = (1 - v) * p[a]
    else:
        out[a] = p[a] + v * (1 - p[a])
    return out


@dataclass
class PendingFeedback:
    ue: int
    tti: int
    state: int
    action: int
    sla_bytes: int
    asla_bytes: int
    price: float
    resolved: bool = False


@dataclass
class Outcome:
    failed: bool
    delivered: int
    raw: float
    normalized: float


@dataclass
class LaState:
    """Probability vectors of one UE, one per buffer state 1..n_states."""
    n_states: int
    levels: list[float]
    p_bar: float
    printed_penalty: bool = False
    probs: np.ndarray = field(init=False)
    updates: int = 0

    def __post_init__(self):
        self.probs = np.tile(init_probs(len(self.levels)), (self.n_states + 1, 1))

    def choose(self, state: int, rng: np.random.Generator) -> tuple[int, float]:
        a = select_action(self.probs[state], rng)
        return a, self.levels[a]

    def decision(self, ue: int, tti: int, state: int, action: int, sla: int, asla: int) -> PendingFeedback:
        return PendingFeedback(ue, tti, state, action, sla, asla, self.levels[action])

    def resolve(self, pending: PendingFeedback, delivered: int) -> Outcome:
        if pending.resolved:
            raise FeedbackError(f"feedback for UE {pending.ue} TTI {pending.tti} already resolved")
        pending.resolved = True
        need = pending.sla_bytes + pending.asla_bytes
        if delivered >= need:
            raw, norm = reward(pending.asla_bytes, pending.price)
            failed = False
        else:
            raw, norm = penalty(pending.sla_bytes, pending.asla_bytes, delivered, pending.price, self.p_bar)
            failed = True
        s = pending.state
        self.probs[s] = update(self.probs[s], pending.action, failed, norm, self.printed_penalty)
        self.updates += 1
        return Outcome(failed, delivered, raw, norm)

    def snapshot(self) -> dict:
        return {"levels": list(self.levels), "probs": self.probs[1:].tolist(), "updates": self.updates}


def check_probs(probs: np.ndarray, tol: float = 1e-9) -> bool:
    p = np.asarray(probs)
    return bool(np.all(p >= -tol) and np.all(p <= 1 + tol) and np.all(np.abs(p.sum(-1) - 1) <= tol))


def resolve(state: LaState, pending: PendingFeedback, delivered: int) -> Optional[Outcome]:
    return state.resolve(pending, delivered)
