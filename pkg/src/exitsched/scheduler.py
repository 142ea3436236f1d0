"""Deadline-aware model/exit/batch selection.

Each round, every non-empty queue is a candidate. A candidate serves
``B = min(|Q|, B_max)`` tasks at the deepest exit whose latency still lets the
oldest task meet the deadline. Serving it delays every other pending task by
that latency; the candidate whose predicted queues carry the least total
urgency wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .kernels import urgency_sum
from .profile import ProfileTable
from .queueing import QueueError, SystemState


class NoWork(Exception):
    """Raised by :func:`decide` when every queue is empty."""


@dataclass(frozen=True)
class SchedulerConfig:
    tau_us: int = 50_000
    clip: float = 10.0
    b_max: int = 10

    def __post_init__(self):
        if self.tau_us <= 0:
            raise ValueError(f"tau_us must be positive, got {self.tau_us}")
        if not self.clip >= 1.0:
            raise ValueError(f"clip must be >= 1, got {self.clip}")
        if self.b_max < 1:
            raise ValueError(f"b_max must be >= 1, got {self.b_max}")


@dataclass(frozen=True)
class Decision:
    model: int
    exit: int
    batch: int
    latency_us: int
    score: Optional[float] = None
    # False when no exit lets the oldest task meet the deadline.
    feasible: bool = True


@dataclass(frozen=True)
class PredictedState:
    """Predicted queuing time of every task left pending, per queue."""

    waits: tuple[tuple[int, ...], ...]


def urgency(w: float, cfg: SchedulerConfig) -> float:
    """Clipped exponential urgency of a task that has waited ``w`` µs."""
    try:
        u = math.exp(w / cfg.tau_us - 1.0)
    except OverflowError:
        return cfg.clip
    return u if u < cfg.clip else cfg.clip


def stability_score(pred: PredictedState, cfg: SchedulerConfig) -> float:
    # Per-queue subtotals, then across queues: the order decide() uses.
    total = 0.0
    for waits in pred.waits:
        sub = 0.0
        for w in waits:
            sub += urgency(w, cfg)
        total += sub
    return total


def select_batch(queue_len: int, cfg: SchedulerConfig) -> int:
    if queue_len < 1:
        raise QueueError("select_batch on an empty queue")
    return min(queue_len, cfg.b_max)


def select_exit(
    table: ProfileTable, model: int, batch: int, w_max: int, cfg: SchedulerConfig
) -> tuple[int, bool]:
    """Deepest exit with ``w_max + L(model, e, batch) <= tau``.

    Falls back to the shallowest exit, flagged infeasible, when none fits.
    """
    rows = table.models[model].latency_us
    budget = cfg.tau_us - w_max
    for e in range(len(rows) - 1, -1, -1):
        if rows[e][batch - 1] <= budget:
            return e, True
    return 0, False


def predict_queues(
    state: SystemState, candidate: int, exit: int, batch: int, table: ProfileTable
) -> PredictedState:
    q = state.queues[candidate]
    if batch > len(q):
        raise QueueError(f"batch {batch} exceeds queue {candidate} length {len(q)}")
    shift = table.latency(candidate, exit, batch)
    out = []
    for m, queue in enumerate(state.queues):
        waits = queue.waits(state.now)
        if m == candidate:
            waits = waits[batch:]
        out.append(tuple(w + shift for w in waits))
    return PredictedState(tuple(out))


def candidate_score(
    state: SystemState, candidate: int, batch: int, latency_us: int, cfg: SchedulerConfig
) -> float:
    """Stability score after hypothetically serving ``batch`` tasks of
    ``candidate`` for ``latency_us``; same value as
    ``stability_score(predict_queues(...))`` without building the lists."""
    offset = state.now + latency_us
    tau = float(cfg.tau_us)
    clip = cfg.clip
    total = 0.0
    for m, q in enumerate(state.queues):
        start = q.head + batch if m == candidate else q.head
        total += urgency_sum(q.arrivals, start, offset, tau, clip)
    return total


def decide(
    state: SystemState,
    table: ProfileTable,
    cfg: SchedulerConfig,
    *,
    force_exit: Optional[str] = None,
    batch_cap: Optional[int] = None,
) -> Decision:
    """Pick (model, exit, batch) minimizing the predicted stability score.

    ``force_exit="final"`` pins every candidate to its deepest exit and
    ``batch_cap`` bounds the batch size; both exist for the ablations.
    Ties go to the lowest model index.
    """
    now = state.now
    b_cap = cfg.b_max if batch_cap is None else min(cfg.b_max, batch_cap)
    best: Optional[Decision] = None
    for m, q in enumerate(state.queues):
        n = len(q)
        if not n:
            continue
        batch = n if n < b_cap else b_cap
        w_max = now - q.arrivals[q.head]
        if force_exit == "final":
            e = len(table.models[m].exits) - 1
            feasible = w_max + table.latency(m, e, batch) <= cfg.tau_us
        else:
            e, feasible = select_exit(table, m, batch, w_max, cfg)
        lat = table.latency(m, e, batch)
        score = candidate_score(state, m, batch, lat, cfg)
        if best is None or score < best.score:
            best = Decision(m, e, batch, lat, score, feasible)
    if best is None:
        raise NoWork("all queues are empty")
    return best


def scores_for(state: SystemState, table: ProfileTable, cfg: SchedulerConfig) -> Sequence[Optional[float]]:
    """Per-model candidate scores (None for empty queues); for inspection."""
    out: list[Optional[float]] = []
    for m, q in enumerate(state.queues):
        if not len(q):
            out.append(None)
            continue
        batch = select_batch(len(q), cfg)
        e, _ = select_exit(table, m, batch, state.now - q.front().arrival, cfg)
        out.append(candidate_score(state, m, batch, table.latency(m, e, batch), cfg))
    return out
