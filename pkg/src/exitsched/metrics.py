"""Run metrics: tail latency, SLO violations, effective accuracy, exit depth."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

from .profile import ProfileTable
from .queueing import Task
from .simulator import SimResult


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class RunMetrics:
    p95_us: Optional[int]
    violation_ratio: float
    accuracy_pct: float
    avg_exit_depth: float
    exit_histogram: tuple[int, ...]
    completed: int
    backlog: int


def p95_latency(latencies: Sequence[int]) -> int:
    """Nearest-rank 95th percentile: the ceil(0.95 N)-th smallest value."""
    if not latencies:
        raise MetricsError("p95 of an empty sample")
    ordered = sorted(latencies)
    # integer arithmetic keeps ceil exact
    rank = -(-95 * len(ordered) // 100)
    return ordered[rank - 1]


def violation_ratio(tasks: Sequence[Task], tau_us: int) -> float:
    if not tasks:
        raise MetricsError("violation ratio of an empty task list")
    return sum(1 for t in tasks if t.completion - t.arrival > tau_us) / len(tasks)


def effective_accuracy(tasks: Sequence[Task], table: ProfileTable) -> float:
    if not tasks:
        raise MetricsError("accuracy of an empty task list")
    total = 0.0
    for t in tasks:
        if t.exit is None:
            raise MetricsError(f"task {t.id} has no served exit")
        try:
            total += table.models[t.model].accuracy_pct[t.exit]
        except IndexError:
            raise MetricsError(f"no accuracy entry for task {t.id} exit {t.exit}") from None
    return total / len(tasks)


def average_exit_depth(tasks: Sequence[Task], n_exits: Optional[int] = None) -> tuple[float, tuple[int, ...]]:
    """Mean exit ordinal and per-ordinal counts."""
    if not tasks:
        raise MetricsError("exit depth of an empty task list")
    counts = Counter(t.exit for t in tasks)
    width = max(counts) + 1 if n_exits is None else n_exits
    hist = tuple(counts.get(e, 0) for e in range(width))
    return sum(e * c for e, c in counts.items()) / len(tasks), hist


def compute_metrics(result: SimResult, table: ProfileTable, tau_us: int, warmup: int = 100) -> RunMetrics:
    """Metrics over completed tasks after dropping the first ``warmup``."""
    tasks = result.completed[warmup:]
    backlog = result.backlog_total
    if not tasks:
        nan = math.nan
        return RunMetrics(None, nan, nan, nan, (), 0, backlog)
    depth, hist = average_exit_depth(tasks, max(len(m.exits) for m in table.models))
    return RunMetrics(
        p95_us=p95_latency([t.completion - t.arrival for t in tasks]),
        violation_ratio=violation_ratio(tasks, tau_us),
        accuracy_pct=effective_accuracy(tasks, table),
        avg_exit_depth=depth,
        exit_histogram=hist,
        completed=len(tasks),
        backlog=backlog,
    )
