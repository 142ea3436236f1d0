"""Per-model FIFO queues and task lifecycle records."""

from __future__ import annotations

from array import array
from dataclasses import dataclass
from typing import Iterator, Optional


class QueueError(ValueError):
    pass


class ClockRegressionError(QueueError):
    pass


@dataclass(slots=True)
class Task:
    """One inference request. Times are integer microseconds."""

    model: int
    seq: int
    arrival: int
    dispatch: Optional[int] = None
    completion: Optional[int] = None
    exit: Optional[int] = None

    @property
    def id(self) -> tuple[int, int]:
        return (self.model, self.seq)

    @property
    def queuing_time(self) -> int:
        """Wait between arrival and dispatch; only valid once dispatched."""
        return self.dispatch - self.arrival

    @property
    def inference_time(self) -> int:
        return self.completion - self.dispatch

    @property
    def total_latency(self) -> int:
        return self.completion - self.arrival


def queuing_time(task: Task, now: int) -> int:
    if now < task.arrival:
        raise ClockRegressionError(f"now={now} precedes arrival={task.arrival} of task {task.id}")
    return now - task.arrival


class FifoQueue:
    """Arrival-ordered pending tasks of one model.

    Arrival instants are mirrored in an int64 array so kernels can scan the
    pending waits without touching Task objects. ``head`` marks the first
    pending slot; served slots are compacted lazily.
    """

    __slots__ = ("model", "_tasks", "_arrivals", "head", "enqueued")

    def __init__(self, model: int):
        self.model = model
        self._tasks: list[Task] = []
        self._arrivals = array("q")
        self.head = 0
        self.enqueued = 0

    def __len__(self) -> int:
        return len(self._tasks) - self.head

    def __iter__(self) -> Iterator[Task]:
        return iter(self._tasks[self.head:])

    @property
    def arrivals(self) -> array:
        """Backing arrival array; pending entries start at ``head``."""
        return self._arrivals

    def front(self) -> Task:
        if self.head >= len(self._tasks):
            raise QueueError(f"queue {self.model} is empty")
        return self._tasks[self.head]

    def push(self, arrival: int) -> Task:
        if self._arrivals and arrival < self._arrivals[-1]:
            raise QueueError(
                f"queue {self.model}: arrival {arrival} precedes tail {self._arrivals[-1]}"
            )
        task = Task(self.model, self.enqueued, arrival)
        self.enqueued += 1
        self._tasks.append(task)
        self._arrivals.append(arrival)
        return task

    def pop_front(self, count: int) -> list[Task]:
        if count < 1 or count > len(self):
            raise QueueError(f"queue {self.model}: cannot dequeue {count} of {len(self)} tasks")
        start = self.head
        self.head += count
        out = self._tasks[start:self.head]
        if self.head > 256 and self.head * 2 > len(self._tasks):
            del self._tasks[:self.head]
            del self._arrivals[:self.head]
            self.head = 0
        return out

    def waits(self, now: int) -> list[int]:
        return [now - a for a in self._arrivals[self.head:]]


class SystemState:
    """All queues plus the simulated clock and GPU busy-until instant."""

    def __init__(self, n_models: int, now: int = 0):
        self.now = now
        self.queues = [FifoQueue(m) for m in range(n_models)]
        self.gpu_busy_until = now

    @property
    def n_models(self) -> int:
        return len(self.queues)

    def gpu_idle(self) -> bool:
        return self.gpu_busy_until <= self.now

    def pending(self) -> int:
        return sum(len(q) for q in self.queues)

    def enqueue(self, model: int, arrival: int) -> tuple[int, int]:
        if not 0 <= model < len(self.queues):
            raise QueueError(f"unknown model {model}")
        if arrival < self.now:
            raise ClockRegressionError(f"arrival {arrival} precedes clock {self.now}")
        return self.queues[model].push(arrival).id

    def dequeue_batch(self, model: int, count: int) -> list[Task]:
        if not 0 <= model < len(self.queues):
            raise QueueError(f"unknown model {model}")
        return self.queues[model].pop_front(count)

    def snapshot(self) -> "SystemState":
        """Independent copy; mutating either side leaves the other intact."""
        other = SystemState(0, self.now)
        other.gpu_busy_until = self.gpu_busy_until
        for q in self.queues:
            c = FifoQueue(q.model)
            c._tasks = [
                Task(t.model, t.seq, t.arrival, t.dispatch, t.completion, t.exit)
                for t in q._tasks[q.head:]
            ]
            c._arrivals = array("q", q._arrivals[q.head:])
            c.enqueued = q.enqueued
            other.queues.append(c)
        return other


def enqueue(state: SystemState, model: int, arrival: int) -> tuple[int, int]:
    return state.enqueue(model, arrival)


def dequeue_batch(state: SystemState, model: int, count: int) -> list[Task]:
    return state.dequeue_batch(model, count)
