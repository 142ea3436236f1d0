"""Discrete-event simulation of a time-division shared GPU.

Arrivals are per-model Poisson streams; service times come from the profile
table. The policy runs with zero overhead whenever the GPU is idle and work is
pending, and again on its own timers.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .kernels import poisson_arrivals
from .policies import Policy, WaitUntil, policy_decide
from .profile import ProfileTable
from .queueing import SystemState, Task
from .rng import Xoshiro256, stream_seed
from .scheduler import Decision, SchedulerConfig

# Tie order at equal timestamps.
GPU_COMPLETE, ARRIVAL, POLICY_TIMER = 0, 1, 2


class SimulationIntegrityError(RuntimeError):
    pass


@dataclass(frozen=True)
class WorkloadSpec:
    rates: tuple[float, ...]  # requests/second, one per model
    duration_us: int = 20_000_000
    warmup: int = 100
    seed: int = 0
    service_cv: float = 0.0

    def __post_init__(self):
        if not self.rates or any(not r > 0 for r in self.rates):
            raise ValueError(f"every arrival rate must be > 0, got {self.rates}")
        if self.duration_us <= 0:
            raise ValueError("duration_us must be > 0")
        if self.warmup < 0 or self.service_cv < 0:
            raise ValueError("warmup and service_cv must be >= 0")

    @classmethod
    def from_ratio(cls, ratio: Sequence[float], reference_rate: float, reference: int = -1, **kw) -> "WorkloadSpec":
        """Rates proportional to ``ratio`` with model ``reference`` at ``reference_rate``."""
        unit = reference_rate / ratio[reference]
        return cls(tuple(unit * r for r in ratio), **kw)


def parse_ratio(text: str) -> tuple[float, ...]:
    parts = tuple(float(p) for p in text.split(":"))
    if not parts or any(p <= 0 for p in parts):
        raise ValueError(f"bad rate ratio {text!r}")
    return parts


@dataclass(frozen=True)
class DecisionRecord:
    time: int
    decision: Decision


@dataclass
class SimResult:
    completed: list[Task]
    decisions: list[DecisionRecord]
    final_clock: int
    backlog: list[int] = field(default_factory=list)  # pending tasks per model at the end

    @property
    def backlog_total(self) -> int:
        return sum(self.backlog)


def generate_arrivals(spec: WorkloadSpec) -> list:
    """Per-model arrival instants (µs), each from its own seeded stream."""
    return [
        poisson_arrivals(stream_seed(spec.seed, k), rate, float(spec.duration_us))
        for k, rate in enumerate(spec.rates)
    ]


def run(
    spec: WorkloadSpec,
    policy: Policy,
    table: ProfileTable,
    cfg: SchedulerConfig,
    arrivals: Optional[list] = None,
) -> SimResult:
    """Simulate one run. ``arrivals`` overrides the generated streams."""
    n = table.n_models
    if len(spec.rates) != n:
        raise ValueError(f"{len(spec.rates)} rates for {n} models")
    streams = generate_arrivals(spec) if arrivals is None else arrivals
    if len(streams) != n:
        raise ValueError(f"{len(streams)} arrival streams for {n} models")
    if cfg.b_max > table.b_max:
        raise ValueError(f"b_max {cfg.b_max} exceeds profile grid {table.b_max}")
    noise = Xoshiro256.for_stream(spec.seed, n) if spec.service_cv > 0 else None
    if noise is not None:
        sigma2 = math.log1p(spec.service_cv ** 2)
        sigma, mu = math.sqrt(sigma2), -sigma2 / 2.0

    duration = spec.duration_us
    state = SystemState(n)
    heap: list = []
    seq = 0
    pos = [0] * n
    for m, s in enumerate(streams):
        if len(s):
            heapq.heappush(heap, (s[0], ARRIVAL, seq, m))
            seq += 1

    completed: list[Task] = []
    decisions: list[DecisionRecord] = []
    in_flight: Optional[list[Task]] = None
    timer_gen = 0
    last = 0

    while heap:
        t, kind, _, payload = heapq.heappop(heap)
        state.now = t
        last = t
        if kind == GPU_COMPLETE:
            completed.extend(in_flight)
            in_flight = None
        elif kind == ARRIVAL:
            m = payload
            stream = streams[m]
            state.queues[m].push(stream[pos[m]])
            pos[m] += 1
            if pos[m] < len(stream):
                heapq.heappush(heap, (stream[pos[m]], ARRIVAL, seq, m))
                seq += 1
        elif payload != timer_gen:
            continue  # superseded timer

        if in_flight is not None or t > duration:
            continue
        if not any(len(q) for q in state.queues):
            continue
        out = policy_decide(policy, state, table, cfg)
        if out is None:
            continue
        if isinstance(out, WaitUntil):
            if out.time <= t:
                raise SimulationIntegrityError(f"{policy.kind}: wait-until {out.time} not after {t}")
            timer_gen += 1
            heapq.heappush(heap, (out.time, POLICY_TIMER, seq, timer_gen))
            seq += 1
            continue
        q = state.queues[out.model]
        if out.batch < 1 or out.batch > len(q):
            raise SimulationIntegrityError(
                f"{policy.kind} chose batch {out.batch} from queue {out.model} of length {len(q)} at t={t}"
            )
        timer_gen += 1  # any pending deferral is void once the GPU is busy
        service = out.latency_us
        if noise is not None:
            service = max(1, int(round(service * math.exp(mu + sigma * noise.normal()))))
        done = t + service
        batch = q.pop_front(out.batch)
        for task in batch:
            task.dispatch = t
            task.completion = done
            task.exit = out.exit
        in_flight = batch
        state.gpu_busy_until = done
        decisions.append(DecisionRecord(t, out))
        heapq.heappush(heap, (done, GPU_COMPLETE, seq, None))
        seq += 1

    return SimResult(
        completed=completed,
        decisions=decisions,
        final_clock=max(last, duration),
        backlog=[len(q) for q in state.queues],
    )
