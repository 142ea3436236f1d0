"""Scheduling policies: the deadline-aware scheduler, its baselines and ablations.

Every policy maps a state snapshot to a :class:`Decision`, a
:class:`WaitUntil` (only the deferred-batching baseline defers), or ``None``
when there is nothing to serve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .profile import ProfileTable
from .queueing import SystemState
from .scheduler import Decision, NoWork, SchedulerConfig, decide, select_exit

POLICY_NAMES = (
    "edgeserving",
    "all_final",
    "all_early",
    "ee_lqf",
    "ee_edf",
    "allfinal_da",
    "ours_bs1",
    "deferred_batching",
)


class UnknownPolicyError(ValueError):
    pass


@dataclass(frozen=True)
class WaitUntil:
    time: int


@dataclass(frozen=True)
class Policy:
    kind: str
    # deferred_batching: dispatch this many µs before the latest safe instant
    slack_us: int = 0

    def __post_init__(self):
        if self.kind not in POLICY_NAMES:
            raise UnknownPolicyError(
                f"unknown policy {self.kind!r}; expected one of {', '.join(POLICY_NAMES)}"
            )
        if self.slack_us < 0:
            raise ValueError("slack_us must be >= 0")

    @classmethod
    def named(cls, name: str) -> "Policy":
        return cls(name)


Outcome = Union[Decision, WaitUntil, None]


def _longest_queue(state: SystemState) -> Optional[int]:
    best, best_len = None, 0
    for m, q in enumerate(state.queues):
        if len(q) > best_len:
            best, best_len = m, len(q)
    return best


def _least_slack(state: SystemState) -> Optional[int]:
    # Slack tau - w is smallest where the oldest head arrived first.
    best, best_arrival = None, None
    for m, q in enumerate(state.queues):
        if len(q):
            a = q.arrivals[q.head]
            if best is None or a < best_arrival:
                best, best_arrival = m, a
    return best


def _fixed(state, table, cfg, m, exit_rule) -> Decision:
    q = state.queues[m]
    batch = min(len(q), cfg.b_max)
    w_max = state.now - q.arrivals[q.head]
    if exit_rule == "final":
        e = len(table.models[m].exits) - 1
    elif exit_rule == "early":
        e = 0
    else:
        e, feasible = select_exit(table, m, batch, w_max, cfg)
        return Decision(m, e, batch, table.latency(m, e, batch), None, feasible)
    lat = table.latency(m, e, batch)
    return Decision(m, e, batch, lat, None, w_max + lat <= cfg.tau_us)


def _deferred(state: SystemState, table: ProfileTable, cfg: SchedulerConfig, slack: int) -> Outcome:
    now = state.now
    fire, fire_at = None, None
    earliest = None
    for m, q in enumerate(state.queues):
        n = len(q)
        if not n:
            continue
        batch = min(n, cfg.b_max)
        final = len(table.models[m].exits) - 1
        trigger = q.arrivals[q.head] + cfg.tau_us - table.latency(m, final, batch) - slack
        if batch == cfg.b_max or trigger <= now:
            if fire is None or trigger < fire_at:
                fire, fire_at = m, trigger
        elif earliest is None or trigger < earliest:
            earliest = trigger
    if fire is not None:
        return _fixed(state, table, cfg, fire, "final")
    if earliest is None:
        return None
    return WaitUntil(earliest)


def policy_decide(policy: Policy, state: SystemState, table: ProfileTable, cfg: SchedulerConfig) -> Outcome:
    kind = policy.kind
    if kind in ("edgeserving", "allfinal_da", "ours_bs1"):
        try:
            return decide(
                state,
                table,
                cfg,
                force_exit="final" if kind == "allfinal_da" else None,
                batch_cap=1 if kind == "ours_bs1" else None,
            )
        except NoWork:
            return None
    if kind == "deferred_batching":
        return _deferred(state, table, cfg, policy.slack_us)
    m = _least_slack(state) if kind == "ee_edf" else _longest_queue(state)
    if m is None:
        return None
    rule = {"all_final": "final", "all_early": "early"}.get(kind, "select")
    return _fixed(state, table, cfg, m, rule)
