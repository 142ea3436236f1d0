import hashlib
import json
import math
import os
import subprocess
import sys
from array import array

import pytest

from exitsched.policies import POLICY_NAMES, Policy
from exitsched.scheduler import Decision, SchedulerConfig
from exitsched.simulator import (
    SimulationIntegrityError,
    WorkloadSpec,
    generate_arrivals,
    parse_ratio,
    run,
)
from helpers import tiny_table

CFG = SchedulerConfig()
ONE = tiny_table([[[2000], [5000], [12000], [28000]]])


def _arr(*xs):
    return array("q", xs)


def test_single_task_latency():
    spec = WorkloadSpec((1.0,), duration_us=100_000)
    res = run(spec, Policy("all_final"), ONE, SchedulerConfig(b_max=1), arrivals=[_arr(0)])
    (task,) = res.completed
    assert (task.dispatch, task.completion, task.total_latency) == (0, 28_000, 28_000)
    assert res.final_clock >= 28_000


def test_two_models_do_not_overlap():
    two = tiny_table([[[2000], [5000], [12000], [28000]], [[3000], [6000], [13000], [30000]]])
    spec = WorkloadSpec((1.0, 1.0), duration_us=100_000)
    res = run(spec, Policy("all_final"), two, SchedulerConfig(b_max=1), arrivals=[_arr(0), _arr(0)])
    a, b = sorted(res.completed, key=lambda t: t.dispatch)
    assert a.dispatch == 0 and b.dispatch == a.completion


def test_ratio_helpers():
    assert parse_ratio("3:2:1") == (3.0, 2.0, 1.0)
    assert WorkloadSpec.from_ratio((3, 2, 1), 40).rates == (120.0, 80.0, 40.0)
    with pytest.raises(ValueError):
        parse_ratio("3:0:1")
    with pytest.raises(ValueError):
        WorkloadSpec((1.0, 0.0))
    with pytest.raises(ValueError):
        WorkloadSpec((1.0,), duration_us=0)


def test_arrivals_deterministic_and_in_range():
    spec = WorkloadSpec((300.0, 200.0, 100.0), duration_us=2_000_000, seed=7)
    a, b = generate_arrivals(spec), generate_arrivals(spec)
    assert [list(x) for x in a] == [list(x) for x in b]
    for s in a:
        assert all(0 <= x < spec.duration_us for x in s)
        assert list(s) == sorted(s)
    other = generate_arrivals(WorkloadSpec(spec.rates, duration_us=2_000_000, seed=8))
    assert list(other[0]) != list(a[0])


def _digest(res):
    h = hashlib.sha256()
    for t in res.completed:
        h.update(repr((t.model, t.seq, t.arrival, t.dispatch, t.completion, t.exit)).encode())
    for d in res.decisions:
        h.update(repr((d.time, d.decision)).encode())
    h.update(repr((res.final_clock, res.backlog)).encode())
    return h.hexdigest()


@pytest.mark.parametrize("name", POLICY_NAMES)
def test_replay_identical(table, name):
    spec = WorkloadSpec.from_ratio((3, 2, 1), 120, duration_us=2_000_000, seed=3)
    assert _digest(run(spec, Policy(name), table, CFG)) == _digest(run(spec, Policy(name), table, CFG))


@pytest.mark.parametrize("name", POLICY_NAMES)
def test_engine_invariants(table, name):
    spec = WorkloadSpec.from_ratio((3, 2, 1), 160, duration_us=3_000_000, seed=11)
    res = run(spec, Policy(name), table, CFG)
    assert res.completed
    # Exclusivity: busy intervals are disjoint and each task lies in exactly one.
    intervals = [(d.time, d.time + d.decision.latency_us) for d in res.decisions]
    for (s0, e0), (s1, _) in zip(intervals, intervals[1:]):
        assert s1 >= e0
    starts = {s: e for s, e in intervals}
    prev = -1
    for t in res.completed:
        assert t.arrival <= t.dispatch < t.completion <= res.final_clock
        assert starts[t.dispatch] == t.completion
        assert t.total_latency == t.queuing_time + t.inference_time
        assert t.completion >= prev
        prev = t.completion
    assert sum(d.decision.batch for d in res.decisions) == len(res.completed)
    total = sum(len(s) for s in generate_arrivals(spec))
    assert len(res.completed) + res.backlog_total == total


@pytest.mark.parametrize("name", [p for p in POLICY_NAMES if p != "deferred_batching"])
def test_work_conservation(table, name):
    spec = WorkloadSpec.from_ratio((3, 2, 1), 100, duration_us=2_000_000, seed=5)
    streams = generate_arrivals(spec)
    res = run(spec, Policy(name), table, CFG, arrivals=streams)
    busy_end = [d.time + d.decision.latency_us for d in res.decisions]
    ends = set(busy_end)
    # Every dispatch happens either at an arrival instant or at a completion.
    arrivals = {x for s in streams for x in s}
    for d in res.decisions:
        assert d.time in arrivals or d.time in ends
    # After each completion, if anything is waiting the GPU restarts at once.
    dispatched = {d.time for d in res.decisions}
    all_arrivals = [x for s in streams for x in s]
    for end in busy_end:
        if end > spec.duration_us:
            continue
        arrived = sum(1 for x in all_arrivals if x <= end)
        served = sum(1 for t in res.completed if t.dispatch < end)
        if arrived > served:
            assert end in dispatched


def test_deferred_baseline_runs_late(table):
    spec = WorkloadSpec.from_ratio((3, 2, 1), 20, duration_us=2_000_000, seed=1)
    res = run(spec, Policy("deferred_batching"), table, CFG)
    # Light load: batches are held until their deadline-driven trigger.
    waits = [t.queuing_time for t in res.completed]
    assert sum(waits) / len(waits) > 10_000
    assert all(t.exit == 3 for t in res.completed)


def test_saturated_queue_fluid_limit(table):
    one = table.select_models(["R152"])
    lat = one.latency(0, 3, 10)
    capacity = 10 / lat * 1e6  # tasks/s
    rate = 1.5 * capacity
    for duration in (4_000_000, 8_000_000):
        spec = WorkloadSpec((rate,), duration_us=duration, seed=2)
        res = run(spec, Policy("all_final"), one, CFG)
        fluid = (rate - capacity) * duration / 1e6
        assert res.backlog_total == pytest.approx(fluid, rel=0.2)


def test_noise_knob(table):
    base = WorkloadSpec.from_ratio((3, 2, 1), 60, duration_us=2_000_000, seed=4)
    noisy = WorkloadSpec(base.rates, duration_us=base.duration_us, seed=4, service_cv=0.2)
    det = run(base, Policy("all_final"), table, CFG)
    res = run(noisy, Policy("all_final"), table, CFG)
    assert all(t.completion - d.time == d.decision.latency_us for d in det.decisions for t in det.completed if t.dispatch == d.time)
    dev = []
    for d in res.decisions:
        tasks = [t for t in res.completed if t.dispatch == d.time]
        dev.append(math.log((tasks[0].completion - d.time) / d.decision.latency_us))
    sd = (sum(x * x for x in dev) / len(dev) - (sum(dev) / len(dev)) ** 2) ** 0.5
    assert sd == pytest.approx(math.sqrt(math.log1p(0.04)), rel=0.15)
    assert _digest(res) == _digest(run(noisy, Policy("all_final"), table, CFG))


def test_integrity_fault(table, monkeypatch):
    import exitsched.simulator as sim

    monkeypatch.setattr(sim, "policy_decide", lambda *a: Decision(0, 0, 5, 1000))
    spec = WorkloadSpec((10.0, 10.0, 10.0), duration_us=500_000)
    with pytest.raises(SimulationIntegrityError):
        run(spec, Policy("edgeserving"), table, CFG)


def test_input_validation(table):
    with pytest.raises(ValueError):
        run(WorkloadSpec((1.0,)), Policy("edgeserving"), table, CFG)
    with pytest.raises(ValueError):
        run(WorkloadSpec((1.0, 1.0, 1.0)), Policy("edgeserving"), table, SchedulerConfig(b_max=11))


_SCRIPT = """
import hashlib, sys
from exitsched import kernels
from exitsched.profile import bundled_profile
from exitsched.policies import Policy
from exitsched.scheduler import SchedulerConfig
from exitsched.simulator import WorkloadSpec, run
t = bundled_profile("rtx3080")
spec = WorkloadSpec.from_ratio((3, 2, 1), 200, duration_us=2_000_000, seed=9)
r = run(spec, Policy("edgeserving"), t, SchedulerConfig())
h = hashlib.sha256(repr([(x.model, x.seq, x.dispatch, x.completion, x.exit) for x in r.completed]).encode())
print(kernels.BACKEND, h.hexdigest())
"""


def test_backends_agree():
    from exitsched import kernels

    if kernels.BACKEND != "cython":
        pytest.skip("compiled kernels not built")
    out = {}
    for pure in ("0", "1"):
        env = dict(os.environ, EXITSCHED_PURE=pure)
        proc = subprocess.run([sys.executable, "-c", _SCRIPT], env=env, capture_output=True, text=True, check=True)
        backend, digest = proc.stdout.split()
        out[backend] = digest
    assert set(out) == {"cython", "python"}
    assert out["cython"] == out["python"]
