"""Compiled vs pure-Python kernels: urgency sums, arrival generation, full runs.

    python3 benchmarks/bench_kernels.py [--repeat N]

Full-run timings switch backends in a subprocess via EXITSCHED_PURE=1.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit
from array import array

from exitsched import _pykernels
from exitsched.rng import stream_seed

try:
    from exitsched import _ckernels
except ImportError:  # extension not built
    _ckernels = None

RUN_SNIPPET = """
import time
from exitsched.profile import bundled_profile
from exitsched.policies import Policy
from exitsched.scheduler import SchedulerConfig
from exitsched.simulator import WorkloadSpec, run
t = bundled_profile("rtx3080")
spec = WorkloadSpec.from_ratio((3, 2, 1), {rate}, seed=0)
best = min(
    (lambda s: (run(spec, Policy("edgeserving"), t, SchedulerConfig()), time.perf_counter() - s)[1])(time.perf_counter())
    for _ in range({repeat})
)
print(best)
"""


def bench_kernel(mod, repeat):
    arrivals = array("q", range(0, 2_000_000, 200))  # 10k pending tasks
    words = stream_seed(0, 0)
    urg = min(timeit.repeat(lambda: mod.urgency_sum(arrivals, 0, 2_050_000, 50_000.0, 10.0), number=20, repeat=repeat)) / 20
    arr = min(timeit.repeat(lambda: mod.poisson_arrivals(words, 1000.0, 20e6), number=5, repeat=repeat)) / 5
    return urg, arr


def bench_run(pure, rate, repeat):
    env = dict(os.environ, EXITSCHED_PURE="1" if pure else "0")
    out = subprocess.run(
        [sys.executable, "-c", RUN_SNIPPET.format(rate=rate, repeat=repeat)],
        env=env, capture_output=True, text=True, check=True,
    )
    return float(out.stdout)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    rows = []
    py = bench_kernel(_pykernels, args.repeat)
    c = bench_kernel(_ckernels, args.repeat) if _ckernels else (float("nan"),) * 2
    rows.append(("urgency_sum, 10k tasks", py[0], c[0]))
    rows.append(("poisson_arrivals, 20k", py[1], c[1]))
    for rate in (80, 240):
        slow = bench_run(True, rate, args.repeat)
        fast = bench_run(False, rate, args.repeat) if _ckernels else float("nan")
        rows.append((f"20 s run, edgeserving @{rate}", slow, fast))

    print(f"{'benchmark':<32}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, slow, fast in rows:
        print(f"{name:<32}{slow * 1e3:>12.3f}{fast * 1e3:>12.3f}{slow / fast:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
