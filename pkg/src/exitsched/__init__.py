"""Deadline-aware scheduling of early-exit DNNs on one time-shared GPU."""

from .kernels import BACKEND
from .metrics import RunMetrics, compute_metrics
from .policies import POLICY_NAMES, Policy, WaitUntil, policy_decide
from .profile import (
    CalibrationParams,
    ProfileTable,
    bundled_profile,
    generate_synthetic_profile,
    load_profile,
    lookup_accuracy,
    lookup_latency,
    store_profile,
)
from .scheduler import Decision, SchedulerConfig, decide
from .simulator import SimResult, WorkloadSpec, run

__version__ = "0.1.0"
