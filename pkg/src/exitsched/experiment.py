"""Experiment runner: configs, sweeps, paired policy comparisons, CSV output."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from .metrics import RunMetrics, compute_metrics
from .policies import POLICY_NAMES, Policy, UnknownPolicyError
from .profile import (
    PRESETS,
    ProfileTable,
    bundled_profile,
    generate_synthetic_profile,
    load_profile,
)
from .scheduler import SchedulerConfig
from .simulator import SimResult, WorkloadSpec, parse_ratio, run

OUTPUT_DIR_ENV = "EXITSCHED_OUTPUT_DIR"

SUMMARY_COLUMNS = (
    "sweep_var",
    "policy",
    "seed_count",
    "p95_us_mean",
    "p95_us_std",
    "violation_ratio_mean",
    "violation_ratio_std",
    "accuracy_pct_mean",
    "avg_exit_depth_mean",
    "completed",
    "backlog",
    # extensions, appended so the columns above keep their positions
    "avg_exit_depth_std",
    "final_exit_share_mean",
)
TRACE_COLUMNS = ("task_id", "model", "arrival_us", "dispatch_us", "complete_us", "exit", "violated")
SWEEP_VARIABLES = ("reference_rate", "tau_us", "exit_mask", "models")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    profile: Optional[str] = None
    calibration: Optional[Mapping[str, Any]] = None
    policy: str = "edgeserving"
    tau_us: int = 50_000
    clip: float = 10.0
    b_max: int = 10
    ratio: str = "3:2:1"
    reference_rate: float = 100.0
    rates: Optional[Sequence[float]] = None
    service_cv: float = 0.0
    exit_mask: Optional[Any] = None
    models: Optional[Sequence[str]] = None
    sweep_variable: Optional[str] = None
    sweep_values: Sequence[Any] = ()
    duration_us: int = 20_000_000
    warmup: int = 100
    seeds: Sequence[int] = (0, 1, 2)
    output_dir: str = "results"
    write_traces: bool = False

    def __post_init__(self):
        if self.policy not in POLICY_NAMES:
            raise ConfigError(f"unknown policy {self.policy!r}")
        if self.profile is not None and self.calibration is not None:
            raise ConfigError("give either profile or calibration, not both")
        if self.sweep_variable is not None:
            if self.sweep_variable not in SWEEP_VARIABLES:
                raise ConfigError(f"sweep variable must be one of {SWEEP_VARIABLES}")
            if not self.sweep_values:
                raise ConfigError("sweep values must be non-empty")
        if not self.seeds:
            raise ConfigError("seed list must be non-empty")
        if self.duration_us <= 0 or self.warmup < 0:
            raise ConfigError("duration_us must be > 0 and warmup >= 0")
        try:
            SchedulerConfig(self.tau_us, self.clip, self.b_max)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.exit_mask is not None:
            _check_mask(self.exit_mask)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kw = dict(doc)
        for key in ("seeds", "sweep_values", "models", "rates"):
            if kw.get(key) is not None:
                kw[key] = tuple(kw[key])
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def output_path(self) -> Path:
        return Path(os.environ.get(OUTPUT_DIR_ENV) or self.output_dir)


def _check_mask(mask) -> None:
    groups = mask.values() if isinstance(mask, Mapping) else [mask]
    for labels in groups:
        if isinstance(labels, str):
            labels = labels.split("+")
        if not labels:
            raise ConfigError("exit mask must keep at least one exit per model")


def parse_mask(value) -> Any:
    """``"layer1+final"`` or a label list or ``{model: labels}``; ``"all_exits"``
    means no restriction."""
    if value in (None, "all", "all_exits"):
        return None
    if isinstance(value, str):
        return [x for x in value.split("+") if x]
    if isinstance(value, Mapping):
        return {k: parse_mask(v) if isinstance(v, str) else list(v) for k, v in value.items()}
    return list(value)


def exit_mask_apply(table: ProfileTable, mask) -> ProfileTable:
    """Restrict the exit search space; ``None`` or every label is identity."""
    mask = parse_mask(mask)
    if mask is None:
        return table
    if isinstance(mask, Mapping):
        for mid, labels in mask.items():
            if not labels:
                raise ConfigError(f"exit mask removes every exit of model {mid!r}")
    elif not mask:
        raise ConfigError("exit mask removes every exit")
    return table.restrict_exits(mask)


def base_table(config: ExperimentConfig) -> ProfileTable:
    if config.profile is not None:
        return load_profile(config.profile)
    if config.calibration is not None:
        cal = dict(config.calibration)
        preset = cal.pop("preset", "rtx3080")
        seed = cal.pop("seed", 0)
        if preset not in PRESETS:
            raise ConfigError(f"unknown calibration preset {preset!r}")
        params = replace(PRESETS[preset], **cal) if cal else PRESETS[preset]
        return generate_synthetic_profile(seed, params)
    return bundled_profile("rtx3080")


@dataclass(frozen=True)
class Point:
    """One fully resolved sweep point."""

    label: str
    table: ProfileTable
    cfg: SchedulerConfig
    rates: tuple[float, ...]


def _format_value(v) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    if isinstance(v, (list, tuple)):
        return "+".join(str(x) for x in v)
    if isinstance(v, Mapping):
        return ";".join(f"{k}={_format_value(x)}" for k, x in v.items())
    return str(v)


def resolve_point(config: ExperimentConfig, base: ProfileTable, value=None) -> Point:
    var = config.sweep_variable
    tau = config.tau_us
    rate = config.reference_rate
    mask = config.exit_mask
    models = config.models
    if var == "reference_rate":
        rate = float(value)
    elif var == "tau_us":
        tau = int(value)
    elif var == "exit_mask":
        mask = value
    elif var == "models":
        models = value.split(",") if isinstance(value, str) else list(value)

    table = base
    if models is not None:
        table = table.select_models(list(models))
    table = exit_mask_apply(table, mask)
    if config.rates is not None:
        rates = tuple(float(r) for r in config.rates)
    else:
        ratio = parse_ratio(config.ratio)
        if len(ratio) != table.n_models:
            raise ConfigError(f"ratio {config.ratio!r} has {len(ratio)} parts for {table.n_models} models")
        unit = rate / ratio[-1]
        rates = tuple(unit * r for r in ratio)
    if len(rates) != table.n_models:
        raise ConfigError(f"{len(rates)} rates for {table.n_models} models")
    label = _format_value(value) if var is not None else _format_value(rate)
    try:
        cfg = SchedulerConfig(tau, config.clip, config.b_max)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return Point(label, table, cfg, rates)


def points(config: ExperimentConfig) -> list[Point]:
    base = base_table(config)
    if config.sweep_variable is None:
        return [resolve_point(config, base)]
    return [resolve_point(config, base, v) for v in config.sweep_values]


def _simulate(args) -> tuple[RunMetrics, Optional[str]]:
    point, policy, seed, config = args
    spec = WorkloadSpec(
        point.rates,
        duration_us=config.duration_us,
        warmup=config.warmup,
        seed=seed,
        service_cv=config.service_cv,
    )
    result = run(spec, Policy(policy), point.table, point.cfg)
    trace = trace_csv(result, point.table, point.cfg.tau_us) if config.write_traces else None
    return compute_metrics(result, point.table, point.cfg.tau_us, config.warmup), trace


def _mean(xs):
    return math.fsum(xs) / len(xs)


def _std(xs):
    return statistics.stdev(xs) if len(xs) > 1 else 0.0


@dataclass
class SummaryRow:
    sweep_var: str
    policy: str
    metrics: list[RunMetrics] = field(default_factory=list)

    def values(self) -> dict[str, Any]:
        ok = [m for m in self.metrics if m.completed]
        p95 = [float(m.p95_us) for m in ok]
        vr = [m.violation_ratio for m in ok]
        depth = [m.avg_exit_depth for m in ok]
        final_share = [m.exit_histogram[-1] / m.completed for m in ok]
        nan = math.nan
        return {
            "sweep_var": self.sweep_var,
            "policy": self.policy,
            "seed_count": len(self.metrics),
            "p95_us_mean": _mean(p95) if ok else nan,
            "p95_us_std": _std(p95) if ok else nan,
            "violation_ratio_mean": _mean(vr) if ok else nan,
            "violation_ratio_std": _std(vr) if ok else nan,
            "accuracy_pct_mean": _mean([m.accuracy_pct for m in ok]) if ok else nan,
            "avg_exit_depth_mean": _mean(depth) if ok else nan,
            "completed": _mean([m.completed for m in self.metrics]),
            "backlog": _mean([m.backlog for m in self.metrics]),
            "avg_exit_depth_std": _std(depth) if ok else nan,
            "final_exit_share_mean": _mean(final_share) if ok else nan,
        }


def _cell(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def summary_csv(rows: Sequence[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for row in rows:
        vals = row.values()
        w.writerow([_cell(vals[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def trace_csv(result: SimResult, table: ProfileTable, tau_us: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for t in result.completed:
        w.writerow(
            [
                f"{table.models[t.model].id}:{t.seq}",
                table.models[t.model].id,
                t.arrival,
                t.dispatch,
                t.completion,
                t.exit,
                int(t.completion - t.arrival > tau_us),
            ]
        )
    return buf.getvalue()


def _run_rows(config: ExperimentConfig, policies: Sequence[str], jobs: int = 1) -> tuple[dict[str, list[SummaryRow]], dict]:
    pts = points(config)
    work = [(pt, pol, seed, config) for pol in policies for pt in pts for seed in config.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_simulate, work, chunksize=1))
    else:
        results = [_simulate(w) for w in work]
    rows: dict[str, list[SummaryRow]] = {p: [] for p in policies}
    traces = {}
    it = iter(results)
    for pol in policies:
        for pt in pts:
            row = SummaryRow(pt.label, pol)
            for seed in config.seeds:
                metrics, trace = next(it)
                row.metrics.append(metrics)
                if trace is not None:
                    traces[(pol, pt.label, seed)] = trace
            rows[pol].append(row)
    return rows, traces


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None


def _safe(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in label)


def _write_traces(out: Path, traces: dict) -> list[Path]:
    paths = []
    for (pol, label, seed), text in traces.items():
        p = out / "traces" / f"trace_{pol}_{_safe(label)}_seed{seed}.csv"
        _write(p, text)
        paths.append(p)
    return paths


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> list[Path]:
    """Run every (sweep point, seed) under ``config.policy``; write
    ``summary.csv`` (one row per point) and optional traces."""
    rows, traces = _run_rows(config, [config.policy], jobs)
    out = config.output_path()
    summary = out / "summary.csv"
    _write(summary, summary_csv(rows[config.policy]))
    return [summary] + _write_traces(out, traces)


def compare_policies(config: ExperimentConfig, policies: Sequence[str], jobs: int = 1) -> list[Path]:
    """Paired comparison: every policy sees the same seeded arrival streams.
    Writes ``summary_<policy>.csv`` per policy."""
    if not policies:
        raise ConfigError("policy list is empty")
    for p in policies:
        if p not in POLICY_NAMES:
            raise UnknownPolicyError(f"unknown policy {p!r}; expected one of {', '.join(POLICY_NAMES)}")
    rows, traces = _run_rows(config, list(policies), jobs)
    out = config.output_path()
    paths = []
    for p in policies:
        path = out / f"summary_{p}.csv"
        _write(path, summary_csv(rows[p]))
        paths.append(path)
    return paths + _write_traces(out, traces)


def sweep_rows(config: ExperimentConfig, policies: Sequence[str], jobs: int = 1) -> dict[str, list[SummaryRow]]:
    """In-memory variant of :func:`compare_policies`."""
    return _run_rows(config, list(policies), jobs)[0]
