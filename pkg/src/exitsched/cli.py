"""Command-line entry point: ``exitsched <verb> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .experiment import (
    SWEEP_VARIABLES,
    ConfigError,
    ExperimentConfig,
    compare_policies,
    run_experiment,
)
from .policies import POLICY_NAMES, UnknownPolicyError
from .profile import (
    PRESETS,
    InfeasibleCalibrationError,
    ProfileError,
    check_profile_laws,
    dumps_profile,
    generate_synthetic_profile,
    load_profile,
)

log = logging.getLogger("exitsched")


def _csv(kind):
    def parse(text):
        return [kind(x) for x in text.split(",") if x]

    return parse


def _sweep_value(variable, text):
    if variable == "reference_rate":
        return float(text)
    if variable == "tau_us":
        return int(text)
    return text


def _sweep_values(args) -> tuple:
    # Model-instance lists contain commas, so they are separated by ";".
    sep = ";" if args.variable == "models" else ","
    return tuple(_sweep_value(args.variable, v) for v in (args.values or "").split(sep) if v)


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="experiment config JSON")
    p.add_argument("--profile", help="profile JSON (default: bundled rtx3080 stand-in)")
    p.add_argument("--policy", choices=POLICY_NAMES)
    p.add_argument("--tau-us", type=int, dest="tau_us")
    p.add_argument("--clip", type=float)
    p.add_argument("--b-max", type=int, dest="b_max")
    p.add_argument("--ratio", help='rate ratio such as "3:2:1"; the last model is the reference')
    p.add_argument("--rate", type=float, dest="reference_rate", help="reference model rate, req/s")
    p.add_argument("--rates", type=_csv(float), help="explicit per-model rates, req/s")
    p.add_argument("--models", type=_csv(str), help="model instances, e.g. R50,R50,R152")
    p.add_argument("--exit-mask", dest="exit_mask", help='exits kept for every model, e.g. "layer1+final"')
    p.add_argument("--duration-us", type=int, dest="duration_us")
    p.add_argument("--warmup", type=int)
    p.add_argument("--seeds", type=_csv(int))
    p.add_argument("--service-cv", type=float, dest="service_cv")
    p.add_argument("--out", dest="output_dir", help="output directory")
    p.add_argument("--trace", action="store_true", help="also write per-task traces")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    over = {
        k: getattr(args, k)
        for k in (
            "profile", "policy", "tau_us", "clip", "b_max", "ratio", "reference_rate",
            "rates", "models", "exit_mask", "duration_us", "warmup", "seeds",
            "service_cv", "output_dir",
        )
        if getattr(args, k, None) is not None
    }
    for key in ("seeds", "rates", "models"):
        if key in over:
            over[key] = tuple(over[key])
    if "profile" in over:
        over["calibration"] = None
    if args.trace:
        over["write_traces"] = True
    try:
        return replace(cfg, **over)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_run(args) -> int:
    cfg = replace(_config(args), sweep_variable=None, sweep_values=())
    for p in run_experiment(cfg, jobs=args.jobs):
        print(p)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.variable:
        cfg = replace(cfg, sweep_variable=args.variable, sweep_values=_sweep_values(args))
    if cfg.sweep_variable is None:
        raise ConfigError("sweep needs --variable/--values or a config with sweep_variable")
    for p in run_experiment(cfg, jobs=args.jobs):
        print(p)
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    if args.variable:
        cfg = replace(cfg, sweep_variable=args.variable, sweep_values=_sweep_values(args))
    policies = [p for p in args.policies.split(",") if p]
    for p in compare_policies(cfg, policies, jobs=args.jobs):
        print(p)
    return 0


def cmd_gen_profile(args) -> int:
    params = PRESETS[args.preset]
    if args.batch_growth is not None:
        params = replace(params, batch_growth=args.batch_growth)
    if args.jitter is not None:
        params = replace(params, jitter=args.jitter)
    table = generate_synthetic_profile(args.seed, params)
    text = dumps_profile(table)
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text, encoding="utf-8")
        print(args.output)
    return 0


def cmd_validate_profile(args) -> int:
    table = load_profile(args.path)
    print(f"ok: {table.n_models} models, {table.n_cells} cells, statistic={table.statistic}, b_max={table.b_max}")
    if args.laws:
        problems = check_profile_laws(table)
        for p in problems:
            print(f"law violation: {p}")
        if problems:
            return 1
        print("ok: latency laws hold")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exitsched", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="single experiment point")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_run)

    for name, func, help_ in (
        ("sweep", cmd_sweep, "sweep traffic, SLO, exit mask or model combination"),
        ("compare", cmd_compare, "several policies over the same arrival streams"),
    ):
        p = sub.add_parser(name, help=help_)
        _add_experiment_flags(p)
        p.add_argument("--variable", choices=SWEEP_VARIABLES)
        p.add_argument("--values", help='comma-separated sweep values; ";" between model lists')
        if name == "compare":
            p.add_argument("--policies", required=True, help="comma-separated policy names")
        p.set_defaults(func=func)

    p = sub.add_parser("gen-profile", help="write a synthetic profile table")
    p.add_argument("--preset", choices=sorted(PRESETS), default="rtx3080")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-growth", type=float)
    p.add_argument("--jitter", type=float)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen_profile)

    p = sub.add_parser("validate-profile", help="check a profile file")
    p.add_argument("path")
    p.add_argument("--laws", action="store_true", help="also check the batch/depth/model-order laws")
    p.set_defaults(func=cmd_validate_profile)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, ProfileError, InfeasibleCalibrationError, UnknownPolicyError, ValueError) as exc:
        print(f"exitsched: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
