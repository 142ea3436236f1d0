"""Offline latency/accuracy profile tables.

A table holds one latency statistic per (model, exit, batch) cell in integer
microseconds plus the top-1 accuracy of every (model, exit). Tables are
immutable; load them once and share them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence, Union

import jsonschema

from .rng import Xoshiro256

ModelKey = Union[int, str]
ExitKey = Union[int, str]

DEFAULT_EXITS = ("layer1", "layer2", "layer3", "final")
STATISTICS = ("mean", "p95")


class ProfileError(ValueError):
    """A profile document is malformed or breaks a table invariant."""


class ProfileLookupError(LookupError):
    """A (model, exit, batch) key is outside the table's grid."""


class InfeasibleCalibrationError(ValueError):
    """Synthetic calibration cannot satisfy the latency laws."""


@dataclass(frozen=True)
class ExitPoint:
    ordinal: int
    label: str


@dataclass(frozen=True)
class AccuracyEntry:
    model: str
    exit: int
    accuracy_pct: float


@dataclass(frozen=True)
class ModelProfile:
    id: str
    name: str
    exits: tuple[ExitPoint, ...]
    accuracy_pct: tuple[float, ...]
    # latency_us[e][b - 1]
    latency_us: tuple[tuple[int, ...], ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(x.label for x in self.exits)


@dataclass(frozen=True)
class ProfileTable:
    models: tuple[ModelProfile, ...]
    b_max: int
    platform: str = "synthetic"
    statistic: str = "p95"
    _index: Mapping[str, int] = field(default=None, init=False, repr=False, compare=False)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "_index", {m.id: i for i, m in enumerate(self.models)})

    @property
    def n_models(self) -> int:
        return len(self.models)

    @property
    def n_cells(self) -> int:
        return sum(len(m.exits) for m in self.models) * self.b_max

    def model_index(self, model: ModelKey) -> int:
        if isinstance(model, int):
            if 0 <= model < len(self.models):
                return model
        elif model in self._index:
            return self._index[model]
        raise ProfileLookupError(f"unknown model {model!r}")

    def exit_index(self, model: ModelKey, exit: ExitKey) -> int:
        m = self.models[self.model_index(model)]
        if isinstance(exit, int):
            if 0 <= exit < len(m.exits):
                return exit
        else:
            for x in m.exits:
                if x.label == exit:
                    return x.ordinal
        raise ProfileLookupError(f"unknown exit {exit!r} for model {m.id!r}")

    def n_exits(self, model: ModelKey) -> int:
        return len(self.models[self.model_index(model)].exits)

    def latency(self, m: int, e: int, b: int) -> int:
        """Unchecked fast path used by the scheduler: integer indices only."""
        return self.models[m].latency_us[e][b - 1]

    def accuracy_entries(self) -> list[AccuracyEntry]:
        return [
            AccuracyEntry(m.id, x.ordinal, m.accuracy_pct[x.ordinal])
            for m in self.models
            for x in m.exits
        ]

    def restrict_exits(self, keep: Mapping[str, Sequence[str]] | Sequence[str]) -> "ProfileTable":
        """Table limited to the given exit labels, ordinals renumbered.

        ``keep`` is either one label list applied to every model or a mapping
        from model id to labels; models missing from a mapping keep all exits.
        """
        out = []
        for m in self.models:
            labels = keep.get(m.id, m.labels) if isinstance(keep, Mapping) else keep
            wanted = set(labels)
            unknown = wanted - set(m.labels)
            if unknown:
                raise ProfileError(f"model {m.id!r} has no exits {sorted(unknown)}")
            idx = [x.ordinal for x in m.exits if x.label in wanted]
            if not idx:
                raise ProfileError(f"exit mask removes every exit of model {m.id!r}")
            out.append(
                ModelProfile(
                    id=m.id,
                    name=m.name,
                    exits=tuple(ExitPoint(k, m.exits[i].label) for k, i in enumerate(idx)),
                    accuracy_pct=tuple(m.accuracy_pct[i] for i in idx),
                    latency_us=tuple(m.latency_us[i] for i in idx),
                )
            )
        return ProfileTable(tuple(out), self.b_max, self.platform, self.statistic)

    def select_models(self, ids: Sequence[str]) -> "ProfileTable":
        """Table with one entry per listed model instance.

        Repeated ids become distinct instances (``R50``, ``R50#1``, ...), each
        with its own queue downstream.
        """
        seen: dict[str, int] = {}
        out = []
        for ident in ids:
            base = self.models[self.model_index(ident)]
            n = seen.get(ident, 0)
            seen[ident] = n + 1
            new_id = ident if n == 0 else f"{ident}#{n}"
            out.append(
                ModelProfile(new_id, base.name, base.exits, base.accuracy_pct, base.latency_us)
            )
        if not out:
            raise ProfileError("model instance list is empty")
        return ProfileTable(tuple(out), self.b_max, self.platform, self.statistic)


def lookup_latency(table: ProfileTable, model: ModelKey, exit: ExitKey, batch: int) -> int:
    m = table.model_index(model)
    e = table.exit_index(m, exit)
    if not isinstance(batch, int) or not 1 <= batch <= table.b_max:
        raise ProfileLookupError(
            f"no latency cell for ({table.models[m].id}, {table.models[m].exits[e].label}, "
            f"batch={batch}); grid is 1..{table.b_max}"
        )
    return table.models[m].latency_us[e][batch - 1]


def lookup_accuracy(table: ProfileTable, model: ModelKey, exit: ExitKey) -> float:
    m = table.model_index(model)
    e = table.exit_index(m, exit)
    return table.models[m].accuracy_pct[e]


# --------------------------------------------------------------------------
# File format

PROFILE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["metadata", "models"],
    "properties": {
        "metadata": {
            "type": "object",
            "additionalProperties": False,
            "required": ["platform", "statistic", "b_max"],
            "properties": {
                "platform": {"type": "string"},
                "statistic": {"enum": list(STATISTICS)},
                "b_max": {"type": "integer", "minimum": 1},
            },
        },
        "models": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "name", "exits", "accuracy_pct", "latency_us"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "name": {"type": "string"},
                    "exits": {"type": "array", "minItems": 1, "items": {"type": "string"}},
                    "accuracy_pct": {
                        "type": "object",
                        "additionalProperties": {"type": "number"},
                    },
                    "latency_us": {
                        "type": "object",
                        "additionalProperties": {"type": "array", "items": {"type": "integer"}},
                    },
                },
            },
        },
    },
}


def table_from_dict(doc: Mapping) -> ProfileTable:
    try:
        jsonschema.validate(doc, PROFILE_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ProfileError(f"profile schema error at {where}: {exc.message}") from None

    meta = doc["metadata"]
    b_max = meta["b_max"]
    models = []
    for raw in doc["models"]:
        mid = raw["id"]
        labels = raw["exits"]
        if len(set(labels)) != len(labels):
            raise ProfileError(f"model {mid!r}: duplicate exit labels {labels}")
        for key in ("accuracy_pct", "latency_us"):
            extra = set(raw[key]) - set(labels)
            if extra:
                raise ProfileError(f"model {mid!r}: {key} has undeclared exits {sorted(extra)}")
        acc = []
        lat = []
        for label in labels:
            if label not in raw["accuracy_pct"]:
                raise ProfileError(f"model {mid!r}: missing accuracy for exit {label!r}")
            acc.append(float(raw["accuracy_pct"][label]))
            row = raw["latency_us"].get(label, [])
            if len(row) < b_max:
                raise ProfileError(
                    f"incomplete grid: missing latency cell ({mid}, {label}, batch={len(row) + 1})"
                )
            if len(row) > b_max:
                raise ProfileError(
                    f"model {mid!r} exit {label!r}: {len(row)} latencies but b_max={b_max}"
                )
            lat.append(tuple(row))
        models.append(
            ModelProfile(
                id=mid,
                name=raw["name"],
                exits=tuple(ExitPoint(i, label) for i, label in enumerate(labels)),
                accuracy_pct=tuple(acc),
                latency_us=tuple(lat),
            )
        )
    table = ProfileTable(tuple(models), b_max, meta["platform"], meta["statistic"])
    validate_table(table)
    return table


def table_to_dict(table: ProfileTable) -> dict:
    return {
        "metadata": {
            "platform": table.platform,
            "statistic": table.statistic,
            "b_max": table.b_max,
        },
        "models": [
            {
                "id": m.id,
                "name": m.name,
                "exits": list(m.labels),
                "accuracy_pct": {x.label: m.accuracy_pct[x.ordinal] for x in m.exits},
                "latency_us": {x.label: list(m.latency_us[x.ordinal]) for x in m.exits},
            }
            for m in table.models
        ],
    }


def load_profile(path: str | Path) -> ProfileTable:
    """Read and validate a profile JSON file."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ProfileError(f"{path}: not valid JSON ({exc})") from None
    except OSError as exc:
        raise ProfileError(f"cannot read profile {path}: {exc.strerror}") from None
    return table_from_dict(doc)


def store_profile(table: ProfileTable, path: str | Path) -> None:
    Path(path).write_text(dumps_profile(table), encoding="utf-8")


def dumps_profile(table: ProfileTable) -> str:
    return json.dumps(table_to_dict(table), indent=2) + "\n"


def validate_table(table: ProfileTable) -> None:
    """Raise ProfileError naming the first cell that breaks an invariant."""
    if table.statistic not in STATISTICS:
        raise ProfileError(f"unknown statistic {table.statistic!r}")
    if len(table._index) != len(table.models):
        raise ProfileError("duplicate model ids")
    for m in table.models:
        if [x.ordinal for x in m.exits] != list(range(len(m.exits))):
            raise ProfileError(f"model {m.id!r}: exit ordinals not contiguous")
        for x in m.exits:
            row = m.latency_us[x.ordinal]
            if len(row) != table.b_max:
                raise ProfileError(
                    f"incomplete grid: ({m.id}, {x.label}) has {len(row)} of {table.b_max} cells"
                )
            for b, v in enumerate(row, start=1):
                if v <= 0:
                    raise ProfileError(f"non-positive latency at ({m.id}, {x.label}, batch={b})")
                if b > 1 and v < row[b - 2]:
                    raise ProfileError(
                        f"latency decreases with batch at ({m.id}, {x.label}, batch={b})"
                    )
            acc = m.accuracy_pct[x.ordinal]
            if not 0.0 <= acc <= 100.0:
                raise ProfileError(f"accuracy {acc} out of [0, 100] at ({m.id}, {x.label})")
            if x.ordinal > 0:
                prev = m.exits[x.ordinal - 1]
                for b in range(1, table.b_max + 1):
                    if row[b - 1] <= m.latency_us[prev.ordinal][b - 1]:
                        raise ProfileError(
                            f"latency not increasing with depth at ({m.id}, {x.label}, batch={b}) "
                            f"vs {prev.label}"
                        )
                if acc < m.accuracy_pct[prev.ordinal]:
                    raise ProfileError(f"accuracy decreases with depth at ({m.id}, {x.label})")


# --------------------------------------------------------------------------
# Synthetic tables

# Top-1 accuracy (%) of the early-exit ResNets on CIFAR-100.
RESNET_ACCURACY = {
    "R50": (7.6, 12.1, 30.8, 74.4),
    "R101": (7.4, 14.5, 54.3, 77.9),
    "R152": (7.3, 17.2, 47.4, 78.0),
}
RESNET_NAMES = {"R50": "ResNet50", "R101": "ResNet101", "R152": "ResNet152"}


@dataclass(frozen=True)
class LawBands:
    batch_ratio: tuple[float, float] = (2.0, 3.0)
    depth_ratio: tuple[float, float] = (6.0, 8.0)


@dataclass(frozen=True)
class CalibrationParams:
    """Inputs of ``L(m, e, B) = base(m, e) * (1 + batch_growth * (B - 1))``.

    ``base_us`` lists batch-1 latencies per exit for each model, lightest model
    first; that order is also the required latency ordering. ``jitter`` scales
    each base by a seeded factor in ``[1 - jitter, 1 + jitter]``.
    """

    base_us: Mapping[str, Sequence[float]]
    batch_growth: float
    jitter: float = 0.0
    b_max: int = 10
    exits: Sequence[str] = DEFAULT_EXITS
    accuracy_pct: Mapping[str, Sequence[float]] = field(default_factory=lambda: RESNET_ACCURACY)
    names: Mapping[str, str] = field(default_factory=lambda: RESNET_NAMES)
    platform: str = "synthetic"
    statistic: str = "p95"
    bands: LawBands = LawBands()


PRESETS: dict[str, CalibrationParams] = {
    # Stand-ins shaped like the published profiling trends, not measurements.
    "rtx3080": CalibrationParams(
        base_us={
            "R50": (600, 1100, 2000, 3600),
            "R101": (850, 1600, 3600, 5600),
            "R152": (1150, 2200, 4800, 8000),
        },
        batch_growth=1 / 6,
        jitter=0.02,
        platform="synthetic-rtx3080",
    ),
    "gtx1650": CalibrationParams(
        base_us={
            "R50": (1500, 2800, 5200, 9500),
            "R101": (2100, 4100, 9200, 14500),
            "R152": (2900, 5600, 12500, 21000),
        },
        batch_growth=0.2,
        jitter=0.02,
        platform="synthetic-gtx1650",
    ),
    "jetson-orin-nano": CalibrationParams(
        base_us={
            "R50": (2600, 4800, 8800, 16000),
            "R101": (3700, 7000, 15500, 25000),
            "R152": (5000, 9600, 21500, 36000),
        },
        batch_growth=0.13,
        jitter=0.02,
        platform="synthetic-jetson-orin-nano",
    ),
}


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def generate_synthetic_profile(seed: int, calibration: CalibrationParams) -> ProfileTable:
    cal = calibration
    ids = list(cal.base_us)
    labels = tuple(cal.exits)
    if cal.b_max < 1 or cal.batch_growth < 0 or not 0 <= cal.jitter < 1:
        raise InfeasibleCalibrationError("b_max >= 1, batch_growth >= 0, 0 <= jitter < 1 required")
    rng = Xoshiro256.for_stream(seed, 0)
    models = []
    for mid in ids:
        base = cal.base_us[mid]
        if len(base) != len(labels):
            raise InfeasibleCalibrationError(f"model {mid!r}: {len(base)} bases for {len(labels)} exits")
        rows = []
        for b0 in base:
            factor = 1.0 + cal.jitter * (2.0 * rng.uniform() - 1.0)
            rows.append(
                tuple(
                    _round_half_up(b0 * factor * (1.0 + cal.batch_growth * (b - 1)))
                    for b in range(1, cal.b_max + 1)
                )
            )
        acc = cal.accuracy_pct.get(mid)
        if acc is None or len(acc) != len(labels):
            raise InfeasibleCalibrationError(f"model {mid!r}: accuracy must list {len(labels)} exits")
        models.append(
            ModelProfile(
                id=mid,
                name=cal.names.get(mid, mid),
                exits=tuple(ExitPoint(i, x) for i, x in enumerate(labels)),
                accuracy_pct=tuple(float(a) for a in acc),
                latency_us=tuple(rows),
            )
        )
    table = ProfileTable(tuple(models), cal.b_max, cal.platform, cal.statistic)
    try:
        validate_table(table)
    except ProfileError as exc:
        raise InfeasibleCalibrationError(str(exc)) from None
    problems = check_profile_laws(table, ids, cal.bands)
    if problems:
        raise InfeasibleCalibrationError(
            f"{len(problems)} latency-law violations, first: {problems[0]}"
        )
    return table


def check_profile_laws(
    table: ProfileTable,
    ordering: Sequence[str] | None = None,
    bands: LawBands = LawBands(),
) -> list[str]:
    """Exhaustively check the three profiling trends; return violations.

    * every (model, exit): ``L(B_max) / L(1)`` inside ``bands.batch_ratio``
    * heaviest model: ``L(final, B) / L(first exit, B)`` inside
      ``bands.depth_ratio`` for every B
    * ``ordering`` (lightest first) is strictly increasing in latency at
      every (exit, B)
    """
    ordering = list(ordering) if ordering is not None else [m.id for m in table.models]
    out = []
    lo, hi = bands.batch_ratio
    for m in table.models:
        for x in m.exits:
            row = m.latency_us[x.ordinal]
            r = row[-1] / row[0]
            if not lo <= r <= hi:
                out.append(f"batch ratio {r:.3f} at ({m.id}, {x.label})")
    heavy = table.models[table.model_index(ordering[-1])]
    lo, hi = bands.depth_ratio
    for b in range(table.b_max):
        r = heavy.latency_us[-1][b] / heavy.latency_us[0][b]
        if not lo <= r <= hi:
            out.append(f"depth ratio {r:.3f} at ({heavy.id}, batch={b + 1})")
    for a, c in zip(ordering, ordering[1:]):
        ma = table.models[table.model_index(a)]
        mc = table.models[table.model_index(c)]
        for x in ma.exits:
            for b in range(table.b_max):
                if not ma.latency_us[x.ordinal][b] < mc.latency_us[x.ordinal][b]:
                    out.append(f"model order {a} < {c} broken at ({x.label}, batch={b + 1})")
    return out


def bundled_profile(name: str = "rtx3080") -> ProfileTable:
    """One of the shipped synthetic stand-in tables."""
    ref = resources.files("exitsched") / "data" / f"profile_{name}.json"
    try:
        text = ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ProfileError(f"no bundled profile {name!r}; choose from {sorted(PRESETS)}") from None
    return table_from_dict(json.loads(text))
