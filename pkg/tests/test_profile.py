import json
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from exitsched.profile import (
    PRESETS,
    InfeasibleCalibrationError,
    ProfileError,
    ProfileLookupError,
    bundled_profile,
    check_profile_laws,
    dumps_profile,
    generate_synthetic_profile,
    load_profile,
    lookup_accuracy,
    lookup_latency,
    store_profile,
    table_to_dict,
)


def _doc(table):
    return json.loads(dumps_profile(table))


def _write(tmp_path, doc):
    p = tmp_path / "profile.json"
    p.write_text(json.dumps(doc))
    return p


def test_lookup_returns_stored_cell(table):
    doc = _doc(table)
    r152 = next(m for m in doc["models"] if m["id"] == "R152")
    assert lookup_latency(table, "R152", "final", 1) == r152["latency_us"]["final"][0]
    assert lookup_latency(table, 2, 3, 1) == r152["latency_us"]["final"][0]


def test_lookup_is_pure(table):
    for b in range(1, 11):
        first = lookup_latency(table, "R50", "layer1", b)
        assert lookup_latency(table, "R50", "layer1", b) == first


@pytest.mark.parametrize("key", [("R50", "layer1", 11), ("R50", "layer1", 0), ("R18", "final", 1), ("R50", "layer4", 1)])
def test_lookup_out_of_grid(table, key):
    with pytest.raises(ProfileLookupError, match=str(key[0]) if key[0] == "R18" else "R50"):
        lookup_latency(table, *key)


@pytest.mark.parametrize(
    "model, exit, expected",
    [
        ("R101", "layer3", 54.3),
        ("R50", "final", 74.4),
        ("R152", "layer1", 7.3),
        ("R101", "layer1", 7.4),
        ("R152", "final", 78.0),
    ],
)
def test_accuracy_table(table, model, exit, expected):
    assert lookup_accuracy(table, model, exit) == expected


def test_accuracy_missing_key(table):
    with pytest.raises(ProfileLookupError):
        lookup_accuracy(table, "R50", "layer9")


def test_load_default_has_120_cells(table, tmp_path):
    path = tmp_path / "t.json"
    store_profile(table, path)
    loaded = load_profile(path)
    assert loaded.n_cells == 120
    assert loaded.statistic == "p95"


def test_round_trip_is_exact(table, tmp_path):
    path = tmp_path / "t.json"
    store_profile(table, path)
    assert load_profile(path) == table
    store_profile(load_profile(path), tmp_path / "u.json")
    assert path.read_bytes() == (tmp_path / "u.json").read_bytes()


def test_missing_cell_named(table, tmp_path):
    doc = _doc(table)
    doc["models"][0]["latency_us"]["layer2"].pop()
    with pytest.raises(ProfileError, match=r"\(R50, layer2, batch=10\)"):
        load_profile(_write(tmp_path, doc))


def test_missing_exit_row_named(table, tmp_path):
    doc = _doc(table)
    del doc["models"][1]["latency_us"]["final"]
    with pytest.raises(ProfileError, match=r"\(R101, final, batch=1\)"):
        load_profile(_write(tmp_path, doc))


def test_depth_monotonicity_violation(table, tmp_path):
    doc = _doc(table)
    lat = doc["models"][2]["latency_us"]
    lat["final"] = [v // 100 for v in lat["layer1"]]
    with pytest.raises(ProfileError, match="R152, final"):
        load_profile(_write(tmp_path, doc))


def test_batch_monotonicity_violation(table, tmp_path):
    doc = _doc(table)
    row = doc["models"][0]["latency_us"]["layer3"]
    row[4] = row[3] - 1
    with pytest.raises(ProfileError, match="batch=5"):
        load_profile(_write(tmp_path, doc))


def test_nonpositive_latency(table, tmp_path):
    doc = _doc(table)
    doc["models"][0]["latency_us"]["layer1"][0] = 0
    with pytest.raises(ProfileError, match="non-positive"):
        load_profile(_write(tmp_path, doc))


def test_accuracy_must_not_drop_with_depth(table, tmp_path):
    doc = _doc(table)
    doc["models"][0]["accuracy_pct"]["final"] = 1.0
    with pytest.raises(ProfileError, match="accuracy"):
        load_profile(_write(tmp_path, doc))


@pytest.mark.parametrize("where", ["top", "metadata", "model"])
def test_unknown_fields_rejected(table, tmp_path, where):
    doc = _doc(table)
    target = {"top": doc, "metadata": doc["metadata"], "model": doc["models"][0]}[where]
    target["surprise"] = 1
    with pytest.raises(ProfileError, match="schema"):
        load_profile(_write(tmp_path, doc))


def test_not_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{nope")
    with pytest.raises(ProfileError, match="JSON"):
        load_profile(p)


def _laws_by_scan(t):
    """Exhaustive check of the three latency laws, written without the library helper."""
    cell = {(m.id, x.label, b): m.latency_us[x.ordinal][b - 1] for m in t.models for x in m.exits for b in range(1, 11)}
    exits = ("layer1", "layer2", "layer3", "final")
    ok = True
    for mid in ("R50", "R101", "R152"):
        for e in exits:
            ok &= 2 <= cell[mid, e, 10] / cell[mid, e, 1] <= 3
    for b in range(1, 11):
        ok &= 6 <= cell["R152", "final", b] / cell["R152", "layer1", b] <= 8
        for e in exits:
            ok &= cell["R50", e, b] < cell["R101", e, b] < cell["R152", e, b]
    return ok


@pytest.mark.parametrize("preset", sorted(PRESETS))
def test_presets_satisfy_laws(preset):
    t = generate_synthetic_profile(0, PRESETS[preset])
    assert t.n_cells == 120
    assert _laws_by_scan(t)
    assert check_profile_laws(t) == []


@pytest.mark.parametrize("preset", sorted(PRESETS))
def test_bundled_files_match_generator(preset):
    assert bundled_profile(preset) == generate_synthetic_profile(0, PRESETS[preset])


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**64 - 1))
def test_default_calibration_feasible_for_any_seed(seed):
    assert _laws_by_scan(generate_synthetic_profile(seed, PRESETS["rtx3080"]))


def test_tenfold_batch_growth_infeasible():
    cal = replace(PRESETS["rtx3080"], batch_growth=1.0)  # 1 -> 10 ratio of 10
    with pytest.raises(InfeasibleCalibrationError, match="batch ratio"):
        generate_synthetic_profile(0, cal)


def test_model_order_violation_infeasible():
    base = dict(PRESETS["rtx3080"].base_us)
    base["R101"] = base["R152"]
    with pytest.raises(InfeasibleCalibrationError, match="model order"):
        generate_synthetic_profile(0, replace(PRESETS["rtx3080"], base_us=base, jitter=0.0))


def test_depth_ratio_violation_infeasible():
    base = dict(PRESETS["rtx3080"].base_us)
    base["R152"] = (1150, 2200, 4800, 12000)
    with pytest.raises(InfeasibleCalibrationError, match="depth ratio"):
        generate_synthetic_profile(0, replace(PRESETS["rtx3080"], base_us=base))


def test_generator_is_deterministic():
    a = dumps_profile(generate_synthetic_profile(7, PRESETS["rtx3080"]))
    b = dumps_profile(generate_synthetic_profile(7, PRESETS["rtx3080"]))
    c = dumps_profile(generate_synthetic_profile(8, PRESETS["rtx3080"]))
    assert a == b
    assert a != c


def test_generator_formula_without_jitter():
    cal = replace(PRESETS["rtx3080"], jitter=0.0)
    t = generate_synthetic_profile(0, cal)
    # 8000 * (1 + (B - 1) / 6)
    assert [lookup_latency(t, "R152", "final", b) for b in (1, 4, 7, 10)] == [8000, 12000, 16000, 20000]


def test_lookup_synthetic_28ms_cell():
    cal = replace(
        PRESETS["rtx3080"],
        jitter=0.0,
        base_us={"R50": (2100, 3900, 7000, 12600), "R101": (3000, 5600, 12600, 19600), "R152": (4000, 7700, 16800, 28000)},
    )
    t = generate_synthetic_profile(0, cal)
    assert lookup_latency(t, "R152", "final", 1) == 28000


def test_restrict_exits(table):
    t = table.restrict_exits(["layer1", "final"])
    assert all(m.labels == ("layer1", "final") for m in t.models)
    assert lookup_latency(t, "R50", 1, 3) == lookup_latency(table, "R50", "final", 3)
    assert lookup_accuracy(t, "R101", "final") == 77.9
    with pytest.raises(ProfileError):
        table.restrict_exits([])


def test_select_models_makes_instances(table):
    t = table.select_models(["R50", "R50", "R152"])
    assert [m.id for m in t.models] == ["R50", "R50#1", "R152"]
    assert t.models[1].latency_us == table.models[0].latency_us
    assert table_to_dict(t)["models"][1]["name"] == "ResNet50"
