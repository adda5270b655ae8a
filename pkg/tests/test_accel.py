"""Accelerator timing model tests: call counting, the padding cliff,
transpose overlap accounting, ranking, and candidate file loading."""

from __future__ import annotations

import json
import math
from dataclasses import replace

import pytest

from tacc.accel import (AccelSpec, builtin_accels, codesign_sweep,
                        estimate_contraction, estimate_gemm, format_sweep,
                        load_accels, sweep_csv)
from tacc.errors import ConfigError, NonEmptyRequired
from tacc.planner import select_ttgt
from tacc.ta_ir import ContractionSpec


def test_builtin_design_points():
    accels = builtin_accels()
    assert [(a.name, a.tile, a.cycles_per_call) for a in accels] == [
        ("16x16", 16, 131), ("64x64", 64, 1026), ("256x256", 256, 32770)]
    assert all(a.frequency_hz == 1e9 for a in accels)


def test_estimate_gemm_exact_counts():
    a16, a64, a256 = builtin_accels()
    assert estimate_gemm(16, 16, 16, a16) == (131, 1)
    assert estimate_gemm(256, 256, 256, a16) == (536_576, 4096)
    assert estimate_gemm(256, 256, 256, a64) == (4 * 4 * 4 * 1026, 64)
    assert estimate_gemm(256, 256, 256, a256) == (32_770, 1)
    # padding cliff: a unit GEMM still pays a full tile
    assert estimate_gemm(1, 1, 1, a64) == (1026, 1)
    assert estimate_gemm(17, 16, 16, a16) == (2 * 131, 2)
    with pytest.raises(ConfigError):
        estimate_gemm(0, 4, 4, a16)


def test_shallow_k_prefers_medium_tile():
    spec = ContractionSpec(("i", "j"), ("i", "k"), ("k", "j"),
                           {"i": 512, "j": 512, "k": 64})
    report = estimate_contraction(spec, select_ttgt(spec), builtin_accels())
    assert report.best == "64x64"
    assert report.per_accel["64x64"]["est_cycles"] == 8 * 8 * 1 * 1026
    assert report.per_accel["256x256"]["est_cycles"] == 2 * 2 * 1 * 32770
    assert report.per_accel["16x16"]["est_cycles"] == 32 * 32 * 4 * 131


def test_transpose_seconds_counts_only_real_stages():
    # plain matmul: all three permutations are identities, nothing streams
    spec = ContractionSpec(("i", "j"), ("i", "k"), ("k", "j"),
                           {"i": 64, "j": 64, "k": 64})
    report = estimate_contraction(spec, select_ttgt(spec), builtin_accels())
    row = report.per_accel["16x16"]
    assert row["transpose_seconds"] == 0.0
    assert row["bound"] == "compute"

    # transposed A: one 64x64 operand streamed in and out at 10 GB/s
    spec_t = ContractionSpec(("i", "j"), ("k", "i"), ("k", "j"),
                             {"i": 64, "j": 64, "k": 64})
    plan_t = select_ttgt(spec_t)
    assert not plan_t.skip_a and plan_t.skip_b and plan_t.skip_c
    report_t = estimate_contraction(spec_t, plan_t, builtin_accels(),
                                    host_bandwidth=10e9)
    want = 2 * 64 * 64 * 8 / 10e9
    assert report_t.per_accel["16x16"]["transpose_seconds"] == pytest.approx(want)


def test_memory_bound_label():
    spec = ContractionSpec(("i", "j"), ("k", "i"), ("k", "j"),
                           {"i": 64, "j": 64, "k": 64})
    report = estimate_contraction(spec, select_ttgt(spec), builtin_accels(),
                                  host_bandwidth=1e6)  # starved host bus
    for row in report.per_accel.values():
        assert row["bound"] == "memory"
        assert row["est_seconds"] < row["transpose_seconds"]


def test_ranking_ignores_power_and_area():
    spec = ContractionSpec(("i", "j"), ("i", "k"), ("k", "j"),
                           {"i": 512, "j": 512, "k": 64})
    accels = builtin_accels()
    report = estimate_contraction(spec, select_ttgt(spec), accels)
    inflated = [replace(a, avg_power_mw=1e9, area_um2=1e12)
                if a.name == report.best else a for a in accels]
    assert estimate_contraction(spec, select_ttgt(spec), inflated).best == report.best


def test_codesign_sweep_and_empties():
    spec = ContractionSpec(("i", "j"), ("i", "k"), ("k", "j"),
                           {"i": 128, "j": 128, "k": 128})
    results = codesign_sweep([("mm", spec)], builtin_accels())
    assert [name for name, _ in results] == ["mm"]
    assert set(results[0][1].per_accel) == {"16x16", "64x64", "256x256"}
    with pytest.raises(NonEmptyRequired):
        codesign_sweep([], builtin_accels())
    with pytest.raises(NonEmptyRequired):
        codesign_sweep([("mm", spec)], [])
    with pytest.raises(ConfigError):
        estimate_contraction(spec, select_ttgt(spec), builtin_accels(),
                             host_bandwidth=0.0)


def test_accel_spec_validation():
    with pytest.raises(ConfigError):
        AccelSpec("bad", 0, 131, 1e9, 1.0, 1.0)
    with pytest.raises(ConfigError):
        AccelSpec("bad", 16, 0, 1e9, 1.0, 1.0)
    with pytest.raises(ConfigError):
        AccelSpec("bad", 16, 131, 0.0, 1.0, 1.0)


def _write_accels(tmp_path, payload) -> str:
    path = tmp_path / "accels.json"
    path.write_text(payload if isinstance(payload, str) else json.dumps(payload))
    return str(path)


def test_load_accels_round_trip(tmp_path):
    entries = [{"name": "8x8", "tile": 8, "cycles_per_call": 40,
                "frequency_hz": 2e9, "avg_power_mw": 1.5, "area_um2": 1000.0}]
    accels = load_accels(_write_accels(tmp_path, entries))
    assert accels == [AccelSpec("8x8", 8, 40, 2e9, 1.5, 1000.0)]


@pytest.mark.parametrize("mutate, fragment", [
    (lambda e: e.pop("tile"), "missing field 'tile'"),
    (lambda e: e.update(tile="big"), "field 'tile' has the wrong type"),
    (lambda e: e.update(cycles_per_call=True), "field 'cycles_per_call' has the wrong type"),
    (lambda e: e.update(color="red"), "unknown field 'color'"),
])
def test_load_accels_schema_errors(tmp_path, mutate, fragment):
    entry = {"name": "8x8", "tile": 8, "cycles_per_call": 40,
             "frequency_hz": 2e9, "avg_power_mw": 1.5, "area_um2": 1000.0}
    mutate(entry)
    with pytest.raises(ConfigError, match=fragment):
        load_accels(_write_accels(tmp_path, [entry]))


def test_load_accels_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_accels(_write_accels(tmp_path, "{not json"))
    with pytest.raises(ConfigError, match="expected a JSON array"):
        load_accels(_write_accels(tmp_path, {"name": "x"}))
    with pytest.raises(NonEmptyRequired):
        load_accels(_write_accels(tmp_path, []))
    with pytest.raises(ConfigError, match="cannot read"):
        load_accels(str(tmp_path / "missing.json"))


def test_sweep_csv_and_format():
    spec = ContractionSpec(("i", "j"), ("i", "k"), ("k", "j"),
                           {"i": 512, "j": 512, "k": 64})
    accels = builtin_accels()
    results = codesign_sweep([("mm", spec)], accels)
    csv_text = sweep_csv(results, accels)
    lines = csv_text.strip().splitlines()
    assert lines[0].split(",")[:4] == ["workload", "accel", "microcalls",
                                       "est_cycles"]
    assert len(lines) == 1 + 3
    best_rows = [l for l in lines[1:] if l.endswith("yes")]
    assert len(best_rows) == 1 and ",64x64," in best_rows[0]

    text = format_sweep(results)
    assert "workload mm: best 64x64" in text
    assert "<- best" in text
    assert math.isclose(float(csv_text.strip().splitlines()[1].split(",")[4]),
                        results[0][1].per_accel["16x16"]["est_seconds"])
