"""CLI driver tests. Every test calls main(argv) in-process and checks the
return code plus captured stdout/stderr; nothing shells out."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

import tacc.cli as cli
from tacc.bench import BenchResult
from tacc.executor import DenseTensor, load_dtns, save_dtns

REPO_ROOT = Path(__file__).resolve().parents[1]
MATMUL = str(REPO_ROOT / "samples" / "matmul.ta")
CONTRACTION = str(REPO_ROOT / "samples" / "contraction.ta")
MULTIOP = str(REPO_ROOT / "samples" / "multiop.ta")
ASSEMBLE = str(REPO_ROOT / "samples" / "assemble.ta")


def _suite(tmp_path, entries, name="suite.json") -> str:
    path = tmp_path / name
    path.write_text(json.dumps(entries))
    return str(path)


SMALL_SUITE = [{"name": "mm", "contraction": "ij-ik-kj",
                "extents": {"i": 16, "j": 16, "k": 16}, "repeat": 2}]


# ------------------------------------------------------------------ compile


def test_compile_emit_ast(capsys):
    assert cli.main(["compile", MATMUL, "--emit", "ast"]) == 0
    out = capsys.readouterr().out
    assert "TensorOp" in out and "TensorDecl" in out


def test_compile_emit_ta_default(capsys):
    assert cli.main(["compile", MATMUL]) == 0
    out = capsys.readouterr().out
    assert "ta.tc C[i,j] <- A[i,k] * B[k,j] alpha=1.0 mode=overwrite" in out


def test_compile_emit_plan(capsys):
    assert cli.main(["compile", CONTRACTION, "--emit", "plan"]) == 0
    out = capsys.readouterr().out
    assert "statement C <- A * B" in out
    assert "(A B)" in out
    assert "swap" in out or "perm" in out


def test_compile_emit_loops(capsys):
    assert cli.main(["compile", MATMUL, "--emit", "loops"]) == 0
    out = capsys.readouterr().out
    assert "transpose A: skip (identity layout)" in out
    assert "gemm m=4 n=4 k=4:" in out
    assert "micro-kernel 4x8" in out
    assert "merge C: skip (identity layout)" in out


def test_compile_emit_loops_with_transposes(capsys):
    assert cli.main(["compile", CONTRACTION, "--emit", "loops"]) == 0
    out = capsys.readouterr().out
    assert "transpose" in out and "perm=" in out
    assert "copy alpha=1.0" in out


def test_compile_dump_plan(tmp_path, capsys):
    out_path = tmp_path / "plan.json"
    assert cli.main(["compile", MULTIOP, "--dump-plan", str(out_path)]) == 0
    # plan dumping is orthogonal to --emit; the default listing still prints
    assert "ta.mult" in capsys.readouterr().out
    entries = json.loads(out_path.read_text())
    assert len(entries) >= 2  # a chain binarizes into multiple steps
    for entry in entries:
        assert {"tree", "flops", "out", "perm_a", "perm_b", "perm_c",
                "swap", "m", "n", "k", "cost"} <= set(entry)


def test_compile_syntax_error(tmp_path, capsys):
    bad = tmp_path / "bad.ta"
    bad.write_text("IndexLabel i = [4];\nTensor<double> A([i)\n")
    assert cli.main(["compile", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "error: syntax error at 2:20" in err


def test_compile_missing_file(capsys):
    assert cli.main(["compile", "/nonexistent.ta"]) == 1
    assert "error: cannot read" in capsys.readouterr().err


def test_compile_promotion_warning(tmp_path, capsys):
    src = tmp_path / "warn.ta"
    src.write_text("IndexLabel i = [2];\nTensor<float> F([i]);\nF[i] = 1.0;\n")
    assert cli.main(["compile", str(src)]) == 0
    assert "promoted to double" in capsys.readouterr().err


# ---------------------------------------------------------------------- run


def test_run_matmul_const_init(capsys):
    assert cli.main(["run", MATMUL, "--init", "const:1", "--verify"]) == 0
    out = capsys.readouterr().out
    assert "C [4, 4]:" in out
    assert "4." in out
    assert "contraction C:" in out  # per-statement report
    assert "verify vs naive engine" in out and "[ok]" in out


def test_run_json_document(capsys):
    rc = cli.main(["run", MATMUL, "--init", "random:7", "--verify", "--json"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert set(doc["tensors"]) == {"A", "B", "C"}
    assert doc["tensors"]["C"]["extents"] == [4, 4]
    assert len(doc["tensors"]["C"]["values"]) == 16  # flat row-major dump
    assert doc["verify"]["ok"] is True
    assert [r["statement"] for r in doc["reports"]] == ["C"]
    assert doc["reports"][0]["flops"] == 2 * 4 * 4 * 4


def test_run_large_tensor_summary(capsys):
    assert cli.main(["run", CONTRACTION, "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    # 2^4 = 16 elements per tensor, still printable; force the summary
    # branch with the bigger multiop sample instead
    assert "values" in doc["tensors"]["C"]
    capsys.readouterr()
    assert cli.main(["run", MULTIOP, "--init", "random:3", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    big = [e for e in doc["tensors"].values() if "min" in e]
    assert big, "expected at least one summarized tensor"
    for entry in big:
        assert {"min", "max", "mean"} <= set(entry)


def test_run_save_and_input_round_trip(tmp_path, capsys):
    c_path = str(tmp_path / "c.dtns")
    assert cli.main(["run", MATMUL, "--init", "const:1",
                     "--save", f"C={c_path}"]) == 0
    saved = load_dtns(c_path)
    assert np.all(saved.to_numpy() == 4.0)
    capsys.readouterr()

    scale = tmp_path / "scale.ta"
    scale.write_text(
        "IndexLabel [i, j] = [4];\n"
        "Tensor<double> D([i, j]);\n"
        "Tensor<double> E([i, j]);\n"
        "E[i, j] = 0.5 * D[i, j];\n")
    assert cli.main(["run", str(scale), "--input", f"D={c_path}",
                     "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert all(v == 2.0 for v in doc["tensors"]["E"]["values"])


def test_run_input_errors(tmp_path, capsys):
    assert cli.main(["run", MATMUL, "--input", "Z=/tmp/x.dtns"]) == 1
    assert "not a declared tensor" in capsys.readouterr().err
    assert cli.main(["run", MATMUL, "--input",
                     f"A={tmp_path / 'missing.dtns'}"]) == 1
    assert "cannot read" in capsys.readouterr().err
    wrong = tmp_path / "wrong.dtns"
    save_dtns(str(wrong), DenseTensor.zeros((3, 3)))
    assert cli.main(["run", MATMUL, "--input", f"A={wrong}",
                     "--init", "const:1"]) == 1
    assert "error:" in capsys.readouterr().err
    assert cli.main(["run", MATMUL, "--input", "A"]) == 1
    assert "expects NAME=PATH" in capsys.readouterr().err


def test_run_init_and_save_errors(capsys):
    assert cli.main(["run", MATMUL, "--init", "const:abc"]) == 1
    assert "needs a number" in capsys.readouterr().err
    assert cli.main(["run", MATMUL, "--init", "random:x"]) == 1
    assert "integer seed" in capsys.readouterr().err
    assert cli.main(["run", MATMUL, "--init", "zeros"]) == 1
    assert "--init must be" in capsys.readouterr().err
    assert cli.main(["run", MATMUL, "--init", "const:1",
                     "--save", "Z=/tmp/z.dtns"]) == 1
    assert "never written" in capsys.readouterr().err


def test_run_uninitialized_input(capsys):
    # matmul reads A and B externally; without --init that is a user error
    assert cli.main(["run", MATMUL]) == 1
    assert "error:" in capsys.readouterr().err


def test_run_workers_flag(capsys):
    assert cli.main(["run", CONTRACTION, "--workers", "2", "--verify"]) == 0
    assert "[ok]" in capsys.readouterr().out


def test_run_assemble_sample(capsys):
    assert cli.main(["run", ASSEMBLE, "--verify", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["verify"]["ok"] is True
    assert [r["statement"] for r in doc["reports"]] == ["R"]


# -------------------------------------------------------------------- bench


def test_bench_small_suite(tmp_path, capsys):
    rc = cli.main(["bench", "--suite", _suite(tmp_path, SMALL_SUITE),
                   "--verify"])
    assert rc == 0
    captured = capsys.readouterr()
    assert captured.err == "" or "NumbaWarning" in captured.err
    lines = captured.out.splitlines()
    assert lines[0].startswith("case")
    assert any("mm" in l and "ok" in l for l in lines[1:])


def test_bench_keeps_going_past_bad_cases(tmp_path, capsys):
    entries = [{"name": "broken", "contraction": "ij-ik",
                "extents": {"i": 4}}] + SMALL_SUITE
    assert cli.main(["bench", "--suite", _suite(tmp_path, entries),
                     "--json"]) == 0
    captured = capsys.readouterr()
    assert "error: case 0 (broken)" in captured.err
    results = json.loads(captured.out)
    assert [r["name"] for r in results] == ["mm"]
    assert results[0]["rung"] is None


def test_bench_no_usable_cases(tmp_path, capsys):
    bad = [{"name": "broken", "contraction": "ij-ik", "extents": {"i": 4}}]
    assert cli.main(["bench", "--suite", _suite(tmp_path, bad)]) == 1
    assert "no usable cases" in capsys.readouterr().err


def test_bench_ablate_json(tmp_path, capsys):
    rc = cli.main(["bench", "--suite", _suite(tmp_path, SMALL_SUITE),
                   "--ablate", "--json"])
    assert rc == 0
    results = json.loads(capsys.readouterr().out)
    assert [r["rung"] for r in results] == list(
        ("naive", "ttgt-arbitrary-perm", "ttgt-best-perm",
         "+transpose-opt", "+tiling", "+microkernel"))


def test_bench_verify_failure_sets_exit_code(tmp_path, capsys, monkeypatch):
    def fake_run_case(case, cfg, workers=1, verify=False):
        return BenchResult(name=case.name, rung=None, repeat=1,
                           min_time=1.0, mean_time=1.0, flops=1, gflops=1.0,
                           verified=False, max_rel_err=1.0)

    monkeypatch.setattr(cli.bench_mod, "run_case", fake_run_case)
    rc = cli.main(["bench", "--suite", _suite(tmp_path, SMALL_SUITE),
                   "--verify"])
    assert rc == 1
    assert "FAIL" in capsys.readouterr().out


# ----------------------------------------------------------------- codesign


def test_codesign_json(tmp_path, capsys):
    rc = cli.main(["codesign", "--workloads",
                   str(REPO_ROOT / "suites" / "codesign-workloads.json"),
                   "--json"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc) == 3
    for row in doc:
        assert {"workload", "per_accel", "best"} <= set(row)
        assert set(row["per_accel"]) == {"16x16", "64x64", "256x256"}
        assert row["best"] in row["per_accel"]


def test_codesign_csv_out(tmp_path, capsys):
    csv_path = tmp_path / "sweep.csv"
    rc = cli.main(["codesign", "--workloads", _suite(tmp_path, SMALL_SUITE),
                   "--out", str(csv_path)])
    assert rc == 0
    assert f"wrote {csv_path}" in capsys.readouterr().out
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0].startswith("workload,accel,microcalls")
    assert len(lines) == 1 + 3


def test_codesign_custom_accels(tmp_path, capsys):
    accels = tmp_path / "accels.json"
    accels.write_text(json.dumps([
        {"name": "8x8", "tile": 8, "cycles_per_call": 34,
         "frequency_hz": 1e9, "avg_power_mw": 1.0, "area_um2": 100.0}]))
    rc = cli.main(["codesign", "--workloads", _suite(tmp_path, SMALL_SUITE),
                   "--accels", str(accels), "--json"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc[0]["best"] == "8x8"


def test_codesign_errors(tmp_path, capsys):
    rc = cli.main(["codesign", "--workloads", _suite(tmp_path, SMALL_SUITE),
                   "--bandwidth", "-2"])
    assert rc == 1
    assert "must be positive" in capsys.readouterr().err
    bad = [{"name": "broken", "contraction": "x", "extents": {}}]
    assert cli.main(["codesign", "--workloads",
                     _suite(tmp_path, bad, "w.json")]) == 1
    assert "no usable workloads" in capsys.readouterr().err


# -------------------------------------------------- tiling flags and errors


def test_tile_flag_overrides_config_file(tmp_path, capsys, monkeypatch):
    cfg_file = tmp_path / "tiles.cfg"
    cfg_file.write_text("kc = 64\nmc = 32\n")
    assert cli.main(["compile", MATMUL, "--emit", "loops",
                     "--config", str(cfg_file)]) == 0
    out = capsys.readouterr().out
    assert "loop kc extent=4 step=64" in out

    assert cli.main(["compile", MATMUL, "--emit", "loops",
                     "--config", str(cfg_file), "--tile", "kc=16"]) == 0
    out = capsys.readouterr().out
    assert "loop kc extent=4 step=16" in out
    assert "step=64" not in out


def test_tacc_config_env(tmp_path, capsys, monkeypatch):
    env_file = tmp_path / "env.cfg"
    env_file.write_text("kc = 48\n")
    monkeypatch.setenv("TACC_CONFIG", str(env_file))
    assert cli.main(["compile", MATMUL, "--emit", "loops"]) == 0
    assert "loop kc extent=4 step=48" in capsys.readouterr().out

    # an explicit --config beats the environment
    flag_file = tmp_path / "flag.cfg"
    flag_file.write_text("kc = 40\n")
    assert cli.main(["compile", MATMUL, "--emit", "loops",
                     "--config", str(flag_file)]) == 0
    assert "loop kc extent=4 step=40" in capsys.readouterr().out


def test_tile_flag_errors(tmp_path, capsys):
    assert cli.main(["compile", MATMUL, "--emit", "loops",
                     "--tile", "bogus=3"]) == 1
    assert "--tile: unknown tiling key 'bogus'" in capsys.readouterr().err
    assert cli.main(["compile", MATMUL, "--emit", "loops",
                     "--tile", "kc=soon"]) == 1
    assert "must be an integer" in capsys.readouterr().err
    assert cli.main(["compile", MATMUL, "--emit", "loops",
                     "--config", str(tmp_path / "missing.cfg")]) == 1
    assert "cannot read config" in capsys.readouterr().err


# ------------------------------------------------------------ error mapping


def test_usage_errors_exit_one():
    with pytest.raises(SystemExit) as exc:
        cli.main(["compile", MATMUL, "--emit", "nope"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 1


def test_internal_errors_exit_two(capsys, monkeypatch):
    def boom(_source):
        raise RuntimeError("wires crossed")

    monkeypatch.setattr(cli, "parse", boom)
    assert cli.main(["compile", MATMUL]) == 2
    err = capsys.readouterr().err
    assert "internal error:" in err and "wires crossed" in err
