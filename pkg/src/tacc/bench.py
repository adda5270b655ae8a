"""Benchmark harness: timed contraction cases and the optimization
ablation ladder.

A case is one two-operand contraction written as "out-a-b" label strings
(e.g. "abcd-aebf-dfce") plus per-label extents. Inputs are seeded from the
case name, so repeated runs see identical data. The ablation ladder
re-runs a case with optimizations enabled one at a time:

    naive               nested-loop contraction, no planning
    ttgt-arbitrary-perm first enumerated TTGT variant, plain loop order,
                        untiled transposes, triple-loop GEMM
    ttgt-best-perm      cost-selected variant, same execution
    +transpose-opt      weight-ordered transpose loops
    +tiling             tiled transposes, blocked and packed GEMM with a
                        per-element micro-tile
    +microkernel        4x8 register micro-kernel
"""

from __future__ import annotations

import json
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TaccError
from .executor import (DenseTensor, ExecutionReport, MicroKernel,
                       execute_ttgt, naive_contract, reference_microkernel,
                       scalar_microkernel)
from .loops import TilingConfig, default_tiling
from .planner import enumerate_ttgt_variants, select_ttgt
from .ta_ir import OVERWRITE, ContractionSpec, flop_count

DEFAULT_REPEAT = 10
VERIFY_TOL = 1e-12

RUNG_LADDER = (
    "naive",
    "ttgt-arbitrary-perm",
    "ttgt-best-perm",
    "+transpose-opt",
    "+tiling",
    "+microkernel",
)


@dataclass(frozen=True)
class BenchCase:
    name: str
    contraction: str
    extents: dict[str, int]
    repeat: int = DEFAULT_REPEAT


@dataclass
class BenchResult:
    name: str
    rung: str | None
    repeat: int
    min_time: float
    mean_time: float
    flops: int
    gflops: float
    per_stage: dict[str, float] = field(default_factory=dict)
    microkernel_calls: int = 0
    verified: bool | None = None
    max_rel_err: float | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "rung": self.rung,
            "repeat": self.repeat,
            "min_time": self.min_time,
            "mean_time": self.mean_time,
            "flops": self.flops,
            "gflops": self.gflops,
            "per_stage": dict(self.per_stage),
            "microkernel_calls": self.microkernel_calls,
            "verified": self.verified,
            "max_rel_err": self.max_rel_err,
        }


def parse_contraction(text: str) -> tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]:
    """Split "out-a-b" into label tuples (one character per index)."""
    parts = text.split("-")
    if len(parts) != 3:
        raise ConfigError(
            f"contraction {text!r} must have three dash-separated index groups")
    if not parts[1] or not parts[2]:
        raise ConfigError(f"contraction {text!r}: operand index groups cannot be empty")
    return tuple(parts[0]), tuple(parts[1]), tuple(parts[2])


def case_spec(case: BenchCase) -> ContractionSpec:
    out, a, b = parse_contraction(case.contraction)
    extents = {}
    for label in dict.fromkeys(out + a + b):
        if label not in case.extents:
            raise ConfigError(
                f"case {case.name!r}: no extent given for index {label!r}")
        e = case.extents[label]
        if not isinstance(e, int) or isinstance(e, bool) or e < 1:
            raise ConfigError(
                f"case {case.name!r}: extent of {label!r} must be a positive integer")
        extents[label] = e
    spec = ContractionSpec(out_labels=out, a_labels=a, b_labels=b,
                           extents=extents, alpha=1.0, accumulate=OVERWRITE,
                           out_name="C", a_name="A", b_name="B")
    spec.classify()
    return spec


def load_suite(path: str) -> tuple[list[BenchCase], list[str]]:
    """Parse a JSON case suite; malformed entries become error strings and
    the rest of the suite still loads."""
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(raw, list):
        raise ConfigError(f"{path}: expected a JSON array of cases")
    cases: list[BenchCase] = []
    errors: list[str] = []
    for i, entry in enumerate(raw):
        label = f"case {i}"
        try:
            if not isinstance(entry, dict):
                raise ConfigError(f"{label}: expected an object")
            name = entry.get("name")
            if not isinstance(name, str) or not name:
                raise ConfigError(f"{label}: missing or empty 'name'")
            label = f"case {i} ({name})"
            contraction = entry.get("contraction")
            if not isinstance(contraction, str):
                raise ConfigError(f"{label}: missing 'contraction'")
            extents = entry.get("extents")
            if not isinstance(extents, dict):
                raise ConfigError(f"{label}: missing 'extents' object")
            repeat = entry.get("repeat", DEFAULT_REPEAT)
            if not isinstance(repeat, int) or isinstance(repeat, bool) or repeat < 1:
                raise ConfigError(f"{label}: 'repeat' must be an integer >= 1")
            extra = set(entry) - {"name", "contraction", "extents", "repeat"}
            if extra:
                raise ConfigError(f"{label}: unknown field {sorted(extra)[0]!r}")
            case = BenchCase(name=name, contraction=contraction,
                             extents={str(k): v for k, v in extents.items()},
                             repeat=repeat)
            case_spec(case)  # validates structure and extents
            cases.append(case)
        except TaccError as e:
            errors.append(str(e) if str(e).startswith("case") else f"{label}: {e}")
    return cases, errors


def _case_inputs(case: BenchCase, spec: ContractionSpec) -> tuple[DenseTensor, DenseTensor]:
    seed = zlib.crc32(case.name.encode())
    a = DenseTensor.random(spec.a_extents, seed)
    b = DenseTensor.random(spec.b_extents, seed + 1)
    return a, b


def _rel_err(out: DenseTensor, ref: DenseTensor) -> float:
    diff = float(np.max(np.abs(out.data - ref.data))) if out.size else 0.0
    scale = float(np.max(np.abs(ref.data))) if ref.size else 0.0
    return diff / max(scale, 1.0)


def _verify_tol(spec: ContractionSpec) -> float:
    _, _, contracted = spec.classify()
    k_volume = 1
    for l in contracted:
        k_volume *= spec.extents[l]
    return VERIFY_TOL * max(k_volume, 1)


def run_case(case: BenchCase, cfg: TilingConfig | None = None,
             mk: MicroKernel | None = None, workers: int = 1,
             verify: bool = False) -> BenchResult:
    cfg = cfg or default_tiling()
    mk = mk or reference_microkernel()
    spec = case_spec(case)
    a, b = _case_inputs(case, spec)
    plan = select_ttgt(spec)
    times: list[float] = []
    best: tuple[ExecutionReport, DenseTensor] | None = None
    for _ in range(case.repeat):
        out, rep = execute_ttgt(plan, spec, a, b, cfg=cfg, mk=mk, workers=workers)
        times.append(rep.wall_time)
        if best is None or rep.wall_time < best[0].wall_time:
            best = (rep, out)
    rep, out = best
    flops = rep.flops
    min_time = min(times)
    result = BenchResult(
        name=case.name, rung=None, repeat=case.repeat,
        min_time=min_time, mean_time=sum(times) / len(times),
        flops=flops, gflops=flops / max(min_time, 1e-12) / 1e9,
        per_stage=dict(rep.per_stage),
        microkernel_calls=rep.microkernel_calls,
    )
    if verify:
        ref = naive_contract(spec, a, b)
        result.max_rel_err = _rel_err(out, ref)
        result.verified = result.max_rel_err <= _verify_tol(spec)
    return result


def ablate_case(case: BenchCase, cfg: TilingConfig | None = None,
                workers: int = 1, verify: bool = False) -> list[BenchResult]:
    """Run every ladder rung on one case, in ladder order."""
    cfg = cfg or default_tiling()
    spec = case_spec(case)
    a, b = _case_inputs(case, spec)
    flops = flop_count(spec)
    ref = naive_contract(spec, a, b) if verify else None
    best_plan = select_ttgt(spec)
    arb_plan = enumerate_ttgt_variants(spec)[0]
    rungs: list[tuple[str, dict | None]] = [
        ("naive", None),
        ("ttgt-arbitrary-perm", dict(plan=arb_plan, transpose_order="natural",
                                     transpose_tiled=False, gemm_mode="naive")),
        ("ttgt-best-perm", dict(plan=best_plan, transpose_order="natural",
                                transpose_tiled=False, gemm_mode="naive")),
        ("+transpose-opt", dict(plan=best_plan, transpose_order="opt",
                                transpose_tiled=False, gemm_mode="naive")),
        ("+tiling", dict(plan=best_plan, transpose_order="opt",
                         transpose_tiled=True, gemm_mode="blocked",
                         mk=scalar_microkernel(cfg.mr, cfg.nr))),
        ("+microkernel", dict(plan=best_plan, transpose_order="opt",
                              transpose_tiled=True, gemm_mode="blocked",
                              mk=reference_microkernel())),
    ]
    results: list[BenchResult] = []
    for rung, setup in rungs:
        times: list[float] = []
        out = None
        per_stage: dict[str, float] = {}
        calls = 0
        for _ in range(case.repeat):
            if setup is None:
                t0 = time.perf_counter()
                candidate = naive_contract(spec, a, b)
                elapsed = time.perf_counter() - t0
                rep_stage, rep_calls = {}, 0
            else:
                candidate, rep = execute_ttgt(
                    setup["plan"], spec, a, b, cfg=cfg,
                    mk=setup.get("mk"), workers=workers,
                    transpose_order=setup["transpose_order"],
                    transpose_tiled=setup["transpose_tiled"],
                    gemm_mode=setup["gemm_mode"])
                elapsed = rep.wall_time
                rep_stage, rep_calls = rep.per_stage, rep.microkernel_calls
            times.append(elapsed)
            if elapsed == min(times):
                out, per_stage, calls = candidate, dict(rep_stage), rep_calls
        min_time = min(times)
        result = BenchResult(
            name=case.name, rung=rung, repeat=case.repeat,
            min_time=min_time, mean_time=sum(times) / len(times),
            flops=flops, gflops=flops / max(min_time, 1e-12) / 1e9,
            per_stage=per_stage, microkernel_calls=calls,
        )
        if ref is not None:
            result.max_rel_err = _rel_err(out, ref)
            result.verified = result.max_rel_err <= _verify_tol(spec)
        results.append(result)
    return results


def format_results(results: list[BenchResult]) -> str:
    rows = []
    header = ("case", "rung", "min ms", "mean ms", "GFLOP/s", "verify")
    rows.append(header)
    for r in results:
        verify = "-"
        if r.verified is not None:
            verify = "ok" if r.verified else "FAIL"
        rows.append((
            r.name, r.rung or "full", f"{r.min_time * 1e3:.3f}",
            f"{r.mean_time * 1e3:.3f}", f"{r.gflops:.3f}", verify,
        ))
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
             for row in rows]
    stage_lines = []
    for r in results:
        if r.per_stage and r.rung is None:
            stages = ", ".join(f"{k} {v * 1e3:.3f} ms"
                               for k, v in sorted(r.per_stage.items()))
            stage_lines.append(f"  {r.name}: {stages}")
    if stage_lines:
        lines.append("per-stage (fastest run):")
        lines.extend(stage_lines)
    return "\n".join(lines)


def results_json(results: list[BenchResult]) -> str:
    return json.dumps([r.to_dict() for r in results], indent=2) + "\n"
