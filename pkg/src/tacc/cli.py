"""Command-line driver: compile, run, bench, codesign."""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback

import numpy as np

from . import bench as bench_mod
from . import kernels
from .accel import (DEFAULT_BANDWIDTH, builtin_accels, codesign_sweep,
                    format_sweep, load_accels, sweep_csv)
from .errors import ConfigError, TaccError
from .executor import (DenseTensor, load_dtns, run_program, save_dtns)
from .frontend import format_ast, parse
from .loops import (TilingConfig, format_loop_nest, make_transpose_nest,
                    parse_tile_settings, resolve_tiling, schedule_gemm,
                    tile_transpose)
from .planner import (binarize, natural_order, order_expression, plan_entry,
                      plan_json, select_ttgt)
from .ta_ir import (ADD, OVERWRITE, ContractOp, CopyOp, FillOp, IrModule,
                    MultOp, SetOp, emit_ta, flop_count, lower_ast,
                    spec_from_contract)

PRINT_LIMIT = 64


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; bad flags are user errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_tile_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH",
                     help="tiling config file (key=value lines); "
                          "TACC_CONFIG is read when this is absent")
    sub.add_argument("--tile", metavar="KEY=VALUE", action="append", default=[],
                     help="override one tiling setting (mc, nc, kc, mr, nr, "
                          "l1, l2, l3, transpose_tile); repeatable")


def _tiling_from_args(args) -> TilingConfig:
    file_settings: dict[str, int] = {}
    path = args.config or os.environ.get("TACC_CONFIG")
    if path:
        try:
            with open(path) as f:
                lines = f.read().splitlines()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        file_settings = parse_tile_settings(lines, path)
    flag_settings = parse_tile_settings(args.tile, "--tile")
    return resolve_tiling(file_settings, flag_settings)


def _read_source(path: str) -> str:
    try:
        with open(path) as f:
            return f.read()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None


def _program_steps(module: IrModule):
    """Yield (statement description, [(spec, plan), ...], tree sexpr) for
    every contraction statement in program order."""
    pending = {}
    for op in module.ops:
        if isinstance(op, ContractOp):
            spec = spec_from_contract(op)
            plan = select_ttgt(spec)
            sexpr = f"({spec.a_name} {spec.b_name})"
            yield f"{spec.out_name} <- {spec.a_name} * {spec.b_name}", \
                [(spec, plan)], sexpr
        elif isinstance(op, MultOp):
            pending[op.result_id] = op
        elif isinstance(op, SetOp):
            mult = pending.pop(op.source_id)
            extents = {lab.name: lab.extent
                       for operand in mult.operands for lab in operand.labels}
            tree = order_expression(list(mult.operands),
                                    op.dest.label_names, extents)
            specs = binarize(mult, op.dest, mode=op.mode, tree=tree)
            steps = [(s, select_ttgt(s)) for s in specs]
            names = " * ".join(o.tensor.name for o in mult.operands)
            yield f"{op.dest.tensor.name} <- {names}", steps, tree.sexpr()


def cmd_compile(args) -> int:
    source = _read_source(args.file)
    program = parse(source)
    if args.emit == "ast":
        print(format_ast(program))
        return 0
    module = lower_ast(program)
    for w in module.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.emit == "ta":
        print(emit_ta(module))
    if args.emit == "plan" or args.dump_plan:
        entries = []
        text = []
        for desc, steps, sexpr in _program_steps(module):
            from .planner import format_plan
            node_flops = [(s.out_name, flop_count(s)) for s, _ in steps]
            text.append(f"statement {desc}")
            text.append(format_plan(sexpr, node_flops, steps))
            for s, p in steps:
                entries.append({"tree": sexpr, "flops": flop_count(s),
                                **plan_entry(s, p)})
        if args.emit == "plan":
            print("\n".join(text) if text else "no contractions")
        if args.dump_plan:
            with open(args.dump_plan, "w") as f:
                f.write(plan_json(entries))
    if args.emit == "loops":
        cfg = _tiling_from_args(args)
        blocks = []
        for desc, steps, _sexpr in _program_steps(module):
            blocks.append(f"statement {desc}")
            for spec, plan in steps:
                blocks.append(f" step {spec.out_name}:")
                pairs = (("A", spec.a_extents, plan.perm_a, plan.skip_a),
                         ("B", spec.b_extents, plan.perm_b, plan.skip_b))
                for side, extents, perm, skip in pairs:
                    if skip:
                        blocks.append(f"  transpose {side}: skip (identity layout)")
                        continue
                    nest = tile_transpose(make_transpose_nest(perm, extents), cfg)
                    blocks.append(format_loop_nest(
                        nest, f"  transpose {side} perm={list(perm)}:"))
                gemm = schedule_gemm(plan.m, plan.n, plan.k, cfg)
                blocks.append(format_loop_nest(
                    gemm, f"  gemm m={plan.m} n={plan.n} k={plan.k}:"))
                if plan.skip_c:
                    blocks.append("  merge C: skip (identity layout)")
                else:
                    mn = tuple(spec.extents[l]
                               for l in plan.m_group + plan.n_group)
                    nest = tile_transpose(make_transpose_nest(plan.perm_c, mn), cfg)
                    blocks.append(format_loop_nest(
                        nest, f"  merge C perm={list(plan.perm_c)}:"))
        print("\n".join(blocks) if blocks else "no contractions")
    return 0


def _parse_init(text: str):
    kind, _, value = text.partition(":")
    if kind == "random":
        try:
            return ("random", int(value))
        except ValueError:
            raise ConfigError(f"--init random needs an integer seed, got {value!r}") from None
    if kind == "const":
        try:
            return ("const", float(value))
        except ValueError:
            raise ConfigError(f"--init const needs a number, got {value!r}") from None
    raise ConfigError(f"--init must be random:<seed> or const:<value>, got {text!r}")


def _parse_bindings(pairs: list[str], flag: str) -> dict[str, str]:
    out = {}
    for raw in pairs:
        name, sep, path = raw.partition("=")
        if not sep or not name or not path:
            raise ConfigError(f"{flag} expects NAME=PATH, got {raw!r}")
        out[name] = path
    return out


def _external_inputs(module: IrModule, provided: set[str]) -> list[str]:
    """Tensors read before any statement writes them."""
    written = set(provided)
    needed: list[str] = []

    def need(name: str) -> None:
        if name not in written and name not in needed:
            needed.append(name)

    for op in module.ops:
        if isinstance(op, FillOp):
            if op.dest.is_slice or op.mode != OVERWRITE:
                need(op.dest.tensor.name)
            written.add(op.dest.tensor.name)
        elif isinstance(op, CopyOp):
            need(op.src.tensor.name)
            if op.dest.is_slice or op.mode != OVERWRITE:
                need(op.dest.tensor.name)
            written.add(op.dest.tensor.name)
        elif isinstance(op, ContractOp):
            need(op.a.tensor.name)
            need(op.b.tensor.name)
            if op.dest.is_slice or op.accumulate != OVERWRITE:
                need(op.dest.tensor.name)
            written.add(op.dest.tensor.name)
        elif isinstance(op, MultOp):
            for operand in op.operands:
                need(operand.tensor.name)
        elif isinstance(op, SetOp):
            if op.dest.is_slice or op.mode != OVERWRITE:
                need(op.dest.tensor.name)
            written.add(op.dest.tensor.name)
    return needed


def cmd_run(args) -> int:
    module = lower_ast(parse(_read_source(args.file)))
    for w in module.warnings:
        print(f"warning: {w}", file=sys.stderr)
    cfg = _tiling_from_args(args)
    inputs: dict[str, DenseTensor] = {}
    for name, path in _parse_bindings(args.input, "--input").items():
        if name not in module.tensors:
            raise ConfigError(f"--input {name}: not a declared tensor")
        inputs[name] = load_dtns(path)
    if args.init:
        kind, value = _parse_init(args.init)
        for i, name in enumerate(_external_inputs(module, set(inputs))):
            extents = module.tensors[name].extents
            if kind == "random":
                inputs[name] = DenseTensor.random(extents, int(value) + i)
            else:
                inputs[name] = DenseTensor.full(extents, value)
    kernels.warmup()
    reports = []
    storage = run_program(module, inputs, cfg, workers=args.workers,
                          reports=reports)
    verify_errs: dict[str, float] = {}
    if args.verify:
        oracle = run_program(module, inputs, cfg, engine="naive")
        for name, t in storage.items():
            ref = oracle[name]
            diff = float(np.max(np.abs(t.data - ref.data))) if t.size else 0.0
            scale = max(float(np.max(np.abs(ref.data))) if ref.size else 0.0, 1.0)
            verify_errs[name] = diff / scale
    saves = _parse_bindings(args.save, "--save")
    for name, path in saves.items():
        if name not in storage:
            raise ConfigError(f"--save {name}: tensor was never written")
        save_dtns(path, storage[name])
    if args.json:
        doc = {"tensors": {}, "reports": [
            {"statement": name, **rep.to_dict()} for name, rep in reports]}
        for name, t in sorted(storage.items()):
            entry = {"extents": list(t.extents)}
            if t.size <= PRINT_LIMIT:
                entry["values"] = t.data.tolist()
            else:
                entry["min"] = float(t.data.min())
                entry["max"] = float(t.data.max())
                entry["mean"] = float(t.data.mean())
            doc["tensors"][name] = entry
        if verify_errs:
            doc["verify"] = {"max_rel_err": verify_errs,
                             "ok": all(e <= 1e-10 for e in verify_errs.values())}
        print(json.dumps(doc, indent=2))
    else:
        for name, t in sorted(storage.items()):
            if t.size <= PRINT_LIMIT:
                body = np.array2string(t.to_numpy(), precision=6,
                                       suppress_small=True)
            else:
                body = (f"min={t.data.min():.6g} max={t.data.max():.6g} "
                        f"mean={t.data.mean():.6g}")
            print(f"{name} {list(t.extents)}: {body}")
        for name, rep in reports:
            from .executor import format_report
            print(format_report(rep, label=f"contraction {name}"))
        if args.verify:
            worst = max(verify_errs.values(), default=0.0)
            status = "ok" if worst <= 1e-10 else "MISMATCH"
            print(f"verify vs naive engine: max rel err {worst:.3e} [{status}]")
    if args.verify and max(verify_errs.values(), default=0.0) > 1e-10:
        return 1
    return 0


def cmd_bench(args) -> int:
    cases, errors = bench_mod.load_suite(args.suite)
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    if not cases:
        raise ConfigError(f"{args.suite}: no usable cases")
    cfg = _tiling_from_args(args)
    kernels.warmup()
    results = []
    for case in cases:
        if args.ablate:
            results.extend(bench_mod.ablate_case(case, cfg, workers=args.workers,
                                                 verify=args.verify))
        else:
            results.append(bench_mod.run_case(case, cfg, workers=args.workers,
                                              verify=args.verify))
    if args.json:
        print(bench_mod.results_json(results), end="")
    else:
        print(bench_mod.format_results(results))
    if args.verify and any(r.verified is False for r in results):
        return 1
    return 0


def cmd_codesign(args) -> int:
    accels = load_accels(args.accels) if args.accels else builtin_accels()
    cases, errors = bench_mod.load_suite(args.workloads)
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    if not cases:
        raise ConfigError(f"{args.workloads}: no usable workloads")
    if args.bandwidth <= 0:
        raise ConfigError(f"--bandwidth must be positive, got {args.bandwidth}")
    workloads = [(c.name, bench_mod.case_spec(c)) for c in cases]
    results = codesign_sweep(workloads, accels, args.bandwidth)
    if args.out:
        with open(args.out, "w") as f:
            f.write(sweep_csv(results, accels))
        print(f"wrote {args.out}")
    elif args.json:
        print(json.dumps([
            {"workload": name, **report.to_dict()} for name, report in results
        ], indent=2))
    else:
        print(format_sweep(results))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tacc",
                     description="tensor contraction compiler and runtime")
    sub = parser.add_subparsers(dest="command", required=True)

    p_compile = sub.add_parser("compile", help="parse and lower a program")
    p_compile.add_argument("file")
    p_compile.add_argument("--emit", choices=("ast", "ta", "plan", "loops"),
                           default="ta")
    p_compile.add_argument("--dump-plan", metavar="PATH",
                           help="write contraction plans as JSON")
    _add_tile_args(p_compile)
    p_compile.set_defaults(func=cmd_compile)

    p_run = sub.add_parser("run", help="execute a program")
    p_run.add_argument("file")
    p_run.add_argument("--input", metavar="NAME=PATH", action="append",
                       default=[], help="bind a DTNS tensor file; repeatable")
    p_run.add_argument("--init", metavar="random:SEED|const:VALUE",
                       help="initialize remaining external inputs")
    p_run.add_argument("--save", metavar="NAME=PATH", action="append",
                       default=[], help="write a result tensor as DTNS")
    p_run.add_argument("--verify", action="store_true",
                       help="re-run on the naive engine and compare")
    p_run.add_argument("--json", action="store_true")
    p_run.add_argument("--workers", type=int, default=1)
    _add_tile_args(p_run)
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="time contraction cases")
    p_bench.add_argument("--suite", required=True, metavar="PATH")
    p_bench.add_argument("--ablate", action="store_true",
                         help="run the optimization ladder per case")
    p_bench.add_argument("--verify", action="store_true")
    p_bench.add_argument("--json", action="store_true")
    p_bench.add_argument("--workers", type=int, default=1)
    _add_tile_args(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_codesign = sub.add_parser("codesign",
                                help="rank accelerator designs per workload")
    p_codesign.add_argument("--accels", metavar="PATH",
                            help="accelerator JSON (default: built-in designs)")
    p_codesign.add_argument("--workloads", required=True, metavar="PATH")
    p_codesign.add_argument("--bandwidth", type=float, default=DEFAULT_BANDWIDTH,
                            help="host transpose bandwidth, bytes/s")
    p_codesign.add_argument("--out", metavar="PATH", help="write CSV")
    p_codesign.add_argument("--json", action="store_true")
    p_codesign.set_defaults(func=cmd_codesign)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TaccError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception:
        print("internal error:", file=sys.stderr)
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
