"""Dense tensor storage and contraction execution.

Contractions run as transpose-GEMM-transpose: each operand is permuted so
its free indices flatten into one matrix dimension and the contracted
indices into the other, a cache-blocked GEMM produces the flattened
result, and a final permutation (folded together with alpha and the
accumulate mode) lands it in the requested output layout. Stages whose
permutation is the identity are skipped as metadata-only reshapes; when
the output permutation is the identity and no scaling is needed the GEMM
writes straight into the result buffer.

naive_contract is the independent oracle: plain nested loops over output
then contracted indices in declared order, no planning involved.
"""

from __future__ import annotations

import math
import struct
import time
from dataclasses import dataclass

import numba
import numpy as np

from . import kernels
from .errors import ConfigError, ShapeMismatch, UninitializedTensor
from .loops import (DEFAULT_TRANSPOSE_TILE, TilingConfig, default_tiling,
                    microkernel_call_count, row_major_strides,
                    transpose_loop_order)
from .planner import TTGTPlan, binarize, natural_order, select_ttgt
from .ta_ir import (ADD, OVERWRITE, SUBTRACT, ContractOp, ContractionSpec,
                    CopyOp, FillOp, IrModule, MultOp, SetOp, copy_perm,
                    flop_count, spec_from_contract)

_UNTILED = 1 << 30


def _volume(extents) -> int:
    return math.prod(extents) if extents else 1


@dataclass
class DenseTensor:
    """Row-major float64 tensor over a flat contiguous buffer."""
    extents: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self) -> None:
        self.extents = tuple(int(e) for e in self.extents)
        arr = np.ascontiguousarray(self.data, dtype=np.float64).reshape(-1)
        need = _volume(self.extents)
        if arr.size != need:
            raise ShapeMismatch(
                f"buffer holds {arr.size} elements but extents {self.extents} need {need}")
        self.data = arr

    @property
    def rank(self) -> int:
        return len(self.extents)

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def strides(self) -> tuple[int, ...]:
        return row_major_strides(self.extents)

    @classmethod
    def zeros(cls, extents) -> DenseTensor:
        return cls(tuple(extents), np.zeros(_volume(extents)))

    @classmethod
    def full(cls, extents, value: float) -> DenseTensor:
        return cls(tuple(extents), np.full(_volume(extents), float(value)))

    @classmethod
    def random(cls, extents, seed: int) -> DenseTensor:
        rng = np.random.default_rng(seed)
        return cls(tuple(extents), rng.uniform(-1.0, 1.0, _volume(extents)))

    @classmethod
    def from_numpy(cls, array: np.ndarray) -> DenseTensor:
        return cls(tuple(array.shape), np.ascontiguousarray(array, dtype=np.float64).ravel())

    def to_numpy(self) -> np.ndarray:
        return self.data.reshape(self.extents)

    def copy(self) -> DenseTensor:
        return DenseTensor(self.extents, self.data.copy())


@dataclass(frozen=True)
class MicroKernel:
    """Innermost GEMM block: compute(packed_a, packed_b, c_block, kc,
    accumulate) with packed_a (mr, kc), packed_b (kc, nr), c_block (mr, nr).
    Each c element must be its prior value (or 0) plus products added in
    ascending p order; that makes blocked results bitwise equal to the
    triple loop."""
    name: str
    mr: int
    nr: int
    compute: object
    kind: str = "custom"


def reference_microkernel() -> MicroKernel:
    """4x8 register-blocked kernel used by the fused blocked drivers."""
    return MicroKernel(name="reference-4x8", mr=4, nr=8,
                       compute=kernels.micro_compute, kind="reference")


def scalar_microkernel(mr: int = 4, nr: int = 8) -> MicroKernel:
    """Per-element micro-tile: same blocking and packing, no register
    accumulator fan-out. The ablation rung between tiling and the full
    kernel."""
    return MicroKernel(name=f"scalar-{mr}x{nr}", mr=mr, nr=nr,
                       compute=kernels.micro_compute, kind="scalar")


def _effective(mode: str, alpha: float) -> tuple[float, float]:
    """(alpha, beta) actually applied: subtract folds into a negated alpha."""
    if mode == OVERWRITE:
        return float(alpha), 0.0
    if mode == ADD:
        return float(alpha), 1.0
    if mode == SUBTRACT:
        return -float(alpha), 1.0
    raise ConfigError(f"unknown accumulate mode {mode!r}")


# ------------------------------------------------------------- permutation


def permute(src: DenseTensor, perm, alpha: float = 1.0, *,
            tile: int | None = None, order: tuple[int, ...] | None = None,
            out: DenseTensor | None = None,
            accumulate: bool = False) -> DenseTensor:
    """dst[i0..] = [dst +] alpha * src[perm applied]: output dim d takes
    source dim perm[d]. Runs the tiled loop nest; pass order/tile to
    override the optimized loop order or disable tiling."""
    rank = src.rank
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(rank)):
        raise ConfigError(f"not a permutation of rank {rank}: {perm}")
    dst_extents = tuple(src.extents[p] for p in perm)
    if out is None:
        if accumulate:
            raise ConfigError("accumulate=True requires an explicit output tensor")
        out = DenseTensor(dst_extents, np.empty(_volume(dst_extents)))
    elif out.extents != dst_extents:
        raise ShapeMismatch(
            f"permutation output needs extents {dst_extents}, got {out.extents}")
    if order is None:
        order = transpose_loop_order(perm, rank)
    inv = [0] * rank
    for d, s in enumerate(perm):
        inv[s] = d
    sstr_full = row_major_strides(src.extents)
    dstr_full = row_major_strides(dst_extents)
    ext = np.array([src.extents[s] for s in order], np.int64)
    sstr = np.array([sstr_full[s] for s in order], np.int64)
    dstr = np.array([dstr_full[inv[s]] for s in order], np.int64)
    kernels.permute_kernel(src.data, out.data, ext, sstr, dstr,
                           tile if tile is not None else DEFAULT_TRANSPOSE_TILE,
                           float(alpha), bool(accumulate))
    return out


# ------------------------------------------------------------ naive oracle


def naive_contract(spec: ContractionSpec, a: DenseTensor, b: DenseTensor,
                   c_in: DenseTensor | None = None) -> DenseTensor:
    """Direct nested-loop contraction: output indices loop in out_labels
    order, contracted indices innermost in classification order."""
    _check_operand(spec.a_name or "A", a, spec.a_extents)
    _check_operand(spec.b_name or "B", b, spec.b_extents)
    _, _, contracted = spec.classify()
    alpha_eff, beta = _effective(spec.accumulate, spec.alpha)
    if beta != 0.0:
        if c_in is None:
            raise UninitializedTensor(spec.out_name or "output")
        _check_operand(spec.out_name or "C", c_in, spec.out_extents)
        cbuf = c_in.data.copy()
    else:
        if c_in is not None:
            _check_operand(spec.out_name or "C", c_in, spec.out_extents)
        cbuf = np.empty(_volume(spec.out_extents))
    a_pos = {l: i for i, l in enumerate(spec.a_labels)}
    b_pos = {l: i for i, l in enumerate(spec.b_labels)}
    a_str = row_major_strides(spec.a_extents)
    b_str = row_major_strides(spec.b_extents)
    c_str = row_major_strides(spec.out_extents)
    out_ext = np.array([spec.extents[l] for l in spec.out_labels], np.int64)
    k_ext = np.array([spec.extents[l] for l in contracted], np.int64)
    astr_o = np.array([a_str[a_pos[l]] if l in a_pos else 0
                       for l in spec.out_labels], np.int64)
    bstr_o = np.array([b_str[b_pos[l]] if l in b_pos else 0
                       for l in spec.out_labels], np.int64)
    cstr_o = np.array(c_str, np.int64)
    astr_k = np.array([a_str[a_pos[l]] for l in contracted], np.int64)
    bstr_k = np.array([b_str[b_pos[l]] for l in contracted], np.int64)
    kernels.contract_kernel(a.data, b.data, cbuf, out_ext, k_ext,
                            astr_o, bstr_o, cstr_o, astr_k, bstr_k,
                            alpha_eff, beta)
    return DenseTensor(spec.out_extents, cbuf)


def _check_operand(name: str, t: DenseTensor, extents: tuple[int, ...]) -> None:
    if tuple(t.extents) != tuple(extents):
        raise ShapeMismatch(f"{name}: expected extents {tuple(extents)}, got {tuple(t.extents)}")


# ------------------------------------------------------------ blocked GEMM


def tiled_gemm(a_p: np.ndarray, b_p: np.ndarray, c_p: np.ndarray,
               cfg: TilingConfig | None = None,
               mk: MicroKernel | None = None,
               accumulate: bool = False, workers: int = 1) -> np.ndarray:
    """C = [C +] A @ B through the blocked schedule with packed panels."""
    cfg = cfg or default_tiling()
    mk = mk or reference_microkernel()
    a = np.ascontiguousarray(a_p, dtype=np.float64)
    b = np.ascontiguousarray(b_p, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or c_p.ndim != 2:
        raise ShapeMismatch("tiled_gemm operates on matrices")
    m, k = a.shape
    if b.shape[0] != k:
        raise ShapeMismatch(f"A is {a.shape}, B is {b.shape}: inner extents differ")
    n = b.shape[1]
    if c_p.shape != (m, n):
        raise ShapeMismatch(f"C is {c_p.shape}, expected {(m, n)}")
    c = c_p
    if not (isinstance(c, np.ndarray) and c.dtype == np.float64
            and c.flags.c_contiguous):
        c = np.ascontiguousarray(c_p, dtype=np.float64)
    if mk.kind == "reference":
        if (cfg.mr, cfg.nr) != (4, 8):
            raise ConfigError(
                f"reference micro-kernel is 4x8; config asks {cfg.mr}x{cfg.nr} "
                "(override mr/nr or supply a custom kernel)")
        if workers > 1:
            numba.set_num_threads(min(workers, numba.config.NUMBA_NUM_THREADS))
            kernels.tiled_gemm_ref_par(a, b, c, cfg.mc, cfg.nc, cfg.kc, accumulate)
        else:
            kernels.tiled_gemm_ref(a, b, c, cfg.mc, cfg.nc, cfg.kc, accumulate)
    elif mk.kind == "scalar":
        kernels.tiled_gemm_scalar(a, b, c, cfg.mc, cfg.nc, cfg.kc,
                                  cfg.mr, cfg.nr, accumulate)
    else:
        _generic_tiled(a, b, c, cfg, mk, accumulate)
    if c is not c_p:
        c_p[...] = c
    return c


def _generic_tiled(a, b, c, cfg: TilingConfig, mk: MicroKernel, accumulate: bool):
    """Driver for user-supplied kernels: packs padded panels per the
    micro-kernel contract and bounds fringe writes through a scratch
    block."""
    m, k = a.shape
    n = b.shape[1]
    mr, nr = mk.mr, mk.nr
    for jc in range(0, n, cfg.nc):
        nc_eff = min(cfg.nc, n - jc)
        for pc in range(0, k, cfg.kc):
            kc_eff = min(cfg.kc, k - pc)
            acc_block = accumulate or pc > 0
            bpanel = b[pc:pc + kc_eff, jc:jc + nc_eff]
            for ic in range(0, m, cfg.mc):
                mc_eff = min(cfg.mc, m - ic)
                apanel = a[ic:ic + mc_eff, pc:pc + kc_eff]
                for jr in range(0, nc_eff, nr):
                    n_eff = min(nr, nc_eff - jr)
                    bp = np.zeros((kc_eff, nr))
                    bp[:, :n_eff] = bpanel[:, jr:jr + n_eff]
                    for ir in range(0, mc_eff, mr):
                        m_eff = min(mr, mc_eff - ir)
                        ap = np.zeros((mr, kc_eff))
                        ap[:m_eff, :] = apanel[ir:ir + m_eff, :]
                        i0 = ic + ir
                        j0 = jc + jr
                        if m_eff == mr and n_eff == nr:
                            mk.compute(ap, bp, c[i0:i0 + mr, j0:j0 + nr],
                                       kc_eff, acc_block)
                        else:
                            scratch = np.zeros((mr, nr))
                            if acc_block:
                                scratch[:m_eff, :n_eff] = c[i0:i0 + m_eff, j0:j0 + n_eff]
                            mk.compute(ap, bp, scratch, kc_eff, acc_block)
                            c[i0:i0 + m_eff, j0:j0 + n_eff] = scratch[:m_eff, :n_eff]


# ------------------------------------------------------------- TTGT driver


@dataclass
class ExecutionReport:
    wall_time: float
    flops: int
    gflops: float
    per_stage: dict[str, float]
    microkernel_calls: int

    def to_dict(self) -> dict:
        return {
            "wall_time": self.wall_time,
            "flops": self.flops,
            "gflops": self.gflops,
            "per_stage": dict(self.per_stage),
            "microkernel_calls": self.microkernel_calls,
        }


_STAGE_ORDER = ("transpose_a", "transpose_b", "gemm", "transpose_c")


def format_report(report: ExecutionReport, label: str = "") -> str:
    head = f"{label}: " if label else ""
    lines = [f"{head}{report.wall_time * 1e3:.3f} ms  "
             f"{report.gflops:.3f} GFLOP/s  "
             f"({report.flops} flops, {report.microkernel_calls} micro-kernel calls)"]
    for stage in _STAGE_ORDER:
        if stage in report.per_stage:
            lines.append(f"  {stage}: {report.per_stage[stage] * 1e3:.3f} ms")
    return "\n".join(lines)


def execute_ttgt(plan: TTGTPlan, spec: ContractionSpec, a: DenseTensor,
                 b: DenseTensor, c_in: DenseTensor | None = None,
                 cfg: TilingConfig | None = None,
                 mk: MicroKernel | None = None, *, workers: int = 1,
                 transpose_order: str = "opt", transpose_tiled: bool = True,
                 gemm_mode: str = "blocked") -> tuple[DenseTensor, ExecutionReport]:
    """Run one planned contraction. transpose_order ("opt"/"natural"),
    transpose_tiled, and gemm_mode ("blocked"/"naive") exist so single
    optimizations can be switched off for ablation runs."""
    cfg = cfg or default_tiling()
    mk = mk or reference_microkernel()
    _check_operand(spec.a_name or "A", a, spec.a_extents)
    _check_operand(spec.b_name or "B", b, spec.b_extents)
    alpha_eff, beta = _effective(spec.accumulate, spec.alpha)
    if beta != 0.0:
        if c_in is None:
            raise UninitializedTensor(spec.out_name or "output")
        _check_operand(spec.out_name or "C", c_in, spec.out_extents)
    elif c_in is not None:
        _check_operand(spec.out_name or "C", c_in, spec.out_extents)
    tile = cfg.transpose_tile if transpose_tiled else _UNTILED
    stages: dict[str, float] = {}
    t_begin = time.perf_counter()

    def _prep(t: DenseTensor, perm: tuple[int, ...], skip: bool,
              stage: str) -> DenseTensor:
        if skip:
            return t
        order = None if transpose_order == "opt" else tuple(range(t.rank))
        t0 = time.perf_counter()
        result = permute(t, perm, 1.0, tile=tile, order=order)
        stages[stage] = time.perf_counter() - t0
        return result

    if plan.swap_operands:
        first = _prep(b, plan.perm_b, plan.skip_b, "transpose_b")
        second = _prep(a, plan.perm_a, plan.skip_a, "transpose_a")
    else:
        first = _prep(a, plan.perm_a, plan.skip_a, "transpose_a")
        second = _prep(b, plan.perm_b, plan.skip_b, "transpose_b")
    lhs = first.data.reshape(plan.m, plan.k)
    rhs = second.data.reshape(plan.k, plan.n)

    def _gemm(cmat: np.ndarray, acc: bool) -> None:
        t0 = time.perf_counter()
        if gemm_mode == "naive":
            kernels.naive_gemm_kernel(lhs, rhs, cmat, acc)
        else:
            tiled_gemm(lhs, rhs, cmat, cfg, mk, accumulate=acc, workers=workers)
        stages["gemm"] = time.perf_counter() - t0

    direct = plan.skip_c and alpha_eff == 1.0
    if direct:
        out_data = c_in.data.copy() if beta != 0.0 else np.empty(_volume(spec.out_extents))
        _gemm(out_data.reshape(plan.m, plan.n), beta != 0.0)
        result = DenseTensor(spec.out_extents, out_data)
    else:
        cp = np.empty((plan.m, plan.n))
        _gemm(cp, False)
        mn_extents = tuple(spec.extents[l] for l in plan.m_group + plan.n_group)
        out_data = c_in.data.copy() if beta != 0.0 else np.empty(_volume(spec.out_extents))
        result = DenseTensor(spec.out_extents, out_data)
        order = None if transpose_order == "opt" else tuple(range(len(mn_extents)))
        t0 = time.perf_counter()
        permute(DenseTensor(mn_extents, cp.ravel()), plan.perm_c, alpha_eff,
                tile=tile, order=order, out=result, accumulate=beta != 0.0)
        stages["transpose_c"] = time.perf_counter() - t0

    wall = time.perf_counter() - t_begin
    flops = flop_count(spec)
    calls = 0
    if gemm_mode != "naive":
        calls = microkernel_call_count(plan.m, plan.n, plan.k, cfg)
    report = ExecutionReport(
        wall_time=wall,
        flops=flops,
        gflops=flops / max(wall, 1e-12) / 1e9,
        per_stage=stages,
        microkernel_calls=calls,
    )
    return result, report


# ---------------------------------------------------------- program runner


def run_program(module: IrModule, inputs: dict[str, DenseTensor] | None = None,
                cfg: TilingConfig | None = None,
                mk: MicroKernel | None = None, *, workers: int = 1,
                reports: list[tuple[str, ExecutionReport]] | None = None,
                engine: str = "ttgt") -> dict[str, DenseTensor]:
    """Execute a lowered module in statement order. `inputs` seeds named
    tensors; reading a tensor (or accumulating into one) that was never
    written raises UninitializedTensor. engine="naive" contracts through
    the nested-loop oracle in written operand order, bypassing all
    planning; it exists to check the planned engine against."""
    if engine not in ("ttgt", "naive"):
        raise ConfigError(f"unknown engine {engine!r}")
    cfg = cfg or default_tiling()
    mk = mk or reference_microkernel()
    storage: dict[str, DenseTensor] = {}
    for name, t in (inputs or {}).items():
        decl = module.tensors.get(name)
        if decl is None:
            raise ConfigError(f"input {name!r} is not a declared tensor")
        if tuple(t.extents) != decl.extents:
            raise ShapeMismatch(
                f"input {name}: declared extents {decl.extents}, got {tuple(t.extents)}")
        storage[name] = t.copy()

    def _region(ref):
        sl = []
        for lab, dim in zip(ref.labels, ref.tensor.dims):
            off = (lab.range.begin - dim.range.begin) // dim.range.increment
            sl.append(slice(off, off + lab.extent))
        return tuple(sl)

    def read(ref) -> DenseTensor:
        t = storage.get(ref.tensor.name)
        if t is None:
            raise UninitializedTensor(ref.tensor.name)
        if not ref.is_slice:
            return t
        nd = t.to_numpy()[_region(ref)]
        return DenseTensor(ref.extents, np.ascontiguousarray(nd).ravel())

    def write(ref, value: DenseTensor) -> None:
        name = ref.tensor.name
        if not ref.is_slice:
            storage[name] = value
            return
        t = storage.get(name)
        if t is None:
            raise UninitializedTensor(name)
        t.to_numpy()[_region(ref)] = value.to_numpy()

    pending: dict[int, MultOp] = {}
    for op in module.ops:
        if isinstance(op, FillOp):
            ref = op.dest
            if op.mode == OVERWRITE and not ref.is_slice:
                storage[ref.tensor.name] = DenseTensor.full(ref.extents, op.value)
                continue
            t = storage.get(ref.tensor.name)
            if t is None:
                raise UninitializedTensor(ref.tensor.name)
            region = t.to_numpy()[_region(ref)] if ref.is_slice else t.to_numpy()
            if op.mode == OVERWRITE:
                region[...] = op.value
            elif op.mode == ADD:
                region += op.value
            else:
                region -= op.value
        elif isinstance(op, CopyOp):
            alpha_eff, beta = _effective(op.mode, op.alpha)
            src = read(op.src)
            if op.src.tensor.name == op.dest.tensor.name:
                src = src.copy()
            perm = copy_perm(op)
            if beta == 0.0:
                write(op.dest, permute(src, perm, alpha_eff,
                                       tile=cfg.transpose_tile))
            else:
                base = read(op.dest)
                permute(src, perm, alpha_eff, tile=cfg.transpose_tile,
                        out=base, accumulate=True)
                write(op.dest, base)
        elif isinstance(op, ContractOp):
            spec = spec_from_contract(op)
            a = read(op.a)
            b = read(op.b)
            c_in = read(op.dest) if op.accumulate != OVERWRITE else None
            if engine == "naive":
                write(op.dest, naive_contract(spec, a, b, c_in))
                continue
            plan = select_ttgt(spec)
            out, rep = execute_ttgt(plan, spec, a, b, c_in, cfg, mk,
                                    workers=workers)
            write(op.dest, out)
            if reports is not None:
                reports.append((spec.out_name, rep))
        elif isinstance(op, MultOp):
            pending[op.result_id] = op
        elif isinstance(op, SetOp):
            mult = pending.pop(op.source_id)
            tree = None
            if engine == "naive":
                extents = {lab.name: lab.extent
                           for operand in mult.operands for lab in operand.labels}
                tree = natural_order(list(mult.operands),
                                     op.dest.label_names, extents)
            specs = binarize(mult, op.dest, mode=op.mode, tree=tree)
            env: dict[tuple[str, tuple[str, ...]], DenseTensor] = {}
            for operand in mult.operands:
                env[(operand.tensor.name, operand.label_names)] = read(operand)
            final = None
            for cspec in specs:
                a = env[(cspec.a_name, cspec.a_labels)]
                b = env[(cspec.b_name, cspec.b_labels)]
                is_root = cspec is specs[-1]
                c_in = read(op.dest) if is_root and op.mode != OVERWRITE else None
                if engine == "naive":
                    out = naive_contract(cspec, a, b, c_in)
                else:
                    plan = select_ttgt(cspec)
                    out, rep = execute_ttgt(plan, cspec, a, b, c_in, cfg, mk,
                                            workers=workers)
                    if reports is not None:
                        reports.append((cspec.out_name, rep))
                env[(cspec.out_name, cspec.out_labels)] = out
                final = out
            write(op.dest, final)
        else:
            raise ConfigError(f"unhandled op {type(op).__name__}")
    return storage


# ------------------------------------------------------------ tensor files


_DTNS_MAGIC = b"DTNS"
_DTNS_VERSION = 1


def save_dtns(path: str, tensor: DenseTensor) -> None:
    try:
        _write_dtns(path, tensor)
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e.strerror}") from None


def _write_dtns(path: str, tensor: DenseTensor) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", _DTNS_MAGIC, _DTNS_VERSION, tensor.rank))
        if tensor.rank:
            f.write(struct.pack(f"<{tensor.rank}Q", *tensor.extents))
        f.write(tensor.data.astype("<f8", copy=False).tobytes())


def load_dtns(path: str) -> DenseTensor:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    if len(blob) < 12 or blob[:4] != _DTNS_MAGIC:
        raise ConfigError(f"{path}: not a DTNS tensor file")
    version, rank = struct.unpack_from("<II", blob, 4)
    if version != _DTNS_VERSION:
        raise ConfigError(f"{path}: unsupported DTNS version {version}")
    header = 12 + 8 * rank
    if len(blob) < header:
        raise ConfigError(f"{path}: truncated DTNS header")
    extents = struct.unpack_from(f"<{rank}Q", blob, 12) if rank else ()
    need = header + 8 * _volume(extents)
    if len(blob) != need:
        raise ConfigError(
            f"{path}: payload is {len(blob) - header} bytes, "
            f"extents {tuple(extents)} need {need - header}")
    data = np.frombuffer(blob, dtype="<f8", offset=header).astype(np.float64)
    return DenseTensor(tuple(int(e) for e in extents), data)
