"""Tensor-algebra IR: index labels, tensor declarations, and the five
operation kinds (fill, copy, tensor-contract, mult, set), plus the index
classification and flop accounting the planner builds on.

Lowering resolves every name in the AST to a handle and turns each
statement into exactly one op (or a MultOp/SetOp pair for chains of three
or more operands, whose tree shape is deliberately left to the planner).
A labeled tensor whose label ranges differ from the declared dimension
ranges denotes a slice; slices are materialized as copies at execution
time, never aliased.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from . import frontend
from .errors import (
    FlopOverflow,
    InvalidIndexUsage,
    RankMismatch,
    UndeclaredIdentifier,
)

MAX_FLOPS = 2**63 - 1

OVERWRITE = "overwrite"
ADD = "add"
SUBTRACT = "subtract"

_ASSIGN_MODE = {"=": OVERWRITE, "+=": ADD, "-=": SUBTRACT}


@dataclass(frozen=True)
class Range:
    begin: int
    end: int
    increment: int = 1

    @property
    def extent(self) -> int:
        return (self.end - self.begin + self.increment - 1) // self.increment

    def contains(self, other: Range) -> bool:
        return (
            other.begin >= self.begin
            and other.end <= self.end
            and other.increment == self.increment
            and (other.begin - self.begin) % self.increment == 0
        )

    def __str__(self) -> str:
        return f"[{self.begin}:{self.end}:{self.increment}]"


@dataclass(frozen=True)
class IrIndexLabel:
    id: int
    name: str
    range: Range

    @property
    def extent(self) -> int:
        return self.range.extent


@dataclass(frozen=True)
class IrTensorDecl:
    id: int
    name: str
    element_type: str
    dims: tuple[IrIndexLabel, ...]

    @property
    def rank(self) -> int:
        return len(self.dims)

    @property
    def extents(self) -> tuple[int, ...]:
        return tuple(d.extent for d in self.dims)


@dataclass(frozen=True)
class IrLabeledTensor:
    tensor: IrTensorDecl
    labels: tuple[IrIndexLabel, ...]

    @property
    def is_slice(self) -> bool:
        return any(l.range != d.range for l, d in zip(self.labels, self.tensor.dims))

    @property
    def label_names(self) -> tuple[str, ...]:
        return tuple(l.name for l in self.labels)

    @property
    def extents(self) -> tuple[int, ...]:
        return tuple(l.extent for l in self.labels)


@dataclass(frozen=True)
class FillOp:
    dest: IrLabeledTensor
    value: float
    mode: str = OVERWRITE


@dataclass(frozen=True)
class CopyOp:
    dest: IrLabeledTensor
    alpha: float
    src: IrLabeledTensor
    mode: str = OVERWRITE


@dataclass(frozen=True)
class ContractOp:
    dest: IrLabeledTensor
    alpha: float
    a: IrLabeledTensor
    b: IrLabeledTensor
    accumulate: str = OVERWRITE


@dataclass(frozen=True)
class MultOp:
    result_id: int
    operands: tuple[IrLabeledTensor, ...]
    alpha: float


@dataclass(frozen=True)
class SetOp:
    dest: IrLabeledTensor
    source_id: int
    mode: str = OVERWRITE


IrOp = FillOp | CopyOp | ContractOp | MultOp | SetOp


@dataclass
class IrModule:
    labels: dict[str, IrIndexLabel] = field(default_factory=dict)
    tensors: dict[str, IrTensorDecl] = field(default_factory=dict)
    ops: list[IrOp] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    all_labels: list[IrIndexLabel] = field(default_factory=list)


@dataclass(frozen=True)
class ContractionSpec:
    """One binary contraction, fully described by index names and extents.

    out/a/b name fields are execution plumbing: they say which stored
    tensors (or t0, t1, ... intermediates) the spec reads and writes.
    """

    out_labels: tuple[str, ...]
    a_labels: tuple[str, ...]
    b_labels: tuple[str, ...]
    extents: dict[str, int]
    alpha: float = 1.0
    accumulate: str = OVERWRITE
    out_name: str = ""
    a_name: str = ""
    b_name: str = ""

    def classify(self) -> tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]:
        return classify_indices(self.out_labels, self.a_labels, self.b_labels)

    @property
    def out_extents(self) -> tuple[int, ...]:
        return tuple(self.extents[l] for l in self.out_labels)

    @property
    def a_extents(self) -> tuple[int, ...]:
        return tuple(self.extents[l] for l in self.a_labels)

    @property
    def b_extents(self) -> tuple[int, ...]:
        return tuple(self.extents[l] for l in self.b_labels)


def classify_indices(
    out: tuple[str, ...] | list[str],
    a: tuple[str, ...] | list[str],
    b: tuple[str, ...] | list[str],
) -> tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]:
    """Partition the index set into (free_a, free_b, contracted).

    free_a keeps a's order, free_b keeps b's order, contracted keeps a's
    order. Raises InvalidIndexUsage for anything outside the free/contracted
    dichotomy (repeats inside an operand, output indices missing from the
    inputs or present in both, input indices that are neither free nor
    contracted).
    """
    out_s, a_s, b_s = set(out), set(a), set(b)
    for name, labels in (("output", out), ("first input", a), ("second input", b)):
        if len(set(labels)) != len(labels):
            dup = next(l for l in labels if list(labels).count(l) > 1)
            raise InvalidIndexUsage(f"index {dup!r} appears twice in the {name} operand", dup)
    for l in out:
        if l in a_s and l in b_s:
            raise InvalidIndexUsage(
                f"output index {l!r} appears in both inputs; free indices must "
                f"appear in exactly one", l)
        if l not in a_s and l not in b_s:
            raise InvalidIndexUsage(f"output index {l!r} appears in neither input", l)
    for l in itertools.chain(a, b):
        if l not in out_s and not (l in a_s and l in b_s):
            raise InvalidIndexUsage(
                f"index {l!r} appears in one input only and not in the output", l)
    free_a = tuple(l for l in a if l in out_s)
    free_b = tuple(l for l in b if l in out_s)
    contracted = tuple(l for l in a if l in b_s)
    return free_a, free_b, contracted


def flop_count(spec: ContractionSpec) -> int:
    """2 x the product of all index extents (multiply-add = 2 flops)."""
    free_a, free_b, contracted = spec.classify()
    total = 2
    for l in free_a + free_b + contracted:
        total *= spec.extents[l]
    if total > MAX_FLOPS:
        raise FlopOverflow(total)
    return total


# ---------------------------------------------------------------- lowering


class _Lowerer:
    def __init__(self):
        self.module = IrModule()
        self._next_id = itertools.count()

    def fresh_id(self) -> int:
        return next(self._next_id)

    def lower(self, program: frontend.SourceProgram) -> IrModule:
        for stmt in program.statements:
            if isinstance(stmt, frontend.IndexLabelDecl):
                self.lower_label_decl(stmt)
            elif isinstance(stmt, frontend.TensorDeclStmt):
                self.lower_tensor_decl(stmt)
            elif isinstance(stmt, frontend.TensorOpStmt):
                self.lower_op(stmt)
            else:
                raise AssertionError(f"unknown statement {type(stmt)}")
        return self.module

    def lower_label_decl(self, stmt: frontend.IndexLabelDecl) -> None:
        b, e, inc = stmt.range
        for name in stmt.names:
            label = IrIndexLabel(self.fresh_id(), name, Range(b, e, inc))
            self.module.labels[name] = label
            self.module.all_labels.append(label)

    def lower_tensor_decl(self, stmt: frontend.TensorDeclStmt) -> None:
        dims = []
        for name in stmt.dim_labels:
            if name not in self.module.labels:
                raise UndeclaredIdentifier(name, stmt.span)
            dims.append(self.module.labels[name])
        if stmt.element_type != "double":
            self.module.warnings.append(
                f"tensor {stmt.name!r}: element type '{stmt.element_type}' promoted to double")
        decl = IrTensorDecl(self.fresh_id(), stmt.name, "double", tuple(dims))
        self.module.tensors[stmt.name] = decl

    def resolve_ref(self, ref: frontend.LabeledTensorRef) -> IrLabeledTensor:
        if ref.tensor_name not in self.module.tensors:
            raise UndeclaredIdentifier(ref.tensor_name, ref.span)
        decl = self.module.tensors[ref.tensor_name]
        if len(ref.labels) != decl.rank:
            raise RankMismatch(ref.tensor_name, decl.rank, len(ref.labels))
        labels = []
        for name, dim in zip(ref.labels, decl.dims):
            if name not in self.module.labels:
                raise UndeclaredIdentifier(name, ref.span)
            label = self.module.labels[name]
            if label.range != dim.range and not dim.range.contains(label.range):
                raise InvalidIndexUsage(
                    f"label {name!r} range {label.range} is not contained in "
                    f"dimension range {dim.range} of tensor {ref.tensor_name!r}", name)
            labels.append(label)
        if len(set(l.name for l in labels)) != len(labels):
            dup = next(n for n in ref.labels if ref.labels.count(n) > 1)
            raise InvalidIndexUsage(
                f"index {dup!r} appears twice in operand {ref.tensor_name!r}", dup)
        return IrLabeledTensor(decl, tuple(labels))

    def lower_op(self, stmt: frontend.TensorOpStmt) -> None:
        dest = self.resolve_ref(stmt.lhs)
        mode = _ASSIGN_MODE[stmt.assign_op]
        if isinstance(stmt.rhs, frontend.ScalarConst):
            self.module.ops.append(FillOp(dest, stmt.rhs.value, mode))
            return
        operands = [self.resolve_ref(t) for t in stmt.rhs.operands]
        alpha = stmt.rhs.alpha
        if len(operands) == 1:
            src = operands[0]
            if sorted(src.label_names) != sorted(dest.label_names):
                raise RankMismatch(dest.tensor.name, dest.tensor.rank, len(src.labels))
            self.module.ops.append(CopyOp(dest, alpha, src, mode))
        elif len(operands) == 2:
            a, b = operands
            classify_indices(dest.label_names, a.label_names, b.label_names)
            self._check_consistent_extents([dest, a, b])
            self.module.ops.append(ContractOp(dest, alpha, a, b, mode))
        else:
            validate_nary(dest.label_names, [t.label_names for t in operands])
            self._check_consistent_extents([dest] + operands)
            mult = MultOp(self.fresh_id(), tuple(operands), alpha)
            self.module.ops.append(mult)
            self.module.ops.append(SetOp(dest, mult.result_id, mode))

    def _check_consistent_extents(self, refs: list[IrLabeledTensor]) -> None:
        seen: dict[str, int] = {}
        for ref in refs:
            for label in ref.labels:
                if label.name in seen and seen[label.name] != label.extent:
                    raise InvalidIndexUsage(
                        f"index {label.name!r} used with inconsistent extents "
                        f"({seen[label.name]} vs {label.extent})", label.name)
                seen[label.name] = label.extent


def lower_ast(program: frontend.SourceProgram) -> IrModule:
    """Lower a parsed program to the TA-level IR, resolving all names."""
    return _Lowerer().lower(program)


def validate_nary(out: tuple[str, ...], operands: list[tuple[str, ...]]) -> None:
    """Check the n-operand generalization of the index classification.

    Every index must appear either in exactly two operands (contracted at
    the tree node where those two meet) or in exactly one operand plus the
    output (free). Anything else cannot form valid binary contractions at
    every tree node.
    """
    counts: dict[str, int] = {}
    for labels in operands:
        if len(set(labels)) != len(labels):
            dup = next(l for l in labels if labels.count(l) > 1)
            raise InvalidIndexUsage(f"index {dup!r} appears twice in one operand", dup)
        for l in labels:
            counts[l] = counts.get(l, 0) + 1
    out_set = set(out)
    for l in out:
        if l not in counts:
            raise InvalidIndexUsage(f"output index {l!r} appears in no operand", l)
    for l, c in counts.items():
        if l in out_set:
            if c != 1:
                raise InvalidIndexUsage(
                    f"output index {l!r} appears in {c} operands; it must appear "
                    f"in exactly one", l)
        elif c != 2:
            raise InvalidIndexUsage(
                f"index {l!r} appears in {c} operands; a contracted index must "
                f"appear in exactly two", l)


def copy_perm(op: CopyOp) -> tuple[int, ...]:
    """Permutation taking src axis order to dest axis order (dst d <- src perm[d])."""
    src_names = list(op.src.label_names)
    return tuple(src_names.index(name) for name in op.dest.label_names)


def spec_from_contract(op: ContractOp) -> ContractionSpec:
    extents: dict[str, int] = {}
    for ref in (op.a, op.b, op.dest):
        for label in ref.labels:
            extents[label.name] = label.extent
    return ContractionSpec(
        out_labels=op.dest.label_names,
        a_labels=op.a.label_names,
        b_labels=op.b.label_names,
        extents=extents,
        alpha=op.alpha,
        accumulate=op.accumulate,
        out_name=op.dest.tensor.name,
        a_name=op.a.tensor.name,
        b_name=op.b.tensor.name,
    )


# -------------------------------------------------------------- validation


@dataclass(frozen=True)
class Diagnostic:
    op_index: int
    kind: str
    message: str

    def __str__(self) -> str:
        return f"op #{self.op_index}: {self.kind}: {self.message}"


def validate(module: IrModule) -> list[Diagnostic]:
    """Re-check every op invariant; returns one diagnostic per violation."""
    diags: list[Diagnostic] = []

    def check_ref(i: int, ref: IrLabeledTensor) -> None:
        if len(ref.labels) != ref.tensor.rank:
            diags.append(Diagnostic(i, "RankMismatch",
                                    f"tensor {ref.tensor.name!r} has rank {ref.tensor.rank}, "
                                    f"got {len(ref.labels)} labels"))
            return
        for label, dim in zip(ref.labels, ref.tensor.dims):
            if label.range != dim.range and not dim.range.contains(label.range):
                diags.append(Diagnostic(i, "InvalidIndexUsage",
                                        f"slice {label.name} {label.range} not contained "
                                        f"in {dim.range}"))

    for i, op in enumerate(module.ops):
        if isinstance(op, FillOp):
            check_ref(i, op.dest)
        elif isinstance(op, CopyOp):
            check_ref(i, op.dest)
            check_ref(i, op.src)
            if sorted(op.src.label_names) != sorted(op.dest.label_names):
                diags.append(Diagnostic(i, "RankMismatch",
                                        "copy label multisets differ: "
                                        f"{op.src.label_names} vs {op.dest.label_names}"))
        elif isinstance(op, ContractOp):
            for ref in (op.dest, op.a, op.b):
                check_ref(i, ref)
            try:
                classify_indices(op.dest.label_names, op.a.label_names, op.b.label_names)
            except InvalidIndexUsage as e:
                diags.append(Diagnostic(i, "InvalidIndexUsage", str(e)))
        elif isinstance(op, MultOp):
            for ref in op.operands:
                check_ref(i, ref)
        elif isinstance(op, SetOp):
            check_ref(i, op.dest)
            try:
                mult = next(p for p in module.ops
                            if isinstance(p, MultOp) and p.result_id == op.source_id)
            except StopIteration:
                diags.append(Diagnostic(i, "InvalidIndexUsage",
                                        f"set references unknown mult result %{op.source_id}"))
                continue
            try:
                validate_nary(op.dest.label_names, [t.label_names for t in mult.operands])
            except InvalidIndexUsage as e:
                diags.append(Diagnostic(i, "InvalidIndexUsage", str(e)))
    return diags


# ---------------------------------------------------------------- emission


def _ref_str(ref: IrLabeledTensor) -> str:
    return f"{ref.tensor.name}[{','.join(ref.label_names)}]"


def emit_ta(module: IrModule) -> str:
    """Stable one-op-per-line textual IR for `--emit ta`."""
    lines = []
    for label in module.all_labels:
        lines.append(f"ta.index_label %i{label.id} name={label.name} "
                     f"range={label.range} extent={label.extent}")
    for decl in module.tensors.values():
        dims = ",".join(d.name for d in decl.dims)
        exts = ",".join(str(e) for e in decl.extents)
        lines.append(f"ta.tensor_decl %t{decl.id} name={decl.name} "
                     f"type={decl.element_type} dims=[{dims}] extents=[{exts}]")
    for op in module.ops:
        if isinstance(op, FillOp):
            lines.append(f"ta.fill {_ref_str(op.dest)} value={op.value!r} mode={op.mode}")
        elif isinstance(op, CopyOp):
            perm = ",".join(str(p) for p in copy_perm(op))
            lines.append(f"ta.copy {_ref_str(op.dest)} <- {_ref_str(op.src)} "
                         f"perm=[{perm}] alpha={op.alpha!r} mode={op.mode}")
        elif isinstance(op, ContractOp):
            lines.append(f"ta.tc {_ref_str(op.dest)} <- {_ref_str(op.a)} * {_ref_str(op.b)} "
                         f"alpha={op.alpha!r} mode={op.accumulate}")
        elif isinstance(op, MultOp):
            chain = " * ".join(_ref_str(t) for t in op.operands)
            lines.append(f"ta.mult %m{op.result_id} = {chain} alpha={op.alpha!r}")
        elif isinstance(op, SetOp):
            lines.append(f"ta.set {_ref_str(op.dest)} <- %m{op.source_id} mode={op.mode}")
    slices = []
    for op in module.ops:
        refs = []
        if isinstance(op, FillOp):
            refs = [op.dest]
        elif isinstance(op, CopyOp):
            refs = [op.dest, op.src]
        elif isinstance(op, ContractOp):
            refs = [op.dest, op.a, op.b]
        elif isinstance(op, MultOp):
            refs = list(op.operands)
        elif isinstance(op, SetOp):
            refs = [op.dest]
        for ref in refs:
            if ref.is_slice and _ref_str(ref) not in slices:
                slices.append(_ref_str(ref))
    for s in slices:
        lines.append(f"ta.labeled_tensor {s} (slice)")
    return "\n".join(lines) + "\n"
