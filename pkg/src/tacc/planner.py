"""Domain-level planning: binarize multi-operand expressions with minimum
total flops, and pick the cheapest TTGT permutation set for each binary
contraction.

Expression ordering is an exhaustive search over all ordered full binary
trees on the operand list (all groupings and both child orders at every
node), memoized per operand subset; with the 8-operand bound this is at
most a few thousand subsets. The per-node objective is the contraction
flop count; nothing else (memory footprint, transpose cost) enters the
ordering objective.

TTGT enumeration covers, for both operand orders, every permutation of the
three flattening groups (M = first operand's free indices, N = second's,
K = contracted). Permutation cost is volume-scaled, weights moved
dimensions by how outer they are, and doubles for the output tensor; the
selected plan is the exhaustive argmin.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

from .errors import RankTooHigh, TooManyOperands
from .ta_ir import (
    OVERWRITE,
    ContractionSpec,
    MultOp,
    IrLabeledTensor,
    classify_indices,
    validate_nary,
)


@dataclass(frozen=True)
class Leaf:
    payload: object
    labels: tuple[str, ...]
    name: str


@dataclass(frozen=True)
class Contract:
    left: ExprTree
    right: ExprTree
    result_labels: tuple[str, ...]


@dataclass(frozen=True)
class ExprTree:
    node: Leaf | Contract
    total_flops: int

    @property
    def labels(self) -> tuple[str, ...]:
        if isinstance(self.node, Leaf):
            return self.node.labels
        return self.node.result_labels

    def sexpr(self) -> str:
        if isinstance(self.node, Leaf):
            return self.node.name
        return f"({self.node.left.sexpr()} {self.node.right.sexpr()})"


def _operand_labels(op: object) -> tuple[str, ...]:
    if isinstance(op, IrLabeledTensor):
        return op.label_names
    return tuple(op)  # plain label sequence, for direct API use


def _operand_name(op: object, i: int) -> str:
    if isinstance(op, IrLabeledTensor):
        return op.tensor.name
    return f"op{i}"


def order_expression(
    operands: list,
    out_labels: tuple[str, ...] | list[str],
    extents: dict[str, int],
) -> ExprTree:
    """Minimum-total-flop ordered binary tree over the operand list.

    Ties prefer the natural left-to-right tree, then the lexicographically
    smallest s-expression encoding (leaves named by operand position).
    """
    n = len(operands)
    if n > 8:
        raise TooManyOperands(n)
    if n < 2:
        raise ValueError("order_expression needs at least two operands")
    out_labels = tuple(out_labels)
    op_labels = [_operand_labels(op) for op in operands]
    validate_nary(out_labels, op_labels)

    leaves = [
        ExprTree(Leaf(op, labels, _operand_name(op, i)), 0)
        for i, (op, labels) in enumerate(zip(operands, op_labels))
    ]
    out_set = set(out_labels)

    def outside_labels(subset: frozenset[int]) -> set[str]:
        outside = set(out_set)
        for j in range(n):
            if j not in subset:
                outside.update(op_labels[j])
        return outside

    def node_flops(left_labels, right_labels) -> int:
        total = 2
        for l in dict.fromkeys(left_labels + right_labels):
            total *= extents[l]
        return total

    def make_node(left: ExprTree, right: ExprTree, subset: frozenset[int]) -> ExprTree:
        outside = outside_labels(subset)
        result = tuple(l for l in left.labels if l in outside)
        result += tuple(l for l in right.labels if l in outside and l not in result)
        flops = node_flops(left.labels, right.labels)
        return ExprTree(Contract(left, right, result),
                        left.total_flops + right.total_flops + flops)

    # encoding strings for one subset all share a length, so per-subset
    # (cost, encoding) minimization composes to the global lexicographic min
    memo: dict[frozenset[int], tuple[int, str, ExprTree]] = {}

    def best(subset: frozenset[int]) -> tuple[int, str, ExprTree]:
        if subset in memo:
            return memo[subset]
        if len(subset) == 1:
            (i,) = subset
            entry = (0, str(i), leaves[i])
            memo[subset] = entry
            return entry
        members = sorted(subset)
        best_entry = None
        # combinations over all sizes yields every proper nonempty subset
        # exactly once as the left child, so both child orders are covered
        for r in range(1, len(members)):
            for left_ids in itertools.combinations(members, r):
                left_set = frozenset(left_ids)
                lc, le, lt = best(left_set)
                rc, re, rt = best(subset - left_set)
                tree = make_node(lt, rt, subset)
                entry = (tree.total_flops, f"({le} {re})", tree)
                if best_entry is None or (entry[0], entry[1]) < (best_entry[0], best_entry[1]):
                    best_entry = entry
        memo[subset] = best_entry
        return best_entry

    full = frozenset(range(n))
    min_cost, _, min_tree = best(full)

    natural = natural_order(operands, out_labels, extents)
    if natural.total_flops == min_cost:
        return natural
    return min_tree


def natural_order(
    operands: list,
    out_labels: tuple[str, ...] | list[str],
    extents: dict[str, int],
) -> ExprTree:
    """Left-deep tree in the written operand order, no reordering."""
    n = len(operands)
    if n > 8:
        raise TooManyOperands(n)
    if n < 2:
        raise ValueError("natural_order needs at least two operands")
    out_labels = tuple(out_labels)
    op_labels = [_operand_labels(op) for op in operands]
    validate_nary(out_labels, op_labels)
    leaves = [
        ExprTree(Leaf(op, labels, _operand_name(op, i)), 0)
        for i, (op, labels) in enumerate(zip(operands, op_labels))
    ]
    out_set = set(out_labels)
    tree = leaves[0]
    for i in range(1, n):
        outside = set(out_set)
        for j in range(i + 1, n):
            outside.update(op_labels[j])
        right = leaves[i]
        result = tuple(l for l in tree.labels if l in outside)
        result += tuple(l for l in right.labels if l in outside and l not in result)
        flops = 2
        for l in dict.fromkeys(tree.labels + right.labels):
            flops *= extents[l]
        tree = ExprTree(Contract(tree, right, result),
                        tree.total_flops + right.total_flops + flops)
    return tree


# --------------------------------------------------------------- TTGT plans


@dataclass(frozen=True)
class TTGTPlan:
    perm_a: tuple[int, ...]
    perm_b: tuple[int, ...]
    perm_c: tuple[int, ...]
    swap_operands: bool
    m: int
    n: int
    k: int
    skip_a: bool
    skip_b: bool
    skip_c: bool
    cost: float
    m_group: tuple[str, ...] = field(default=())
    n_group: tuple[str, ...] = field(default=())
    k_group: tuple[str, ...] = field(default=())


def permutation_cost(perm, extents, is_output: bool = False) -> float:
    """Heuristic transpose cost: volume-scaled, moved-outer-dims weighted,
    doubled for the output tensor; identity permutations cost nothing."""
    perm = tuple(perm)
    r = len(perm)
    if perm == tuple(range(r)):
        return 0.0
    volume = 1
    for e in extents:
        volume *= e
    weight = 1.0 + sum((r - d) / r for d in range(r) if perm[d] != d)
    return volume * weight * (2.0 if is_output else 1.0)


def _perm_for(src_labels: tuple[str, ...], dst_labels: tuple[str, ...]) -> tuple[int, ...]:
    src = list(src_labels)
    return tuple(src.index(l) for l in dst_labels)


def _prod(extents: dict[str, int], labels: tuple[str, ...]) -> int:
    total = 1
    for l in labels:
        total *= extents[l]
    return total


def enumerate_ttgt_variants(spec: ContractionSpec) -> list[TTGTPlan]:
    """All 2 * |free_a|! * |free_b|! * |contracted|! flattening choices."""
    free_a, free_b, contracted = spec.classify()
    for group, labels in (("M", free_a), ("N", free_b), ("K", contracted)):
        if len(labels) > 6:
            raise RankTooHigh(group, len(labels))
    ext = spec.extents
    plans: list[TTGTPlan] = []
    for swap in (False, True):
        first_labels, first_free = (spec.a_labels, free_a) if not swap else (spec.b_labels, free_b)
        second_labels, second_free = (spec.b_labels, free_b) if not swap else (spec.a_labels, free_a)
        for m_order in itertools.permutations(first_free):
            for n_order in itertools.permutations(second_free):
                for k_order in itertools.permutations(contracted):
                    perm_first = _perm_for(first_labels, m_order + k_order)
                    perm_second = _perm_for(second_labels, k_order + n_order)
                    perm_a, perm_b = (perm_first, perm_second) if not swap else (perm_second, perm_first)
                    cp_labels = m_order + n_order
                    perm_c = _perm_for(cp_labels, spec.out_labels)
                    cost = (
                        permutation_cost(perm_a, spec.a_extents)
                        + permutation_cost(perm_b, spec.b_extents)
                        + permutation_cost(perm_c, tuple(ext[l] for l in cp_labels), is_output=True)
                    )
                    plans.append(TTGTPlan(
                        perm_a=perm_a,
                        perm_b=perm_b,
                        perm_c=perm_c,
                        swap_operands=swap,
                        m=_prod(ext, m_order),
                        n=_prod(ext, n_order),
                        k=_prod(ext, k_order),
                        skip_a=perm_a == tuple(range(len(perm_a))),
                        skip_b=perm_b == tuple(range(len(perm_b))),
                        skip_c=perm_c == tuple(range(len(perm_c))),
                        cost=cost,
                        m_group=m_order,
                        n_group=n_order,
                        k_group=k_order,
                    ))
    return plans


def select_ttgt(spec: ContractionSpec) -> TTGTPlan:
    """Cost-minimal plan; ties prefer fewer transposes, then unswapped,
    then enumeration order."""
    plans = enumerate_ttgt_variants(spec)
    def key(item):
        i, p = item
        non_identity = (not p.skip_a) + (not p.skip_b) + (not p.skip_c)
        return (p.cost, non_identity, p.swap_operands, i)
    return min(enumerate(plans), key=key)[1]


# ---------------------------------------------------------------- binarize


def binarize(
    multop: MultOp,
    out: IrLabeledTensor | tuple[str, ...],
    mode: str = OVERWRITE,
    tree: ExprTree | None = None,
    out_name: str | None = None,
) -> list[ContractionSpec]:
    """Post-order emission of one ContractionSpec per tree node.

    Intermediates are named t0, t1, ...; alpha rides on the first emitted
    contraction and the requested accumulate mode on the last (the root,
    which also targets the requested output label order).
    """
    out_labels = out.label_names if isinstance(out, IrLabeledTensor) else tuple(out)
    if out_name is None:
        out_name = out.tensor.name if isinstance(out, IrLabeledTensor) else "out"
    extents: dict[str, int] = {}
    for op in multop.operands:
        for label in op.labels:
            extents[label.name] = label.extent
    if isinstance(out, IrLabeledTensor):
        for label in out.labels:
            extents.setdefault(label.name, label.extent)
    if tree is None:
        tree = order_expression(list(multop.operands), out_labels, extents)

    specs: list[ContractionSpec] = []
    counter = itertools.count()

    def emit(node: ExprTree) -> str:
        if isinstance(node.node, Leaf):
            return node.node.name
        a_name = emit(node.node.left)
        b_name = emit(node.node.right)
        is_root = node is tree
        name = out_name if is_root else f"t{next(counter)}"
        specs.append(ContractionSpec(
            out_labels=out_labels if is_root else node.node.result_labels,
            a_labels=node.node.left.labels,
            b_labels=node.node.right.labels,
            extents={l: extents[l] for l in
                     dict.fromkeys(node.node.left.labels + node.node.right.labels)},
            alpha=multop.alpha if not specs else 1.0,
            accumulate=mode if is_root else OVERWRITE,
            out_name=name,
            a_name=a_name,
            b_name=b_name,
        ))
        return name

    emit(tree)
    return specs


# ---------------------------------------------------------------- emission


def plan_entry(spec: ContractionSpec, plan: TTGTPlan) -> dict:
    return {
        "out": spec.out_name,
        "perm_a": list(plan.perm_a),
        "perm_b": list(plan.perm_b),
        "perm_c": list(plan.perm_c),
        "swap": plan.swap_operands,
        "m": plan.m,
        "n": plan.n,
        "k": plan.k,
        "cost": plan.cost,
    }


def format_plan(tree_sexpr: str, node_flops: list[tuple[str, int]],
                steps: list[tuple[ContractionSpec, TTGTPlan]]) -> str:
    lines = [f"tree: {tree_sexpr}"]
    for name, flops in node_flops:
        lines.append(f"  node {name}: {flops} flops")
    for spec, plan in steps:
        lines.append(f"  step {spec.out_name} <- {spec.a_name} * {spec.b_name}: "
                     f"out=[{','.join(spec.out_labels)}]")
        lines.append(f"    perm_a={list(plan.perm_a)} skip={plan.skip_a}  "
                     f"perm_b={list(plan.perm_b)} skip={plan.skip_b}  "
                     f"perm_c={list(plan.perm_c)} skip={plan.skip_c}")
        lines.append(f"    swap={plan.swap_operands} m={plan.m} n={plan.n} k={plan.k} "
                     f"cost={plan.cost:g}")
    return "\n".join(lines)


def plan_json(entries: list[dict]) -> str:
    return json.dumps(entries, indent=2) + "\n"
