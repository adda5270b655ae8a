"""Shared fixtures: one-time kernel compilation and oracle helpers."""

from __future__ import annotations

import numpy as np
import pytest

from tacc import kernels
from tacc.executor import DenseTensor
from tacc.ta_ir import ADD, OVERWRITE, SUBTRACT, ContractionSpec


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile every jitted kernel once so timed tests measure steady state
    kernels.warmup()


def einsum_reference(spec: ContractionSpec, a: DenseTensor, b: DenseTensor,
                     c_in: DenseTensor | None = None) -> np.ndarray:
    """Independent result via numpy's einsum: alpha and the accumulate
    mode applied outside the engine entirely."""
    letters = {}
    for label in dict.fromkeys(spec.a_labels + spec.b_labels + spec.out_labels):
        letters[label] = chr(ord("a") + len(letters))
    expr = "{},{}->{}".format(
        "".join(letters[l] for l in spec.a_labels),
        "".join(letters[l] for l in spec.b_labels),
        "".join(letters[l] for l in spec.out_labels))
    product = np.einsum(expr, a.to_numpy(), b.to_numpy())
    if spec.accumulate == OVERWRITE:
        return spec.alpha * product
    base = c_in.to_numpy().copy()
    if spec.accumulate == ADD:
        return base + spec.alpha * product
    if spec.accumulate == SUBTRACT:
        return base - spec.alpha * product
    raise AssertionError(spec.accumulate)


def rel_err(out: np.ndarray, ref: np.ndarray) -> float:
    diff = float(np.max(np.abs(out - ref))) if out.size else 0.0
    scale = float(np.max(np.abs(ref))) if ref.size else 0.0
    return diff / max(scale, 1.0)


def random_tensor(rng: np.random.Generator, extents) -> DenseTensor:
    size = 1
    for e in extents:
        size *= e
    return DenseTensor(tuple(extents), rng.uniform(-1.0, 1.0, size))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one pass/fail line per acceptance criterion."""
    lines = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            verdict = "PASS" if status == "passed" else "FAIL"
            lines.append((name, verdict))
    if not lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, verdict in sorted(lines):
        terminalreporter.write_line(f"{verdict}  {name}")
