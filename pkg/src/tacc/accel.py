"""Analytic timing model for GEMM accelerator tiles.

An accelerator executes square t x t micro-GEMMs in a fixed cycle count,
so an m x n x k problem costs ceil(m/t) * ceil(n/t) * ceil(k/t) calls:
fringe tiles are padded, and small problems land on the padding cliff
(a 1x1x1 GEMM on a 64x64 tile still pays the full 1026 cycles). Host-side
transposes are modeled as bandwidth-bound streams, one read plus one
write per non-skipped stage. Candidates are ranked purely by estimated
time; power and area ride along for reporting but never affect ranking.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

from .errors import ConfigError, NonEmptyRequired
from .planner import TTGTPlan, select_ttgt
from .ta_ir import ContractionSpec

DEFAULT_BANDWIDTH = 10e9
_FLOAT_BYTES = 8


@dataclass(frozen=True)
class AccelSpec:
    name: str
    tile: int
    cycles_per_call: int
    frequency_hz: float
    avg_power_mw: float
    area_um2: float

    def __post_init__(self) -> None:
        if self.tile < 1:
            raise ConfigError(f"accelerator {self.name!r}: tile must be >= 1")
        if self.cycles_per_call < 1:
            raise ConfigError(f"accelerator {self.name!r}: cycles_per_call must be >= 1")
        if self.frequency_hz <= 0:
            raise ConfigError(f"accelerator {self.name!r}: frequency_hz must be positive")


def builtin_accels() -> list[AccelSpec]:
    """Three synthesized design points at 1 GHz."""
    return [
        AccelSpec("16x16", 16, 131, 1e9, 5.077, 55827.0),
        AccelSpec("64x64", 64, 1026, 1e9, 13.639, 224068.0),
        AccelSpec("256x256", 256, 32770, 1e9, 73.7972, 4.097e6),
    ]


def estimate_gemm(m: int, n: int, k: int, accel: AccelSpec) -> tuple[int, int]:
    """(cycles, microcalls) for one m x n x k GEMM on `accel`."""
    if min(m, n, k) < 1:
        raise ConfigError(f"GEMM extents must be >= 1, got {(m, n, k)}")
    t = accel.tile
    microcalls = math.ceil(m / t) * math.ceil(n / t) * math.ceil(k / t)
    return microcalls * accel.cycles_per_call, microcalls


@dataclass
class CodesignReport:
    per_accel: dict[str, dict]
    best: str

    def to_dict(self) -> dict:
        return {"per_accel": self.per_accel, "best": self.best}


def estimate_contraction(spec: ContractionSpec, plan: TTGTPlan,
                         accels: list[AccelSpec],
                         host_bandwidth: float = DEFAULT_BANDWIDTH,
                         ) -> CodesignReport:
    """Time one planned contraction on each candidate accelerator."""
    if not accels:
        raise NonEmptyRequired("accelerator list")
    if host_bandwidth <= 0:
        raise ConfigError(f"host bandwidth must be positive, got {host_bandwidth}")
    transpose_bytes = 0
    volumes = (
        (plan.skip_a, math.prod(spec.a_extents)),
        (plan.skip_b, math.prod(spec.b_extents)),
        (plan.skip_c, math.prod(spec.out_extents) if spec.out_extents else 1),
    )
    for skip, volume in volumes:
        if not skip:
            transpose_bytes += 2 * volume * _FLOAT_BYTES
    transpose_seconds = transpose_bytes / host_bandwidth
    per_accel: dict[str, dict] = {}
    best_name = ""
    best_total = math.inf
    for accel in accels:
        cycles, microcalls = estimate_gemm(plan.m, plan.n, plan.k, accel)
        est_seconds = cycles / accel.frequency_hz
        per_accel[accel.name] = {
            "est_seconds": est_seconds,
            "est_cycles": cycles,
            "microcalls": microcalls,
            "transpose_seconds": transpose_seconds,
            "bound": "compute" if est_seconds >= transpose_seconds else "memory",
        }
        total = est_seconds + transpose_seconds
        if total < best_total:
            best_total = total
            best_name = accel.name
    return CodesignReport(per_accel=per_accel, best=best_name)


def codesign_sweep(workloads: list[tuple[str, ContractionSpec]],
                   accels: list[AccelSpec],
                   host_bandwidth: float = DEFAULT_BANDWIDTH,
                   ) -> list[tuple[str, CodesignReport]]:
    """Plan and time every workload on every candidate."""
    if not workloads:
        raise NonEmptyRequired("workload list")
    if not accels:
        raise NonEmptyRequired("accelerator list")
    results = []
    for name, spec in workloads:
        plan = select_ttgt(spec)
        results.append((name, estimate_contraction(spec, plan, accels,
                                                   host_bandwidth)))
    return results


_ACCEL_FIELDS = {
    "name": str,
    "tile": int,
    "cycles_per_call": int,
    "frequency_hz": (int, float),
    "avg_power_mw": (int, float),
    "area_um2": (int, float),
}


def load_accels(path: str) -> list[AccelSpec]:
    """Read a JSON array of accelerator descriptions; every entry must
    carry exactly the AccelSpec fields."""
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(raw, list):
        raise ConfigError(f"{path}: expected a JSON array of accelerators")
    accels = []
    for i, entry in enumerate(raw):
        where = f"{path}: accelerator {i}"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: expected an object")
        for field_name, types in _ACCEL_FIELDS.items():
            if field_name not in entry:
                raise ConfigError(f"{where}: missing field {field_name!r}")
            if not isinstance(entry[field_name], types) or isinstance(entry[field_name], bool):
                raise ConfigError(f"{where}: field {field_name!r} has the wrong type")
        extra = set(entry) - set(_ACCEL_FIELDS)
        if extra:
            raise ConfigError(f"{where}: unknown field {sorted(extra)[0]!r}")
        accels.append(AccelSpec(
            name=entry["name"],
            tile=entry["tile"],
            cycles_per_call=entry["cycles_per_call"],
            frequency_hz=float(entry["frequency_hz"]),
            avg_power_mw=float(entry["avg_power_mw"]),
            area_um2=float(entry["area_um2"]),
        ))
    if not accels:
        raise NonEmptyRequired("accelerator list")
    return accels


def sweep_csv(results: list[tuple[str, CodesignReport]],
              accels: list[AccelSpec]) -> str:
    specs = {a.name: a for a in accels}
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["workload", "accel", "microcalls", "est_cycles",
                     "est_seconds", "transpose_seconds", "total_seconds",
                     "bound", "avg_power_mw", "area_um2", "best"])
    for workload, report in results:
        for name, row in report.per_accel.items():
            a = specs[name]
            writer.writerow([
                workload, name, row["microcalls"], row["est_cycles"],
                f"{row['est_seconds']:.9g}", f"{row['transpose_seconds']:.9g}",
                f"{row['est_seconds'] + row['transpose_seconds']:.9g}",
                row["bound"], a.avg_power_mw, a.area_um2,
                "yes" if name == report.best else "",
            ])
    return buf.getvalue()


def format_sweep(results: list[tuple[str, CodesignReport]]) -> str:
    lines = []
    for workload, report in results:
        lines.append(f"workload {workload}: best {report.best}")
        for name, row in report.per_accel.items():
            total = row["est_seconds"] + row["transpose_seconds"]
            mark = "  <- best" if name == report.best else ""
            lines.append(
                f"  {name:>10}: {row['microcalls']} calls, {row['est_cycles']} cycles, "
                f"gemm {row['est_seconds'] * 1e6:.3f} us + transpose "
                f"{row['transpose_seconds'] * 1e6:.3f} us = {total * 1e6:.3f} us "
                f"[{row['bound']}-bound]{mark}")
    return "\n".join(lines)
