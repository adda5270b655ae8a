"""Loop-level lowering: transpose loop ordering, tiling, GEMM block
schedules, and cache-driven tile-size derivation.

A transpose walks the source tensor under a permutation. Each source dim
gets weight pos_in + pos_out (its position in the input layout plus its
position in the output layout); loops are ordered by ascending weight,
outermost first, so the dims that are innermost on either side stay
innermost and at least one side streams contiguously. Ties break by
ascending output position. The last two loops of that order are then
tiled so the strided side reuses cache lines across the tile.

GEMM follows the five-loop blocked structure nc -> kc -> mc -> nr -> mr
with B panels (kc x nc) packed at the kc level and A panels (mc x kc) at
the mc level. Tile sizes derive from cache capacities: each packed panel
is sized to occupy at most half its target cache level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import CacheTooSmall, ConfigError

DEFAULT_L1 = 32 * 1024
DEFAULT_L2 = 1024 * 1024
DEFAULT_L3 = 16 * 1024 * 1024
DEFAULT_TRANSPOSE_TILE = 32
_FLOAT_BYTES = 8


@dataclass(frozen=True)
class TilingConfig:
    mc: int
    nc: int
    kc: int
    mr: int = 4
    nr: int = 8
    cache_l1: int = 0
    cache_l2: int = 0
    cache_l3: int = 0
    transpose_tile: int = DEFAULT_TRANSPOSE_TILE

    def __post_init__(self) -> None:
        for name in ("mc", "nc", "kc", "mr", "nr", "transpose_tile"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.mc % self.mr != 0:
            raise ConfigError(f"mc={self.mc} is not a multiple of mr={self.mr}")
        if self.nc % self.nr != 0:
            raise ConfigError(f"nc={self.nc} is not a multiple of nr={self.nr}")


@dataclass(frozen=True)
class Loop:
    """One loop level. `tile` set means the loop steps by `tile` over
    `extent` (trip count ceil(extent / tile)); otherwise one step per
    iteration."""
    index: str
    extent: int
    tile: int | None = None

    @property
    def trip(self) -> int:
        if self.tile is None:
            return self.extent
        return (self.extent + self.tile - 1) // self.tile


@dataclass(frozen=True)
class TransposeBody:
    """Per-loop element strides (aligned with the enclosing nest's loop
    list) plus the scaling factor applied on copy."""
    src_strides: tuple[int, ...]
    dst_strides: tuple[int, ...]
    alpha: float = 1.0


@dataclass(frozen=True)
class GemmMicroBody:
    mr: int
    nr: int


@dataclass(frozen=True)
class LoopNest:
    loops: tuple[Loop, ...]
    body: TransposeBody | GemmMicroBody
    pack_at: dict[str, str] = field(default_factory=dict)
    parallel: str | None = None

    @property
    def trips(self) -> tuple[int, ...]:
        return tuple(loop.trip for loop in self.loops)


def row_major_strides(extents: tuple[int, ...] | list[int]) -> tuple[int, ...]:
    strides = [1] * len(extents)
    for d in range(len(extents) - 2, -1, -1):
        strides[d] = strides[d + 1] * extents[d + 1]
    return tuple(strides)


def transpose_loop_order(perm: tuple[int, ...], rank: int) -> tuple[int, ...]:
    """Loop order (source dims, outermost first) minimizing the weighted
    depth sum: weight(d) = pos_in(d) + pos_out(d), ascending, ties by
    ascending output position."""
    if rank != len(perm) or sorted(perm) != list(range(rank)):
        raise ConfigError(f"not a permutation of rank {rank}: {perm}")
    out_pos = [0] * rank
    for d, s in enumerate(perm):
        out_pos[s] = d
    return tuple(sorted(range(rank), key=lambda s: (s + out_pos[s], out_pos[s])))


def loop_order_cost(order: tuple[int, ...], perm: tuple[int, ...]) -> int:
    """Weighted depth sum of a candidate order: outer loops carry their
    weight once per remaining depth level."""
    rank = len(perm)
    out_pos = [0] * rank
    for d, s in enumerate(perm):
        out_pos[s] = d
    return sum((s + out_pos[s]) * (rank - 1 - pos) for pos, s in enumerate(order))


def make_transpose_nest(perm: tuple[int, ...], src_extents: tuple[int, ...],
                        alpha: float = 1.0,
                        names: tuple[str, ...] | None = None,
                        order: tuple[int, ...] | None = None) -> LoopNest:
    """Untiled transpose nest in the chosen loop order. `names` labels the
    source dims (defaults d0..dN); `order` overrides the computed order."""
    rank = len(src_extents)
    if order is None:
        order = transpose_loop_order(perm, rank)
    if names is None:
        names = tuple(f"d{s}" for s in range(rank))
    inv = [0] * rank
    for d, s in enumerate(perm):
        inv[s] = d
    dst_extents = tuple(src_extents[s] for s in perm)
    sstr = row_major_strides(src_extents)
    dstr = row_major_strides(dst_extents)
    loops = tuple(Loop(names[s], src_extents[s]) for s in order)
    body = TransposeBody(
        src_strides=tuple(sstr[s] for s in order),
        dst_strides=tuple(dstr[inv[s]] for s in order),
        alpha=alpha,
    )
    parallel = loops[0].index if loops else None
    return LoopNest(loops=loops, body=body, parallel=parallel)


def tile_transpose(nest: LoopNest, cfg: TilingConfig) -> LoopNest:
    """Tile the two innermost loops of a transpose nest by
    cfg.transpose_tile. A loop whose extent does not exceed the tile is
    left unsplit; with nothing to split the nest is returned unchanged."""
    if not isinstance(nest.body, TransposeBody):
        raise ConfigError("tile_transpose expects a transpose nest")
    tile = cfg.transpose_tile
    n = len(nest.loops)
    split = [i for i in range(max(0, n - 2), n) if nest.loops[i].extent > tile]
    if not split:
        return nest
    outer: list[Loop] = []
    inner: list[Loop] = []
    sstr: list[int] = []
    dstr: list[int] = []
    inner_sstr: list[int] = []
    inner_dstr: list[int] = []
    for i, loop in enumerate(nest.loops):
        s = nest.body.src_strides[i]
        d = nest.body.dst_strides[i]
        if i in split:
            outer.append(Loop(loop.index, loop.extent, tile))
            sstr.append(s * tile)
            dstr.append(d * tile)
            inner.append(Loop(f"{loop.index}.t", tile))
            inner_sstr.append(s)
            inner_dstr.append(d)
        else:
            outer.append(loop)
            sstr.append(s)
            dstr.append(d)
    body = TransposeBody(
        src_strides=tuple(sstr + inner_sstr),
        dst_strides=tuple(dstr + inner_dstr),
        alpha=nest.body.alpha,
    )
    loops = tuple(outer + inner)
    return LoopNest(loops=loops, body=body, parallel=loops[0].index)


def schedule_gemm(m: int, n: int, k: int, cfg: TilingConfig) -> LoopNest:
    """Five-loop blocked GEMM schedule with packing annotations."""
    for name, v in (("m", m), ("n", n), ("k", k)):
        if v < 1:
            raise ConfigError(f"{name} must be >= 1, got {v}")
    loops = (
        Loop("nc", n, cfg.nc),
        Loop("kc", k, cfg.kc),
        Loop("mc", m, cfg.mc),
        Loop("nr", min(cfg.nc, n), cfg.nr),
        Loop("mr", min(cfg.mc, m), cfg.mr),
    )
    pack_at = {
        "kc": f"B panel ({cfg.kc} x {cfg.nc})",
        "mc": f"A panel ({cfg.mc} x {cfg.kc})",
    }
    return LoopNest(loops=loops, body=GemmMicroBody(cfg.mr, cfg.nr),
                    pack_at=pack_at, parallel="mc")


def _largest_multiple(budget: int, unit: int, multiple_of: int) -> int:
    raw = budget // unit
    return (raw // multiple_of) * multiple_of


def derive_tiling(cache_l1: int = DEFAULT_L1, cache_l2: int = DEFAULT_L2,
                  cache_l3: int = DEFAULT_L3,
                  transpose_tile: int = DEFAULT_TRANSPOSE_TILE) -> TilingConfig:
    """Size packed panels to half of each cache level: a kc x nr B sliver
    in L1, an mc x kc A panel in L2, a kc x nc B panel in L3."""
    mr, nr = 4, 8
    kc = _largest_multiple(cache_l1 // 2, nr * _FLOAT_BYTES, 8)
    if kc < 1:
        raise CacheTooSmall("L1", cache_l1)
    mc = _largest_multiple(cache_l2 // 2, kc * _FLOAT_BYTES, mr)
    if mc < 1:
        raise CacheTooSmall("L2", cache_l2)
    nc = _largest_multiple(cache_l3 // 2, kc * _FLOAT_BYTES, nr)
    if nc < 1:
        raise CacheTooSmall("L3", cache_l3)
    return TilingConfig(mc=mc, nc=nc, kc=kc, mr=mr, nr=nr,
                        cache_l1=cache_l1, cache_l2=cache_l2,
                        cache_l3=cache_l3, transpose_tile=transpose_tile)


def default_tiling() -> TilingConfig:
    return derive_tiling()


_CONFIG_KEYS = {
    "mc": "mc", "nc": "nc", "kc": "kc", "mr": "mr", "nr": "nr",
    "l1": "cache_l1", "l2": "cache_l2", "l3": "cache_l3",
    "transpose_tile": "transpose_tile",
}


def parse_tile_settings(pairs: list[str], source: str) -> dict[str, int]:
    """Parse key=value tiling settings (config file lines or --tile
    arguments) into TilingConfig field values."""
    out: dict[str, int] = {}
    for raw in pairs:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip().lower()
        if key not in _CONFIG_KEYS:
            known = ", ".join(sorted(_CONFIG_KEYS))
            raise ConfigError(f"{source}: unknown tiling key {key!r} (known: {known})")
        try:
            out[_CONFIG_KEYS[key]] = int(val.strip())
        except ValueError:
            raise ConfigError(f"{source}: value for {key} must be an integer, got {val.strip()!r}") from None
    return out


def resolve_tiling(file_settings: dict[str, int] | None = None,
                   flag_settings: dict[str, int] | None = None) -> TilingConfig:
    """Combine explicit settings over derived defaults. Cache sizes feed
    the derivation; explicit block sizes override whatever was derived,
    with flags beating file values."""
    merged: dict[str, int] = {}
    for layer in (file_settings or {}, flag_settings or {}):
        merged.update(layer)
    base = derive_tiling(
        merged.get("cache_l1", DEFAULT_L1),
        merged.get("cache_l2", DEFAULT_L2),
        merged.get("cache_l3", DEFAULT_L3),
        merged.get("transpose_tile", DEFAULT_TRANSPOSE_TILE),
    )
    explicit = {k: v for k, v in merged.items() if k in ("mc", "nc", "kc", "mr", "nr")}
    if not explicit:
        return base
    return replace(base, **explicit)


def format_loop_nest(nest: LoopNest, title: str = "") -> str:
    lines: list[str] = []
    if title:
        lines.append(title)
    indent = "  "
    for depth, loop in enumerate(nest.loops):
        step = f" step={loop.tile}" if loop.tile is not None else ""
        par = "  # parallelizable" if loop.index == nest.parallel else ""
        lines.append(f"{indent * (depth + 1)}loop {loop.index} extent={loop.extent}{step} trip={loop.trip}{par}")
        if loop.index in nest.pack_at:
            lines.append(f"{indent * (depth + 2)}pack {nest.pack_at[loop.index]}")
    depth = len(nest.loops) + 1
    if isinstance(nest.body, TransposeBody):
        lines.append(f"{indent * depth}copy alpha={nest.body.alpha} "
                     f"src_strides={list(nest.body.src_strides)} "
                     f"dst_strides={list(nest.body.dst_strides)}")
    else:
        lines.append(f"{indent * depth}micro-kernel {nest.body.mr}x{nest.body.nr}")
    lines.append(f"{indent}trips: {list(nest.trips)}")
    return "\n".join(lines)


def coverage(nest: LoopNest) -> int:
    """Number of innermost-body element visits implied by the schedule."""
    total = 1
    for loop in nest.loops:
        total *= loop.trip
    if isinstance(nest.body, GemmMicroBody):
        total *= nest.body.mr * nest.body.nr
    return total


def gemm_schedule_points(m: int, n: int, k: int, cfg: TilingConfig) -> int:
    """Exact (i, j, p) coverage of the blocked schedule, fringe-aware."""
    total = 0
    for jc in range(0, n, cfg.nc):
        nc_eff = min(cfg.nc, n - jc)
        for pc in range(0, k, cfg.kc):
            kc_eff = min(cfg.kc, k - pc)
            for ic in range(0, m, cfg.mc):
                mc_eff = min(cfg.mc, m - ic)
                total += mc_eff * nc_eff * kc_eff
    return total


def microkernel_call_count(m: int, n: int, k: int, cfg: TilingConfig) -> int:
    calls = 0
    for jc in range(0, n, cfg.nc):
        nc_eff = min(cfg.nc, n - jc)
        for _pc in range(0, k, cfg.kc):
            for ic in range(0, m, cfg.mc):
                mc_eff = min(cfg.mc, m - ic)
                calls += math.ceil(nc_eff / cfg.nr) * math.ceil(mc_eff / cfg.mr)
    return calls
