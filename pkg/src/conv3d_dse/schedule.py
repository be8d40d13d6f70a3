"""Loop orders, multi-level tiles, halo math and the analytical traffic model.

Tiles for W, H and F are expressed in output-coverage units (how many output
positions a tile produces); the input extent a tile needs follows from
``input_tile_extent``.  C and K tiles are plain element counts.

Traffic is counted per boundary of the buffer hierarchy.  A datatype's tile at
a level is refetched exactly when the tile the schedule needs differs from the
one resident, which makes single-iteration loops free and gives the
"fits entirely, fetched once" behaviour without a special case.  Inputs that
advance by one tile along a single sliding dimension keep the overlapping
halo (slide reuse); a wrap in any other dimension refetches the halo.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, NamedTuple, Sequence

from .netmodel import LayerShape

DIMS = ("W", "H", "C", "K", "F")
SLIDING = ("W", "H", "F")
DATATYPES = ("inputs", "filters", "psums")
DEPENDS = {
    "inputs": frozenset("WHCF"),
    "filters": frozenset("CK"),
    "psums": frozenset("WHKF"),
}
_DIM_INDEX = {d: i for i, d in enumerate(DIMS)}


class CapacityError(ValueError):
    pass


# --- loop orders ------------------------------------------------------------

@dataclass(frozen=True, order=True)
class LoopOrder:
    """Permutation of the tiled dims, outermost first."""

    dims: tuple[str, ...]

    def __post_init__(self):
        dims = tuple(d.upper() for d in self.dims)
        if sorted(dims) != sorted(DIMS):
            raise ValueError(f"loop order must permute {''.join(DIMS)}, got {''.join(dims)}")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def parse(cls, text: str) -> "LoopOrder":
        return cls(tuple(text.strip().strip("[]")))

    def __str__(self):
        return "".join(self.dims)

    def __iter__(self):
        return iter(self.dims)

    def index(self, dim: str) -> int:
        return self.dims.index(dim)


def enumerate_loop_orders() -> list[LoopOrder]:
    """All 120 orders in lexicographic order of their letter strings."""
    return [LoopOrder(p) for p in sorted(itertools.permutations(DIMS))]


def reload_position(order: LoopOrder, datatype: str) -> int:
    """Index (outermost = 0) of the loop at which a new tile of ``datatype`` is loaded."""
    deps = DEPENDS[datatype]
    return max(i for i, d in enumerate(order.dims) if d in deps)


# --- tile geometry ----------------------------------------------------------

def input_tile_extent(output_span: int, filter_extent: int, stride: int) -> int:
    return (output_span - 1) * stride + filter_extent


def halo_overlap(filter_extent: int, stride: int) -> int:
    return max(0, filter_extent - stride)


def iteration_counts(layer: LayerShape, tiles: Mapping[str, int],
                     parent: Mapping[str, int] | None = None) -> dict[str, int]:
    """Number of tile iterations per dim; the last one may be clipped."""
    out = {}
    for d in DIMS:
        total = parent[d] if parent is not None else layer.extent(d)
        out[d] = -(-total // tiles[d])
    return out


def split_extent(total: int, tile: int) -> list[int]:
    """Clipped tile sizes covering ``total``."""
    n = -(-total // tile)
    return [tile] * (n - 1) + [total - (n - 1) * tile]


def tile_sizes_along(total: int, tiles: Sequence[int]) -> Counter:
    """Multiset of bottom-level tile sizes along one dim after nested splitting."""
    sizes = Counter({total: 1})
    for t in tiles:
        nxt = Counter()
        for size, count in sizes.items():
            for piece in split_extent(size, t):
                nxt[piece] += count
        sizes = nxt
    return sizes


@dataclass(frozen=True)
class TileSpec:
    """Tile extents per buffer level, outermost level first.

    Each level is a tuple in ``DIMS`` order (W, H, C, K, F).
    """

    levels: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        levels = tuple(tuple(int(x) for x in lvl) for lvl in self.levels)
        if not levels:
            raise ValueError("tile spec needs at least one level")
        for lvl in levels:
            if len(lvl) != len(DIMS) or min(lvl) < 1:
                raise ValueError(f"bad tile level {lvl}")
        for upper, lower in zip(levels, levels[1:]):
            for d, a, b in zip(DIMS, upper, lower):
                if b > a:
                    raise ValueError(f"sub-tile {d}={b} larger than enclosing tile {a}")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def from_dicts(cls, levels: Iterable[Mapping[str, int]]) -> "TileSpec":
        return cls(tuple(tuple(lvl[d] for d in DIMS) for lvl in levels))

    def at(self, level: int) -> dict[str, int]:
        return dict(zip(DIMS, self.levels[level]))

    def __len__(self):
        return len(self.levels)

    def check_layer(self, layer: LayerShape):
        for d, t in zip(DIMS, self.levels[0]):
            if t > layer.extent(d):
                raise ValueError(f"top-level tile {d}={t} exceeds extent {layer.extent(d)}")


@dataclass(frozen=True, order=True)
class Config:
    """A complete schedule for one layer."""

    outer: LoopOrder
    inner: LoopOrder
    tiles: TileSpec = field(compare=False)
    parallelism: tuple[int, int, int, int] = (1, 1, 1, 1)   # Hp, Wp, Kp, Fp
    vector_width: int = 8

    def __post_init__(self):
        if len(self.parallelism) != 4 or min(self.parallelism) < 1:
            raise ValueError(f"parallelism must be four positive ints, got {self.parallelism}")
        if self.vector_width < 1:
            raise ValueError("vector_width must be >= 1")

    @property
    def n_levels(self) -> int:
        return len(self.tiles)

    def order_at(self, level: int) -> LoopOrder:
        return self.outer if level == 0 else self.inner

    def sort_key(self):
        return (str(self.outer), str(self.inner), self.tiles.levels, self.parallelism)

    def describe(self) -> str:
        tiles = " | ".join(",".join(f"{d}{t}" for d, t in zip(DIMS, lvl))
                           for lvl in self.tiles.levels)
        hp, wp, kp, fp = self.parallelism
        return (f"[{self.outer}] [{str(self.inner).lower()}] {tiles} "
                f"Hp{hp} Wp{wp} Kp{kp} Fp{fp}")


def validate_config(layer: LayerShape, config: Config, arch=None):
    config.tiles.check_layer(layer)
    if arch is not None:
        if config.n_levels != len(arch.levels):
            raise ValueError(f"config has {config.n_levels} tile levels, arch has {len(arch.levels)}")
        hp, wp, kp, fp = config.parallelism
        if hp * wp * kp * fp > arch.total_pes:
            raise ValueError(f"parallelism {config.parallelism} over-subscribes {arch.total_pes} PEs")
    kp = config.parallelism[2]
    if kp > -(-layer.K // config.vector_width):
        raise ValueError(f"Kp*Vw={kp * config.vector_width} exceeds K={layer.K} at lane granularity")


# --- sizes ------------------------------------------------------------------

def element_bytes(layer: LayerShape) -> dict[str, int]:
    return dict(_element_bytes(layer))


@lru_cache(maxsize=4096)
def _element_bytes(layer: LayerShape) -> tuple:
    from .arch import psum_width_bits

    word = -(-layer.precision_bits // 8)
    psum = -(-psum_width_bits(layer.precision_bits, layer.R, layer.S, layer.T, layer.C) // 8)
    return (("inputs", word), ("filters", word), ("psums", psum))


def tile_bytes(layer: LayerShape, tile: Mapping[str, int]) -> dict[str, int]:
    eb = element_bytes(layer)
    spatial = 1
    for d in SLIDING:
        filt, stride = layer.window(d)
        spatial *= input_tile_extent(tile[d], filt, stride)
    return {
        "inputs": spatial * tile["C"] * eb["inputs"],
        "filters": tile["K"] * tile["C"] * layer.R * layer.S * layer.T * eb["filters"],
        "psums": tile["K"] * tile["W"] * tile["H"] * tile["F"] * eb["psums"],
    }


def level_names(n_levels: int) -> list[str]:
    return [f"L{n_levels - 1 - i}" for i in range(n_levels)]


def boundary_names(n_levels: int) -> list[str]:
    names = ["DRAM"] + level_names(n_levels) + ["PE"]
    return [f"{a}->{b}" for a, b in zip(names, names[1:])]


@dataclass(frozen=True)
class Metadata:
    iterations: tuple[dict[str, int], ...]      # per level, full-parent counts
    tile_bytes: tuple[dict[str, int], ...]      # per level, per datatype
    halo_bytes: dict[str, int]                  # top-level halo re-fetch size per sliding dim
    output_elements: int


def metadata(layer: LayerShape, config: Config) -> Metadata:
    iters, sizes = [], []
    parent = None
    for lvl in range(config.n_levels):
        tile = config.tiles.at(lvl)
        iters.append(iteration_counts(layer, tile, parent))
        sizes.append(tile_bytes(layer, tile))
        parent = tile
    top = config.tiles.at(0)
    eb = element_bytes(layer)["inputs"]
    halo = {}
    for d in SLIDING:
        face = top["C"] * eb
        for other in SLIDING:
            if other != d:
                filt, stride = layer.window(other)
                face *= input_tile_extent(top[other], filt, stride)
        halo[d] = face * halo_overlap(*layer.window(d))
    F_out, K, W_out, H_out = layer.F_out, layer.K, layer.W_out, layer.H_out
    return Metadata(tuple(iters), tuple(sizes), halo, F_out * K * W_out * H_out)


# --- traffic counts ---------------------------------------------------------

@dataclass(frozen=True)
class Traffic:
    loads: int = 0
    load_bytes: int = 0
    writebacks: int = 0
    writeback_bytes: int = 0

    def __add__(self, other: "Traffic") -> "Traffic":
        return Traffic(self.loads + other.loads, self.load_bytes + other.load_bytes,
                       self.writebacks + other.writebacks,
                       self.writeback_bytes + other.writeback_bytes)

    def scaled(self, k: int) -> "Traffic":
        return Traffic(self.loads * k, self.load_bytes * k,
                       self.writebacks * k, self.writeback_bytes * k)

    @property
    def total_bytes(self) -> int:
        return self.load_bytes + self.writeback_bytes


@dataclass(frozen=True)
class TrafficCounts:
    """Per (boundary, datatype) transfer counts; boundaries are listed top-down."""

    boundaries: tuple[str, ...]
    entries: Mapping[tuple[str, str], Traffic]

    def __getitem__(self, key: tuple[str, str]) -> Traffic:
        return self.entries.get(key, Traffic())

    def boundary_bytes(self, boundary: str) -> int:
        return sum(self[(boundary, dt)].total_bytes for dt in DATATYPES)

    def scaled(self, k: int) -> "TrafficCounts":
        return TrafficCounts(self.boundaries, {key: t.scaled(k) for key, t in self.entries.items()})

    def rows(self):
        for b in self.boundaries:
            for dt in DATATYPES:
                t = self[(b, dt)]
                yield b, dt, t.loads, t.load_bytes, t.writebacks, t.writeback_bytes

    def __eq__(self, other):
        if not isinstance(other, TrafficCounts):
            return NotImplemented
        return list(self.rows()) == list(other.rows())


class _Kind(NamedTuple):
    deps: tuple[bool, ...]                     # per dim in DIMS order
    windows: tuple[tuple[int, int], ...]       # (filter, stride) per dim; (1, 1) for C/K
    elem_bytes: int
    filter_volume: int                         # R*S*T for filters, else 1
    datatype: str


class _Block(NamedTuple):
    runs: int
    nbytes: int
    first: tuple[tuple[int, int], ...]         # (offset, extent) per dim
    last: tuple[tuple[int, int], ...]


def _kind_bytes(kind: _Kind, ext: Sequence[int]) -> int:
    n = kind.elem_bytes * kind.filter_volume
    for i, e in enumerate(ext):
        if not kind.deps[i]:
            continue
        if kind.datatype == "inputs" and DIMS[i] in SLIDING:
            filt, stride = kind.windows[i]
            n *= input_tile_extent(e, filt, stride)
        else:
            n *= e
    return n


def _transition(kind: _Kind, a: _Block, b: _Block, dim: int, step: int) -> tuple[bool, int]:
    """Going from the last tile of ``a`` to the first tile of ``b``, where ``b``
    starts ``step`` further along ``dim``.  Returns (same tile, bytes saved by slide)."""
    differing = []
    for i in range(len(DIMS)):
        if not kind.deps[i]:
            continue
        (ao, ae), (bo, be) = a.last[i], b.first[i]
        if i == dim:
            bo += step
        if ao != bo or ae != be:
            differing.append((i, ao, ae, bo))
    if not differing:
        return True, 0
    if kind.datatype != "inputs" or len(differing) != 1:
        return False, 0
    i, ao, ae, bo = differing[0]
    filt, stride = kind.windows[i]
    overlap = halo_overlap(filt, stride)
    if DIMS[i] not in SLIDING or overlap == 0 or ao + ae != bo:
        return False, 0
    face = list(e for _, e in b.first)
    face_bytes = _kind_bytes(kind, face) // input_tile_extent(face[i], filt, stride)
    return False, face_bytes * overlap


@lru_cache(maxsize=1 << 20)
def _block(loops: tuple[tuple[int, int], ...], ext: tuple[int, ...], kind: _Kind) -> _Block:
    """Fill count and bytes for the iteration space of ``loops`` below a context
    whose current per-dim extents are ``ext``."""
    if not loops:
        tile = tuple((0, e) for e in ext)
        return _Block(1, _kind_bytes(kind, ext), tile, tile)
    dim, tile = loops[0]
    rest = loops[1:]
    parent = ext[dim]
    n = -(-parent // tile)
    last_ext = parent - (n - 1) * tile
    last = _block(rest, ext[:dim] + (last_ext,) + ext[dim + 1:], kind)
    if n == 1:
        return last
    full = _block(rest, ext[:dim] + (tile,) + ext[dim + 1:], kind)
    runs = (n - 1) * full.runs + last.runs
    nbytes = (n - 1) * full.nbytes + last.nbytes
    for a, b, times in ((full, full, n - 2), (full, last, 1)):
        if times == 0:
            continue
        same, saved = _transition(kind, a, b, dim, tile)
        if same:
            runs -= times
            nbytes -= times * _kind_bytes(kind, [e for _, e in b.first])
        nbytes -= times * saved
    off, e = last.last[dim]
    shifted = last.last[:dim] + ((off + (n - 1) * tile, e),) + last.last[dim + 1:]
    return _Block(runs, nbytes, full.first, shifted)


@lru_cache(maxsize=4096)
def _kind(layer: LayerShape, datatype: str) -> _Kind:
    eb = element_bytes(layer)[datatype]
    windows = tuple(layer.window(d) if d in SLIDING else (1, 1) for d in DIMS)
    deps = tuple(d in DEPENDS[datatype] for d in DIMS)
    vol = layer.R * layer.S * layer.T if datatype == "filters" else 1
    return _Kind(deps, windows, eb, vol, datatype)


def _nest(config: Config, boundary: int) -> tuple[tuple[int, int], ...]:
    loops = []
    for lvl in range(boundary + 1):
        tile = config.tiles.at(lvl)
        for d in config.order_at(lvl):
            loops.append((_DIM_INDEX[d], tile[d]))
    return tuple(loops)


def _prune(loops, extents: Sequence[int]):
    """Drop loops that iterate once in every context; they cannot change any tile."""
    cur = list(extents)
    kept = []
    for dim, tile in loops:
        if tile < cur[dim]:
            kept.append((dim, tile))
        cur[dim] = min(cur[dim], tile)
    return tuple(kept)


@lru_cache(maxsize=4096)
def layer_extents(layer: LayerShape) -> tuple[int, ...]:
    return tuple(layer.extent(d) for d in DIMS)


def fill_runs(layer: LayerShape, config: Config, boundary: int, datatype: str) -> tuple[int, int]:
    """(number of tile fills, bytes filled) of ``datatype`` into level ``boundary``."""
    extents = layer_extents(layer)
    loops = _prune(_nest(config, boundary), extents)
    blk = _block(loops, extents, _kind(layer, datatype))
    return blk.runs, blk.nbytes


def local_fills(layer: LayerShape, parent: Mapping[str, int], tile: Mapping[str, int],
                order: LoopOrder, datatype: str) -> tuple[int, int]:
    """(fills, bytes) of ``datatype`` tiles when one ``parent`` tile is walked in ``order``."""
    ext = tuple(parent[d] for d in DIMS)
    loops = _prune(tuple((_DIM_INDEX[d], tile[d]) for d in order), ext)
    blk = _block(loops, ext, _kind(layer, datatype))
    return blk.runs, blk.nbytes


def distinct_tiles(layer: LayerShape, config: Config, level: int, dims: Iterable[str]) -> int:
    return _distinct(layer, config.tiles.levels[:level + 1], "".join(dims))


@lru_cache(maxsize=1 << 16)
def _distinct(layer: LayerShape, levels: tuple, dims: str) -> int:
    count = 1
    for d in dims:
        i = _DIM_INDEX[d]
        count *= sum(tile_sizes_along(layer.extent(d), [lvl[i] for lvl in levels]).values())
    return count


def check_capacity(layer: LayerShape, config: Config, arch):
    names = level_names(config.n_levels)
    for lvl, buf in enumerate(arch.levels):
        sizes = tile_bytes(layer, config.tiles.at(lvl))
        cap = buf.usable_bytes
        used = 0
        for dt in DATATYPES:
            used += sizes[dt]
            if used > cap:
                raise CapacityError(
                    f"{names[lvl]}: {dt} tile ({sizes[dt]} B) overflows capacity "
                    f"({used} B needed, {cap} B usable)")


def compute_traffic(layer: LayerShape, config: Config) -> dict[str, Traffic]:
    """Operand and accumulator traffic between the bottom buffer and the ALUs."""
    return dict(_compute_traffic(layer, config.tiles.levels, config.vector_width))


@lru_cache(maxsize=1 << 16)
def _compute_traffic(layer: LayerShape, levels: tuple, vw: int) -> tuple:
    eb = element_bytes(layer)
    tiles = lambda d: [lvl[_DIM_INDEX[d]] for lvl in levels]
    outputs = layer.F_out * layer.W_out * layer.H_out * layer.K
    spatial = layer.F_out * layer.W_out * layer.H_out
    rst = layer.R * layer.S * layer.T
    k_groups = sum(-(-size // vw) * n for size, n in tile_sizes_along(layer.K, tiles("K")).items())
    vops = spatial * layer.C * rst * k_groups
    c_steps = sum(tile_sizes_along(layer.C, tiles("C")).values())
    writes = outputs * c_steps
    return (
        ("inputs", Traffic(vops, vops * eb["inputs"])),
        ("filters", Traffic(layer.maccs, layer.maccs * eb["filters"])),
        ("psums", Traffic(writes - outputs, (writes - outputs) * eb["psums"],
                          writes, writes * eb["psums"])),
    )


def traffic_model(layer: LayerShape, config: Config, level: int | str | None = None,
                  arch=None) -> TrafficCounts:
    """Analytical transfer counts at every boundary (or just ``level``).

    ``level`` selects one boundary, either by index (0 = DRAM into the top
    buffer, ``n_levels`` = bottom buffer to the ALUs) or by name.
    """
    validate_config(layer, config, arch)
    if arch is not None:
        check_capacity(layer, config, arch)
    return traffic_unchecked(layer, config, level)


def traffic_unchecked(layer: LayerShape, config: Config, level: int | str | None = None) -> TrafficCounts:
    """``traffic_model`` without validation, for callers that already checked."""
    names = boundary_names(config.n_levels)
    if level is None:
        wanted = range(len(names))
    elif isinstance(level, str):
        wanted = [names.index(level)]
    else:
        wanted = [level]
    entries = {}
    psum_bytes = _element_bytes(layer)[2][1]
    outputs = layer.F_out * layer.W_out * layer.H_out * layer.K
    for b in wanted:
        if b == config.n_levels:
            for dt, t in compute_traffic(layer, config).items():
                entries[(names[b], dt)] = t
            continue
        for dt in ("inputs", "filters"):
            runs, nbytes = fill_runs(layer, config, b, dt)
            entries[(names[b], dt)] = Traffic(runs, nbytes)
        runs, nbytes = fill_runs(layer, config, b, "psums")
        first = distinct_tiles(layer, config, b, "WHKF")
        entries[(names[b], "psums")] = Traffic(
            runs - first, nbytes - outputs * psum_bytes, runs, nbytes)
    return TrafficCounts(tuple(names[b] for b in wanted), entries)
