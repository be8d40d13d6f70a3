"""Configuration search: enumerate orders, top-level tiles and parallelism,
fill in lower-level tiles with the corner-candidate ``allocate`` heuristic,
score everything, and pick per-layer winners and the uniform baseline."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Mapping, Sequence

import numpy as np

from .arch import ArchSpec, BankError, BufferLevel, bank_demand
from .cost import (CostReport, EnergyTable, MissingEntry, cycles, energy_breakdown,
                   level_banks, load_cycles)
from .netmodel import ConfigError, LayerShape, Network
from .schedule import (DATATYPES, DIMS, CapacityError, Config, LoopOrder, TileSpec,
                       TrafficCounts, check_capacity, element_bytes,
                       enumerate_loop_orders, local_fills, tile_bytes, traffic_unchecked,
                       validate_config)

OBJECTIVES = ("energy", "perf", "perf_per_watt")


class EmptySearchSpace(ValueError):
    pass


class AllocationError(ValueError):
    pass


# buffer shares (inputs, filters, psums) per level, top level first
TABLE_PARTITION = ((0.385, 0.215, 0.40), (0.40, 0.50, 0.10), (0.40, 0.50, 0.10))


def default_partitions() -> list[tuple]:
    """The fixed split above plus every eighths split, each applied to all levels."""
    parts = [TABLE_PARTITION]
    for a in range(1, 7):
        for b in range(1, 8 - a):
            share = (a / 8, b / 8, (8 - a - b) / 8)
            parts.append((share,) * 3)
    return parts


@dataclass(frozen=True)
class SearchOptions:
    outer_orders: tuple[LoopOrder, ...] | None = None     # None: all 120
    inner_orders: tuple[LoopOrder, ...] | None = None
    max_points: int = 8
    parallelism: tuple[tuple[int, int, int, int], ...] | None = None
    partitions: tuple = field(default_factory=lambda: tuple(default_partitions()))

    def outers(self) -> tuple[LoopOrder, ...]:
        return self.outer_orders or tuple(enumerate_loop_orders())

    def inners(self) -> tuple[LoopOrder, ...]:
        return self.inner_orders or tuple(enumerate_loop_orders())


# inner orders singled out in the motivation study
NAMED_INNER = tuple(LoopOrder.parse(s) for s in ("cfwhk", "kfwhc", "whkfc"))


def budget_options(max_points: int = 3, inner_orders=NAMED_INNER) -> SearchOptions:
    """Desk-sized search: every outer order, a few inner orders, coarse top tiles."""
    return SearchOptions(inner_orders=tuple(inner_orders) if inner_orders else None,
                         max_points=max_points)


def tile_points(extent: int, max_points: int = 8) -> list[int]:
    """Divisors of ``extent``, thinned evenly to at most ``max_points`` (1 and extent kept)."""
    divs = [d for d in range(1, extent + 1) if extent % d == 0]
    if len(divs) <= max_points:
        return divs
    if max_points == 1:
        return [extent]
    picks = {round(i * (len(divs) - 1) / (max_points - 1)) for i in range(max_points)}
    return [divs[i] for i in sorted(picks)]


def parallelism_options(layer: LayerShape, arch: ArchSpec,
                        opts: SearchOptions | None = None) -> list[tuple[int, int, int, int]]:
    """(Hp, Wp, Kp, 1) with Hp*Wp*Kp equal to the PE count and Kp within the lane count."""
    if opts is not None and opts.parallelism is not None:
        return list(opts.parallelism)
    total = arch.total_pes
    divs = [d for d in range(1, total + 1) if total % d == 0]
    lanes = -(-layer.K // arch.vector_width)
    out = []
    for hp in divs:
        for wp in divs:
            if total % (hp * wp):
                continue
            kp = total // (hp * wp)
            if kp <= lanes:
                out.append((hp, wp, kp, 1))
    if not out:
        out.append((1, 1, 1, 1))
    return out


# --- reuse score and allocation --------------------------------------------

@dataclass(frozen=True)
class Reuse:
    per_datatype: Mapping[str, float]
    served_bytes: int
    moved_bytes: int

    @property
    def ratio(self) -> float:
        return self.served_bytes / self.moved_bytes if self.moved_bytes else math.inf


def f_reuse(layer: LayerShape, parent: Mapping[str, int], tile: Mapping[str, int],
            inner_order: LoopOrder, vector_width: int = 8) -> Reuse:
    """Accesses served from a level per byte filled into (or written back from) it.

    One parent tile is treated as the whole workload and walked in
    ``inner_order``; the candidate is assumed to feed the ALUs directly.
    """
    eb = element_bytes(layer)
    spatial = parent["W"] * parent["H"] * parent["F"]
    rst = layer.R * layer.S * layer.T
    outputs = spatial * parent["K"]
    nK, rem = divmod(parent["K"], tile["K"])
    lanes = nK * -(-tile["K"] // vector_width) + (-(-rem // vector_width) if rem else 0)
    c_steps = -(-parent["C"] // tile["C"])
    served = {
        "inputs": spatial * parent["C"] * rst * lanes * eb["inputs"],
        "filters": spatial * parent["C"] * rst * parent["K"] * eb["filters"],
        "psums": (2 * c_steps - 1) * outputs * eb["psums"],
    }
    moved = {}
    for dt in ("inputs", "filters"):
        moved[dt] = local_fills(layer, parent, tile, inner_order, dt)[1]
    _, nbytes = local_fills(layer, parent, tile, inner_order, "psums")
    moved["psums"] = 2 * nbytes - outputs * eb["psums"]
    ratios = {dt: served[dt] / moved[dt] if moved[dt] else math.inf for dt in DATATYPES}
    return Reuse(ratios, sum(served.values()), sum(moved.values()))


def datatype_corners(parent: Mapping[str, int], dims: str, vector_width: int = 8) -> list[dict]:
    """The 2**len(dims) min/max corners of one datatype's tile."""
    lo = {"W": 1, "H": 1, "F": 1, "C": 1, "K": min(vector_width, parent["K"])}
    return [dict(zip(dims, pick)) for pick in itertools.product(*[(parent[d], lo[d]) for d in dims])]


def corner_candidates(parent: Mapping[str, int], vector_width: int = 8) -> list[dict]:
    """Joint min/max corners over W, H, C, K, F.

    Per datatype the corners range over its own dims (inputs WHCF, filters CK,
    psums WHKF).  Their cartesian product, kept only where the datatypes agree
    on shared dims, is exactly one candidate per min/max choice of each of
    the five dims, so it is built that way directly.
    """
    seen, out = set(), []
    for joint in datatype_corners(parent, "WHCKF", vector_width):
        key = tuple(joint[d] for d in DIMS)
        if key not in seen:
            seen.add(key)
            out.append({d: joint[d] for d in DIMS})
    return out


def fits(layer: LayerShape, tile: Mapping[str, int], buffer: BufferLevel) -> bool:
    sizes = tile_bytes(layer, tile)
    if sum(sizes.values()) > buffer.usable_bytes:
        return False
    return sum(bank_demand(buffer, sizes).values()) <= buffer.banks


def allocate(layer: LayerShape, parent: Mapping[str, int], inner_order: LoopOrder,
             buffer: BufferLevel, vector_width: int = 8) -> dict[str, int]:
    """Tile for the level below ``parent``: the feasible corner with the best reuse.

    Ties go to the larger input tile, then to the lexicographically larger tile.
    """
    key = (layer, tuple(parent[d] for d in DIMS), inner_order, buffer, vector_width)
    return dict(_allocate_cached(*key))


@lru_cache(maxsize=1 << 16)
def _allocate_cached(layer, parent_key, inner_order, buffer, vector_width):
    best, best_score = None, None
    for key, in_bytes in _feasible_corners(layer, parent_key, buffer, vector_width):
        cand = dict(zip(DIMS, key))
        order = "".join(d for d in inner_order if cand[d] < parent_key[DIMS.index(d)])
        score = (_reuse_ratio(layer, parent_key, key, order, vector_width), in_bytes, key)
        if best_score is None or score > best_score:
            best, best_score = key, score
    if best is None:
        raise AllocationError(f"{buffer.name}: no corner tile of {parent_key} fits "
                              f"{buffer.usable_bytes} B / {buffer.banks} banks")
    return tuple(zip(DIMS, best))


@lru_cache(maxsize=1 << 16)
def _feasible_corners(layer, parent_key, buffer, vector_width):
    parent = dict(zip(DIMS, parent_key))
    out = []
    for cand in corner_candidates(parent, vector_width):
        if fits(layer, cand, buffer):
            out.append((tuple(cand[d] for d in DIMS), tile_bytes(layer, cand)["inputs"]))
    return tuple(out)


@lru_cache(maxsize=1 << 18)
def _reuse_ratio(layer, parent_key, key, order, vector_width):
    # only the loops that iterate more than once matter, so ``order`` lists just those
    full = LoopOrder(tuple(order) + tuple(d for d in DIMS if d not in order))
    return f_reuse(layer, dict(zip(DIMS, parent_key)), dict(zip(DIMS, key)), full, vector_width).ratio


def allocate_levels(layer: LayerShape, top: Mapping[str, int], inner_order: LoopOrder,
                    arch: ArchSpec) -> TileSpec:
    levels = [dict(top)]
    for buf in arch.levels[1:]:
        levels.append(allocate(layer, levels[-1], inner_order, buf, arch.vector_width))
    return TileSpec.from_dicts(levels)


# --- configuration stream -----------------------------------------------------

def top_tiles(layer: LayerShape, arch: ArchSpec, opts: SearchOptions) -> list[dict]:
    """Discretized top-level tiles that fit the top buffer (capacity and banks)."""
    grids = [tile_points(layer.extent(d), opts.max_points) for d in DIMS]
    out = []
    for pick in itertools.product(*grids):
        tile = dict(zip(DIMS, pick))
        if fits(layer, tile, arch.levels[0]):
            out.append(tile)
    return out


def effective_order(order: LoopOrder, tiles: Mapping[str, int], parent: Mapping[str, int]) -> str:
    """Order with single-iteration loops removed; equal strings schedule identically."""
    return "".join(d for d in order if tiles[d] < parent[d])


def outer_classes(orders: Sequence[LoopOrder], top: Mapping[str, int],
                  extents: Mapping[str, int]) -> list[tuple[str, LoopOrder]]:
    """Group outer orders that schedule ``top`` identically.

    Each group is named by one member: single-iteration loops first (in
    letter order), then the active loops as they nest, when that order is in
    ``orders``; otherwise the smallest member.
    """
    groups: dict[str, list[LoopOrder]] = {}
    for o in orders:
        groups.setdefault(effective_order(o, top, extents), []).append(o)
    out = []
    for eff, members in groups.items():
        canon = LoopOrder(tuple(sorted(d for d in DIMS if d not in eff)) + tuple(eff))
        out.append((eff, canon if canon in members else min(members, key=str)))
    out.sort(key=lambda e: str(e[1]))
    return out


@dataclass
class SearchStats:
    evaluated: int = 0      # distinct schedules scored
    shared: int = 0         # schedules that reused an identical schedule's score
    discarded: int = 0      # (top tile, order) pairs failing allocation, capacity or banks


def _schedules(layer: LayerShape, arch: ArchSpec, opts: SearchOptions,
               stats: SearchStats | None = None) -> Iterator[tuple[LoopOrder, LoopOrder, TileSpec]]:
    stats = stats if stats is not None else SearchStats()
    for top in top_tiles(layer, arch, opts):
        for inner in opts.inners():
            try:
                tiles = allocate_levels(layer, top, inner, arch)
            except AllocationError:
                stats.discarded += len(opts.outers())
                continue
            for outer in opts.outers():
                yield outer, inner, tiles


def generate_configs(layer: LayerShape, arch: ArchSpec, opts: SearchOptions | None = None,
                     stats: SearchStats | None = None) -> Iterator[Config]:
    """Every feasible (outer, inner, top tile, parallelism) config, in a fixed order."""
    opts = opts or SearchOptions()
    pars = parallelism_options(layer, arch, opts)
    any_out = False
    for outer, inner, tiles in _schedules(layer, arch, opts, stats):
        for par in pars:
            cfg = Config(outer, inner, tiles, par, arch.vector_width)
            try:
                validate_config(layer, cfg, arch)
                check_capacity(layer, cfg, arch)
                level_banks(layer, cfg, arch)
            except (ValueError, BankError):
                if stats is not None:
                    stats.discarded += 1
                continue
            any_out = True
            yield cfg
    if not any_out:
        raise EmptySearchSpace(f"{layer.name}: no feasible configuration")


# --- scoring ----------------------------------------------------------------

@dataclass(frozen=True)
class Candidate:
    """A scored schedule; energy is recomputed per energy table, traffic is not."""

    config: Config
    counts: TrafficCounts
    cycles: int
    utilization: float
    bank_bytes: tuple[int, ...]
    tile_bytes: tuple[Mapping[str, int], ...]
    top_index: int = 0
    outer_class: str = ""

    def report(self, layer: LayerShape, arch: ArchSpec, table: EnergyTable) -> CostReport:
        parts = energy_breakdown(self.counts, layer.maccs, table, list(self.bank_bytes), arch,
                                 element_bytes(layer), self.cycles)
        return CostReport(parts, self.cycles, self.utilization, layer.maccs)


def _objective_key(objective: str, report: CostReport, config: Config):
    if objective == "energy":
        return (report.total_energy, config.sort_key())
    if objective == "perf":
        return (report.cycles, report.total_energy, config.sort_key())
    if objective == "perf_per_watt":
        return (-report.perf_per_watt, config.sort_key())
    raise ValueError(f"unknown objective {objective!r}; choose from {', '.join(OBJECTIVES)}")


@dataclass
class LayerSearch:
    layer: LayerShape
    arch: ArchSpec
    candidates: list[Candidate]
    stats: SearchStats
    tops: list[dict] = field(default_factory=list)
    opts: SearchOptions | None = None

    def reports(self, table: EnergyTable) -> list[CostReport | None]:
        out = []
        for c in self.candidates:
            try:
                out.append(c.report(self.layer, self.arch, table))
            except MissingEntry:
                out.append(None)
        return out

    def best(self, table: EnergyTable, objective: str = "energy") -> tuple[Config, CostReport]:
        if objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {objective!r}; choose from {', '.join(OBJECTIVES)}")
        winner = None
        for c, rep in zip(self.candidates, self.reports(table)):
            if rep is None:
                continue
            key = _objective_key(objective, rep, c.config)
            if winner is None or key < winner[0]:
                winner = (key, c.config, rep)
        if winner is None:
            raise EmptySearchSpace(f"{self.layer.name}: no configuration has energy data")
        return winner[1], winner[2]


class _Timing:
    """Per-tile-shape round profiles, so trying each parallelism is cheap."""

    def __init__(self, layer: LayerShape, arch: ArchSpec, pars):
        self.layer, self.arch, self.pars = layer, arch, pars
        self.cache: dict = {}

    def best(self, tiles: TileSpec, bus: float):
        key = (tiles.levels, math.ceil(bus))
        hit = self.cache.get(key)
        if hit is None:
            best = None
            for par in self.pars:
                cfg = Config(LoopOrder(DIMS), LoopOrder(DIMS), tiles, par, self.arch.vector_width)
                cyc, util = cycles(self.layer, cfg, self.arch, bus_cycles=bus)
                if best is None or (cyc, par) < (best[0], best[2]):
                    best = (cyc, util, par)
            self.cache[key] = hit = best
        return hit


def search_layer(layer: LayerShape, arch: ArchSpec, opts: SearchOptions | None = None) -> LayerSearch:
    """Score the search space once; energy tables are applied afterwards.

    Outer orders that differ only in single-iteration loops are scored once
    (see ``outer_classes``).  Parallelism only changes cycles (traffic is
    logical), and every objective is monotone in cycles at fixed traffic, so
    each schedule keeps only its fastest parallelism.
    """
    opts = opts or SearchOptions()
    stats = SearchStats()
    lanes = -(-layer.K // arch.vector_width)
    pars = [p for p in parallelism_options(layer, arch, opts)
            if math.prod(p) <= arch.total_pes and p[2] <= lanes]
    if not pars:
        raise EmptySearchSpace(f"{layer.name}: no parallelism choice fits {arch.total_pes} PEs")
    timing = _Timing(layer, arch, pars)
    extents = {d: layer.extent(d) for d in DIMS}
    tops = top_tiles(layer, arch, opts)
    scored: dict = {}
    out = []
    for ti, top in enumerate(tops):
        classes = outer_classes(opts.outers(), top, extents)
        for inner in opts.inners():
            try:
                tiles = allocate_levels(layer, top, inner, arch)
                probe = Config(classes[0][1], inner, tiles, (1, 1, 1, 1), arch.vector_width)
                check_capacity(layer, probe, arch)
                banks = level_banks(layer, probe, arch)
            except (AllocationError, CapacityError, BankError):
                stats.discarded += len(classes)
                continue
            lv = [tiles.at(i) for i in range(len(tiles))]
            inner_eff = tuple(effective_order(inner, lv[i], lv[i - 1]) for i in range(1, len(lv)))
            sizes = tuple(tile_bytes(layer, t) for t in lv)
            bank_sizes = tuple(b.bank_bytes for b in banks)
            for eff, outer in classes:
                key = (tiles.levels, eff, inner_eff)
                hit = scored.get(key)
                if hit is None:
                    counts = traffic_unchecked(layer, Config(outer, inner, tiles, (1, 1, 1, 1),
                                                             arch.vector_width))
                    scored[key] = hit = (counts, timing.best(tiles, load_cycles(counts, arch)))
                    stats.evaluated += 1
                else:
                    stats.shared += 1
                counts, (cyc, util, par) = hit
                cfg = Config(outer, inner, tiles, par, arch.vector_width)
                out.append(Candidate(cfg, counts, cyc, util, bank_sizes, sizes, ti, eff))
    if not out:
        raise EmptySearchSpace(f"{layer.name}: no feasible configuration")
    return LayerSearch(layer, arch, out, stats, tops, opts)


def optimize_layer(layer: LayerShape, arch: ArchSpec, table: EnergyTable,
                   objective: str = "energy", opts: SearchOptions | None = None
                   ) -> tuple[Config, CostReport]:
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}; choose from {', '.join(OBJECTIVES)}")
    return search_layer(layer, arch, opts).best(table, objective)


# --- network level ----------------------------------------------------------

def fits_partition(tile_sizes: Sequence[Mapping[str, int]], partition, arch: ArchSpec) -> bool:
    """Every datatype tile (both copies when double buffered) inside its fixed share."""
    for lvl, share, sizes in zip(arch.levels, partition, tile_sizes):
        copies = 2 if lvl.double_buffered else 1
        for dt, frac in zip(("inputs", "filters", "psums"), share):
            if copies * sizes[dt] > frac * lvl.size_bytes:
                return False
    return True


@dataclass
class UniformTable:
    """Network energy for every uniform (outer, inner, partition) choice."""

    outers: tuple[str, ...]
    inners: tuple[str, ...]
    partitions: tuple
    totals: np.ndarray                  # [outer, inner, partition]; inf where some layer has no fit
    picks: np.ndarray                   # [layer, outer, inner, partition] candidate index or -1


@dataclass
class NetworkResult:
    network: Network
    arch: ArchSpec
    searches: list[LayerSearch]
    opts: SearchOptions

    def per_layer(self, table: EnergyTable, objective: str = "energy"):
        return [s.best(table, objective) for s in self.searches]

    def total_energy(self, table: EnergyTable, objective: str = "energy") -> float:
        return math.fsum(rep.total_energy for _, rep in self.per_layer(table, objective))

    def uniform_table(self, table: EnergyTable) -> UniformTable:
        """Each layer keeps its own tile sizes, but all layers share the outer
        order, the inner order and a fixed per-datatype split of every buffer."""
        outers = tuple(sorted(str(o) for o in self.opts.outers()))
        inners = tuple(str(i) for i in self.opts.inners())
        parts = tuple(self.opts.partitions)
        shape = (len(outers), len(inners), len(parts))
        per_layer = []
        picks = []
        for s in self.searches:
            energies = np.array([r.total_energy if r is not None else np.inf
                                 for r in s.reports(table)] + [np.inf])
            index = {(c.top_index, str(c.config.inner), c.outer_class): k
                     for k, c in enumerate(s.candidates)}
            fit = {}
            for c in s.candidates:
                fk = (c.top_index, str(c.config.inner))
                if fk not in fit:
                    fit[fk] = [fits_partition(c.tile_bytes, p, self.arch) for p in parts]
            extents = {d: s.layer.extent(d) for d in DIMS}
            layer_pick = np.full(shape, -1, dtype=np.int64)
            layer_best = np.full(shape, np.inf)
            for ii, inner in enumerate(inners):
                tops = [ti for ti in range(len(s.tops)) if (ti, inner) in fit]
                if not tops:
                    continue
                idx = np.full((len(outers), len(tops)), len(s.candidates), dtype=np.int64)
                for oi, outer in enumerate(outers):
                    order = LoopOrder.parse(outer)
                    for j, ti in enumerate(tops):
                        k = index.get((ti, inner, effective_order(order, s.tops[ti], extents)))
                        if k is not None:
                            idx[oi, j] = k
                e = energies[idx]
                mask = np.array([fit[(ti, inner)] for ti in tops])       # [top, partition]
                for pi in range(len(parts)):
                    masked = np.where(mask[:, pi][None, :], e, np.inf)
                    j = np.argmin(masked, axis=1)
                    best = masked[np.arange(len(outers)), j]
                    ok = np.isfinite(best)
                    layer_pick[ok, ii, pi] = idx[ok, j[ok]]
                    layer_best[:, ii, pi] = best
            per_layer.append(layer_best)
            picks.append(layer_pick)
        # correctly rounded sums, like total_energy, so comparisons between them are exact
        stacked = np.stack(per_layer).reshape(len(per_layer), -1)
        totals = np.array([math.fsum(col) if np.isfinite(col).all() else np.inf
                           for col in stacked.T]).reshape(shape)
        return UniformTable(outers, inners, parts, totals, np.array(picks))

    def baseline(self, table: EnergyTable):
        """Best uniform choice by total network energy.

        Returns ((outer, inner, partition index), [(config, report) per layer]).
        """
        u = self.uniform_table(table)
        if not np.isfinite(u.totals).any():
            raise EmptySearchSpace("no uniform (outer, inner, partition) fits every layer")
        flat = int(np.argmin(u.totals))          # first minimum: smallest outer, then inner, then split
        oi, ii, pi = np.unravel_index(flat, u.totals.shape)
        rows = []
        for s, pick in zip(self.searches, u.picks):
            c = s.candidates[int(pick[oi, ii, pi])]
            outer = LoopOrder.parse(u.outers[oi])
            cfg = Config(outer, c.config.inner, c.config.tiles, c.config.parallelism,
                         c.config.vector_width)
            rows.append((cfg, c.report(s.layer, self.arch, table)))
        return (u.outers[oi], u.inners[ii], int(pi)), rows

    def baseline_energy(self, table: EnergyTable) -> float:
        _, rows = self.baseline(table)
        return math.fsum(rep.total_energy for _, rep in rows)


def search_network(network: Network, arch: ArchSpec, opts: SearchOptions | None = None,
                   threads: int = 1) -> NetworkResult:
    """Search every layer; with ``threads`` > 1 layers run in worker processes.

    Results are gathered in layer order, so the outcome does not depend on
    which worker finishes first.
    """
    opts = opts or SearchOptions()
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(threads) as pool:
            searches = list(pool.map(search_layer, network.layers,
                                     [arch] * len(network), [opts] * len(network)))
    else:
        searches = [search_layer(layer, arch, opts) for layer in network.layers]
    return NetworkResult(network, arch, searches, opts)


def optimize_network(network: Network, arch: ArchSpec, table: EnergyTable,
                     objective: str = "energy", opts: SearchOptions | None = None,
                     threads: int = 1):
    """Per-layer winners plus the network result they came from."""
    result = search_network(network, arch, opts, threads)
    return result.per_layer(table, objective), result


def baseline_fixed(network: Network, arch: ArchSpec, table: EnergyTable,
                   opts: SearchOptions | None = None):
    return search_network(network, arch, opts).baseline(table)


# --- saved configurations ---------------------------------------------------

def config_to_dict(config: Config) -> dict:
    return {
        "outer": str(config.outer),
        "inner": str(config.inner).lower(),
        "tiles": [dict(zip(DIMS, lvl)) for lvl in config.tiles.levels],
        "parallelism": dict(zip(("Hp", "Wp", "Kp", "Fp"), config.parallelism)),
        "vector_width": config.vector_width,
    }


def config_from_dict(doc: Mapping) -> Config:
    try:
        par = doc["parallelism"]
        return Config(
            LoopOrder.parse(doc["outer"]),
            LoopOrder.parse(doc["inner"]),
            TileSpec.from_dicts(doc["tiles"]),
            (par["Hp"], par["Wp"], par["Kp"], par.get("Fp", 1)),
            int(doc.get("vector_width", 8)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad saved config: {exc}") from exc


def save_configs(path, configs: Mapping[str, Config]):
    """Write layer -> config as JSON so a search need not be re-run."""
    doc = {"version": 1, "layers": {name: config_to_dict(c) for name, c in configs.items()}}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_configs(path) -> dict[str, Config]:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return {name: config_from_dict(d) for name, d in doc.get("layers", {}).items()}
