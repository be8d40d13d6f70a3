"""Motivation-style sweeps built on top of the optimizer's search results."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .arch import ArchSpec, BufferLevel
from .cost import EnergyTable, MissingEntry, energy_breakdown, load_cycles
from .netmodel import LayerShape
from .optimizer import (LayerSearch, _Timing, corner_candidates, effective_order,
                        parallelism_options, tile_points)
from .schedule import (DIMS, Config, LoopOrder, TileSpec, element_bytes, tile_bytes,
                       traffic_unchecked)

NAMED_OUTER = tuple(LoopOrder.parse(s) for s in ("WHCKF", "KWHCF", "WFHCK"))
NAMED_INNER_SWEEP = tuple(LoopOrder.parse(s) for s in ("cfwhk", "kfwhc", "whkfc"))


def best_per_outer(search: LayerSearch, table: EnergyTable, outers) -> dict[str, float]:
    """Lowest energy reachable with each fixed outer order (any tiles, inner order)."""
    reports = search.reports(table)
    extents = {d: search.layer.extent(d) for d in DIMS}
    by_class: dict = {}
    for c, rep in zip(search.candidates, reports):
        if rep is None:
            continue
        k = (c.top_index, c.outer_class)
        by_class[k] = min(by_class.get(k, math.inf), rep.total_energy)
    out = {}
    for o in outers:
        best = math.inf
        for ti, top in enumerate(search.tops):
            best = min(best, by_class.get((ti, effective_order(o, top, extents)), math.inf))
        out[str(o)] = best
    return out


def best_per_inner(search: LayerSearch, table: EnergyTable) -> dict[str, float]:
    out: dict[str, float] = {}
    for c, rep in zip(search.candidates, search.reports(table)):
        if rep is not None:
            key = str(c.config.inner).lower()
            out[key] = min(out.get(key, math.inf), rep.total_energy)
    return out


def best_per_input_share(search: LayerSearch, table: EnergyTable, buckets: int = 10) -> dict[int, float]:
    """Lowest energy for each share of the top buffer given to inputs (percent, floored)."""
    top = search.arch.levels[0]
    copies = 2 if top.double_buffered else 1
    out: dict[int, float] = {}
    for c, rep in zip(search.candidates, search.reports(table)):
        if rep is None:
            continue
        share = copies * c.tile_bytes[0]["inputs"] / top.size_bytes
        pct = min(100, int(share * buckets) * (100 // buckets))
        out[pct] = min(out.get(pct, math.inf), rep.total_energy)
    return dict(sorted(out.items()))


# --- hierarchy depth ----------------------------------------------------------

@dataclass(frozen=True)
class DepthResult:
    depth: int
    energy: float
    config: Config
    breakdown: dict
    level_bytes: tuple[int, ...]


def _footprint_arch(layer: LayerShape, tiles: TileSpec, base: ArchSpec) -> ArchSpec:
    """One single-bank buffer per level, each exactly as large as its tiles."""
    levels = []
    n = len(tiles)
    for i in range(n):
        size = sum(tile_bytes(layer, tiles.at(i)).values())
        levels.append(BufferLevel(f"D{i}", size, banks=1, word_bits=64, double_buffered=False,
                                  instances=1, bus_bits=64 if i < n - 1 else 0))
    return ArchSpec(base.clusters, base.pes_per_cluster, base.vector_width, tuple(levels),
                    base.clock_hz, f"depth{n}")


def _score(layer, outer, inner, tiles, base, table, pars):
    arch = _footprint_arch(layer, tiles, base)
    probe = Config(outer, inner, tiles, (1, 1, 1, 1), base.vector_width)
    counts = traffic_unchecked(layer, probe)
    cyc, _, par = _Timing(layer, arch, pars).best(tiles, load_cycles(counts, arch))
    try:
        parts = energy_breakdown(counts, layer.maccs, table, None, arch, element_bytes(layer), cyc)
    except MissingEntry:
        return None
    cfg = Config(outer, inner, tiles, par, base.vector_width)
    return math.fsum(parts.values()), cfg, parts, tuple(l.size_bytes for l in arch.levels)


def hierarchy_sweep(layer: LayerShape, base: ArchSpec, table: EnergyTable,
                    depths=(1, 2, 3, 4), max_points: int = 3, beam: int = 8,
                    outers=NAMED_OUTER, inners=NAMED_INNER_SWEEP) -> list[DepthResult]:
    """Best energy for 1..N level hierarchies whose buffers are sized to their tiles.

    Top tiles come from the coarse divisor grid; each deeper level picks
    among the min/max corners of its parent, keeping the ``beam`` best
    partial hierarchies per order pair (scored as if the newest level fed the
    ALUs).  Access energy for every level uses the unnamed ("default") table.
    """
    pars = parallelism_options(layer, base)
    grids = [tile_points(layer.extent(d), max_points) for d in DIMS]
    tops = [TileSpec((pick,)) for pick in itertools.product(*grids)]
    results = []
    frontier = {}
    deepest = max(depths)
    for depth in range(1, deepest + 1):
        best = None
        for outer, inner in itertools.product(outers, inners):
            if depth == 1:
                pool = tops
            else:
                pool = []
                for tiles in frontier.get((outer, inner), []):
                    parent = tiles.at(len(tiles) - 1)
                    for cand in corner_candidates(parent, base.vector_width):
                        pool.append(TileSpec(tiles.levels + (tuple(cand[d] for d in DIMS),)))
            scored = []
            for tiles in pool:
                s = _score(layer, outer, inner, tiles, base, table, pars)
                if s is not None:
                    scored.append((s[0], s[1].sort_key(), tiles, s))
            scored.sort(key=lambda x: (x[0], x[1]))
            frontier[(outer, inner)] = [t for _, _, t, _ in scored[:beam]]
            if scored and (best is None or scored[0][:2] < best[:2]):
                best = scored[0]
        if depth in depths and best is not None:
            energy, _, _, (e, cfg, parts, sizes) = best
            results.append(DepthResult(depth, e, cfg, parts, sizes))
    return results
