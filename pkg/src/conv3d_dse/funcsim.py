"""Transaction-level functional simulator.

Walks the full tiled loop nest of a Config, moves real data between buffer
levels, computes every bottom-level tile with integer arithmetic, and records
each tile fill and psum writeback it performs.  The record is the reference
the analytical traffic model is checked against.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .arch import PAR_DIMS, bottom_tile_sequence
from .netmodel import LayerShape, Tensor, _check_dims, output_shape
from .schedule import (DATATYPES, DEPENDS, DIMS, SLIDING, Config, Traffic, TrafficCounts,
                       boundary_names, check_capacity, element_bytes, halo_overlap,
                       input_tile_extent, validate_config)

_IDX = {d: i for i, d in enumerate(DIMS)}


@dataclass
class EventTrace:
    boundaries: tuple[str, ...] = ()
    counters: dict = field(default_factory=dict)       # (boundary, dt) -> [loads, load_B, wb, wb_B]
    pe_maccs: list = field(default_factory=list)
    conflict_stalls: int = 0
    records: list | None = None

    def add(self, boundary: str, dt: str, event: str, nbytes: int, step: int = -1):
        c = self.counters.setdefault((boundary, dt), [0, 0, 0, 0])
        if event == "fill":
            c[0] += 1
            c[1] += nbytes
        else:
            c[2] += 1
            c[3] += nbytes
        if self.records is not None:
            self.records.append({"step": step, "boundary": boundary, "datatype": dt,
                                 "event": event, "bytes": nbytes})

    def add_bulk(self, boundary: str, dt: str, loads: int, load_bytes: int,
                 writebacks: int = 0, wb_bytes: int = 0):
        c = self.counters.setdefault((boundary, dt), [0, 0, 0, 0])
        c[0] += loads
        c[1] += load_bytes
        c[2] += writebacks
        c[3] += wb_bytes

    @property
    def macc_total(self) -> int:
        return sum(self.pe_maccs)

    def dump(self, path):
        """Write the event records as JSON lines."""
        with open(path, "w") as fh:
            for rec in self.records or []:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def count_accesses(trace: EventTrace) -> TrafficCounts:
    entries = {key: Traffic(*c) for key, c in trace.counters.items()}
    return TrafficCounts(tuple(trace.boundaries), entries)


# --- geometry helpers -------------------------------------------------------

def _splits(off: int, ext: int, tile: int) -> list[tuple[int, int]]:
    out = []
    pos = off
    end = off + ext
    while pos < end:
        out.append((pos, min(tile, end - pos)))
        pos += tile
    return out


def _walk(config: Config, level: int, region: tuple) -> Iterator[tuple]:
    """Yield, for each bottom-level step, the per-level regions (outermost first)."""
    tile = config.tiles.levels[level]
    order = [_IDX[d] for d in config.order_at(level)]
    choices = [_splits(*region[i], tile[i]) for i in order]
    for combo in itertools.product(*choices):
        child = list(region)
        for i, span in zip(order, combo):
            child[i] = span
        child = tuple(child)
        if level + 1 == config.n_levels:
            yield (child,)
        else:
            for rest in _walk(config, level + 1, child):
                yield (child,) + rest


def _slices(layer: LayerShape, dt: str, region: tuple) -> tuple:
    """Global tensor-coordinate (start, stop) per axis of ``dt`` for a region."""
    W, H, C, K, F = region

    def span(d, r):
        off, ext = r
        filt, stride = layer.window(d)
        return off * stride, off * stride + input_tile_extent(ext, filt, stride)

    if dt == "inputs":
        return (span("F", F), (C[0], C[0] + C[1]), span("W", W), span("H", H))
    if dt == "filters":
        return ((K[0], K[0] + K[1]), (0, layer.T), (C[0], C[0] + C[1]), (0, layer.S), (0, layer.R))
    return ((F[0], F[0] + F[1]), (K[0], K[0] + K[1]), (W[0], W[0] + W[1]), (H[0], H[0] + H[1]))


class _Buf:
    __slots__ = ("key", "bounds", "data", "region")

    def __init__(self, key, bounds, data, region=None):
        self.key, self.bounds, self.data, self.region = key, bounds, data, region

    def view(self, bounds):
        return self.data[tuple(slice(a - o[0], b - o[0]) for (a, b), o in zip(bounds, self.bounds))]


def _slide_axis(layer, dt, old_region, new_region):
    """(tensor axis, halo) when ``new`` continues ``old`` along one sliding dim."""
    if dt != "inputs":
        return None
    diff = [i for i in range(len(DIMS)) if DIMS[i] in DEPENDS[dt] and old_region[i] != new_region[i]]
    if len(diff) != 1 or DIMS[diff[0]] not in SLIDING:
        return None
    i = diff[0]
    (ao, ae), (bo, _) = old_region[i], new_region[i]
    halo = halo_overlap(*layer.window(DIMS[i]))
    if halo == 0 or ao + ae != bo:
        return None
    axis = {"F": 0, "W": 2, "H": 3}[DIMS[i]]
    return axis, halo


# --- simulation -------------------------------------------------------------

def simulate(layer: LayerShape, config: Config, arch, inputs: Tensor, filters: Tensor,
             record: bool = False, halo_bias: int = 0) -> tuple[Tensor, EventTrace]:
    """Run ``config`` on real tensors.

    ``halo_bias`` shifts the halo width used when reusing an input overlap; it
    exists only so that validation can prove it catches a broken halo.
    """
    _check_dims("input", inputs.dims, layer.input_dims(), "FCWH")
    _check_dims("filters", filters.dims, layer.filter_dims(), "KTCSR")
    validate_config(layer, config, arch)
    if arch is not None:
        check_capacity(layer, config, arch)

    n = config.n_levels
    names = boundary_names(n)
    eb = element_bytes(layer)
    trace = EventTrace(tuple(names), {}, [0] * (arch.total_pes if arch is not None
                                               else int(np.prod(config.parallelism))),
                       0, [] if record else None)

    top = {"inputs": inputs.array(), "filters": filters.array(),
           "psums": np.zeros(output_shape(layer), dtype=np.int64)}
    root = tuple((0, layer.extent(d)) for d in DIMS)
    parents = [{dt: _Buf(None, tuple((0, s) for s in top[dt].shape), top[dt]) for dt in DATATYPES}]
    resident: list[dict] = [dict() for _ in range(n)]
    touched = [set() for _ in range(n)]                 # psum tiles seen per level
    seen_out = np.zeros(output_shape(layer), dtype=bool)

    def parent_buf(lvl, dt):
        return parents[0][dt] if lvl == 0 else resident[lvl - 1][dt]

    def key_of(dt, region):
        return tuple(region[i] for i in range(len(DIMS)) if DIMS[i] in DEPENDS[dt])

    def evict(lvl, step):
        buf = resident[lvl].pop("psums", None)
        if buf is None:
            return
        parent = parent_buf(lvl, "psums")
        parent.view(buf.bounds)[...] = buf.data
        trace.add(names[lvl], "psums", "writeback", buf.data.size * eb["psums"], step)

    # ordinal of each bottom tile along the parallel dims, for PE assignment
    ordinals = {}
    for d in PAR_DIMS:
        seq = bottom_tile_sequence(layer.extent(d), [config.tiles.at(l)[d] for l in range(n)])
        offs = np.cumsum([0] + seq[:-1])
        ordinals[d] = {int(o): j for j, o in enumerate(offs)}
    hp, wp, kp, fp = config.parallelism
    vw = config.vector_width
    rst = layer.R * layer.S * layer.T
    sw, sh, sf = layer.stride_w, layer.stride_h, layer.stride_f

    for step, regions in enumerate(_walk(config, 0, root) if n else ()):
        fills = [False] * n
        written = [False] * n           # level received a psum writeback from below
        for lvl in range(n - 1, -1, -1):
            buf = resident[lvl].get("psums")
            if buf is not None and buf.key != key_of("psums", regions[lvl]):
                evict(lvl, step)
                if lvl > 0:
                    written[lvl - 1] = True
        # fills top-down
        for lvl in range(n):
            region = regions[lvl]
            for dt in DATATYPES:
                key = key_of(dt, region)
                old = resident[lvl].get(dt)
                if old is not None and old.key == key:
                    continue
                bounds = _slices(layer, dt, region)
                src = parent_buf(lvl, dt)
                data = np.array(src.view(bounds), dtype=np.int64)
                nbytes = data.size * eb[dt]
                if dt == "psums":
                    resident[lvl][dt] = _Buf(key, bounds, data)
                    if key in touched[lvl]:
                        trace.add(names[lvl], dt, "fill", nbytes, step)
                        fills[lvl] = True
                    touched[lvl].add(key)
                    continue
                slide = _slide_axis(layer, dt, old.region, region) if old is not None else None
                if slide is not None:
                    axis, halo = slide
                    face = nbytes // data.shape[axis]
                    nbytes -= face * halo
                    h = max(0, min(halo + halo_bias, data.shape[axis], old.data.shape[axis]))
                    if h:
                        dst = [slice(None)] * data.ndim
                        srcs = [slice(None)] * data.ndim
                        dst[axis] = slice(0, h)
                        srcs[axis] = slice(old.data.shape[axis] - h, None)
                        data[tuple(dst)] = old.data[tuple(srcs)]
                resident[lvl][dt] = _Buf(key, bounds, data, region)
                trace.add(names[lvl], dt, "fill", nbytes, step)
                fills[lvl] = True
        # a fill from above and a writeback from below hit the same level: one stall
        trace.conflict_stalls += sum(f and w for f, w in zip(fills, written))

        # compute on the bottom tile
        W, H, C, K, F = regions[-1]
        inp = resident[-1]["inputs"].data
        flt = resident[-1]["filters"].data
        ps = resident[-1]["psums"]
        win = np.lib.stride_tricks.sliding_window_view(inp, (layer.T, layer.S, layer.R), axis=(0, 2, 3))
        win = win[::sf, :, ::sw, ::sh]
        contrib = np.einsum("fcwhtsr,ktcsr->fkwh", win, flt)
        ps.data += contrib
        outs = ps.data.size
        local = (slice(F[0], F[0] + F[1]), slice(K[0], K[0] + K[1]),
                 slice(W[0], W[0] + W[1]), slice(H[0], H[0] + H[1]))
        reread = int(seen_out[local].sum())
        seen_out[local] = True
        spatial = W[1] * H[1] * F[1]
        vops = spatial * C[1] * rst * -(-K[1] // vw)
        maccs = spatial * C[1] * rst * K[1]
        cb = names[n]
        trace.add_bulk(cb, "inputs", vops, vops * eb["inputs"])
        trace.add_bulk(cb, "filters", maccs, maccs * eb["filters"])
        trace.add_bulk(cb, "psums", reread, reread * eb["psums"], outs, outs * eb["psums"])
        pe = (((ordinals["H"][H[0]] % hp) * wp + ordinals["W"][W[0]] % wp) * kp
              + ordinals["K"][K[0]] % kp) * fp + ordinals["F"][F[0]] % fp
        trace.pe_maccs[pe] += maccs

    for lvl in range(n - 1, -1, -1):
        evict(lvl, -1)
    return Tensor.from_array(top["psums"]), trace



# --- randomized cross-checks -------------------------------------------------

def random_config(layer: LayerShape, n_levels: int, rng: np.random.Generator,
                  vector_width: int = 8, max_pes: int = 1) -> Config:
    """Random nested tiles, orders and a parallelism that fits ``max_pes``."""
    from .schedule import LoopOrder, TileSpec

    levels, parent = [], [layer.extent(d) for d in DIMS]
    for _ in range(n_levels):
        parent = [int(rng.integers(1, p + 1)) for p in parent]
        levels.append(tuple(parent))
    outer = LoopOrder(tuple(rng.permutation(DIMS)))
    inner = LoopOrder(tuple(rng.permutation(DIMS)))
    lanes = -(-layer.K // vector_width)
    par = [1, 1, 1, 1]
    for i, cap in ((0, 3), (1, 3), (2, lanes)):
        par[i] = int(rng.integers(1, cap + 1))
        while par[0] * par[1] * par[2] > max_pes:
            par[i] -= 1
        par[i] = max(par[i], 1)
    return Config(outer, inner, TileSpec(tuple(levels)), tuple(par), vector_width)


@dataclass
class CheckCounts:
    output: int = 0         # simulator result equals the direct convolution
    traffic: int = 0        # event counts equal the analytical traffic model
    maccs: int = 0          # per-PE MACC counts add up to the layer's MACCs
    trials: int = 0
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


MAX_VALIDATE_MACCS = 10**7


def cross_check(layers, arch, trials: int, seed: int = 0, halo_bias: int = 0) -> CheckCounts:
    """Run ``trials`` random configs through simulator, reference and traffic model."""
    from .netmodel import conv3d_reference, random_operands
    from .schedule import CapacityError, traffic_model

    layers = list(layers)
    for layer in layers:
        if layer.maccs > MAX_VALIDATE_MACCS:
            raise ValueError(f"{layer.name}: {layer.maccs} MACCs is too large to simulate "
                             f"(limit {MAX_VALIDATE_MACCS})")
    rng = np.random.default_rng(seed)
    res = CheckCounts()
    n_levels = len(arch.levels)
    for t in range(trials):
        layer = layers[t % len(layers)]
        for _ in range(100):
            cfg = random_config(layer, n_levels, rng, arch.vector_width, arch.total_pes)
            try:
                check_capacity(layer, cfg, arch)
                break
            except CapacityError:
                continue
        else:
            res.failures.append((t, layer.name, "no random config fits the buffers"))
            continue
        inputs, filters = random_operands(layer, rng)
        out, trace = simulate(layer, cfg, arch, inputs, filters, halo_bias=halo_bias)
        res.trials += 1
        checks = {
            "output": out == conv3d_reference(inputs, filters, layer),
            "traffic": count_accesses(trace) == traffic_model(layer, cfg, arch=arch),
            "maccs": trace.macc_total == layer.maccs,
        }
        for name, passed in checks.items():
            if passed:
                setattr(res, name, getattr(res, name) + 1)
            else:
                res.failures.append((t, layer.name, f"{name} mismatch for {cfg.describe()}"))
    return res
