"""Linear energy model and round-based cycle model."""

from __future__ import annotations

import bisect
import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

from .arch import ArchSpec, BankAssignment, assign_banks, bottom_tile_sequence
from .netmodel import ConfigError, LayerShape
from .schedule import (DATATYPES, Config, TrafficCounts, check_capacity, element_bytes,
                       tile_bytes, traffic_model)


class MissingEntry(KeyError):
    pass


@dataclass(frozen=True)
class AccessTable:
    """pJ per word access as a function of bank size (bytes), piecewise constant.

    A lookup takes the first entry whose bank size is >= the requested size.
    """

    sizes: tuple[int, ...]
    pj: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "pj", tuple(float(p) for p in self.pj))
        if not self.sizes or len(self.sizes) != len(self.pj):
            raise ValueError("access table needs matching, non-empty size and energy lists")
        if list(self.sizes) != sorted(set(self.sizes)):
            raise ValueError("bank sizes must be strictly increasing")
        if min(self.pj) < 0 or any(b < a for a, b in zip(self.pj, self.pj[1:])):
            raise ValueError("access energies must be >= 0 and non-decreasing in bank size")

    def lookup(self, bank_bytes: int) -> float:
        i = bisect.bisect_left(self.sizes, bank_bytes)
        if i == len(self.sizes):
            raise MissingEntry(f"no access energy for a {bank_bytes} B bank "
                               f"(table ends at {self.sizes[-1]} B)")
        return self.pj[i]

    def scaled(self, k: float) -> "AccessTable":
        return AccessTable(self.sizes, tuple(p * k for p in self.pj))


@dataclass(frozen=True)
class EnergyTable:
    buffers: Mapping[str, AccessTable]        # by level name; "default" covers the rest
    dram_pj_per_bit: float = 20.0
    macc_pj: float = 0.25
    noc_pj_per_byte: float = 0.1
    noc_static_pj_per_cycle: float = 0.5     # per link
    name: str = "energy"

    def __post_init__(self):
        for key in ("dram_pj_per_bit", "macc_pj", "noc_pj_per_byte", "noc_static_pj_per_cycle"):
            if getattr(self, key) < 0:
                raise ValueError(f"{key} must be >= 0")

    def access_pj(self, level: str, bank_bytes: int) -> float:
        table = self.buffers.get(level, self.buffers.get("default"))
        if table is None:
            raise MissingEntry(f"no access-energy table for level {level}")
        return table.lookup(bank_bytes)


def energy_table_from_dict(doc: dict, where: str = "energy") -> EnergyTable:
    buffers = {}
    for name, t in doc.get("buffer", {}).items():
        try:
            sizes, pj = zip(*t["table"])
            buffers[name] = AccessTable(sizes, pj)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: buffer.{name}: {exc}") from exc
    if not buffers:
        raise ConfigError(f"{where}: no [buffer.*] access tables")
    try:
        return EnergyTable(
            buffers=buffers,
            dram_pj_per_bit=float(doc.get("dram_pj_per_bit", 20.0)),
            macc_pj=float(doc.get("macc_pj", 0.25)),
            noc_pj_per_byte=float(doc.get("noc_pj_per_byte", 0.1)),
            noc_static_pj_per_cycle=float(doc.get("noc_static_pj_per_cycle", 0.5)),
            name=str(doc.get("name", "energy")),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


# --- reports ----------------------------------------------------------------

@dataclass(frozen=True)
class CostReport:
    energy: Mapping[str, float]               # DRAM, one entry per level, NoC, compute (pJ)
    cycles: int = 0
    utilization: float = 0.0
    macc_total: int = 0

    @property
    def total_energy(self) -> float:
        return math.fsum(self.energy.values())

    @property
    def perf_per_watt(self) -> float:
        return perf_per_watt(self)

    def row(self) -> dict:
        out = {f"{k}_pJ": v for k, v in self.energy.items()}
        out.update(total_pJ=self.total_energy, cycles=self.cycles,
                   utilization=self.utilization, maccs=self.macc_total)
        return out


def perf_per_watt(report: CostReport, clock_hz: float = 1e9) -> float:
    """MACCs per second per watt; the clock cancels out."""
    if report.cycles <= 0:
        raise ValueError("perf/watt needs a positive cycle count")
    seconds = report.cycles / clock_hz
    joules = report.total_energy * 1e-12
    if joules == 0:
        return math.inf
    return (report.macc_total / seconds) / (joules / seconds)


# --- energy -----------------------------------------------------------------

def _words(nbytes: int, elem_bytes: int, word_bits: int) -> float:
    """Word accesses to move ``nbytes`` of elements ``elem_bytes`` wide."""
    if elem_bytes * 8 > word_bits:
        return (nbytes // elem_bytes) * -(-elem_bytes * 8 // word_bits)
    return nbytes * 8 / word_bits


def energy_breakdown(counts: TrafficCounts, macc_total: int, table: EnergyTable,
                     banks: Sequence[BankAssignment | int] | None, arch: ArchSpec,
                     elem_bytes: Mapping[str, int] | None = None,
                     cycles: int = 0) -> dict[str, float]:
    """Energy per component in pJ.

    Boundary ``b`` fills level ``b`` from level ``b-1`` (DRAM for ``b = 0``);
    psum writebacks flow the other way.  The boundary below the last level is
    the ALU port.  Every byte moved costs one access at each end of it.
    """
    eb = dict(elem_bytes or {dt: 1 for dt in DATATYPES})
    n = len(arch.levels)
    names = [lvl.name for lvl in arch.levels]
    if len(counts.boundaries) != n + 1:
        raise ValueError(f"traffic covers {len(counts.boundaries)} boundaries, arch needs {n + 1}")
    bank_sizes = []
    for i, lvl in enumerate(arch.levels):
        b = banks[i] if banks is not None else None
        bank_sizes.append(b.bank_bytes if isinstance(b, BankAssignment) and b.bank_bytes
                          else (b if isinstance(b, int) else lvl.bank_bytes))
    per_access = [table.access_pj(names[i], bank_sizes[i]) for i in range(n)]

    out = {"DRAM": 0.0}
    out.update({name: 0.0 for name in names})
    out["NoC"] = 0.0
    out["compute"] = macc_total * table.macc_pj
    for bi, bname in enumerate(counts.boundaries):
        moved = 0
        for dt in DATATYPES:
            t = counts[(bname, dt)]
            nbytes = t.load_bytes + t.writeback_bytes
            if not nbytes:
                continue
            moved += nbytes
            # lower end of the boundary: level bi (absent at the ALU boundary)
            if bi < n:
                out[names[bi]] += _words(nbytes, eb[dt], arch.levels[bi].word_bits) * per_access[bi]
            # upper end: level bi-1, or DRAM
            if bi == 0:
                out["DRAM"] += nbytes * 8 * table.dram_pj_per_bit
            else:
                up = bi - 1
                out[names[up]] += _words(nbytes, eb[dt], arch.levels[up].word_bits) * per_access[up]
        if 0 < bi < n:
            out["NoC"] += moved * table.noc_pj_per_byte
    links = sum(arch.levels[b - 1].instances for b in range(1, n))
    out["NoC"] += cycles * links * table.noc_static_pj_per_cycle
    return out


def energy(counts: TrafficCounts, macc_total: int, table: EnergyTable, banks,
           arch: ArchSpec, elem_bytes=None, cycles: int = 0) -> CostReport:
    return CostReport(energy_breakdown(counts, macc_total, table, banks, arch, elem_bytes, cycles),
                      cycles, 0.0, macc_total)


# --- cycles -----------------------------------------------------------------

@lru_cache(maxsize=1 << 16)
def _round_profile(total: int, tiles: tuple[int, ...], p: int, lanes: int) -> tuple:
    """((per-round work, rounds), ...) when bottom tiles along one dim are dealt
    ``p`` at a time; work is the largest tile in the group, in ``lanes`` units."""
    seq = [-(-t // lanes) for t in bottom_tile_sequence(total, tiles)]
    groups = Counter(max(seq[i:i + p]) for i in range(0, len(seq), p))
    return tuple(sorted(groups.items()))


def load_cycles(counts: TrafficCounts, arch: ArchSpec) -> float:
    """Cycles the on-chip buses need for all fills and writebacks (the slowest bus bounds)."""
    worst = 0.0
    for b in range(1, len(arch.levels)):
        upper = arch.levels[b - 1]
        nbytes = counts.boundary_bytes(counts.boundaries[b])
        worst = max(worst, nbytes / (upper.bus_bits / 8 * upper.instances))
    return worst


def cycles(layer: LayerShape, config: Config, arch: ArchSpec,
           counts: TrafficCounts | None = None, bus_cycles: float | None = None) -> tuple[int, float]:
    """(cycles, PE utilization) under a per-round max(compute, load) model.

    Bottom-level tiles along H, W, K and F are dealt round-robin to the PE
    grid; C stays sequential inside a PE.  Bus time is spread evenly over the
    rounds and overlaps compute through double buffering.
    """
    if bus_cycles is None:
        if counts is None:
            counts = traffic_model(layer, config)
        bus_cycles = load_cycles(counts, arch)
    n = config.n_levels
    vw = config.vector_width
    lanes = {"H": 1, "W": 1, "K": vw, "F": 1}
    per_dim = [_round_profile(layer.extent(d), tuple(config.tiles.at(l)[d] for l in range(n)), p, lanes[d])
               for d, p in zip(("H", "W", "K", "F"), config.parallelism)]
    rounds = math.prod(sum(k for _, k in c) for c in per_dim)
    load_per_round = math.ceil(bus_cycles / rounds)
    inner = layer.C * layer.R * layer.S * layer.T
    total = 0
    classes = Counter({1: 1})
    for c in per_dim:
        nxt = Counter()
        for work, m in classes.items():
            for g, k in c:
                nxt[work * g] += m * k
        classes = nxt
    for work, count in classes.items():
        total += count * max(work * inner, load_per_round)
    util = layer.maccs / (total * arch.total_pes * vw) if total else 0.0
    return total, util


# --- full evaluation ----------------------------------------------------------

def level_banks(layer: LayerShape, config: Config, arch: ArchSpec) -> list[BankAssignment]:
    return [assign_banks(lvl, tile_bytes(layer, config.tiles.at(i)))
            for i, lvl in enumerate(arch.levels)]


def evaluate(layer: LayerShape, config: Config, arch: ArchSpec, table: EnergyTable,
             counts: TrafficCounts | None = None) -> CostReport:
    """Traffic, banks, cycles and energy for one config."""
    if counts is None:
        counts = traffic_model(layer, config, arch=arch)
    else:
        check_capacity(layer, config, arch)
    banks = level_banks(layer, config, arch)
    cyc, util = cycles(layer, config, arch, counts)
    parts = energy_breakdown(counts, layer.maccs, table, banks, arch, element_bytes(layer), cyc)
    return CostReport(parts, cyc, util, layer.maccs)
