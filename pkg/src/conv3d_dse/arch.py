"""Hardware description: clusters of vector PEs, a banked buffer hierarchy,
programmable loop FSMs and PE-parallelism masks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

MAX_FSM_DEPTH = 8
BANK_ORDER = ("inputs", "filters", "psums")


class BankError(ValueError):
    pass


@dataclass(frozen=True)
class BufferLevel:
    name: str
    size_bytes: int
    banks: int = 16
    word_bits: int = 64
    double_buffered: bool = True
    instances: int = 1          # physical copies (1 global, M per-cluster, M*N per-PE)
    bus_bits: int = 0           # width of the bus down to the next level (0 for the bottom)

    def __post_init__(self):
        if self.size_bytes <= 0 or self.word_bits <= 0 or self.instances <= 0:
            raise ValueError(f"{self.name}: sizes and widths must be positive")
        if self.banks < 1 or self.size_bytes % self.banks:
            raise ValueError(f"{self.name}: bank count {self.banks} must divide {self.size_bytes} B")
        if self.bus_bits < 0:
            raise ValueError(f"{self.name}: bus_bits must be >= 0")

    @property
    def bank_bytes(self) -> int:
        return self.size_bytes // self.banks

    @property
    def usable_bytes(self) -> int:
        """Bytes one working set may occupy (half of the level when double buffered)."""
        return self.size_bytes // 2 if self.double_buffered else self.size_bytes


@dataclass(frozen=True)
class ArchSpec:
    clusters: int
    pes_per_cluster: int
    vector_width: int
    levels: tuple[BufferLevel, ...]
    clock_hz: float = 1e9
    name: str = "arch"

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if min(self.clusters, self.pes_per_cluster, self.vector_width) < 1:
            raise ValueError("clusters, pes_per_cluster and vector_width must be >= 1")
        if not self.levels:
            raise ValueError("arch needs at least one buffer level")
        for lvl in self.levels[:-1]:
            if lvl.bus_bits <= 0:
                raise ValueError(f"{lvl.name}: bus_bits must be > 0 above the bottom level")
        if self.clock_hz <= 0:
            raise ValueError("clock_hz must be > 0")

    @property
    def total_pes(self) -> int:
        return self.clusters * self.pes_per_cluster

    def level(self, name: str) -> BufferLevel:
        for lvl in self.levels:
            if lvl.name == name:
                return lvl
        raise KeyError(name)


# --- formulas ---------------------------------------------------------------

def psum_width_bits(P: int, R: int, S: int, T: int, C: int) -> int:
    """Accumulator width that cannot overflow: 2P + ceil(log2(R*S*T*C))."""
    n = R * S * T * C
    if min(P, R, S, T, C) < 1:
        raise ValueError("all arguments must be >= 1")
    return 2 * P + (n - 1).bit_length()


def required_bus_bw(arch: ArchSpec, layer=None, *, R: int | None = None,
                    S: int | None = None, T: int | None = None,
                    bytes_per_input: int = 1) -> float:
    """Input bytes per cycle the top bus must carry to keep every PE busy.

    Each input is reused R*S*T times at stride 1, so the stream only needs
    M*N / (R*S*T) new inputs per cycle.
    """
    if layer is not None:
        R, S, T = layer.R, layer.S, layer.T
        bytes_per_input = -(-layer.precision_bits // 8)
    return arch.total_pes * bytes_per_input / (R * S * T)


# --- banks ------------------------------------------------------------------

@dataclass(frozen=True)
class BankAssignment:
    level: str
    n_banks: int
    bank_bytes: int
    ranges: Mapping[str, tuple[int, int]]

    def owner(self, bank: int) -> str | None:
        hits = [dt for dt, (a, b) in self.ranges.items() if a <= bank < b]
        if len(hits) > 1:
            raise BankError(f"bank {bank} assigned to {hits}")
        return hits[0] if hits else None

    @property
    def used(self) -> int:
        return sum(b - a for a, b in self.ranges.values())


def allocate_banks(n_banks: int, demands: Mapping[str, int] | Sequence[int],
                   level: str = "L?", bank_bytes: int = 0) -> BankAssignment:
    """Contiguous, disjoint ranges in inputs -> filters -> psums order."""
    if not isinstance(demands, Mapping):
        demands = dict(zip(BANK_ORDER, demands))
    total = sum(demands.values())
    if total > n_banks:
        raise BankError(f"{level}: need {total} banks "
                        f"({', '.join(f'{k}={v}' for k, v in demands.items())}), have {n_banks}")
    ranges, start = {}, 0
    for dt in BANK_ORDER:
        n = demands.get(dt, 0)
        if n:
            ranges[dt] = (start, start + n)
            start += n
    return BankAssignment(level, n_banks, bank_bytes, ranges)


def bank_demand(level: BufferLevel, tile_bytes: Mapping[str, int]) -> dict[str, int]:
    copies = 2 if level.double_buffered else 1
    return {dt: -(-copies * tile_bytes.get(dt, 0) // level.bank_bytes) for dt in BANK_ORDER}


def assign_banks(level: BufferLevel, tile_bytes: Mapping[str, int]) -> BankAssignment:
    """Bank ranges for one level given per-datatype tile sizes in bytes."""
    return allocate_banks(level.banks, bank_demand(level, tile_bytes), level.name, level.bank_bytes)


# --- programmable loop FSM --------------------------------------------------

@dataclass(frozen=True)
class FsmProgram:
    """Loop bounds and steps (outermost loop first) plus an event mask.

    ``steps[j]`` is added to the output register whenever loop ``j`` advances
    (all loops inside it wrap).  Bit ``j`` of ``event_mask`` raises an event
    on every state where loop ``j`` finishes its last iteration.
    """

    bounds: tuple[int, ...]
    steps: tuple[int, ...]
    event_mask: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bounds", tuple(int(b) for b in self.bounds))
        object.__setattr__(self, "steps", tuple(int(s) for s in self.steps))
        if len(self.bounds) != len(self.steps):
            raise ValueError("bounds and steps must have the same length")
        if not 1 <= len(self.bounds) <= MAX_FSM_DEPTH:
            raise ValueError(f"FSM depth must be 1..{MAX_FSM_DEPTH}")
        if min(self.bounds) < 1:
            raise ValueError("loop bounds must be >= 1")
        if self.event_mask < 0 or self.event_mask >> len(self.bounds):
            raise ValueError("event mask selects loops beyond the program depth")

    @property
    def depth(self) -> int:
        return len(self.bounds)


def fsm_run(program: FsmProgram) -> Iterator[tuple[int, int]]:
    """Yield (address, event bits) for every FSM state."""
    b, s = program.bounds, program.steps
    D = len(b)
    idx = [0] * D
    addr = 0
    while True:
        # done[j]: loop j and everything inside it are on their last iteration
        done = 0
        j = D - 1
        while j >= 0 and idx[j] == b[j] - 1:
            done |= 1 << j
            j -= 1
        yield addr, done & program.event_mask
        if j < 0:
            return
        for k in range(j + 1, D):
            idx[k] = 0
        idx[j] += 1
        addr += s[j]


def loop_program(bounds: Sequence[int], strides: Sequence[int], event_mask: int = 0) -> FsmProgram:
    """Program whose address stream is sum(i_j * strides[j]) over the nest."""
    steps = []
    for j in range(len(bounds)):
        rewind = sum((bounds[k] - 1) * strides[k] for k in range(j + 1, len(bounds)))
        steps.append(strides[j] - rewind)
    return FsmProgram(tuple(bounds), tuple(steps), event_mask)


# --- PE parallelism ---------------------------------------------------------

PAR_DIMS = ("H", "W", "K", "F")


@dataclass(frozen=True)
class ParallelSchedule:
    """Round structure of tiles spread over an Hp x Wp x Kp x Fp PE grid."""

    factors: tuple[int, int, int, int]
    units: tuple[int, int, int, int]          # bottom-level tiles per dim
    n_pes: int

    @property
    def rounds_per_dim(self) -> tuple[int, ...]:
        return tuple(-(-u // p) for u, p in zip(self.units, self.factors))

    @property
    def edge_per_dim(self) -> tuple[int, ...]:
        return tuple(u - (r - 1) * p for u, p, r in zip(self.units, self.factors, self.rounds_per_dim))

    @property
    def rounds(self) -> int:
        return math.prod(self.rounds_per_dim)

    def _mask(self, active: Sequence[int]) -> int:
        hp, wp, kp, fp = self.factors
        mask = 0
        for h in range(active[0]):
            for w in range(active[1]):
                for k in range(active[2]):
                    for f in range(active[3]):
                        mask |= 1 << (((h * wp + w) * kp + k) * fp + f)
        return mask

    @property
    def steady_mask(self) -> int:
        return self._mask([min(p, u) for p, u in zip(self.factors, self.units)])

    @property
    def final_mask(self) -> int:
        return self._mask(self.edge_per_dim)

    def mask(self, round_index: Sequence[int]) -> int:
        """NoC mask for the round at per-dim group indices ``round_index``."""
        active = []
        for i, r, p, e, n in zip(round_index, self.rounds_per_dim, self.factors,
                                 self.edge_per_dim, self.units):
            active.append(e if i == r - 1 else min(p, n))
        return self._mask(active)

    def active_pes(self, mask: int) -> int:
        return bin(mask).count("1")


def bottom_tile_sequence(total: int, tiles: Sequence[int]) -> list[int]:
    """Bottom-level tile sizes along one dim, in traversal order."""
    seq = [total]
    for t in tiles:
        nxt = []
        for size in seq:
            n = -(-size // t)
            nxt.extend([t] * (n - 1) + [size - (n - 1) * t])
        seq = nxt
    return seq


def parallel_assignment(layer, config, arch: ArchSpec) -> ParallelSchedule:
    factors = tuple(config.parallelism)
    if math.prod(factors) > arch.total_pes:
        raise ValueError(f"parallelism {factors} over-subscribes {arch.total_pes} PEs")
    units = []
    for d in PAR_DIMS:
        tiles = [config.tiles.at(l)[d] for l in range(config.n_levels)]
        units.append(len(bottom_tile_sequence(layer.extent(d), tiles)))
    return ParallelSchedule(factors, tuple(units), arch.total_pes)


# --- config file ------------------------------------------------------------

def arch_from_dict(doc: dict, where: str = "arch") -> ArchSpec:
    from .netmodel import ConfigError

    def need(table, key, kind, ctx):
        if key not in table:
            raise ConfigError(f"{ctx}: missing field '{key}'")
        value = table[key]
        if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigError(f"{ctx}: field '{key}' must be an integer")
        if kind is float and not isinstance(value, (int, float)):
            raise ConfigError(f"{ctx}: field '{key}' must be a number")
        return value

    levels_doc = doc.get("level", [])
    if not levels_doc:
        raise ConfigError(f"{where}: no [[level]] tables")
    levels = []
    for i, t in enumerate(levels_doc):
        ctx = f"{where}: level[{i}]"
        try:
            levels.append(BufferLevel(
                name=str(need(t, "name", str, ctx)),
                size_bytes=need(t, "size_bytes", int, ctx),
                banks=int(t.get("banks", 16)),
                word_bits=int(t.get("word_bits", 64)),
                double_buffered=bool(t.get("double_buffered", True)),
                instances=int(t.get("instances", 1)),
                bus_bits=int(t.get("bus_bits", 0)),
            ))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{ctx}: {exc}") from exc
    try:
        return ArchSpec(
            clusters=need(doc, "clusters", int, where),
            pes_per_cluster=need(doc, "pes_per_cluster", int, where),
            vector_width=need(doc, "vector_width", int, where),
            levels=tuple(levels),
            clock_hz=float(doc.get("clock_hz", 1e9)),
            name=str(doc.get("name", "arch")),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from exc
