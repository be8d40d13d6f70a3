"""Layer and network descriptions, dense integer tensors, and the brute-force
3D convolution used as the correctness anchor for everything else."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    """Raised when a config file does not parse or violates an invariant."""


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class LayerShape:
    """One 3D convolution layer.

    ``W, H, F`` are input extents (width, height, frames), ``C`` input
    channels, ``K`` filters, and ``S, R, T`` the filter extents that slide
    along W, H and F respectively.
    """

    W: int
    H: int
    C: int
    F: int
    K: int
    R: int
    S: int
    T: int
    stride_w: int = 1
    stride_h: int = 1
    stride_f: int = 1
    precision_bits: int = 8
    name: str = "layer"

    def __post_init__(self):
        for axis in ("W", "H", "C", "F", "K", "R", "S", "T"):
            if getattr(self, axis) < 1:
                raise ValueError(f"{self.name}: {axis} must be >= 1")
        for axis in ("stride_w", "stride_h", "stride_f", "precision_bits"):
            if getattr(self, axis) < 1:
                raise ValueError(f"{self.name}: {axis} must be >= 1")
        if self.S > self.W:
            raise ValueError(f"{self.name}: S={self.S} exceeds W={self.W}")
        if self.R > self.H:
            raise ValueError(f"{self.name}: R={self.R} exceeds H={self.H}")
        if self.T > self.F:
            raise ValueError(f"{self.name}: T={self.T} exceeds F={self.F}")

    @property
    def W_out(self) -> int:
        return (self.W - self.S) // self.stride_w + 1

    @property
    def H_out(self) -> int:
        return (self.H - self.R) // self.stride_h + 1

    @property
    def F_out(self) -> int:
        return (self.F - self.T) // self.stride_f + 1

    @property
    def maccs(self) -> int:
        return (self.K * self.F_out * self.W_out * self.H_out
                * self.R * self.S * self.T * self.C)

    def extent(self, dim: str) -> int:
        """Total extent of a tiled dim: output coverage for W/H/F, elements for C/K."""
        return {"W": self.W_out, "H": self.H_out, "F": self.F_out,
                "C": self.C, "K": self.K}[dim]

    def window(self, dim: str) -> tuple[int, int]:
        """(filter extent, stride) along a sliding dim."""
        return {"W": (self.S, self.stride_w), "H": (self.R, self.stride_h),
                "F": (self.T, self.stride_f)}[dim]

    def input_dims(self) -> tuple[int, int, int, int]:
        return (self.F, self.C, self.W, self.H)

    def filter_dims(self) -> tuple[int, int, int, int, int]:
        return (self.K, self.T, self.C, self.S, self.R)


@dataclass(frozen=True)
class Tensor:
    """Dense integer tensor, row-major with the innermost dimension last."""

    dims: tuple[int, ...]
    data: tuple[int, ...] | np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        arr = np.asarray(self.data, dtype=np.int64).reshape(-1)
        if arr.size != int(np.prod(dims, dtype=np.int64)):
            raise ValueError(f"data length {arr.size} does not match dims {dims}")
        arr.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr) -> "Tensor":
        arr = np.asarray(arr)
        return cls(arr.shape, arr.reshape(-1))

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> "Tensor":
        return cls(tuple(dims), np.zeros(int(np.prod(dims)), dtype=np.int64))

    def array(self) -> np.ndarray:
        return self.data.reshape(self.dims)

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.dims == other.dims and bool(np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True)
class Network:
    name: str
    layers: tuple[LayerShape, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ConfigError("network has no layers")

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)

    def select(self, names: Iterable[str]) -> "Network":
        wanted = list(names)
        picked = [l for l in self.layers if l.name in wanted]
        missing = set(wanted) - {l.name for l in picked}
        if missing:
            raise ConfigError(f"unknown layer(s): {', '.join(sorted(missing))}")
        return Network(self.name, tuple(picked))


def output_shape(layer: LayerShape) -> tuple[int, int, int, int]:
    """(F_out, K, W_out, H_out) with floor-division strides."""
    return (layer.F_out, layer.K, layer.W_out, layer.H_out)


def _check_dims(name: str, got: Sequence[int], want: Sequence[int], axes: str):
    if len(got) != len(want):
        raise DimensionMismatch(f"{name} has rank {len(got)}, expected {len(want)}")
    for axis, g, w in zip(axes, got, want):
        if g != w:
            raise DimensionMismatch(f"{name} axis {axis}: got {g}, expected {w}")


def conv3d_reference(inputs: Tensor, filters: Tensor, layer: LayerShape) -> Tensor:
    """Direct 3D convolution, one output at a time.

    Inputs are laid out [F][C][W][H], filters [K][T][C][S][R]; the result is
    [F_out][K][W_out][H_out].
    """
    _check_dims("input", inputs.dims, layer.input_dims(), "FCWH")
    _check_dims("filters", filters.dims, layer.filter_dims(), "KTCSR")
    I = inputs.array()
    Fl = filters.array()
    sw, sh, sf = layer.stride_w, layer.stride_h, layer.stride_f
    T, S, R = layer.T, layer.S, layer.R
    out = np.zeros(output_shape(layer), dtype=np.int64)
    for k in range(layer.K):
        fk = Fl[k]                                   # [T][C][S][R]
        for f in range(layer.F_out):
            for w in range(layer.W_out):
                for h in range(layer.H_out):
                    # window is indexed [t][c][s][r], same as the filter
                    win = I[f * sf:f * sf + T, :, w * sw:w * sw + S, h * sh:h * sh + R]
                    out[f, k, w, h] = int(np.sum(win * fk))
    return Tensor.from_array(out)


def random_operands(layer: LayerShape, rng: np.random.Generator,
                    low: int = -8, high: int = 8) -> tuple[Tensor, Tensor]:
    """Random integer input and filter tensors matching ``layer``."""
    inputs = rng.integers(low, high, size=layer.input_dims(), dtype=np.int64)
    filters = rng.integers(low, high, size=layer.filter_dims(), dtype=np.int64)
    return Tensor.from_array(inputs), Tensor.from_array(filters)


# --- config files -----------------------------------------------------------

def read_toml(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        return tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from exc


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"{where}: missing field '{key}'")
    return table[key]


def _int_field(table: dict, key: str, where: str, default=None) -> int:
    value = table.get(key, default) if default is not None else _require(table, key, where)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: field '{key}' must be an integer, got {value!r}")
    return value


def layer_from_table(table: dict, where: str) -> LayerShape:
    name = str(table.get("name", where))
    where = f"{where} ({name})"
    known = {"name", "W", "H", "C", "F", "K", "R", "S", "T", "stride",
             "stride_w", "stride_h", "stride_f", "precision_bits"}
    extra = set(table) - known
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {sorted(extra)}")
    stride = _int_field(table, "stride", where, 1)
    kwargs = {axis: _int_field(table, axis, where)
              for axis in ("W", "H", "C", "F", "K", "R", "S", "T")}
    for axis in ("stride_w", "stride_h", "stride_f"):
        kwargs[axis] = _int_field(table, axis, where, stride)
    kwargs["precision_bits"] = _int_field(table, "precision_bits", where, 8)
    try:
        return LayerShape(name=name, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_network(path) -> Network:
    doc = read_toml(path)
    layers = doc.get("layer", [])
    if not isinstance(layers, list):
        raise ConfigError(f"{path}: 'layer' must be an array of tables")
    if not layers:
        raise ConfigError("network has no layers")
    parsed = [layer_from_table(t, f"{path}: layer[{i}]") for i, t in enumerate(layers)]
    names = [l.name for l in parsed]
    if len(set(names)) != len(names):
        raise ConfigError(f"{path}: duplicate layer names")
    return Network(str(doc.get("name", Path(path).stem)), tuple(parsed))


def load_arch(path):
    from .arch import arch_from_dict

    return arch_from_dict(read_toml(path), str(path))


def load_energy(path):
    from .cost import energy_table_from_dict

    return energy_table_from_dict(read_toml(path), str(path))


def data_path(name: str) -> Path:
    """Path of a config file shipped with the package."""
    return Path(__file__).parent / "data" / name
