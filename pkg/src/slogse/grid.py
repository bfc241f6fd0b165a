"""Complex fields on periodic grids and the spectral operators acting on them.

The box is ``[-ell/2, ell/2)^d`` with ``n`` points per axis.  Fourier
transforms follow the numpy convention (forward unnormalised, inverse
carries ``1/n^d``); every norm is a physical-space quadrature with weight
``dx^d``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "Grid",
    "Field",
    "FieldFormatError",
    "make_grid",
    "free_propagator",
    "gradient",
    "l2_norm",
    "h1_norm",
    "lp_norm",
    "inner_product_real",
    "cutoff",
    "localized_l2",
    "write_field",
    "read_field",
]

CFLD_MAGIC = b"CFLD0001"
_HEADER = struct.Struct("<8sIId")


class FieldFormatError(ValueError):
    """Raised when a CFLD1 file is malformed or truncated."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[-ell/2, ell/2)^d``."""

    d: int
    n: int
    ell: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be between 1 and 3, got {self.d}")
        n = self.n
        if n < 8 or n & (n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {n}")
        if not (np.isfinite(self.ell) and self.ell > 0):
            raise ValueError(f"ell must be positive, got {self.ell}")
        object.__setattr__(self, "ell", float(self.ell))

    @property
    def dx(self) -> float:
        return self.ell / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def npoints(self) -> int:
        return self.n**self.d

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Sorted per-axis wavenumbers ``{-n/2, ..., n/2-1} * 2*pi/ell``."""
        return np.arange(-self.n // 2, self.n // 2) * (2 * np.pi / self.ell)

    @cached_property
    def k_axis(self) -> np.ndarray:
        """Per-axis wavenumbers in FFT ordering."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n) * (2 * np.pi / self.ell)

    @cached_property
    def k_vectors(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.k_axis] * self.d), indexing="ij"))

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(k**2 for k in self.k_vectors)

    @cached_property
    def x_axis(self) -> np.ndarray:
        return -self.ell / 2 + self.dx * np.arange(self.n)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.x_axis] * self.d), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        """Euclidean distance of every grid point from the box centre."""
        return np.sqrt(sum(x**2 for x in self.coords))


def make_grid(d: int, n: int, ell: float) -> Grid:
    return Grid(int(d), int(n), float(ell))


class Field:
    """Immutable complex field sampled on a :class:`Grid`."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        arr = np.array(values, dtype=np.complex128)
        if arr.size != grid.npoints:
            raise ValueError(
                f"field has {arr.size} values, grid expects {grid.npoints}"
            )
        arr = arr.reshape(grid.shape)
        if not np.all(np.isfinite(arr)):
            raise ValueError("field contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    def __repr__(self):
        return f"Field(grid={self.grid!r})"

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    @classmethod
    def from_function(cls, grid: Grid, func) -> "Field":
        """Sample ``func(*coords)`` on the grid."""
        return cls(grid, func(*grid.coords))

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def __sub__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return Field(self.grid, self.values - other.values)

    def __add__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return Field(self.grid, self.values + other.values)


def _check_same_grid(u: Field, v: Field):
    if u.grid != v.grid:
        raise ValueError(f"grid mismatch: {u.grid} vs {v.grid}")


def propagate_values(grid: Grid, values: np.ndarray, t: float) -> np.ndarray:
    """Array-level free Schrodinger flow ``exp(i t Laplacian)``."""
    if t == 0.0:
        return np.array(values, dtype=np.complex128)
    spec = np.fft.fftn(values)
    spec *= np.exp(-1j * t * grid.k2)
    return np.fft.ifftn(spec)


def free_propagator(u: Field, t: float) -> Field:
    """Apply the unitary group ``S_t = exp(i t Laplacian)`` to ``u``."""
    if not np.isfinite(t):
        raise ValueError(f"propagation time must be finite, got {t}")
    return Field(u.grid, propagate_values(u.grid, u.values, float(t)))


def gradient_values(grid: Grid, values: np.ndarray) -> list[np.ndarray]:
    spec = np.fft.fftn(values)
    return [np.fft.ifftn(1j * k * spec) for k in grid.k_vectors]


def gradient(u: Field) -> list[np.ndarray]:
    """Spectral gradient components of ``u``."""
    return gradient_values(u.grid, u.values)


def l2_norm(u: Field) -> float:
    return float(np.sqrt(np.sum(np.abs(u.values) ** 2) * u.grid.cell_volume))


def grad_norm_sq(u: Field) -> float:
    return float(
        sum(np.sum(np.abs(g) ** 2) for g in gradient(u)) * u.grid.cell_volume
    )


def h1_norm(u: Field) -> float:
    return float(np.sqrt(l2_norm(u) ** 2 + grad_norm_sq(u)))


def lp_norm(u: Field, p: float) -> float:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    total = np.sum(np.abs(u.values) ** p) * u.grid.cell_volume
    return float(total ** (1.0 / p))


def inner_product_real(u: Field, v: Field) -> float:
    """Real inner product ``Re sum u conj(v) dx^d``."""
    _check_same_grid(u, v)
    return float(np.real(np.vdot(v.values, u.values)) * u.grid.cell_volume)


def cutoff(r):
    """Radial bump: 1 for ``r <= 1``, 0 for ``r >= 2``, quintic smoothstep between."""
    s = np.clip(np.asarray(r, dtype=float) - 1.0, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def localized_l2(u: Field, R: float) -> float:
    """L2 norm of ``zeta(x/R) * u`` with the bump centred in the box."""
    if R <= 0:
        raise ValueError(f"radius must be positive, got {R}")
    if 2 * R > u.grid.ell / 2 * (1 + 1e-12):
        raise ValueError(
            f"cutoff support 2R={2 * R} does not fit inside the half box {u.grid.ell / 2}"
        )
    weight = cutoff(u.grid.radius / R)
    return float(
        np.sqrt(np.sum(np.abs(weight * u.values) ** 2) * u.grid.cell_volume)
    )


def write_field(path, u: Field) -> None:
    """Write ``u`` in the CFLD1 binary layout."""
    g = u.grid
    body = np.empty(g.npoints * 2, dtype="<f8")
    flat = u.values.reshape(-1)
    body[0::2] = flat.real
    body[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CFLD_MAGIC, g.d, g.n, g.ell))
        fh.write(body.tobytes())


def read_field(path) -> Field:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FieldFormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, d, n, ell = _HEADER.unpack_from(data)
    if magic != CFLD_MAGIC:
        raise FieldFormatError(f"{path}: bad magic {magic!r}")
    try:
        grid = Grid(d, n, ell)
    except ValueError as exc:
        raise FieldFormatError(f"{path}: invalid grid header: {exc}") from None
    expected = _HEADER.size + 16 * grid.npoints
    if len(data) != expected:
        raise FieldFormatError(
            f"{path}: expected {expected} bytes for d={d}, n={n}, got {len(data)}"
        )
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    return Field(grid, body[0::2] + 1j * body[1::2])
