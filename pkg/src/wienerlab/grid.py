"""
Periodic box discretization of R^d.

The box is [-L, L)^d sampled with M points per axis. Frequencies live on the
centered lattice xi_k = k / (2L), k = -M/2, ..., M/2 - 1, and the Fourier
transform uses the convention

    u_hat(xi) = int u(x) exp(-2 pi i x . xi) dx,

so the discrete forward transform is a Riemann sum with weight dx^d and the
inverse carries the lattice weight (1 / 2L)^d. With this convention the
Laplacian has symbol -4 pi^2 |xi|^2 and the free Schrodinger group
S(t) = exp(i t Laplacian) has symbol exp(-4 pi^2 i t |xi|^2).

Frequency-space arrays are always stored in centered lattice order; the
FFT-native ordering never leaves this module.
"""
from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Union

import numpy as np
import scipy.fft as sfft

PHYSICAL = "physical"
FREQUENCY = "frequency"

DEFAULT_MEMORY_BUDGET = 2 * 1024**3
MEMORY_BUDGET_ENV = "WIENERLAB_MEMORY_BUDGET"
FIELD_FORMAT_VERSION = 1


class GridError(ValueError):
    """Invalid grid parameters or incompatible fields."""


def memory_budget() -> int:
    """Memory budget in bytes, overridable through ``WIENERLAB_MEMORY_BUDGET``."""
    raw = os.environ.get(MEMORY_BUDGET_ENV)
    if raw is None:
        return DEFAULT_MEMORY_BUDGET
    return int(float(raw))


@dataclass(frozen=True)
class TorusGrid:
    """Periodic box [-L, L)^d with M points per axis.

    Use :func:`make_grid` to construct one with validation.
    """

    d: int
    M: int
    L: float

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.M,) * self.d

    @property
    def size(self) -> int:
        return self.M**self.d

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.M

    @property
    def dxi(self) -> float:
        """Lattice spacing 1 / (2L) in frequency."""
        return 1.0 / (2.0 * self.L)

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    @property
    def lattice_volume(self) -> float:
        return self.dxi**self.d

    @property
    def nyquist(self) -> float:
        """Largest resolved frequency per axis, M / (4L)."""
        return self.M / (4.0 * self.L)

    @property
    def points_per_unit_cube(self) -> float:
        return (2.0 * self.L) ** self.d

    @cached_property
    def x(self) -> np.ndarray:
        """1-D physical coordinates, shared by every axis."""
        return -self.L + self.dx * np.arange(self.M)

    @cached_property
    def k(self) -> np.ndarray:
        """1-D centered integer lattice indices."""
        return np.arange(-self.M // 2, self.M // 2)

    @cached_property
    def xi(self) -> np.ndarray:
        """1-D centered frequency lattice."""
        return self.k * self.dxi

    def mesh(self, space: str = FREQUENCY) -> np.ndarray:
        """Coordinate mesh of shape ``(d, M, ..., M)``."""
        axis = self.xi if space == FREQUENCY else self.x
        return np.stack(np.meshgrid(*([axis] * self.d), indexing="ij"))

    @cached_property
    def xi_sq(self) -> np.ndarray:
        """|xi|^2 on the full lattice."""
        return _outer_sum([self.xi**2] * self.d)

    @cached_property
    def x_sq(self) -> np.ndarray:
        return _outer_sum([self.x**2] * self.d)

    @cached_property
    def _sign(self) -> np.ndarray:
        # (-1)^k per axis: phase from the box starting at -L instead of 0
        s = np.where(self.k % 2 == 0, 1.0, -1.0)
        return _outer_prod([s] * self.d)

    def to_dict(self) -> dict:
        return {"d": self.d, "M": self.M, "L": self.L}


def _outer_sum(arrays):
    out = arrays[0]
    for a in arrays[1:]:
        out = np.add.outer(out, a)
    return out


def _outer_prod(arrays):
    out = arrays[0]
    for a in arrays[1:]:
        out = np.multiply.outer(out, a)
    return out


def make_grid(d: int, M: int, L: float, allow_large: bool = False) -> TorusGrid:
    """Validated constructor for :class:`TorusGrid`.

    Parameters
    ----------
    d : int
        Dimension, 1 to 4.
    M : int
        Points per axis, a power of two, at least 8.
    L : float
        Half-extent of the box; at least 1 so that every unit frequency cube
        contains at least two lattice points per axis.
    allow_large : bool
        Lift the default cap of M = 32 in four dimensions. The memory budget
        still applies.
    """
    d = int(d)
    M = int(M)
    L = float(L)
    if d not in (1, 2, 3, 4):
        raise GridError(f"d must be in 1..4, got {d}")
    if M < 8 or M & (M - 1):
        raise GridError(f"M must be a power of two >= 8, got {M}")
    if not L >= 1.0:
        raise GridError(f"L must be >= 1, got {L}")
    nbytes = 16 * M**d
    budget = memory_budget()
    if nbytes > budget:
        raise GridError(
            f"a field on M={M}, d={d} needs {nbytes} bytes, over the memory budget of {budget}"
        )
    if d == 4 and M > 32 and not allow_large:
        raise GridError("d=4 grids are capped at M=32 unless allow_large=True")
    return TorusGrid(d, M, L)


# ----------------------------------------------------------------------------
# array-level transforms: trailing d axes are the grid, leading axes are batch
# ----------------------------------------------------------------------------


def _axes(grid):
    return tuple(range(-grid.d, 0))


def forward_values(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Physical samples -> centered lattice transform, batched over leading axes."""
    ax = _axes(grid)
    out = sfft.fftn(values, axes=ax, workers=-1)
    out = sfft.fftshift(out, axes=ax)
    out *= grid._sign * grid.cell_volume
    return out


def inverse_values(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Centered lattice transform -> physical samples, batched over leading axes."""
    ax = _axes(grid)
    tmp = sfft.ifftshift(values * grid._sign, axes=ax)
    out = sfft.ifftn(tmp, axes=ax, workers=-1)
    out *= grid.size * grid.lattice_volume
    return out


@dataclass(frozen=True, eq=False)
class Field:
    """Complex scalar function on a :class:`TorusGrid`."""

    grid: TorusGrid
    values: np.ndarray
    space: str = PHYSICAL

    def __post_init__(self):
        if self.space not in (PHYSICAL, FREQUENCY):
            raise GridError(f"unknown space tag {self.space!r}")
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != self.grid.shape:
            raise GridError(f"values of shape {vals.shape} do not fit grid shape {self.grid.shape}")
        object.__setattr__(self, "values", vals)

    def physical(self) -> Field:
        return self if self.space == PHYSICAL else transform(self)

    def frequency(self) -> Field:
        return self if self.space == FREQUENCY else transform(self)

    def __add__(self, other: Field) -> Field:
        _check_same_grid(self.grid, other.grid)
        if other.space != self.space:
            other = transform(other)
        return Field(self.grid, self.values + other.values, self.space)

    def __sub__(self, other: Field) -> Field:
        return self + (-1.0) * other

    def __mul__(self, scalar) -> Field:
        return Field(self.grid, self.values * scalar, self.space)

    __rmul__ = __mul__

    def l2_norm(self) -> float:
        """L^2 norm, computed in whichever space the field lives in."""
        w = self.grid.cell_volume if self.space == PHYSICAL else self.grid.lattice_volume
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * w))


def _check_same_grid(a, b):
    if a != b:
        raise GridError(f"grid mismatch: {a} vs {b}")


def transform(field: Field) -> Field:
    """Fourier transform toggling the space tag (forward or inverse)."""
    if field.space == PHYSICAL:
        return Field(field.grid, forward_values(field.values, field.grid), FREQUENCY)
    return Field(field.grid, inverse_values(field.values, field.grid), PHYSICAL)


def from_function(grid: TorusGrid, f: Callable[..., np.ndarray], space: str = PHYSICAL) -> Field:
    """Sample ``f(*coords)`` on the grid (physical x or frequency xi)."""
    return Field(grid, f(*grid.mesh(space)), space)


Symbol = Union[Callable[[np.ndarray], np.ndarray], np.ndarray, float, complex]


def evaluate_symbol(grid: TorusGrid, symbol: Symbol) -> np.ndarray:
    """Evaluate a multiplier symbol on the centered lattice.

    ``symbol`` may be a scalar, an array already on the lattice, or a
    callable taking the ``(d, M, ..., M)`` frequency mesh.
    """
    if callable(symbol):
        m = symbol(grid.mesh(FREQUENCY))
    else:
        m = symbol
    m = np.broadcast_to(np.asarray(m), grid.shape)
    if not np.all(np.isfinite(m)):
        raise GridError("multiplier symbol has non-finite values on the lattice")
    return m


def apply_multiplier(field: Field, symbol: Symbol) -> Field:
    """Fourier multiplier m(D): inverse transform of m(xi) u_hat(xi).

    The output lives in the same space as the input.
    """
    m = evaluate_symbol(field.grid, symbol)
    spec = field.frequency()
    out = Field(field.grid, spec.values * m, FREQUENCY)
    return out if field.space == FREQUENCY else transform(out)


def propagator_symbol(grid: TorusGrid, t) -> np.ndarray:
    """exp(-4 pi^2 i t |xi|^2); ``t`` may be an array of times (leading axis)."""
    t = np.asarray(t, dtype=float)
    return np.exp(-4j * np.pi**2 * np.multiply.outer(t, grid.xi_sq))


def propagate(field: Field, t: float) -> Field:
    """Free Schrodinger evolution S(t) = exp(i t Laplacian)."""
    return apply_multiplier(field, propagator_symbol(field.grid, t))


def gaussian_evolution(x: np.ndarray, t: float) -> np.ndarray:
    """Closed form of S(t) applied to exp(-pi x^2) in one dimension.

    With xi-symbol exp(-pi (1 + 4 pi i t) xi^2) the inverse transform is
    a^{-1/2} exp(-pi x^2 / a), a = 1 + 4 pi i t (principal branch).
    """
    a = 1.0 + 4j * np.pi * t
    return np.exp(-np.pi * x**2 / a) / np.sqrt(a)


def boundary_amplitude(field: Field) -> float:
    """Max of |u| on the outermost layer of grid cells, relative to max |u|."""
    u = np.abs(field.physical().values)
    peak = u.max()
    if peak == 0:
        return 0.0
    edge = 0.0
    for axis in range(field.grid.d):
        edge = max(edge, np.take(u, 0, axis=axis).max(), np.take(u, -1, axis=axis).max())
    return float(edge / peak)


def check_decay(field: Field, tol: float = 1e-10) -> bool:
    """Warn and return False when the field has not decayed at the box edge."""
    amp = boundary_amplitude(field)
    if amp >= tol:
        warnings.warn(
            f"field reaches {amp:.2e} of its peak at the box boundary; periodic wrap-around is not negligible",
            stacklevel=2,
        )
        return False
    return True


@dataclass(frozen=True, eq=False)
class SpacetimeField:
    """Uniformly sampled sequence of fields u(t0 + k dt), k = 0..K-1.

    ``values`` has shape ``(K, M, ..., M)``; every frame shares ``grid`` and
    the ``space`` tag.
    """

    grid: TorusGrid
    values: np.ndarray
    t0: float = 0.0
    dt: float = 1.0
    space: str = PHYSICAL

    def __post_init__(self):
        if not self.dt > 0:
            raise GridError("dt must be positive")
        vals = np.asarray(self.values, dtype=complex)
        if vals.ndim != self.grid.d + 1 or vals.shape[1:] != self.grid.shape:
            raise GridError(f"frames of shape {vals.shape[1:]} do not fit grid {self.grid.shape}")
        object.__setattr__(self, "values", vals)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_frames)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.n_frames - 1)

    def frame(self, k: int) -> Field:
        return Field(self.grid, self.values[k], self.space)

    @property
    def frames(self) -> list[Field]:
        return [self.frame(k) for k in range(self.n_frames)]

    def physical(self) -> SpacetimeField:
        if self.space == PHYSICAL:
            return self
        return SpacetimeField(self.grid, inverse_values(self.values, self.grid), self.t0, self.dt, PHYSICAL)

    def frequency(self) -> SpacetimeField:
        if self.space == FREQUENCY:
            return self
        return SpacetimeField(self.grid, forward_values(self.values, self.grid), self.t0, self.dt, FREQUENCY)

    @classmethod
    def from_frames(cls, frames: list[Field], t0: float = 0.0, dt: float = 1.0) -> SpacetimeField:
        grid = frames[0].grid
        space = frames[0].space
        for f in frames[1:]:
            _check_same_grid(grid, f.grid)
        vals = np.stack([(f if f.space == space else transform(f)).values for f in frames])
        return cls(grid, vals, t0, dt, space)


def free_evolution(phi: Field, times) -> SpacetimeField:
    """Frames S(t_k) phi for uniformly spaced ``times``."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1:
        raise GridError("times must be a non-empty 1-D array")
    dt = times[1] - times[0] if times.size > 1 else 1.0
    if times.size > 2 and not np.allclose(np.diff(times), dt, rtol=1e-9, atol=1e-14):
        raise GridError("times must be uniformly spaced")
    spec = phi.frequency().values
    frames = propagator_symbol(phi.grid, times) * spec
    return SpacetimeField(phi.grid, inverse_values(frames, phi.grid), float(times[0]), float(dt), PHYSICAL)


# ----------------------------------------------------------------------------
# Field file format: raw little-endian complex128 + JSON sidecar
# ----------------------------------------------------------------------------


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def write_field(field: Field, path) -> Path:
    """Write ``field`` as raw complex128 (row-major, centered lattice) plus a
    ``<path>.json`` sidecar. Returns the data path."""
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(field.values, dtype="<c16").tobytes())
    meta = {**field.grid.to_dict(), "space": field.space, "version": FIELD_FORMAT_VERSION}
    _sidecar(path).write_text(json.dumps(meta))
    return path


def read_field(path, check_boundary: bool = False) -> Field:
    path = Path(path)
    meta = json.loads(_sidecar(path).read_text())
    if meta.get("version") != FIELD_FORMAT_VERSION:
        raise GridError(f"unsupported field format version {meta.get('version')!r}")
    grid = make_grid(meta["d"], meta["M"], meta["L"], allow_large=True)
    raw = np.frombuffer(path.read_bytes(), dtype="<c16")
    if raw.size != grid.size:
        raise GridError(f"{path} holds {raw.size} values, expected {grid.size}")
    f = Field(grid, raw.reshape(grid.shape).astype(complex), meta["space"])
    if check_boundary:
        check_decay(f)
    return f
