"""
Unit-cube (Wiener) and dyadic (Littlewood-Paley) frequency decompositions.

The cube partition of unity is built from a tensor-product smooth bump chi
with chi = 1 on [-1/2, 1/2]^d and supp chi in [-1, 1]^d, normalized by its
periodization: psi = chi / sum_n chi(. - n). Normalizing makes
sum_n psi(xi - n) = 1 hold by construction, and since both chi and the
periodization factor over axes, psi is itself a tensor product
psi(xi) = prod_i psi1(xi_i). Every cube multiplier is therefore a product of
1-D profiles, which keeps the full randomization multiplier a cheap tensor
contraction.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grid import FREQUENCY, Field, GridError, TorusGrid, apply_multiplier, transform


def smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, built from exp(-1/t)."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    s = 1.0 - t
    b = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class PartitionOfUnity:
    """Smooth cube partition of unity psi.

    ``transition_width`` is the width of the region beyond |xi_i| = 1/2 over
    which the 1-D bump falls from 1 to 0, so supp psi lies in
    [-(1/2 + w), 1/2 + w]^d, inside [-1, 1]^d.
    """

    transition_width: float = 0.25
    d: int = 1

    def __post_init__(self):
        w = self.transition_width
        if not 0.0 < w < 0.5:
            raise ValueError(f"transition_width must lie in (0, 1/2), got {w}")

    def chi1(self, xi):
        w = self.transition_width
        return smooth_step((0.5 + w - np.abs(xi)) / w)

    def psi1(self, xi):
        """1-D factor of psi."""
        xi = np.asarray(xi, dtype=float)
        num = self.chi1(xi)
        den = sum(self.chi1(xi + m) for m in range(-2, 3))
        return np.divide(num, den, out=np.zeros_like(num), where=num > 0)

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        """psi on a mesh of shape ``(d, ...)``."""
        xi = np.asarray(xi, dtype=float)
        out = self.psi1(xi[0])
        for i in range(1, xi.shape[0]):
            out = out * self.psi1(xi[i])
        return out

    @property
    def support_radius(self) -> float:
        return 0.5 + self.transition_width

    @property
    def plateau_radius(self) -> float:
        """psi(xi - n) = 1 for |xi - n|_inf <= this radius."""
        return 0.5 - self.transition_width

    @cached_property
    def _square_sum_range(self) -> tuple[float, float]:
        probe = np.linspace(0.0, 1.0, 10001)
        sq = sum(self.psi1(probe - m) ** 2 for m in range(-2, 3))
        return float(sq.min()), float(sq.max())

    @property
    def c1(self) -> float:
        """min over xi of sum_n psi(xi - n)^2 (tensor product of the 1-D scan)."""
        return self._square_sum_range[0] ** self.d

    @property
    def c2(self) -> float:
        """max over xi of sum_n psi(xi - n)^2."""
        return self._square_sum_range[1] ** self.d

    def to_dict(self) -> dict:
        return {"transition_width": self.transition_width, "d": self.d}


def build_psi(transition_width: float = 0.25, d: int = 1) -> PartitionOfUnity:
    """Construct the cube partition of unity and check it is well defined."""
    psi = PartitionOfUnity(float(transition_width), int(d))
    probe = np.linspace(-1.0, 1.0, 4001)
    den = sum(psi.chi1(probe + m) for m in range(-2, 3))
    if np.min(den) <= 0:
        raise ValueError("periodized bump vanishes; transition width too small")
    return psi


@dataclass(frozen=True)
class CubeIndexSet:
    """All n in Z^d with |n|_inf <= n_max, in C (lexicographic) order."""

    d: int
    n_max: int

    @property
    def side(self) -> int:
        return 2 * self.n_max + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.d

    def __len__(self) -> int:
        return self.side**self.d

    @cached_property
    def indices(self) -> np.ndarray:
        """Array of shape ``(len, d)``."""
        r = np.arange(-self.n_max, self.n_max + 1)
        return np.array(list(itertools.product(r, repeat=self.d)), dtype=np.int64).reshape(-1, self.d)

    def __contains__(self, n) -> bool:
        n = np.atleast_1d(np.asarray(n))
        return n.shape == (self.d,) and bool(np.all(np.abs(n) <= self.n_max))

    def __iter__(self):
        return (tuple(int(v) for v in row) for row in self.indices)


def cube_index_set(grid: TorusGrid) -> CubeIndexSet:
    """Cubes strictly inside the resolved band: n_max = floor(M / 4L) - 1."""
    n_max = int(np.floor(grid.M / (4.0 * grid.L))) - 1
    if n_max < 0:
        raise GridError(f"grid {grid} resolves no unit cube (need M >= 8L)")
    return CubeIndexSet(grid.d, n_max)


def cube_profiles(grid: TorusGrid, psi: PartitionOfUnity, cubes: CubeIndexSet) -> np.ndarray:
    """Matrix ``A[k, j] = psi1(xi_k - n_j)`` with n_j = -n_max..n_max."""
    n = np.arange(-cubes.n_max, cubes.n_max + 1)
    return psi.psi1(grid.xi[:, None] - n[None, :])


def cube_symbol(grid: TorusGrid, psi: PartitionOfUnity, n) -> np.ndarray:
    """psi(xi - n) on the lattice."""
    n = np.atleast_1d(np.asarray(n, dtype=float))
    out = psi.psi1(grid.xi - n[0])
    for i in range(1, grid.d):
        out = np.multiply.outer(out, psi.psi1(grid.xi - n[i]))
    return out


def partition_sum(grid: TorusGrid, psi: PartitionOfUnity, cubes: CubeIndexSet) -> np.ndarray:
    """sum over retained cubes of psi(xi - n) on the lattice."""
    s1 = cube_profiles(grid, psi, cubes).sum(axis=1)
    out = s1
    for _ in range(1, grid.d):
        out = np.multiply.outer(out, s1)
    return out


def band_mask(grid: TorusGrid, psi: PartitionOfUnity, cubes: CubeIndexSet | None = None) -> np.ndarray:
    """Lattice points where the retained cubes sum to exactly one.

    Data generators keep spectra inside this mask so that the retained cube
    projections reconstruct them.
    """
    cubes = cubes or cube_index_set(grid)
    edge = cubes.n_max + psi.plateau_radius + 1e-12
    m1 = np.abs(grid.xi) <= edge
    out = m1
    for _ in range(1, grid.d):
        out = np.multiply.outer(out, m1)
    return out


def project_cube(field: Field, n, psi: PartitionOfUnity, cubes: CubeIndexSet | None = None) -> Field:
    """psi(D - n) applied to ``field``."""
    cubes = cubes or cube_index_set(field.grid)
    if n not in cubes:
        raise GridError(f"cube {n} lies outside the resolved band |n|_inf <= {cubes.n_max}")
    return apply_multiplier(field, cube_symbol(field.grid, psi, n))


def wiener_decomposition(field: Field, psi: PartitionOfUnity, cubes: CubeIndexSet | None = None):
    """Yield ``(n, psi(D - n) field)`` over the retained cubes, in frequency space."""
    cubes = cubes or cube_index_set(field.grid)
    spec = field.frequency()
    for n in cubes:
        yield n, Field(field.grid, spec.values * cube_symbol(field.grid, psi, n), FREQUENCY)


def cube_l2_masses(field: Field, psi: PartitionOfUnity, cubes: CubeIndexSet | None = None) -> np.ndarray:
    """||psi(D - n) u||_2^2 for every retained cube, shape ``cubes.shape``."""
    cubes = cubes or cube_index_set(field.grid)
    grid = field.grid
    A = cube_profiles(grid, psi, cubes)
    # |psi(xi - n)|^2 factorizes, so the masses are a tensor contraction
    w = np.abs(field.frequency().values) ** 2 * grid.lattice_volume
    B = A**2
    out = w
    for _ in range(grid.d):
        # contract the leading lattice axis, append cube axis at the end
        out = np.tensordot(out, B, axes=([0], [0]))
    return out


# ----------------------------------------------------------------------------
# Littlewood-Paley
# ----------------------------------------------------------------------------


def lp_bump(xi_abs: np.ndarray) -> np.ndarray:
    """Radial bump varphi: 1 on |xi| <= 1, 0 on |xi| >= 2."""
    return smooth_step(2.0 - np.asarray(xi_abs, dtype=float))


def dyadic_levels(grid: TorusGrid) -> list[int]:
    """Dyadic N = 1, 2, 4, ... up to the first N covering every lattice point."""
    r_max = np.sqrt(grid.d) * grid.nyquist
    levels = [1]
    while levels[-1] < r_max:
        levels.append(2 * levels[-1])
    return levels


def lp_symbol(grid: TorusGrid, N: int, kind: str = "eq") -> np.ndarray:
    """Symbol of P_{<=N} (``kind='leq'``) or P_N (``kind='eq'``), with P_1 = P_{<=1}."""
    if N < 1 or (int(N) & (int(N) - 1)) or int(N) != N:
        raise ValueError(f"N must be a dyadic integer >= 1, got {N}")
    if N > dyadic_levels(grid)[-1]:
        raise GridError(f"N={N} lies above the resolved band of {grid}")
    r = np.sqrt(grid.xi_sq)
    if kind == "leq" or N == 1:
        return lp_bump(r / N)
    if kind == "eq":
        return lp_bump(r / N) - lp_bump(2.0 * r / N)
    raise ValueError(f"kind must be 'leq' or 'eq', got {kind!r}")


def lp_project(field: Field, N: int, kind: str = "eq") -> Field:
    """Smooth Littlewood-Paley projection P_{<=N} or P_N."""
    return apply_multiplier(field, lp_symbol(field.grid, N, kind))


def bernstein_ratio(field: Field, N: float, p: float, q: float) -> float:
    """||f||_q / (N^{d/p - d/q} ||f||_p) for f = P_{<=N} f.

    Raises ``ZeroDivisionError`` on an identically zero field.
    """
    from .norms import lp_norm

    if not 1 <= p <= q:
        raise ValueError("need 1 <= p <= q")
    d = field.grid.d
    denom = lp_norm(field, p)
    if denom == 0:
        raise ZeroDivisionError("degenerate input: field is identically zero")
    scale = N ** (d / p - (0.0 if np.isinf(q) else d / q))
    return lp_norm(field, q) / (scale * denom)


def random_band_limited(grid: TorusGrid, psi: PartitionOfUnity, rng: np.random.Generator) -> Field:
    """Complex white spectrum restricted to the retained band (physical space)."""
    mask = band_mask(grid, psi)
    spec = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * mask
    return transform(Field(grid, spec, FREQUENCY))
