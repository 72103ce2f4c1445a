"""
Norm functionals on fields and space-time fields.

Spatial integrals are plain Riemann sums (spectrally accurate for smooth
periodic integrands); time integrals use the trapezoid rule. The X^{s,b}
value is a finite-window proxy meant for relative comparisons only.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import scipy.fft as sfft
from scipy.signal.windows import tukey

from .grid import Field, SpacetimeField, TorusGrid, inverse_values, propagator_symbol
from .wiener import (
    PartitionOfUnity,
    band_mask,
    cube_index_set,
    cube_l2_masses,
    cube_symbol,
    dyadic_levels,
    lp_bump,
    lp_symbol,
    partition_sum,
)


def japanese(x) -> np.ndarray:
    """<x> = (1 + x^2)^{1/2} for a magnitude x."""
    return np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2)


def _check_exponent(p, name="p"):
    if not p >= 1:
        raise ValueError(f"{name} must be >= 1, got {p}")


def lp_norm_values(values: np.ndarray, grid: TorusGrid, p: float) -> np.ndarray:
    """L^p norm over the trailing grid axes of physical samples (batched)."""
    _check_exponent(p)
    ax = tuple(range(-grid.d, 0))
    a = np.abs(values)
    if np.isinf(p):
        return a.max(axis=ax)
    if p == 2:
        return np.sqrt(np.sum(a * a, axis=ax) * grid.cell_volume)
    return (np.sum(a**p, axis=ax) * grid.cell_volume) ** (1.0 / p)


def lp_norm(field: Field, p: float) -> float:
    """(sum |u|^p dx^d)^{1/p}; p = inf is the grid maximum, which only bounds
    the continuum supremum from below."""
    return float(lp_norm_values(field.physical().values, field.grid, p))


def sobolev_values(spec: np.ndarray, grid: TorusGrid, s: float) -> np.ndarray:
    """H^s norm from centered lattice spectra (batched over leading axes)."""
    ax = tuple(range(-grid.d, 0))
    w = (1.0 + grid.xi_sq) ** s
    return np.sqrt(np.sum(w * np.abs(spec) ** 2, axis=ax) * grid.lattice_volume)


def sobolev_norm(field: Field, s: float) -> float:
    """||<nabla>^s u||_2 with symbol <xi>^s = (1 + |xi|^2)^{s/2}."""
    return float(sobolev_values(field.frequency().values, field.grid, s))


def _lq(a: np.ndarray, q: float) -> float:
    a = np.abs(np.ravel(a))
    if np.isinf(q):
        return float(a.max())
    return float(np.sum(a**q) ** (1.0 / q))


def outside_band_fraction(field: Field, psi: PartitionOfUnity) -> float:
    """Fraction of spectral L^2 mass not reconstructed by the retained cubes."""
    grid = field.grid
    spec = np.abs(field.frequency().values) ** 2
    total = spec.sum()
    if total == 0:
        return 0.0
    miss = np.abs(1.0 - partition_sum(grid, psi, cube_index_set(grid))) ** 2
    return float((spec * miss).sum() / total)


def modulation_norm(field: Field, p: float, q: float, s: float, psi: PartitionOfUnity) -> float:
    """|| <n>^s ||psi(D - n) u||_{L^p} ||_{l^q_n} over the retained cubes."""
    _check_exponent(p)
    _check_exponent(q, "q")
    grid = field.grid
    cubes = cube_index_set(grid)
    frac = outside_band_fraction(field, psi)
    if frac > 1e-10:
        warnings.warn(f"{frac:.2e} of the spectral mass lies outside the retained cubes", stacklevel=2)
    n = cubes.indices
    weights = japanese(np.linalg.norm(n, axis=1)) ** s
    if p == 2:
        local = np.sqrt(cube_l2_masses(field, psi, cubes)).ravel()
    else:
        spec = field.frequency().values
        local = np.empty(len(cubes))
        for i, nn in enumerate(n):
            piece = inverse_values(spec * cube_symbol(grid, psi, nn), grid)
            local[i] = lp_norm_values(piece, grid, p)
    return _lq(weights * local, q)


def besov_blocks(grid: TorusGrid) -> list[np.ndarray]:
    """Symbols varphi_j, j = 0..J, with varphi_0 = P_{<=1} and varphi_j = P_{2^j}."""
    return [lp_symbol(grid, N, "eq") for N in dyadic_levels(grid)]


def besov_norm(field: Field, p: float, q: float, s: float) -> float:
    """|| 2^{js} ||varphi_j(D) u||_{L^p} ||_{l^q_j}."""
    _check_exponent(p)
    _check_exponent(q, "q")
    grid = field.grid
    spec = field.frequency().values
    vals = []
    for j, sym in enumerate(besov_blocks(grid)):
        piece = inverse_values(spec * sym, grid)
        vals.append(2.0 ** (j * s) * lp_norm_values(piece, grid, p))
    return _lq(np.array(vals), q)


def lp_square_sum_range(r_max: float = 64.0, n_probe: int = 200001) -> tuple[float, float]:
    """min / max over |xi| <= r_max of sum_j varphi_j(xi)^2 (dense radial scan)."""
    r = np.linspace(0.0, r_max, n_probe)
    total = lp_bump(r) ** 2
    N = 2
    while N / 2 <= r_max:
        total = total + (lp_bump(r / N) - lp_bump(2 * r / N)) ** 2
        N *= 2
    return float(total.min()), float(total.max())


# ----------------------------------------------------------------------------
# space-time norms
# ----------------------------------------------------------------------------


def _trapezoid_weights(n: int, dt: float) -> np.ndarray:
    w = np.full(n, dt)
    w[0] = w[-1] = dt / 2
    return w


def time_integrate(g: np.ndarray, t0: float, dt: float, T: float) -> np.ndarray:
    """Trapezoid integral over [t0, t0 + T] of samples g(t0 + k dt) (axis 0).

    A final partial interval is handled with linear interpolation.
    """
    K = g.shape[0]
    t_end = t0 + dt * (K - 1)
    if T < 0 or T > (K - 1) * dt * (1 + 1e-12) + 1e-14:
        raise ValueError(f"T={T} reaches beyond the last frame at t={t_end}")
    steps = T / dt
    full = int(np.floor(steps + 1e-9))
    frac = steps - full
    if frac < 1e-9:
        frac = 0.0
    total = 0.0
    if full >= 1:
        w = _trapezoid_weights(full + 1, dt)
        total = np.tensordot(w, g[: full + 1], axes=(0, 0))
    if frac > 0:
        g_end = (1 - frac) * g[full] + frac * g[full + 1]
        total = total + 0.5 * frac * dt * (g[full] + g_end)
    return total


def spacetime_values(values: np.ndarray, grid: TorusGrid, t0: float, dt: float, q: float, r: float, T: float):
    """L^q_t L^r_x norm of physical frames ``values`` (time on axis 0, extra batch
    axes allowed between time and grid axes)."""
    _check_exponent(q, "q")
    _check_exponent(r, "r")
    inner = lp_norm_values(values, grid, r)
    if np.isinf(q):
        K = values.shape[0]
        upto = min(K, int(np.floor(T / dt + 1e-9)) + 1)
        if T > dt * (K - 1) * (1 + 1e-12) + 1e-14:
            raise ValueError(f"T={T} reaches beyond the last frame")
        return inner[:upto].max(axis=0)
    return time_integrate(inner**q, t0, dt, T) ** (1.0 / q)


def spacetime_norm(st: SpacetimeField, q: float, r: float, T: Optional[float] = None) -> float:
    """||u||_{L^q_t L^r_x([t0, t0 + T])}, trapezoid rule in time."""
    T = st.t_end - st.t0 if T is None else T
    st = st.physical()
    return float(spacetime_values(st.values, st.grid, st.t0, st.dt, q, r, T))


def xsb_norm(st: SpacetimeField, s: float, b: float, taper: float = 0.1) -> float:
    """Discrete X^{s,b} proxy.

    The frames are multiplied by a Tukey window whose cosine tapers cover
    ``taper`` of the record at each end, transformed in time with
    u_hat(tau) = int u(t) exp(-i t tau) dt (angular tau) and in space on the
    lattice, weighted by <xi>^s <tau + 4 pi^2 |xi|^2>^b and summed with
    measure dtau / (2 pi) d xi, so b = s = 0 reproduces the space-time L^2
    norm of the windowed field exactly. The time transform is taken along
    tau + 4 pi^2 |xi|^2, so the discrete tau window is centered on the free
    dispersion relation for every xi.
    """
    K = st.n_frames
    if K < 16:
        raise ValueError(f"xsb_norm needs at least 16 frames, got {K}")
    grid = st.grid
    window = tukey(K, alpha=2 * taper).reshape((K,) + (1,) * grid.d)
    # interaction picture: sigma = tau + 4 pi^2 |xi|^2 is the transform variable
    # of S(-t) u(t), which keeps the free dispersion relation away from the
    # temporal aliasing band
    back = propagator_symbol(grid, -st.times)
    w = st.frequency().values * back * window
    wh = sfft.fft(w, axis=0, workers=-1) * st.dt
    sigma = 2 * np.pi * sfft.fftfreq(K, d=st.dt)
    weight = (1.0 + grid.xi_sq) ** s * ((1.0 + sigma**2) ** b).reshape((K,) + (1,) * grid.d)
    dsigma = 2 * np.pi / (K * st.dt)
    total = np.sum(weight * np.abs(wh) ** 2) * dsigma / (2 * np.pi) * grid.lattice_volume
    return float(np.sqrt(total))


def windowed_l2(st: SpacetimeField, taper: float = 0.1) -> float:
    """Space-time L^2 norm (Riemann sum in time) of the Tukey-windowed frames."""
    K = st.n_frames
    window = tukey(K, alpha=2 * taper)
    inner = lp_norm_values(st.physical().values, st.grid, 2)
    return float(np.sqrt(np.sum((window * inner) ** 2) * st.dt))


# ----------------------------------------------------------------------------
# exponents and specs
# ----------------------------------------------------------------------------


def critical_index(d: int, p_nl: float) -> float:
    """Scaling-critical Sobolev index d/2 - 2/(p - 1)."""
    if not p_nl > 1:
        raise ValueError("nonlinearity power must exceed 1")
    return d / 2 - 2 / (p_nl - 1)


def is_admissible(q: float, r: float, d: int, tol: float = 1e-12) -> bool:
    """Schrodinger admissibility: 2/q + d/r = d/2, 2 <= q, r <= inf, (q, r, d) != (2, inf, 2)."""
    if not (2 <= q and 2 <= r):
        return False
    if q == 2 and np.isinf(r) and d == 2:
        return False
    lhs = (0.0 if np.isinf(q) else 2 / q) + (0.0 if np.isinf(r) else d / r)
    return abs(lhs - d / 2) < tol


KINDS = ("Lp", "Hs", "Modulation", "Besov", "SpaceTime", "Xsb")


@dataclass(frozen=True)
class NormSpec:
    kind: str
    p: float = 2.0
    q: float = 2.0
    r: float = 2.0
    s: float = 0.0
    b: float = 0.0
    T: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}; expected one of {KINDS}")
        for name in ("p", "q", "r"):
            _check_exponent(getattr(self, name), name)

    def admissible(self, d: int) -> bool:
        return is_admissible(self.q, self.r, d)

    def to_dict(self) -> dict:
        return {k: (None if v is None else (str(v) if isinstance(v, float) and math.isinf(v) else v))
                for k, v in asdict(self).items()}


def evaluate(spec: NormSpec, u, psi: Optional[PartitionOfUnity] = None) -> float:
    """Dispatch ``spec`` on a :class:`Field` or :class:`SpacetimeField`."""
    if spec.kind == "Lp":
        return lp_norm(u, spec.p)
    if spec.kind == "Hs":
        return sobolev_norm(u, spec.s)
    if spec.kind == "Modulation":
        if psi is None:
            raise ValueError("modulation norm needs a partition of unity")
        return modulation_norm(u, spec.p, spec.q, spec.s, psi)
    if spec.kind == "Besov":
        return besov_norm(u, spec.p, spec.q, spec.s)
    if spec.kind == "SpaceTime":
        return spacetime_norm(u, spec.q, spec.r, spec.T)
    return xsb_norm(u, spec.s, spec.b)


def norm_record(spec: NormSpec, value: float, grid: TorusGrid, psi=None, seed=None) -> dict:
    """JSON-ready record {spec, value, grid, psi_params, seed}."""
    rec = {
        "spec": spec.to_dict(),
        "value": float(value),
        "grid": grid.to_dict(),
        "psi_params": None if psi is None else psi.to_dict(),
    }
    if seed is not None:
        rec["seed"] = int(seed)
    return rec


def band_limited_fraction(field: Field, psi: PartitionOfUnity) -> float:
    """Fraction of |u_hat|^2 mass inside the retained band mask."""
    spec = np.abs(field.frequency().values) ** 2
    total = spec.sum()
    return 1.0 if total == 0 else float((spec * band_mask(field.grid, psi)).sum() / total)
