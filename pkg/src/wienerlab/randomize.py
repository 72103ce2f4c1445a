"""
Random coefficients and the Wiener randomization

    phi^omega = sum_n g_n psi(D - n) phi.

Coefficients are drawn from a counter-based generator (Philox4x32-10) keyed
by the 64-bit master seed; the counter holds the trial stream and the cube
index, so each g_n is a pure function of (seed, stream, n). Draws are
therefore reproducible regardless of batching, ordering or which other cubes
are requested.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtri

from .grid import FREQUENCY, Field, GridError, TorusGrid, forward_values, inverse_values, transform
from .wiener import CubeIndexSet, PartitionOfUnity, band_mask, cube_index_set, cube_profiles

# ----------------------------------------------------------------------------
# Philox4x32-10
# ----------------------------------------------------------------------------

_MUL0 = np.uint64(0xD2511F53)
_MUL1 = np.uint64(0xCD9E8D57)
_WEYL0 = np.uint64(0x9E3779B9)
_WEYL1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)


def philox4x32(counter, key, rounds: int = 10):
    """Vectorized Philox4x32 block function.

    ``counter`` is a 4-tuple and ``key`` a 2-tuple of arrays of 32-bit words
    (held in uint64, broadcast against each other). Returns four uint64
    arrays of 32-bit outputs.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter)
    k0, k1 = (np.asarray(k, dtype=np.uint64) & _MASK32 for k in key)
    for _ in range(rounds):
        p0 = _MUL0 * c0
        p1 = _MUL1 * c2
        c0, c1, c2, c3 = (
            ((p1 >> _SHIFT32) ^ c1 ^ k0) & _MASK32,
            p1 & _MASK32,
            ((p0 >> _SHIFT32) ^ c3 ^ k1) & _MASK32,
            p0 & _MASK32,
        )
        k0 = (k0 + _WEYL0) & _MASK32
        k1 = (k1 + _WEYL1) & _MASK32
    return c0, c1, c2, c3


_TWO53 = float(2**53)


def keyed_uniforms(seed: int, stream, code, tag: int = 0):
    """Two independent uniforms on the open interval (0, 1) per (stream, code).

    ``stream`` and ``code`` broadcast; ``code`` is a 64-bit integer label (for
    instance an encoded lattice point) and ``tag`` separates unrelated uses
    of one seed.
    """
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    code = np.asarray(code, dtype=np.uint64)
    stream = np.asarray(stream, dtype=np.uint64)
    code, stream = np.broadcast_arrays(code, stream)
    key = (np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32))
    ctr = (code & _MASK32, code >> _SHIFT32, stream & _MASK32, np.uint64(tag) + (stream >> _SHIFT32))
    o0, o1, o2, o3 = philox4x32(ctr, key)
    a = (o0 << np.uint64(21)) | (o1 >> np.uint64(11))
    b = (o2 << np.uint64(21)) | (o3 >> np.uint64(11))
    return (a.astype(float) + 0.5) / _TWO53, (b.astype(float) + 0.5) / _TWO53


def encode_lattice(points: np.ndarray) -> np.ndarray:
    """Pack integer points of shape ``(..., d)``, |entries| < 2^15, into uint64 codes."""
    points = np.asarray(points, dtype=np.int64)
    if np.any(np.abs(points) >= 2**15):
        raise ValueError("lattice coordinates must satisfy |n_i| < 2^15")
    shifted = (points + 2**15).astype(np.uint64)
    code = np.zeros(points.shape[:-1], dtype=np.uint64)
    for i in range(points.shape[-1]):
        code |= shifted[..., i] << np.uint64(16 * i)
    return code


# ----------------------------------------------------------------------------
# coefficient distributions
# ----------------------------------------------------------------------------

KINDS = ("gaussian", "bernoulli", "uniform")
COMPONENT_SD = np.sqrt(0.5)
UNIFORM_HALF_WIDTH = np.sqrt(1.5)


@dataclass(frozen=True)
class CoeffDistribution:
    """Law of the i.i.d. coefficients g_n.

    Real and imaginary parts are independent, mean zero, each with variance
    1/2 (so E|g_n|^2 = 1):

    * ``gaussian``: standard complex Gaussian;
    * ``bernoulli``: independent +-1/sqrt(2) signs;
    * ``uniform``: independent uniform components on [-a, a], a = sqrt(3/2).

    ``c_sg`` is the declared subgaussian constant, the smallest c with
    E exp(gamma X) <= exp(c gamma^2) for each real component X. For all three
    laws the supremum of log E exp(gamma X) / gamma^2 sits at gamma -> 0 and
    equals var(X) / 2 = 1/4.
    """

    kind: str = "gaussian"
    c_sg: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown coefficient law {self.kind!r}; expected one of {KINDS}")
        if self.c_sg is None:
            object.__setattr__(self, "c_sg", 0.25)

    @property
    def component_sd(self) -> float:
        return float(COMPONENT_SD)

    @property
    def support_radius(self) -> float:
        """Bound on |Re g|, |Im g| (inf for the Gaussian)."""
        return {"gaussian": np.inf, "bernoulli": float(COMPONENT_SD), "uniform": float(UNIFORM_HALF_WIDTH)}[self.kind]

    def from_uniforms(self, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
        if self.kind == "gaussian":
            return (ndtri(u1) + 1j * ndtri(u2)) * COMPONENT_SD
        if self.kind == "bernoulli":
            return (np.where(u1 < 0.5, -1.0, 1.0) + 1j * np.where(u2 < 0.5, -1.0, 1.0)) * COMPONENT_SD
        return ((2 * u1 - 1) + 1j * (2 * u2 - 1)) * UNIFORM_HALF_WIDTH

    def log_mgf(self, gamma) -> np.ndarray:
        """Closed-form log E exp(gamma X) for one real component."""
        g = np.asarray(gamma, dtype=float)
        sd = COMPONENT_SD
        if self.kind == "gaussian":
            return 0.5 * (g * sd) ** 2
        if self.kind == "bernoulli":
            x = np.abs(g) * sd
            return x + np.log1p(np.exp(-2 * x)) - np.log(2.0)
        a = np.abs(g) * UNIFORM_HALF_WIDTH
        with np.errstate(invalid="ignore", divide="ignore"):
            val = a + np.log1p(-np.exp(-2 * a)) - np.log(2 * a)
        return np.where(a == 0, 0.0, val)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c_sg": self.c_sg}


@dataclass(frozen=True, eq=False)
class RandomDraw:
    """One realization {g_n} on a cube index set, shape ``cubes.shape``."""

    seed: int
    stream: int
    cubes: CubeIndexSet
    values: np.ndarray = field(repr=False)


def sample_values(dist: CoeffDistribution, cubes: CubeIndexSet, seed: int, streams) -> np.ndarray:
    """Coefficients for each stream, shape ``(len(streams),) + cubes.shape``."""
    streams = np.atleast_1d(np.asarray(streams, dtype=np.uint64))
    codes = encode_lattice(cubes.indices)
    u1, u2 = keyed_uniforms(seed, streams[:, None], codes[None, :])
    return dist.from_uniforms(u1, u2).reshape((streams.size,) + cubes.shape)


def sample(dist: CoeffDistribution, cubes: CubeIndexSet, seed: int, stream: int = 0) -> RandomDraw:
    """Draw g_n for every n in ``cubes`` for one trial stream."""
    if len(cubes) == 0:
        raise ValueError("empty cube index set")
    vals = sample_values(dist, cubes, seed, [stream])[0]
    return RandomDraw(int(seed), int(stream), cubes, vals)


def constant_draw(cubes: CubeIndexSet, value: complex = 1.0) -> RandomDraw:
    """Deterministic draw with every g_n equal to ``value``."""
    return RandomDraw(0, 0, cubes, np.full(cubes.shape, value, dtype=complex))


@dataclass
class SubgaussianReport:
    kind: str
    c_hat: float
    c_declared: float
    passed: bool
    method: str
    gamma_at_max: float
    standard_error: float = 0.0


def verify_subgaussian(
    dist: CoeffDistribution,
    gamma_grid: Sequence[float] = tuple(np.linspace(-4, 4, 81)),
    n_samples: int = 10**6,
    seed: int = 0,
) -> SubgaussianReport:
    """Check E exp(gamma X) <= exp(c gamma^2) on ``gamma_grid``.

    Gaussian and Bernoulli use the closed-form moment generating functions;
    other laws are estimated by Monte Carlo from ``n_samples`` keyed draws of
    both components, with the symmetric estimator mean cosh(gamma X).
    ``c_hat`` is the largest log-MGF / gamma^2 seen on the grid. The Monte
    Carlo check passes when c_hat is within three standard errors of the
    declared constant.
    """
    gam = np.asarray([g for g in gamma_grid if g != 0], dtype=float)
    if gam.size == 0:
        raise ValueError("gamma grid has no nonzero entries")
    if dist.kind in ("gaussian", "bernoulli"):
        ratios = dist.log_mgf(gam) / gam**2
        i = int(np.argmax(ratios))
        c_hat = float(ratios[i])
        return SubgaussianReport(dist.kind, c_hat, dist.c_sg, c_hat <= dist.c_sg * (1 + 1e-12), "analytic", float(gam[i]))
    u1, u2 = keyed_uniforms(seed, np.arange(n_samples // 2), 0, tag=7)
    g = dist.from_uniforms(u1, u2)
    x = np.concatenate([g.real, g.imag])
    ratios = np.empty(gam.size)
    errs = np.empty(gam.size)
    for j, gm in enumerate(gam):
        c = np.cosh(gm * x)
        m = c.mean()
        ratios[j] = np.log(m) / gm**2
        errs[j] = c.std(ddof=1) / (np.sqrt(x.size) * m) / gm**2
    i = int(np.argmax(ratios))
    c_hat = float(ratios[i])
    passed = c_hat <= dist.c_sg + 3 * errs[i]
    return SubgaussianReport(dist.kind, c_hat, dist.c_sg, bool(passed), "monte-carlo", float(gam[i]), float(errs[i]))


def require_subgaussian(dist: CoeffDistribution) -> None:
    """Raise if ``dist`` fails the subgaussian check."""
    rep = verify_subgaussian(dist, n_samples=200_000)
    if not rep.passed:
        raise ValueError(
            f"{dist.kind} coefficients fail the subgaussian bound: fitted c={rep.c_hat:.4g} > declared {rep.c_declared:.4g}"
        )


# ----------------------------------------------------------------------------
# randomization
# ----------------------------------------------------------------------------


def randomization_symbol(grid: TorusGrid, psi: PartitionOfUnity, coeffs: np.ndarray, cubes: CubeIndexSet) -> np.ndarray:
    """sum_n g_n psi(xi - n) on the lattice.

    ``coeffs`` has shape ``batch + cubes.shape``; the result has shape
    ``batch + grid.shape``. The tensor-product structure of psi turns the sum
    into d successive contractions with the 1-D cube profiles.
    """
    A = cube_profiles(grid, psi, cubes)
    coeffs = np.asarray(coeffs)
    nb = coeffs.ndim - grid.d
    if nb < 0 or coeffs.shape[nb:] != cubes.shape:
        raise GridError(f"coefficient array of shape {coeffs.shape} does not match cubes {cubes.shape}")
    out = coeffs
    for _ in range(grid.d):
        out = np.tensordot(out, A, axes=([nb], [1]))
    return out


def randomize(phi: Field, draw: RandomDraw, psi: PartitionOfUnity) -> Field:
    """Wiener randomization of ``phi`` in one frequency-space pass (physical output)."""
    cubes = cube_index_set(phi.grid)
    if draw.cubes != cubes:
        raise GridError(f"draw lattice {draw.cubes} does not match the grid's cubes {cubes}")
    mult = randomization_symbol(phi.grid, psi, draw.values, cubes)
    spec = phi.frequency().values * mult
    return transform(Field(phi.grid, spec, FREQUENCY))


def randomize_batch(phi: Field, dist: CoeffDistribution, psi: PartitionOfUnity, seed: int, streams, space: str = "physical") -> np.ndarray:
    """Randomizations for many trial streams at once, shape ``(S,) + grid.shape``."""
    cubes = cube_index_set(phi.grid)
    coeffs = sample_values(dist, cubes, seed, streams)
    spec = phi.frequency().values * randomization_symbol(phi.grid, psi, coeffs, cubes)
    return spec if space == FREQUENCY else inverse_values(spec, phi.grid)


# ----------------------------------------------------------------------------
# data generators
# ----------------------------------------------------------------------------

PHASE_STREAM = 0xFFFFFFFF


def rough_modulus(grid: TorusGrid, s_decay: float) -> np.ndarray:
    """<xi>^{-(s_decay + d/2 + 0.01)}, or exp(-pi |xi|^2) for infinite ``s_decay``."""
    if np.isinf(s_decay):
        return np.exp(-np.pi * grid.xi_sq)
    return (1.0 + grid.xi_sq) ** (-(s_decay + grid.d / 2 + 0.01) / 2)


def make_rough_data(
    grid: TorusGrid,
    s_decay: float,
    seed: int = 0,
    psi: Optional[PartitionOfUnity] = None,
    phases: str = "random",
    amplitude: float = 1.0,
    envelope: Optional[float] = None,
) -> Field:
    """Field with |phi_hat(xi)| = amplitude <xi>^{-(s_decay + d/2 + 0.01)} on the
    retained band and zero outside.

    The continuum analogue lies in H^sigma exactly for sigma < s_decay + 0.01.
    Phases are keyed per lattice point (xi_k = k / 2L does not depend on M),
    so grids sharing L agree on every common lattice point. ``phases='aligned'``
    sets every phase to zero, concentrating the field at x = 0.

    ``envelope`` multiplies the periodic field by exp(-pi |x|^2 / envelope^2)
    and restores the band limit, giving data localized in space as on R^d.
    The spectral decay is unchanged above frequency ~ 1 / envelope.
    """
    psi = psi or PartitionOfUnity(0.25, grid.d)
    mod = amplitude * rough_modulus(grid, s_decay) * band_mask(grid, psi)
    if phases == "aligned":
        spec = mod.astype(complex)
    elif phases == "random":
        pts = np.stack(np.meshgrid(*([grid.k] * grid.d), indexing="ij"), axis=-1)
        u1, _ = keyed_uniforms(seed, PHASE_STREAM, encode_lattice(pts), tag=1)
        spec = mod * np.exp(2j * np.pi * u1)
    else:
        raise ValueError(f"phases must be 'random' or 'aligned', got {phases!r}")
    out = transform(Field(grid, spec, FREQUENCY))
    if envelope is not None:
        if not envelope > 0:
            raise ValueError("envelope width must be positive")
        win = out.values * np.exp(-np.pi * grid.x_sq / envelope**2)
        spec = forward_values(win, grid) * band_mask(grid, psi)
        out = transform(Field(grid, spec, FREQUENCY))
    return out


def gaussian_data(grid: TorusGrid, width: float = 1.0, amplitude: float = 1.0) -> Field:
    """amplitude * exp(-pi |x|^2 / width^2)."""
    return Field(grid, amplitude * np.exp(-np.pi * grid.x_sq / width**2) + 0j)
