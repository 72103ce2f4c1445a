"""
Monte Carlo probes of the probabilistic estimates.

Each experiment draws many Wiener randomizations of a fixed function,
evaluates a statistic per draw and summarizes the empirical exceedance
curve P(X > lambda). Subgaussian behaviour shows up as a straight line of
log P against lambda^2; the constants are always fitted, never assumed.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from scipy.special import gammaln
from statsmodels.stats.proportion import proportion_confint

from . import __version__
from .grid import FREQUENCY, Field, TorusGrid, inverse_values, make_grid, memory_budget, propagator_symbol, transform
from .norms import is_admissible, lp_norm, lp_norm_values, sobolev_norm, sobolev_values, spacetime_norm, time_integrate
from .randomize import (
    CoeffDistribution,
    gaussian_data,
    keyed_uniforms,
    make_rough_data,
    randomize_batch,
    require_subgaussian,
)
from .wiener import PartitionOfUnity, build_psi

FIT_BAND = (1e-3, 0.5)


# ----------------------------------------------------------------------------
# tail curves
# ----------------------------------------------------------------------------


def wilson_interval(k, n, alpha: float = 0.05):
    """Wilson score interval for k successes in n trials."""
    lo, hi = proportion_confint(np.asarray(k), n, alpha=alpha, method="wilson")
    return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)


def fit_tail(lam: np.ndarray, p: np.ndarray, band=FIT_BAND):
    """Least squares log p = log C - c lambda^2 over points with p in ``band``.

    Returns ``(C, c, r2, n_points)``; NaNs when fewer than three points fall
    in the band.
    """
    lam = np.asarray(lam, dtype=float)
    p = np.asarray(p, dtype=float)
    sel = (p >= band[0]) & (p <= band[1])
    n = int(sel.sum())
    if n < 3:
        return math.nan, math.nan, math.nan, n
    fit = stats.linregress(lam[sel] ** 2, np.log(p[sel]))
    return float(np.exp(fit.intercept)), float(-fit.slope), float(fit.rvalue**2), n


@dataclass
class TailCurve:
    """Empirical exceedance probabilities with Wilson intervals and the
    subgaussian fit P ~ C exp(-c lambda^2) over ``band``."""

    lambda_grid: np.ndarray
    exceed_prob: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    n_trials: int
    C_hat: float
    c_hat: float
    fit_r2: float
    n_fit: int
    band: tuple = FIT_BAND
    statistic: dict = field(default_factory=dict)
    scale: float = 1.0

    @classmethod
    def from_samples(cls, samples: np.ndarray, lambda_grid: Sequence[float], band=FIT_BAND, statistic=None, scale: float = 1.0):
        x = np.sort(np.asarray(samples, dtype=float))
        lam = np.asarray(lambda_grid, dtype=float)
        if lam.ndim != 1 or lam.size == 0 or np.any(np.diff(lam) <= 0):
            raise ValueError("lambda grid must be a non-empty ascending sequence")
        n = x.size
        if n == 0:
            raise ValueError("no samples")
        k = n - np.searchsorted(x, lam, side="right")
        p = k / n
        lo, hi = wilson_interval(k, n)
        C, c, r2, nf = fit_tail(lam, p, band)
        return cls(lam, p, lo, hi, n, C, c, r2, nf, tuple(band), statistic or {}, scale)

    def fit_record(self) -> dict:
        return {
            "C_hat": self.C_hat, "c_hat": self.c_hat, "fit_r2": self.fit_r2,
            "n_fit_points": self.n_fit, "band": list(self.band),
            "n_trials": self.n_trials, "scale": self.scale, "statistic": self.statistic,
        }

    def to_csv(self) -> str:
        rows = ["lambda,p_hat,ci_lo,ci_hi"]
        for r in zip(self.lambda_grid, self.exceed_prob, self.ci_lo, self.ci_hi):
            rows.append(",".join(repr(float(v)) for v in r))
        return "\n".join(rows) + "\n"


def modulus_tail(dist: CoeffDistribution, t) -> np.ndarray:
    """P(|g| > t) for a single coefficient."""
    t = np.asarray(t, dtype=float)
    if dist.kind == "gaussian":
        return np.exp(-np.clip(t, 0, None) ** 2)
    if dist.kind == "bernoulli":
        return np.where(t < 1.0, 1.0, 0.0)
    a = dist.support_radius
    tt = np.clip(t, 0, None)
    # area of the disc of radius t inside the square [-a, a]^2
    with np.errstate(invalid="ignore"):
        mid = tt**2 * (np.pi - 4 * np.arccos(np.minimum(a / np.maximum(tt, 1e-300), 1.0))) + 4 * a * np.sqrt(np.maximum(tt**2 - a**2, 0))
    area = np.where(tt <= a, np.pi * tt**2, np.where(tt >= a * np.sqrt(2), 4 * a * a, mid))
    return 1.0 - area / (4 * a * a)


# ----------------------------------------------------------------------------
# Khintchine
# ----------------------------------------------------------------------------


@dataclass
class KhintchineTable:
    p: np.ndarray
    ratio: np.ndarray
    standard_error: np.ndarray
    flagged: np.ndarray
    alpha: float
    trials: int
    kind: str

    def rows(self):
        return [
            {"p": float(p), "ratio": float(r), "se": float(s), "flagged": bool(f)}
            for p, r, s, f in zip(self.p, self.ratio, self.standard_error, self.flagged)
        ]


def gaussian_modulus_moment(p) -> np.ndarray:
    """(E|g|^p)^{1/p} = Gamma(p/2 + 1)^{1/p} for a unit-variance complex Gaussian."""
    p = np.asarray(p, dtype=float)
    return np.exp(gammaln(p / 2 + 1) / p)


def khintchine_moments(
    dist: CoeffDistribution,
    c_vec,
    p_list: Sequence[float] = (2, 4, 8, 16),
    trials: int = 100_000,
    seed: int = 0,
    chunk: int = 20_000,
) -> KhintchineTable:
    """Monte Carlo ||sum_n g_n c_n||_{L^p(Omega)} / ||c||_2 for each p.

    Standard errors come from the delta method applied to the sample mean
    of |S|^p; entries with relative error above 10% are flagged. ``alpha``
    is the slope of log ratio against log p.
    """
    p_arr = np.asarray(p_list, dtype=float)
    if p_arr.size == 0 or np.any(p_arr < 2) or np.any(p_arr > 64):
        raise ValueError("p values must lie in [2, 64]")
    if trials < 2:
        raise ValueError("need at least two trials")
    c = np.asarray(c_vec, dtype=complex).ravel()
    cn = float(np.linalg.norm(c))
    if cn == 0:
        raise ValueError("coefficient vector is zero")
    codes = np.arange(c.size, dtype=np.uint64)
    s1 = np.zeros(p_arr.size)
    s2 = np.zeros(p_arr.size)
    for start in range(0, trials, chunk):
        streams = np.arange(start, min(trials, start + chunk), dtype=np.uint64)
        u1, u2 = keyed_uniforms(seed, streams[:, None], codes[None, :], tag=3)
        S = np.abs(dist.from_uniforms(u1, u2) @ c) / cn
        for j, p in enumerate(p_arr):
            sp = S**p
            s1[j] += sp.sum()
            s2[j] += (sp * sp).sum()
    m = s1 / trials
    var = np.maximum(s2 / trials - m * m, 0.0) * trials / (trials - 1)
    rel = np.sqrt(var / trials) / m
    ratio = m ** (1 / p_arr)
    se = ratio * rel / p_arr
    alpha = float(np.polyfit(np.log(p_arr), np.log(ratio), 1)[0]) if p_arr.size > 1 else math.nan
    return KhintchineTable(p_arr, ratio, se, rel > 0.1, alpha, int(trials), dist.kind)


# ----------------------------------------------------------------------------
# statistics
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class HsNorm:
    s: float

    kind = "HsNorm"

    def evaluate(self, spec: np.ndarray, grid: TorusGrid) -> np.ndarray:
        return sobolev_values(spec, grid, self.s)

    def reference(self, phi: Field) -> float:
        return sobolev_norm(phi, self.s)

    def to_dict(self):
        return {"kind": self.kind, "s": self.s}


@dataclass(frozen=True)
class LpNorm:
    p: float

    kind = "LpNorm"

    def evaluate(self, spec: np.ndarray, grid: TorusGrid) -> np.ndarray:
        return lp_norm_values(inverse_values(spec, grid), grid, self.p)

    def reference(self, phi: Field) -> float:
        return phi.l2_norm()

    def to_dict(self):
        return {"kind": self.kind, "p": self.p}


@dataclass(frozen=True)
class LocalStrichartz:
    """||S(t) phi^omega||_{L^q([0, T]) L^r}, trapezoid in time."""

    q: float
    r: float
    T: float
    n_steps: int = 64

    kind = "LocalStrichartz"

    def __post_init__(self):
        if not (2 <= self.q < math.inf and 2 <= self.r < math.inf):
            raise ValueError("need 2 <= q, r < inf")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.n_steps < 2:
            raise ValueError("need at least two time steps")

    @property
    def window(self) -> float:
        return self.T

    def evaluate(self, spec: np.ndarray, grid: TorusGrid) -> np.ndarray:
        dt = self.window / self.n_steps
        inner = np.empty((self.n_steps + 1,) + spec.shape[: spec.ndim - grid.d])
        for k in range(self.n_steps + 1):
            frame = inverse_values(spec * propagator_symbol(grid, k * dt), grid)
            inner[k] = lp_norm_values(frame, grid, self.r)
        return time_integrate(inner**self.q, 0.0, dt, self.window) ** (1 / self.q)

    def reference(self, phi: Field) -> float:
        return phi.l2_norm()

    def to_dict(self):
        return {"kind": self.kind, "q": self.q, "r": self.r, "T": self.T, "n_steps": self.n_steps}


@dataclass(frozen=True)
class GlobalStrichartz(LocalStrichartz):
    """Long-window proxy for the global norm with spatial exponent r_tilde.

    The integral runs over [0, T_max] only; on a periodic box waves wrap
    around, so T_max should stay below the box crossing time. The value on
    [0, T_max / 2] is kept alongside for a saturation check.
    """

    kind = "GlobalStrichartz"

    @property
    def T_max(self) -> float:
        return self.T

    def to_dict(self):
        return {"kind": self.kind, "q": self.q, "r_tilde": self.r, "T_max": self.T, "n_steps": self.n_steps}


def statistic_from_dict(d: dict):
    kind = d["kind"]
    if kind == "HsNorm":
        return HsNorm(float(d["s"]))
    if kind == "LpNorm":
        return LpNorm(float(d["p"]))
    if kind == "LocalStrichartz":
        return LocalStrichartz(float(d["q"]), float(d["r"]), float(d["T"]), int(d.get("n_steps", 64)))
    if kind == "GlobalStrichartz":
        return GlobalStrichartz(float(d["q"]), float(d.get("r_tilde", d.get("r"))), float(d.get("T_max", d.get("T"))), int(d.get("n_steps", 64)))
    raise ValueError(f"unknown statistic {kind!r}")


# ----------------------------------------------------------------------------
# manifests and data
# ----------------------------------------------------------------------------


@dataclass
class ExperimentManifest:
    """Everything needed to reproduce a Monte Carlo experiment bit for bit."""

    grid: dict = field(default_factory=lambda: {"d": 1, "M": 128, "L": 2.0})
    psi: dict = field(default_factory=lambda: {"transition_width": 0.25})
    dist: dict = field(default_factory=lambda: {"kind": "gaussian"})
    phi: dict = field(default_factory=lambda: {"kind": "rough", "s_decay": 1.0, "seed": 0})
    statistic: dict = field(default_factory=lambda: {"kind": "HsNorm", "s": 0.8})
    T: Optional[float] = None
    trials: int = 20_000
    master_seed: int = 0
    normalize: bool = True
    lambda_grid: Optional[list] = None
    version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentManifest":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown manifest fields: {sorted(extra)}")
        return cls(**d)

    def make_grid(self) -> TorusGrid:
        g = self.grid
        return make_grid(int(g["d"]), int(g["M"]), float(g["L"]))

    def make_psi(self) -> PartitionOfUnity:
        return build_psi(float(self.psi.get("transition_width", 0.25)), int(self.grid["d"]))

    def make_dist(self) -> CoeffDistribution:
        return CoeffDistribution(self.dist.get("kind", "gaussian"), self.dist.get("c_sg"))


def plateau_bump(grid: TorusGrid, psi: PartitionOfUnity, width: float = 0.1, amplitude: float = 1.0) -> Field:
    """Gaussian spectrum cut to the plateau of the cube at 0, where psi = 1 and
    every other cube vanishes; its randomization is g_0 times itself."""
    spec = amplitude * np.exp(-np.pi * grid.xi_sq / width**2)
    m1 = np.abs(grid.xi) <= psi.plateau_radius
    mask = m1
    for _ in range(1, grid.d):
        mask = np.multiply.outer(mask, m1)
    return transform(Field(grid, spec * mask, FREQUENCY))


def build_phi(spec: dict, grid: TorusGrid, psi: PartitionOfUnity) -> Field:
    """Data generator from a manifest ``phi`` block."""
    kind = spec.get("kind", "rough")
    amp = float(spec.get("amplitude", 1.0))
    if kind == "rough":
        env = spec.get("envelope")
        return make_rough_data(
            grid, float(spec.get("s_decay", 1.0)), seed=int(spec.get("seed", 0)), psi=psi,
            phases=spec.get("phases", "random"), amplitude=amp, envelope=None if env is None else float(env),
        )
    if kind == "gaussian":
        return gaussian_data(grid, float(spec.get("width", 1.0)), amp)
    if kind == "plateau":
        return plateau_bump(grid, psi, float(spec.get("width", 0.1)), amp)
    raise ValueError(f"unknown phi generator {kind!r}")


def _batch_size(grid: TorusGrid, requested: Optional[int]) -> int:
    if requested:
        return int(requested)
    return int(max(1, min(4096, memory_budget() // (16 * grid.size * 6))))


def sample_statistic(statistic, phi: Field, dist: CoeffDistribution, psi: PartitionOfUnity, seed: int, trials: int, batch: Optional[int] = None) -> np.ndarray:
    """Statistic of phi^omega for trial streams 0..trials-1."""
    grid = phi.grid
    b = _batch_size(grid, batch)
    out = np.empty(trials)
    for start in range(0, trials, b):
        streams = np.arange(start, min(trials, start + b))
        spec = randomize_batch(phi, dist, psi, seed, streams, space=FREQUENCY)
        out[start : start + streams.size] = statistic.evaluate(spec, grid)
    return out


def tail_experiment(statistic, manifest: ExperimentManifest, batch: Optional[int] = None, return_samples: bool = False):
    """Run the manifest's trials and summarize P(X > lambda) as a TailCurve.

    With ``manifest.normalize`` the statistic is divided by the matching
    deterministic norm of phi (H^s for HsNorm, L^2 otherwise), so the fitted
    c is comparable across data. Without an explicit lambda grid, 64 points
    span [0, max X].
    """
    if statistic is None:
        statistic = statistic_from_dict(manifest.statistic)
    elif isinstance(statistic, dict):
        statistic = statistic_from_dict(statistic)
    trials = int(manifest.trials)
    if trials < 1:
        raise ValueError("trials must be positive")
    if trials * FIT_BAND[0] < 1:
        raise ValueError(f"{trials} trials cannot resolve probabilities down to {FIT_BAND[0]}")
    grid = manifest.make_grid()
    psi = manifest.make_psi()
    dist = manifest.make_dist()
    require_subgaussian(dist)
    phi = build_phi(manifest.phi, grid, psi)
    x = sample_statistic(statistic, phi, dist, psi, int(manifest.master_seed), trials, batch)
    scale = 1.0
    if manifest.normalize:
        scale = statistic.reference(phi)
        if scale == 0:
            raise ValueError("phi is zero; cannot normalize")
        x = x / scale
    lam = manifest.lambda_grid
    if lam is None:
        lam = np.linspace(0.0, float(x.max()), 64)
    curve = TailCurve.from_samples(x, lam, statistic=statistic.to_dict(), scale=scale)
    return (curve, x) if return_samples else curve


@dataclass
class ScalingReport:
    T: np.ndarray
    c_hat: np.ndarray
    fit_r2: np.ndarray
    slope: float
    expected: float
    curves: list

    def to_dict(self):
        return {
            "T": self.T.tolist(), "c_hat": self.c_hat.tolist(), "fit_r2": self.fit_r2.tolist(),
            "slope": self.slope, "expected": self.expected,
        }


def strichartz_T_scaling(
    q: float,
    r: float,
    T_list: Sequence[float],
    manifest: ExperimentManifest,
    n_steps: int = 64,
    max_dt: Optional[float] = None,
    batch: Optional[int] = None,
) -> ScalingReport:
    """Fit c(T) of the local Strichartz tail for each T and regress log c on
    log T; the expected slope is -2/q.

    Each T uses ``n_steps`` time steps, raised as needed so the step never
    exceeds ``max_dt``.
    """
    if math.isinf(q):
        raise ValueError("q = inf is excluded; need q < inf")
    T_arr = np.asarray(sorted(T_list), dtype=float)
    if T_arr.size < 2 or T_arr[-1] / T_arr[0] < 10 * (1 - 1e-12):
        raise ValueError("T_list must span at least one decade")
    curves = []
    for T in T_arr:
        ns = n_steps if max_dt is None else max(n_steps, int(math.ceil(T / max_dt - 1e-9)))
        st = LocalStrichartz(q, r, float(T), ns)
        curves.append(tail_experiment(st, manifest, batch))
    c = np.array([cv.c_hat for cv in curves])
    r2 = np.array([cv.fit_r2 for cv in curves])
    if not np.all(np.isfinite(c)) or np.any(c <= 0):
        raise ValueError(f"tail fit failed for some T: c_hat = {c}")
    slope = float(np.polyfit(np.log(T_arr), np.log(c), 1)[0])
    return ScalingReport(T_arr, c, r2, slope, -2.0 / q, curves)


def deterministic_strichartz(phi: Field, q: float, r: float, T: float, n_steps: int = 256, override: bool = False) -> float:
    """||S(t) phi||_{L^q([0, T]) L^r} / ||phi||_2 for an admissible pair."""
    if not override and not is_admissible(q, r, phi.grid.d):
        raise ValueError(f"(q, r) = ({q}, {r}) is not admissible in d={phi.grid.d}")
    nrm = phi.l2_norm()
    if nrm == 0:
        raise ValueError("phi is zero")
    from .grid import free_evolution

    st = free_evolution(phi, np.linspace(0.0, T, n_steps + 1))
    return spacetime_norm(st, q, r) / nrm


@dataclass
class LpImprovementReport:
    M: np.ndarray
    deterministic: np.ndarray
    randomized_median: np.ndarray
    det_exponent: float
    rand_exponent: float
    p: float

    @property
    def gap(self) -> float:
        return self.det_exponent - self.rand_exponent

    def to_dict(self):
        return {
            "M": self.M.tolist(), "deterministic": self.deterministic.tolist(),
            "randomized_median": self.randomized_median.tolist(),
            "det_exponent": self.det_exponent, "rand_exponent": self.rand_exponent,
            "gap": self.gap, "p": self.p,
        }


def lp_improvement_demo(
    s_decay: float,
    p: float,
    M_list: Sequence[int],
    L: float = 2.0,
    d: int = 1,
    trials: int = 400,
    dist: Optional[CoeffDistribution] = None,
    phases: str = "aligned",
    seed: int = 0,
) -> LpImprovementReport:
    """Deterministic ||phi||_p against the median ||phi^omega||_p as the grid
    refines; exponents are slopes of log norm against log M."""
    if not p >= 2:
        raise ValueError("p must be at least 2")
    dist = dist or CoeffDistribution("gaussian")
    Ms = np.asarray(M_list, dtype=int)
    det, med = [], []
    for M in Ms:
        grid = make_grid(d, int(M), L)
        psi = build_psi(0.25, d)
        phi = make_rough_data(grid, s_decay, seed=seed, psi=psi, phases=phases)
        det.append(lp_norm(phi, p))
        x = sample_statistic(LpNorm(p), phi, dist, psi, seed, trials)
        med.append(float(np.median(x)))
    det = np.array(det)
    med = np.array(med)
    lm = np.log(Ms)
    return LpImprovementReport(
        Ms, det, med, float(np.polyfit(lm, np.log(det), 1)[0]), float(np.polyfit(lm, np.log(med), 1)[0]), float(p)
    )
