"""
Randomized cubic NLS: i u_t + Laplacian u = sign |u|^2 u with u(0) = phi^omega.

The solution is split as u = z + v with z(t) = S(t) phi^omega and v solving

    v(t) = -i sign int_0^t S(t - t') N(v + z)(t') dt',   N(u) = |u|^2 u,

which is iterated as a Picard map on [0, T]. The time cutoffs used in the
contraction proof are not needed here because the iteration never leaves
[0, T]. Duhamel integrals are evaluated in the interaction picture
w(t') = S(-t') F(t'), where the free flow is exact and only the slowly
varying nonlinear content is integrated by the trapezoid rule.

A Strang split-step solver for the full equation serves as an independent
reference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .grid import (
    FREQUENCY,
    PHYSICAL,
    Field,
    GridError,
    SpacetimeField,
    TorusGrid,
    forward_values,
    free_evolution,
    inverse_values,
    memory_budget,
    propagator_symbol,
)
from .norms import sobolev_values, xsb_norm
from .probe import wilson_interval
from .randomize import randomize, sample
from .wiener import cube_index_set

DEFOCUSING = 1
FOCUSING = -1


class NumericalFault(FloatingPointError):
    """Non-finite values appeared during a solve."""


def _sign(sign) -> int:
    if sign in (1, "+", "defocusing"):
        return DEFOCUSING
    if sign in (-1, "-", "focusing"):
        return FOCUSING
    raise ValueError(f"sign must be defocusing/+1 or focusing/-1, got {sign!r}")


@dataclass(frozen=True)
class PicardConfig:
    """Parameters of the Picard iteration on [0, T].

    ``coupling`` scales the nonlinearity (0 gives the linear equation).
    ``gauge`` replaces |u|^2 u by (|u|^2 - 2 mean |u|^2) u, removing the
    box-average resonance of the periodic torus (a mass-dependent phase
    that disappears as the box grows). ``dealias`` evaluates the cubic term
    on a grid refined twice per axis so no product frequency wraps into the
    retained band.
    Convergence is declared when the C_t H^sigma step falls below
    ``atol + rtol * ||v||``; the run is abandoned as divergent once
    ||v||_{C_t H^sigma} exceeds ``cap`` times max(1, ||z||_{C_t H^sigma}).
    """

    T: float
    n_steps: int = 128
    max_iters: int = 60
    sign: int = DEFOCUSING
    sigma: float = 1.1
    b: float = 0.55
    rtol: float = 1e-10
    atol: float = 1e-13
    cap: float = 1e3
    coupling: float = 1.0
    gauge: bool = False
    dealias: bool = False

    def __post_init__(self):
        object.__setattr__(self, "sign", _sign(self.sign))
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.n_steps < 64:
            raise ValueError("dt must satisfy dt <= T/64 (n_steps >= 64)")
        if not self.sigma > 1:
            raise ValueError("sigma must exceed 1")
        if not 0.5 < self.b <= 0.75:
            raise ValueError("b must lie in (1/2, 3/4]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def to_dict(self) -> dict:
        return {
            "T": self.T, "n_steps": self.n_steps, "max_iters": self.max_iters,
            "sign": "defocusing" if self.sign > 0 else "focusing",
            "sigma": self.sigma, "b": self.b, "rtol": self.rtol, "atol": self.atol,
            "cap": self.cap, "coupling": self.coupling, "gauge": self.gauge, "dealias": self.dealias,
        }


@dataclass
class PicardResult:
    converged: bool
    iterations: int
    rho_hs: list = field(default_factory=list)
    rho_xsb: list = field(default_factory=list)
    step_hs: list = field(default_factory=list)
    step_xsb: list = field(default_factory=list)
    v_norm_history: list = field(default_factory=list)
    residual: float = math.nan
    diverged: bool = False
    v: Optional[SpacetimeField] = None
    z: Optional[SpacetimeField] = None

    @property
    def u_final(self) -> Field:
        """u(T) = v(T) + z(T), physical space."""
        vals = self.v.values[-1] + self.z.values[-1]
        return Field(self.v.grid, inverse_values(vals, self.v.grid), PHYSICAL)

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "diverged": self.diverged,
            "iterations": self.iterations,
            "residual": self.residual,
            "rho_hs": [float(r) for r in self.rho_hs],
            "rho_xsb": [float(r) for r in self.rho_xsb],
            "v_norm_history": [float(r) for r in self.v_norm_history],
        }


def linear_part(phi_omega: Field, times: Sequence[float]) -> SpacetimeField:
    """Frames S(t_k) phi^omega (physical space)."""
    return free_evolution(phi_omega, times)


def _interaction_integral(Fhat: np.ndarray, grid, times: np.ndarray, P: Optional[np.ndarray] = None) -> np.ndarray:
    """Frames S(t_k) int_{t_0}^{t_k} S(-t') F(t') dt' from frequency frames ``Fhat``."""
    if P is None:
        P = propagator_symbol(grid, times)
    dt = times[1] - times[0]
    w = np.conj(P) * Fhat
    out = np.empty_like(w)
    out[0] = 0.0
    # cumulative trapezoid
    np.cumsum(0.5 * dt * (w[1:] + w[:-1]), axis=0, out=out[1:])
    out *= P
    return out


def duhamel(F: SpacetimeField, t: Optional[float] = None, sign=DEFOCUSING) -> Field:
    """-i sign int_{t0}^t S(t - t') F(t') dt' by interaction-picture trapezoid.

    ``t`` must be a frame time (default: the last frame).
    """
    st = duhamel_frames(F, sign)
    if t is None:
        k = st.n_frames - 1
    else:
        k = int(round((t - F.t0) / F.dt))
        if k < 0 or k >= F.n_frames or abs(F.t0 + k * F.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise GridError(f"t={t} is not on the frame grid of F")
    return Field(F.grid, st.values[k], FREQUENCY).physical()


def duhamel_frames(F: SpacetimeField, sign=DEFOCUSING) -> SpacetimeField:
    """Duhamel integral at every frame time, frequency space."""
    s = _sign(sign)
    Fhat = F.frequency().values
    vals = -1j * s * _interaction_integral(Fhat, F.grid, F.times)
    return SpacetimeField(F.grid, vals, F.t0, F.dt, FREQUENCY)


class _GammaMap:
    """v -> -i sign coupling int_0^t S(t - t') N(v + z)(t') dt' on fixed frames.

    Internally spectra are kept as raw unshifted FFT output of the physical
    samples, which saves the centering and scaling passes on every
    application; ``to_raw`` and ``from_raw`` convert to the lattice transform.
    """

    def __init__(self, z: SpacetimeField, cfg: PicardConfig):
        grid = self.grid = z.grid
        self.cfg = cfg
        self.times = z.times
        self.ax = tuple(range(1, grid.d + 1))
        self.P = sfft.ifftshift(propagator_symbol(grid, self.times), axes=self.ax)
        self.Pc = np.conj(self.P)
        self.w_hs = sfft.ifftshift((1.0 + grid.xi_sq) ** cfg.sigma) * (grid.cell_volume**2 * grid.lattice_volume)
        self.factor = -1j * cfg.sign * cfg.coupling
        if cfg.dealias:
            self.fine = TorusGrid(grid.d, 2 * grid.M, grid.L)
            if 16 * self.fine.size * self.times.size > 4 * memory_budget():
                raise GridError("dealiased Picard history exceeds the memory budget")
        self.z_raw = self.to_raw(z.frequency().values)

    def to_raw(self, vhat: np.ndarray) -> np.ndarray:
        return sfft.ifftshift(vhat * self.grid._sign, axes=self.ax) / self.grid.cell_volume

    def from_raw(self, raw: np.ndarray) -> np.ndarray:
        return sfft.fftshift(raw, axes=self.ax) * (self.grid._sign * self.grid.cell_volume)

    def sup_hs(self, raw: np.ndarray) -> float:
        sq = np.sum(self.w_hs * (raw.real**2 + raw.imag**2), axis=self.ax)
        return float(np.sqrt(sq.max()))

    def _nonlinearity(self, u: np.ndarray) -> np.ndarray:
        dens = u.real**2 + u.imag**2
        if self.cfg.gauge:
            dens -= 2 * dens.mean(axis=self.ax, keepdims=True)
        Nu = dens * u
        if not np.all(np.isfinite(Nu)):
            raise NumericalFault("non-finite nonlinearity during Picard iteration")
        return Nu

    def _dealiased(self, raw: np.ndarray) -> np.ndarray:
        grid, fine = self.grid, self.fine
        h = grid.M // 2
        sl = (slice(None),) + (slice(h, h + grid.M),) * grid.d
        big = np.zeros(raw.shape[:1] + fine.shape, dtype=complex)
        big[sl] = self.from_raw(raw)
        Nhat = forward_values(self._nonlinearity(inverse_values(big, fine)), fine)[sl]
        return self.to_raw(Nhat)

    def __call__(self, v_raw: np.ndarray) -> np.ndarray:
        if self.cfg.dealias:
            N = self._dealiased(v_raw + self.z_raw)
        else:
            u = sfft.ifftn(v_raw + self.z_raw, axes=self.ax, workers=-1, overwrite_x=True)
            N = sfft.fftn(self._nonlinearity(u), axes=self.ax, workers=-1, overwrite_x=True)
        N *= self.Pc
        out = np.empty_like(N)
        out[0] = 0.0
        # cumulative trapezoid in the interaction picture
        np.cumsum(N[1:] + N[:-1], axis=0, out=out[1:])
        out *= self.P
        out *= 0.5 * self.cfg.dt * self.factor
        return out


def picard_solve(phi_omega: Field, cfg: PicardConfig, v0: Optional[np.ndarray] = None, track_xsb: bool = True) -> PicardResult:
    """Picard iteration v_{k+1} = Gamma(v_k) on [0, T] starting from v_0 = 0.

    ``v0`` optionally supplies a starting guess as frequency frames of shape
    ``(n_steps + 1,) + grid.shape``. Contraction factors are recorded in
    C_t H^sigma and in the discrete X^{sigma, b} proxy (the latter when
    ``track_xsb``). Divergence yields a non-converged result; non-finite
    values raise :class:`NumericalFault`.
    """
    grid = phi_omega.grid
    times = cfg.times
    z = linear_part(phi_omega, times)
    zf = z.frequency()
    gamma = _GammaMap(zf, cfg)
    z_norm = gamma.sup_hs(gamma.z_raw)
    limit = cfg.cap * max(1.0, z_norm)

    shape = (times.size,) + grid.shape
    if v0 is None:
        v = np.zeros(shape, dtype=complex)
    else:
        v0 = np.asarray(v0, dtype=complex)
        if v0.shape != shape:
            raise GridError(f"initial guess has shape {v0.shape}, expected {shape}")
        v = gamma.to_raw(v0)
    res = PicardResult(converged=False, iterations=0)
    prev_hs = prev_x = None

    def as_st(raw):
        return SpacetimeField(grid, gamma.from_raw(raw), 0.0, cfg.dt, FREQUENCY)

    for k in range(cfg.max_iters):
        v_new = gamma(v)
        diff = v_new - v
        step = gamma.sup_hs(diff)
        vnorm = gamma.sup_hs(v_new)
        if not (math.isfinite(step) and math.isfinite(vnorm)):
            raise NumericalFault("non-finite iterate")
        res.step_hs.append(step)
        res.v_norm_history.append(vnorm)
        if prev_hs is not None:
            res.rho_hs.append(step / prev_hs if prev_hs > 0 else 0.0)
        if track_xsb:
            sx = xsb_norm(as_st(diff), cfg.sigma, cfg.b)
            res.step_xsb.append(sx)
            if prev_x is not None:
                res.rho_xsb.append(sx / prev_x if prev_x > 0 else 0.0)
            prev_x = sx
        prev_hs = step
        v = v_new
        res.iterations = k + 1
        if vnorm > limit:
            res.diverged = True
            break
        if step <= cfg.atol + cfg.rtol * vnorm:
            res.converged = True
            break

    if res.converged:
        res.residual = gamma.sup_hs(gamma(v) - v)
    res.v = as_st(v)
    res.z = zf
    return res


def gamma_residual(result: PicardResult, cfg: PicardConfig) -> float:
    """||Gamma(v) - v||_{C_t H^sigma} for the stored iterate."""
    gamma = _GammaMap(result.z, cfg)
    v = gamma.to_raw(result.v.values)
    return gamma.sup_hs(gamma(v) - v)


def splitstep_reference(phi_omega: Field, cfg: PicardConfig) -> SpacetimeField:
    """Strang splitting (half nonlinear, full linear, half nonlinear) on the
    same frames as :func:`picard_solve`; physical-space output.

    The nonlinear substep u -> u exp(-i sign coupling |u|^2 tau) is exact
    because |u| is constant under it, so every substep preserves mass.
    """
    grid = phi_omega.grid
    dt = cfg.dt
    lin = propagator_symbol(grid, dt)
    phase = -1j * cfg.sign * cfg.coupling * dt / 2
    u = phi_omega.physical().values.copy()
    frames = np.empty((cfg.n_steps + 1,) + grid.shape, dtype=complex)
    frames[0] = u

    def kick(u):
        dens = u.real**2 + u.imag**2
        if cfg.gauge:
            dens -= 2 * dens.mean()
        return u * np.exp(phase * dens)

    for k in range(cfg.n_steps):
        u = kick(u)
        u = inverse_values(forward_values(u, grid) * lin, grid)
        u = kick(u)
        if not np.all(np.isfinite(u)):
            raise NumericalFault("non-finite values in split-step solve")
        frames[k + 1] = u
    return SpacetimeField(grid, frames, 0.0, dt, PHYSICAL)


def nls_residual(u: SpacetimeField, cfg: PicardConfig) -> float:
    """max over interior frames of ||i u_t + Laplacian u - sign |u|^2 u||_{L^2}.

    The equation is checked in the interaction picture, where it reads
    i S(t) d/dt [S(-t) u] = sign |u|^2 u; the slowly varying S(-t) u is
    differenced with centered differences, so the dispersive phase does not
    pollute the O(dt^2) truncation error.
    """
    grid = u.grid
    times = u.times
    uh = u.frequency().values
    P = propagator_symbol(grid, times)
    w = np.conj(P) * uh
    dw = (w[2:] - w[:-2]) / (2 * u.dt)
    up = u.physical().values
    dens = np.abs(up) ** 2
    if cfg.gauge:
        dens = dens - 2 * dens.mean(axis=tuple(range(1, grid.d + 1)), keepdims=True)
    Nh = forward_values(cfg.sign * cfg.coupling * dens * up, grid)
    r = 1j * P[1:-1] * dw - Nh[1:-1]
    return float(np.max(sobolev_values(r, grid, 0.0)))


# ----------------------------------------------------------------------------
# diagnostics
# ----------------------------------------------------------------------------


def radial_spectrum(spec: np.ndarray, grid, r_lo: float, r_hi: float, n_bins: int = 12):
    """Shell-averaged |u_hat| over log-spaced radii in [r_lo, r_hi].

    Returns ``(<xi> at bin centres, rms |u_hat| per bin)`` for non-empty bins.
    Binning matters even in one dimension: pointwise log |u_hat| is dominated
    by near-zeros of oscillating spectra.
    """
    r = np.sqrt(grid.xi_sq).ravel()
    a2 = np.abs(spec).ravel() ** 2
    sel = (r >= r_lo) & (r <= r_hi)
    edges = np.geomspace(r_lo, r_hi, n_bins + 1)
    idx = np.digitize(r[sel], edges) - 1
    xs, ys = [], []
    for i in range(n_bins):
        m = idx == i
        if m.any():
            xs.append(np.sqrt(1 + np.mean(r[sel][m]) ** 2))
            ys.append(np.sqrt(np.mean(a2[sel][m])))
    return np.array(xs), np.array(ys)


def decay_slope(spec: np.ndarray, grid, r_lo: float, r_hi: float) -> float:
    """Least-squares slope of log |u_hat| against log <xi> on [r_lo, r_hi]."""
    x, y = radial_spectrum(spec, grid, r_lo, r_hi)
    keep = y > 0
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


@dataclass
class SmoothnessGap:
    """Fitted slopes (negative for decaying spectra) and ``gap``, the amount by
    which the decay exponent of v exceeds that of z: slope_z - slope_v."""

    slope_v: float
    slope_z: float
    gap: float
    hs_ratio: float
    window: tuple
    low_confidence: bool
    defined: bool


def smoothness_gap(result: PicardResult, band_edge: Optional[float] = None) -> SmoothnessGap:
    """Compare high-frequency decay of v(T) and z(T).

    Slopes of log |u_hat| vs log <xi> are fitted over the upper octave
    [band_edge / 2, band_edge] of the band carrying z (default: the largest
    radius where |z_hat(T)| exceeds 1e-12 of its peak). Grids with M < 32 are flagged
    low-confidence; a vanishing v (linear limit) leaves the gap undefined.
    """
    grid = result.v.grid
    vT = result.v.values[-1]
    zT = result.z.values[-1]
    r = np.sqrt(grid.xi_sq)
    if band_edge is None:
        az = np.abs(zT)
        nz = az > 1e-12 * az.max() if az.max() > 0 else az > 0
        band_edge = float(r[nz].max()) if nz.any() else grid.nyquist
    lo = band_edge / 2
    low_conf = grid.M < 32
    sz = decay_slope(zT, grid, lo, band_edge)
    zs = float(sobolev_values(zT, grid, 1.1))
    if not np.any(np.abs(vT) > 0):
        return SmoothnessGap(math.nan, sz, math.nan, 0.0, (lo, band_edge), True, False)
    sv = decay_slope(vT, grid, lo, band_edge)
    vs = float(sobolev_values(vT, grid, 1.1))
    return SmoothnessGap(sv, sz, sz - sv, vs / zs if zs > 0 else math.inf, (lo, band_edge), low_conf, True)


# ----------------------------------------------------------------------------
# success probability against T
# ----------------------------------------------------------------------------


@dataclass
class LwpTable:
    """Converged-run counts per T with Wilson intervals on the failure rate."""

    T: np.ndarray
    n: np.ndarray
    successes: np.ndarray
    fail_lo: np.ndarray
    fail_hi: np.ndarray
    monotone: bool
    gamma: float
    fit_slope: float
    fit_intercept: float
    runs: list = field(default_factory=list)

    @property
    def success_fraction(self) -> np.ndarray:
        return self.successes / self.n

    @property
    def failure_fraction(self) -> np.ndarray:
        return 1.0 - self.success_fraction

    def to_dict(self) -> dict:
        return {
            "T": self.T.tolist(), "n": self.n.tolist(), "successes": self.successes.tolist(),
            "success_fraction": self.success_fraction.tolist(),
            "failure_ci": [self.fail_lo.tolist(), self.fail_hi.tolist()],
            "monotone": self.monotone, "gamma": self.gamma,
            "fit": {"slope": self.fit_slope, "intercept": self.fit_intercept},
        }


def _lwp_task(args):
    phi, dist, psi, cfg, master_seed, stream = args
    draw = sample(dist, cube_index_set(phi.grid), master_seed, stream)
    res = picard_solve(randomize(phi, draw, psi), cfg, track_xsb=False)
    return {
        "T": cfg.T, "stream": int(stream), "converged": res.converged, "diverged": res.diverged,
        "iterations": res.iterations, "rho_last": res.rho_hs[-1] if res.rho_hs else 0.0,
        "residual": res.residual,
    }


def lwp_probability(
    T_list: Sequence[float],
    seeds,
    phi: Field,
    dist,
    psi,
    cfg: PicardConfig,
    master_seed: int = 0,
    gamma: float = 1.0,
    workers: int = 1,
    min_seeds: int = 30,
) -> LwpTable:
    """Fraction of converged Picard runs for each T.

    ``seeds`` is a count or a sequence of trial streams; each stream fixes
    one realization phi^omega, shared across all T. The failure fraction
    should not increase as T decreases; a violation is tolerated when the
    95% Wilson intervals of the two T values overlap. log(failure) is
    regressed on T^(-gamma) over the T values with at least one failure.
    """
    T_arr = np.asarray(T_list, dtype=float)
    if T_arr.size == 0 or np.any(np.diff(T_arr) <= 0):
        raise ValueError("T_list must be strictly ascending")
    streams = list(range(int(seeds))) if np.isscalar(seeds) else [int(s) for s in seeds]
    if len(streams) < min_seeds:
        raise ValueError(f"need at least {min_seeds} seeds per T, got {len(streams)}")
    tasks = [(phi, dist, psi, replace(cfg, T=float(T)), master_seed, s) for T in T_arr for s in streams]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            runs = list(ex.map(_lwp_task, tasks))
    else:
        runs = [_lwp_task(t) for t in tasks]
    n = np.full(T_arr.size, len(streams))
    succ = np.array([sum(r["converged"] for r in runs[i * len(streams) : (i + 1) * len(streams)]) for i in range(T_arr.size)])
    lo, hi = wilson_interval(n - succ, n)
    fail = 1.0 - succ / n
    ok = True
    for i in range(T_arr.size - 1):
        # T_arr[i] < T_arr[i + 1]: fewer failures expected at the smaller T
        if fail[i] > fail[i + 1] and lo[i] > hi[i + 1]:
            ok = False
    sel = fail > 0
    slope = intercept = math.nan
    if sel.sum() >= 2:
        slope, intercept = (float(v) for v in np.polyfit(T_arr[sel] ** (-gamma), np.log(fail[sel]), 1))
    return LwpTable(T_arr, n, succ, lo, hi, ok, float(gamma), slope, intercept, runs)
