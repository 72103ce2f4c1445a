"""
Command-line front end.

    wienerlab grid-info --d 2 --M 64 --L 4
    wienerlab norm --kind modulation --p 2 --q 2 --s 0 --in f.field
    wienerlab probe tail --stat hs --s 0.8 --trials 20000 --lambda 0:8:64 --out runs/tail
    wienerlab nls solve --d 4 --M 16 --T 0.01 --seed 7 --sign defocusing
    wienerlab nls sweep --T 0.04,0.02,0.01,0.005 --seeds 50
    wienerlab report runs/

Flags override fields of ``--manifest`` (JSON or flat dotted key = value);
the resolved manifest is written beside every output. Exit status: 0 on
success, 2 on invalid input, 3 on a numerical fault.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .grid import MEMORY_BUDGET_ENV, FREQUENCY, Field, make_grid, read_field, write_field
from .nls import NumericalFault, PicardConfig, lwp_probability, picard_solve, smoothness_gap, splitstep_reference
from .norms import NormSpec, evaluate, norm_record
from .persist import Collector, Manifest, ManifestError, dumps, read_manifest, write_manifest
from .probe import (
    ExperimentManifest,
    build_phi,
    khintchine_moments,
    strichartz_T_scaling,
    tail_experiment,
)
from .randomize import CoeffDistribution, randomize, require_subgaussian, sample
from .wiener import build_psi, cube_index_set, cube_l2_masses, dyadic_levels, lp_symbol

EXIT_OK, EXIT_INVALID, EXIT_FAULT = 0, 2, 3

STAT_KINDS = {"hs": "HsNorm", "lp": "LpNorm", "local": "LocalStrichartz", "global": "GlobalStrichartz"}
NORM_KINDS = {"lp": "Lp", "hs": "Hs", "modulation": "Modulation", "besov": "Besov"}


class UsageError(ValueError):
    pass


# ----------------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _lambda_range(text: str) -> list[float]:
    """``lo:hi:n`` -> n evenly spaced values."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected lo:hi:n")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad lambda range {text!r}") from None
    if n < 2 or not hi > lo:
        raise argparse.ArgumentTypeError("lambda range needs hi > lo and n >= 2")
    return np.linspace(lo, hi, n).tolist()


def _common(p: argparse.ArgumentParser, grid: bool = True, phi: bool = False):
    p.add_argument("--manifest", help="manifest to start from; written with resolved values if it does not exist")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--memory-budget", type=float, help=f"bytes; overrides {MEMORY_BUDGET_ENV}")
    if grid:
        p.add_argument("--d", type=int)
        p.add_argument("--M", type=int)
        p.add_argument("--L", type=float)
        p.add_argument("--psi-width", type=float, dest="psi_width")
    if phi:
        p.add_argument("--phi", choices=["rough", "gaussian", "plateau"], dest="phi_kind")
        p.add_argument("--s-decay", type=float, dest="s_decay")
        p.add_argument("--phi-seed", type=int, dest="phi_seed")
        p.add_argument("--phases", choices=["random", "aligned"])
        p.add_argument("--amplitude", type=float)
        p.add_argument("--width", type=float)
        p.add_argument("--envelope", type=float)
        p.add_argument("--dist", choices=["gaussian", "bernoulli", "uniform"])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wienerlab", description="Wiener randomization experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grid-info", help="grid and cube lattice summary")
    _common(p)

    p = sub.add_parser("decompose", help="cube or dyadic L2 masses of a field")
    _common(p, grid=False)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--kind", choices=["cubes", "dyadic"], default="cubes")
    p.add_argument("--psi-width", type=float, dest="psi_width")

    p = sub.add_parser("norm", help="evaluate a norm of a stored field")
    _common(p, grid=False)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--kind", choices=sorted(NORM_KINDS), required=True)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--psi-width", type=float, dest="psi_width")

    p = sub.add_parser("randomize", help="Wiener randomization of a field")
    _common(p, phi=True)
    p.add_argument("--in", dest="inp", help="field to randomize (default: generate from --phi options)")
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--out-field", dest="out_field", required=True)

    probe = sub.add_parser("probe", help="Monte Carlo probes").add_subparsers(dest="probe_command", required=True)
    p = probe.add_parser("tail", help="exceedance curve of a statistic")
    _common(p, phi=True)
    p.add_argument("--stat", choices=sorted(STAT_KINDS), required=True)
    p.add_argument("--s", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--lambda", dest="lam", type=_lambda_range)
    p.add_argument("--no-normalize", dest="normalize", action="store_false", default=None)

    p = probe.add_parser("khintchine", help="moment ratios of random sums")
    _common(p, grid=False)
    p.add_argument("--dist", choices=["gaussian", "bernoulli", "uniform"])
    p.add_argument("--p", dest="p_list", type=_floats)
    p.add_argument("--trials", type=int)
    p.add_argument("--n-coeffs", type=int, dest="n_coeffs")

    p = probe.add_parser("scaling", help="local Strichartz tail constant against T")
    _common(p, phi=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--T", dest="T_list", type=_floats, required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--max-dt", type=float, dest="max_dt")

    nls = sub.add_parser("nls", help="randomized cubic NLS").add_subparsers(dest="nls_command", required=True)
    for name in ("solve", "sweep"):
        p = nls.add_parser(name)
        _common(p, phi=True)
        p.add_argument("--steps", type=int)
        p.add_argument("--sign", choices=["defocusing", "focusing"])
        p.add_argument("--sigma", type=float)
        p.add_argument("--b", type=float)
        p.add_argument("--max-iters", type=int, dest="max_iters")
        p.add_argument("--rtol", type=float)
        p.add_argument("--cap", type=float)
        p.add_argument("--coupling", type=float)
        p.add_argument("--gauge", action="store_true", default=None)
        p.add_argument("--dealias", action="store_true", default=None)
        if name == "solve":
            p.add_argument("--T", type=float)
            p.add_argument("--stream", type=int, default=0)
            p.add_argument("--snapshots", action="store_true")
            p.add_argument("--reference", action="store_true", help="also run the split-step solver")
        else:
            p.add_argument("--T", dest="T_list", type=_floats, required=True)
            p.add_argument("--seeds", type=int)
            p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("report", help="summarize run directories")
    p.add_argument("run_dir")
    return ap


# ----------------------------------------------------------------------------
# manifest resolution
# ----------------------------------------------------------------------------


def _load_manifest(args) -> Manifest:
    path = getattr(args, "manifest", None)
    if path and Path(path).exists():
        m = read_manifest(path)
    else:
        m = Manifest()
    for attr, dotted in (
        ("seed", "seed"), ("d", "grid.d"), ("M", "grid.M"), ("L", "grid.L"),
        ("psi_width", "psi.transition_width"), ("dist", "dist.kind"),
        ("phi_kind", "phi.kind"), ("s_decay", "phi.s_decay"), ("phi_seed", "phi.seed"),
        ("phases", "phi.phases"), ("amplitude", "phi.amplitude"), ("width", "phi.width"),
        ("envelope", "phi.envelope"), ("out", "out"),
    ):
        m.set(dotted, getattr(args, attr, None))
    return m


def _finish_manifest(args, m: Manifest):
    path = getattr(args, "manifest", None)
    if path and not Path(path).exists():
        write_manifest(m, path)


def _grid(m: Manifest, d=1, M=128, L=2.0):
    g = m.block("grid")
    g.setdefault("d", d)
    g.setdefault("M", M)
    g.setdefault("L", L)
    return make_grid(int(g["d"]), int(g["M"]), float(g["L"]))


def _psi(m: Manifest, d: int):
    return build_psi(float(m.block("psi").setdefault("transition_width", 0.25)), d)


def _dist(m: Manifest):
    b = m.block("dist")
    b.setdefault("kind", "gaussian")
    return CoeffDistribution(b["kind"], b.get("c_sg"))


def _phi(m: Manifest, grid, psi, **defaults):
    b = m.block("phi")
    for k, v in defaults.items():
        b.setdefault(k, v)
    if b.get("path"):
        return read_field(b["path"])
    return build_phi(b, grid, psi)


def _out_dir(m: Manifest, default: str) -> Path:
    if m.out is None:
        m.out = default
    return Path(m.out)


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------


def cmd_grid_info(args) -> int:
    m = _load_manifest(args)
    grid = _grid(m)
    psi = _psi(m, grid.d)
    cubes = cube_index_set(grid)
    info = {
        **grid.to_dict(), "dx": grid.dx, "dxi": grid.dxi, "nyquist": grid.nyquist,
        "points": grid.size, "bytes_per_field": 16 * grid.size,
        "n_max": cubes.n_max, "cubes": len(cubes), "dyadic_levels": dyadic_levels(grid),
        "psi": {**psi.to_dict(), "c1": psi.c1, "c2": psi.c2},
    }
    print(dumps(info))
    if args.out:
        c = Collector(args.out, m)
        c.json("grid.json", info)
        c.flush()
    _finish_manifest(args, m)
    return EXIT_OK


def cmd_decompose(args) -> int:
    m = _load_manifest(args)
    f = read_field(args.inp)
    m.set("phi.path", str(args.inp))
    grid = f.grid
    psi = _psi(m, grid.d)
    out = _out_dir(m, "decompose")
    c = Collector(out, m)
    total = f.l2_norm() ** 2
    if args.kind == "cubes":
        cubes = cube_index_set(grid)
        masses = cube_l2_masses(f, psi, cubes).ravel()
        rows = [list(n) + [float(w)] for n, w in zip(cubes.indices, masses)]
        c.csv("cubes.csv", [f"n{i}" for i in range(grid.d)] + ["mass"], rows)
        radius = np.abs(cubes.indices).max(axis=1)
        c.dat("cubes.dat", radius, masses, "max_abs_n", "mass")
        summary = {"kind": "decompose", "decomposition": "cubes", "n_cubes": len(cubes), "sum_masses": float(masses.sum()), "l2_sq": total}
    else:
        spec = f.frequency().values
        levels = dyadic_levels(grid)
        masses = [float(np.sum(np.abs(lp_symbol(grid, N) * spec) ** 2) * grid.lattice_volume) for N in levels]
        c.csv("dyadic.csv", ["N", "mass"], zip(levels, masses))
        c.dat("dyadic.dat", levels, masses, "N", "mass")
        summary = {"kind": "decompose", "decomposition": "dyadic", "levels": levels, "sum_masses": float(sum(masses)), "l2_sq": total}
    c.json("decompose.json", summary)
    c.flush()
    print(dumps(summary))
    _finish_manifest(args, m)
    return EXIT_OK


def cmd_norm(args) -> int:
    m = _load_manifest(args)
    f = read_field(args.inp)
    psi = _psi(m, f.grid.d)
    spec = NormSpec(NORM_KINDS[args.kind], p=args.p, q=args.q, s=args.s)
    m.block("norm").update({"kind": spec.kind, "p": spec.p, "q": spec.q, "s": spec.s})
    value = evaluate(spec, f, psi)
    rec = norm_record(spec, value, f.grid, psi, m.seed)
    print(dumps(rec))
    if args.out:
        c = Collector(args.out, m)
        c.json("norm.json", rec)
        c.flush()
    _finish_manifest(args, m)
    return EXIT_OK


def cmd_randomize(args) -> int:
    m = _load_manifest(args)
    if args.inp:
        phi = read_field(args.inp)
        m.set("phi.path", str(args.inp))
        grid = phi.grid
        psi = _psi(m, grid.d)
    else:
        grid = _grid(m)
        psi = _psi(m, grid.d)
        phi = _phi(m, grid, psi, kind="rough", s_decay=1.0, seed=0)
    dist = _dist(m)
    draw = sample(dist, cube_index_set(grid), m.seed, args.stream)
    out = randomize(phi, draw, psi)
    write_field(out, args.out_field)
    info = {"out_field": args.out_field, "stream": args.stream, "seed": m.seed, "l2_in": phi.l2_norm(), "l2_out": out.l2_norm()}
    print(dumps(info))
    if args.out:
        c = Collector(args.out, m)
        c.json("randomize.json", info)
        c.flush()
    _finish_manifest(args, m)
    return EXIT_OK


def _experiment(m: Manifest, grid, statistic: dict) -> ExperimentManifest:
    pb = m.block("probe")
    return ExperimentManifest(
        grid=dict(m.block("grid")), psi=dict(m.block("psi")), dist=dict(m.block("dist")),
        phi=dict(m.block("phi")), statistic=statistic, T=statistic.get("T"),
        trials=int(pb["trials"]), master_seed=m.seed, normalize=bool(pb.get("normalize", True)),
        lambda_grid=pb.get("lambda"),
    )


def cmd_probe_tail(args) -> int:
    m = _load_manifest(args)
    grid = _grid(m)
    psi = _psi(m, grid.d)
    _dist(m)
    _phi(m, grid, psi, kind="rough", s_decay=1.0, seed=0)
    pb = m.block("probe")
    for k, v in (("trials", args.trials), ("lambda", args.lam), ("normalize", args.normalize), ("n_steps", args.steps)):
        if v is not None:
            pb[k] = v
    pb.setdefault("trials", 20000)
    if int(pb["trials"]) < 1:
        raise UsageError("probe.trials: must be positive")
    kind = STAT_KINDS[args.stat]
    stat = dict(pb.get("statistic") or {})
    stat["kind"] = kind
    if kind == "HsNorm":
        stat["s"] = args.s if args.s is not None else stat.get("s", 0.8)
    elif kind == "LpNorm":
        stat["p"] = args.p if args.p is not None else stat.get("p", 4.0)
    else:
        stat["q"] = args.q if args.q is not None else stat.get("q", 6.0)
        r = args.r if args.r is not None else stat.get("r", stat.get("r_tilde", 6.0))
        T = args.T if args.T is not None else stat.get("T", stat.get("T_max", 0.1))
        if kind == "GlobalStrichartz":
            stat.update({"r_tilde": r, "T_max": T})
        else:
            stat.update({"r": r, "T": T})
        stat["n_steps"] = int(pb.get("n_steps", 64))
    pb["statistic"] = stat
    curve = tail_experiment(None, _experiment(m, grid, stat))
    out = _out_dir(m, "tail")
    c = Collector(out, m)
    c.csv("tail.csv", ["lambda", "p_hat", "ci_lo", "ci_hi"], zip(curve.lambda_grid, curve.exceed_prob, curve.ci_lo, curve.ci_hi))
    c.dat("tail.dat", curve.lambda_grid, curve.exceed_prob, "lambda", "p_hat")
    c.json("fit.json", {"kind": "tail", **curve.fit_record()})
    c.flush()
    print(dumps(curve.fit_record()))
    _finish_manifest(args, m)
    return EXIT_OK


def cmd_probe_khintchine(args) -> int:
    m = _load_manifest(args)
    m.set("dist.kind", args.dist)
    dist = _dist(m)
    require_subgaussian(dist)
    pb = m.block("probe")
    for k, v in (("p_list", args.p_list), ("trials", args.trials), ("n_coeffs", args.n_coeffs)):
        if v is not None:
            pb[k] = v
    pb.setdefault("p_list", [2, 4, 8, 16])
    pb.setdefault("trials", 100000)
    pb.setdefault("n_coeffs", 16)
    if int(pb["n_coeffs"]) < 1:
        raise UsageError("probe.n_coeffs: must be positive")
    table = khintchine_moments(dist, np.ones(int(pb["n_coeffs"])), pb["p_list"], int(pb["trials"]), m.seed)
    out = _out_dir(m, "khintchine")
    c = Collector(out, m)
    c.csv("khintchine.csv", ["p", "ratio", "se", "flagged"], [[r["p"], r["ratio"], r["se"], r["flagged"]] for r in table.rows()])
    c.dat("khintchine.dat", table.p, table.ratio, "p", "ratio")
    rec = {"kind": "khintchine", "dist": dist.kind, "alpha": table.alpha, "rows": table.rows(), "trials": table.trials}
    c.json("khintchine.json", rec)
    c.flush()
    print(dumps(rec))
    _finish_manifest(args, m)
    return EXIT_OK


def cmd_probe_scaling(args) -> int:
    m = _load_manifest(args)
    grid = _grid(m)
    psi = _psi(m, grid.d)
    _dist(m)
    _phi(m, grid, psi, kind="gaussian", width=1.0)
    pb = m.block("probe")
    for k, v in (("trials", args.trials), ("T_list", args.T_list), ("n_steps", args.steps), ("max_dt", args.max_dt)):
        if v is not None:
            pb[k] = v
    pb.setdefault("trials", 2000)
    pb.setdefault("n_steps", 64)
    if int(pb["trials"]) < 1:
        raise UsageError("probe.trials: must be positive")
    stat = {"kind": "LocalStrichartz", "q": args.q, "r": args.r, "T": pb["T_list"][0]}
    em = _experiment(m, grid, stat)
    rep = strichartz_T_scaling(args.q, args.r, pb["T_list"], em, n_steps=int(pb["n_steps"]), max_dt=pb.get("max_dt"))
    out = _out_dir(m, "scaling")
    c = Collector(out, m)
    c.csv("scaling.csv", ["T", "c_hat", "fit_r2"], zip(rep.T, rep.c_hat, rep.fit_r2))
    c.dat("scaling.dat", np.log(rep.T), np.log(rep.c_hat), "log_T", "log_c_hat")
    c.json("scaling.json", {"kind": "scaling", "q": args.q, "r": args.r, **rep.to_dict()})
    c.flush()
    print(dumps(rep.to_dict()))
    _finish_manifest(args, m)
    return EXIT_OK


def _picard_cfg(m: Manifest, args, T: float) -> PicardConfig:
    pc = m.block("picard")
    for attr, key in (
        ("steps", "n_steps"), ("sign", "sign"), ("sigma", "sigma"), ("b", "b"), ("max_iters", "max_iters"),
        ("rtol", "rtol"), ("cap", "cap"), ("coupling", "coupling"), ("gauge", "gauge"), ("dealias", "dealias"),
    ):
        v = getattr(args, attr, None)
        if v is not None:
            pc[key] = v
    pc["T"] = T
    kw = {k: v for k, v in pc.items() if k != "T"}
    return PicardConfig(T=T, **kw)


def _nls_setup(m: Manifest):
    grid = _grid(m, d=4, M=16, L=2.0)
    psi = _psi(m, grid.d)
    dist = _dist(m)
    phi = _phi(m, grid, psi, kind="rough", s_decay=0.8, seed=0)
    return grid, psi, dist, phi


def cmd_nls_solve(args) -> int:
    m = _load_manifest(args)
    grid, psi, dist, phi = _nls_setup(m)
    T = args.T if args.T is not None else m.block("picard").get("T", 0.01)
    cfg = _picard_cfg(m, args, float(T))
    draw = sample(dist, cube_index_set(grid), m.seed, args.stream)
    pw = randomize(phi, draw, psi)
    res = picard_solve(pw, cfg)
    rec = {"kind": "nls_solve", "stream": args.stream, "config": cfg.to_dict(), **res.summary()}
    if res.converged and res.v is not None and np.any(res.v.values[-1]):
        gap = smoothness_gap(res)
        rec["smoothness"] = {"slope_v": gap.slope_v, "slope_z": gap.slope_z, "gap": gap.gap, "hs_ratio": gap.hs_ratio, "low_confidence": gap.low_confidence}
    out = _out_dir(m, "nls_solve")
    if args.reference:
        ref = splitstep_reference(pw, cfg)
        uT = res.u_final.values
        rT = ref.values[-1]
        rec["splitstep_rel_diff"] = float(np.linalg.norm(uT - rT) / np.linalg.norm(rT))
    c = Collector(out, m)
    c.json("result.json", rec)
    c.dat("convergence.dat", np.arange(1, len(res.step_hs) + 1), res.step_hs, "iteration", "step_hs")
    c.flush()
    if args.snapshots:
        write_field(Field(grid, res.v.values[-1], FREQUENCY), out / "v_T.field")
        write_field(Field(grid, res.z.values[-1], FREQUENCY), out / "z_T.field")
        write_field(res.u_final, out / "u_T.field")
    print(dumps(rec))
    _finish_manifest(args, m)
    return EXIT_OK


def cmd_nls_sweep(args) -> int:
    m = _load_manifest(args)
    grid, psi, dist, phi = _nls_setup(m)
    pb = m.block("probe")
    if args.seeds is not None:
        pb["seeds"] = args.seeds
    pb.setdefault("seeds", 50)
    T_list = sorted(args.T_list)
    pb["T_list"] = T_list
    cfg = _picard_cfg(m, args, float(T_list[0]))
    table = lwp_probability(T_list, int(pb["seeds"]), phi, dist, psi, cfg, master_seed=m.seed, workers=args.workers)
    out = _out_dir(m, "nls_sweep")
    c = Collector(out, m)
    c.csv(
        "sweep.csv", ["T", "n", "successes", "success_fraction", "fail_ci_lo", "fail_ci_hi"],
        zip(table.T, table.n, table.successes, table.success_fraction, table.fail_lo, table.fail_hi),
    )
    c.dat("sweep.dat", table.T, table.success_fraction, "T", "success_fraction")
    c.csv(
        "runs.csv", ["T", "stream", "converged", "diverged", "iterations", "rho_last", "residual"],
        ([r["T"], r["stream"], r["converged"], r["diverged"], r["iterations"], r["rho_last"], r["residual"]] for r in table.runs),
    )
    c.json("sweep.json", {"kind": "nls_sweep", **table.to_dict()})
    c.flush()
    print(dumps(table.to_dict()))
    _finish_manifest(args, m)
    return EXIT_OK


# ----------------------------------------------------------------------------
# report
# ----------------------------------------------------------------------------

RESULT_FILES = (
    "fit.json", "khintchine.json", "scaling.json", "result.json", "sweep.json",
    "decompose.json", "norm.json", "grid.json", "randomize.json",
)


def _check(rec: dict) -> tuple[str, dict, Optional[bool]]:
    kind = rec.get("kind")
    if kind == "tail":
        r2 = rec.get("fit_r2")
        ok = r2 is not None and not isinstance(r2, str) and r2 > 0.95
        return "tail", {"C_hat": rec.get("C_hat"), "c_hat": rec.get("c_hat"), "fit_r2": r2}, ok
    if kind == "khintchine":
        return "khintchine", {"alpha": rec.get("alpha")}, rec.get("alpha", math.inf) <= 0.55
    if kind == "scaling":
        return "scaling", {"slope": rec.get("slope"), "expected": rec.get("expected")}, abs(rec["slope"] - rec["expected"]) <= 0.3
    if kind == "nls_solve":
        res = rec.get("residual")
        ok = bool(rec.get("converged")) and isinstance(res, float) and res < 1e-6
        return "nls_solve", {"converged": rec.get("converged"), "iterations": rec.get("iterations"), "residual": res}, ok
    if kind == "nls_sweep":
        frac = rec.get("success_fraction", [])
        ok = bool(rec.get("monotone")) and bool(frac) and frac[0] >= 0.8
        table = {str(T): f for T, f in zip(rec.get("T", []), frac)}
        return "nls_sweep", {"success_fraction": table, "monotone": rec.get("monotone")}, ok
    if kind == "decompose":
        return "decompose", {"sum_masses": rec.get("sum_masses"), "l2_sq": rec.get("l2_sq")}, None
    if "spec" in rec and "value" in rec:
        return "norm", {"norm": rec["spec"].get("kind"), "value": rec["value"]}, None
    return str(kind or "info"), {}, None


def report(run_dir) -> tuple[dict, str]:
    """Summaries of every run below ``run_dir``; raises FileNotFoundError if none."""
    root = Path(run_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"{run_dir}: not a directory")
    runs = []
    for man in sorted(root.rglob("manifest.json")):
        d = man.parent
        found = [d / f for f in RESULT_FILES if (d / f).exists()]
        if not found:
            runs.append({"dir": str(d.relative_to(root)), "kind": "partial", "partial": True, "passed": None})
            continue
        for f in found:
            rec = json.loads(f.read_text())
            kind, fields, ok = _check(rec)
            runs.append({"dir": str(d.relative_to(root)), "kind": kind, "partial": False, "passed": ok, **fields})
    if not runs:
        raise FileNotFoundError("no runs found")
    summary = {"run_dir": str(root), "n_runs": len(runs), "runs": runs}
    lines = [f"{'dir':30s} {'kind':12s} {'status':8s} details"]
    for r in runs:
        status = "partial" if r["partial"] else ("pass" if r["passed"] else ("fail" if r["passed"] is False else "-"))
        details = ", ".join(f"{k}={_short(v)}" for k, v in r.items() if k not in ("dir", "kind", "partial", "passed"))
        lines.append(f"{r['dir'] or '.':30s} {r['kind']:12s} {status:8s} {details}")
    return summary, "\n".join(lines) + "\n"


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_short(x)}" for k, x in v.items()) + "}"
    return str(v)


def cmd_report(args) -> int:
    try:
        summary, text = report(args.run_dir)
    except FileNotFoundError as e:
        print(str(e) if "no runs found" in str(e) else f"no runs found: {e}", file=sys.stderr)
        return EXIT_INVALID
    (Path(args.run_dir) / "summary.json").write_text(dumps(summary) + "\n")
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "grid-info": cmd_grid_info,
    "decompose": cmd_decompose,
    "norm": cmd_norm,
    "randomize": cmd_randomize,
    ("probe", "tail"): cmd_probe_tail,
    ("probe", "khintchine"): cmd_probe_khintchine,
    ("probe", "scaling"): cmd_probe_scaling,
    ("nls", "solve"): cmd_nls_solve,
    ("nls", "sweep"): cmd_nls_sweep,
    "report": cmd_report,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv`` and execute; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    budget = getattr(args, "memory_budget", None)
    saved = os.environ.get(MEMORY_BUDGET_ENV)
    if budget:
        os.environ[MEMORY_BUDGET_ENV] = str(int(budget))
    try:
        return _dispatch(args)
    finally:
        # the flag applies to this run only
        if budget:
            if saved is None:
                os.environ.pop(MEMORY_BUDGET_ENV, None)
            else:
                os.environ[MEMORY_BUDGET_ENV] = saved


def _dispatch(args) -> int:
    key = args.command
    if key == "probe":
        key = ("probe", args.probe_command)
    elif key == "nls":
        key = ("nls", args.nls_command)
    try:
        return COMMANDS[key](args)
    except (NumericalFault, FloatingPointError) as e:
        print(f"numerical fault: {e}", file=sys.stderr)
        return EXIT_FAULT
    except (ManifestError, UsageError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, FileNotFoundError, KeyError, TypeError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run())
