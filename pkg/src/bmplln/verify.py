"""Composite checks behind the ``verify-*`` subcommands.

Each check returns a JSON-ready dict with a boolean ``pass``.  Statistical
comparisons use a fixed 3-standard-error band.
"""
from __future__ import annotations

import math

import numpy as np

from . import moments as mom
from . import simulator as sim
from .model import BmpModel, mean_generator
from .spectral import (
    compute_eigendata,
    h1_gap_curve,
    integrated_semigroup_apply,
    semigroup_apply,
)

NSIGMA = 3.0


def spectral_report(model: BmpModel, tmax: float = 10.0, points: int = 11) -> dict:
    A = mean_generator(model)
    sd = compute_eigendata(A)
    out = sd.to_dict()
    out["h1_gap_curve"] = [list(p) for p in h1_gap_curve(A, sd, np.linspace(0, tmax, points))]
    out["pass"] = sd.supercritical
    return out


def moments_report(model: BmpModel, kmax: int = 10) -> dict:
    mom._check_K(kmax)
    sd = compute_eigendata(mean_generator(model))
    table = mom.compute_Lk(model, sd, kmax)
    c_star = mom.check_moment_bound(table)
    carleman = [mom.carleman_report(table.s[:, x], C_star=c_star) for x in range(model.n)]
    chain = mom.proof_chain(model, sd, table)
    c1 = mom.c1_constants(model, sd, kmax)
    return {
        **table.to_dict(),
        "C_star": c_star,
        "carleman": [r.to_dict() for r in carleman],
        "proof_chain": chain,
        "C1": c1,
        "C1_k2_dominates": all(c <= c1[0] * (1 + 1e-12) for c in c1),
        "pass": math.isfinite(c_star)
        and all(r.verdict is mom.Verdict.DIVERGENT_TREND for r in carleman)
        and all(row["holds"] for row in chain),
    }


def delta_report(model: BmpModel, l: int = 2, tmax: float = 10.0, points: int = 11,
                 f=None, seed: int = 0) -> dict:
    """Delta curve for one ``f`` or, by default, the max over the probe family."""
    sd = compute_eigendata(mean_generator(model))
    table = mom.compute_Lk(model, sd, max(l, 1))
    times = np.linspace(0, tmax, points)
    if f is None:
        curve = mom.delta_sup_curve(model, sd, table, l, times, seed=seed)
    else:
        curve = mom.delta_curve(model, sd, table, f, l, times)
    deltas = [d for _, d in curve]
    first, last = deltas[0], deltas[-1]
    decays = last < 1e-2 * first if first > 1e-10 else max(deltas) <= 1e-10
    return {
        "l": l,
        "curve": [list(p) for p in curve],
        "sup": max(deltas),
        "lower_bound_over_f": f is None,
        "pass": all(math.isfinite(d) for d in deltas) and decays,
    }


def lln_report(model: BmpModel, x0: int, f, horizons, reps: int, seed: int, **kw) -> dict:
    """Martingale mean, first two moments and the L2 residual at each horizon."""
    A = mean_generator(model)
    sd = compute_eigendata(A)
    f = np.asarray(f, dtype=float)
    g = sim.lln_residual_function(sd, f)
    rows = []
    for T in horizons:
        w = sim.EstimatorResult.from_samples(sim.mc_W_sample(model, sd, x0, T, reps, seed, **kw), seed)
        m1 = sim.mc_moment(model, sd, x0, f, 1, T, reps, seed, **kw)
        m2 = sim.mc_moment(model, sd, x0, f, 2, T, reps, seed, **kw)
        gap = sim.mc_lln_gap(model, sd, x0, f, T, reps, seed, **kw)
        exact1 = math.exp(-sd.lam * T) * semigroup_apply(A, T, f)[x0]
        exact2 = math.exp(-2 * sd.lam * T) * mom.finite_time_moment(model, sd, f, 2, T)[x0]
        exact_gap = math.exp(-2 * sd.lam * T) * mom.finite_time_moment(model, sd, g, 2, T)[x0]
        rows.append({
            "T": T,
            "martingale": {**w.to_dict(), "target": float(sd.phi[x0]), "ok": w.within(sd.phi[x0], NSIGMA)},
            "moment1": {**m1.to_dict(), "target": exact1, "ok": m1.within(exact1, NSIGMA)},
            "moment2": {**m2.to_dict(), "target": exact2, "ok": m2.within(exact2, NSIGMA)},
            "residual": {**gap.to_dict(), "target": exact_gap, "ok": gap.within(exact_gap, NSIGMA)},
        })
    residuals = [r["residual"]["value"] for r in rows]
    nonincreasing = all(b <= a for a, b in zip(residuals, residuals[1:]))
    ok = nonincreasing and all(
        r[key]["ok"] for r in rows for key in ("martingale", "moment1", "moment2", "residual")
    )
    return {"x0": x0, "f": f.tolist(), "horizons": rows, "residual_nonincreasing": nonincreasing, "pass": ok}


def running_integral_report(model: BmpModel, x0: int, f, T: float, reps: int, seed: int, **kw) -> dict:
    A = mean_generator(model)
    sd = compute_eigendata(A)
    f = np.asarray(f, dtype=float)
    res = sim.running_integral_probe(model, sd, x0, f, T, reps, seed, NSIGMA, **kw)
    exact = math.exp(-sd.lam * T) * integrated_semigroup_apply(A, T, f)[x0]
    d = res.details
    return {
        **res.to_dict(),
        "exact_finite_T_mean": exact,
        "finite_T_mean_ok": res.within(exact, NSIGMA),
        "pass": bool(d["consistent_plain"] or d["consistent_over_lambda"]),
    }


def laplace_report(model: BmpModel, x0: int, f, T: float, reps: int, seed: int, **kw) -> dict:
    sd = compute_eigendata(mean_generator(model))
    res = sim.laplace_functional_gap(model, sd, x0, f, T, reps, seed, **kw)
    return {**res.to_dict(), "pass": res.value <= NSIGMA * res.stderr}

