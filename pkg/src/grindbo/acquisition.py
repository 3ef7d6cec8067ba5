"""Expected improvement, feasibility probability, and acquisition maximization.

All functions are pure and operate on fitted regressors; grid evaluation is
vectorized and the argmax search is deterministic (grid + simplex refinement
with a fixed tie-break), so identical models always yield identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_ndtr, ndtr

from .types import Domain

SIGMA_FLOOR = 1e-12
GRID_N = 101
REFINE_TOP = 5
REFINE_XATOL = 1e-3
REFINE_MAXFEV = 200

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def expected_improvement(mean, variance, best):
    """Closed-form expected improvement below `best` for a minimization problem.

    Accepts scalars or arrays; degenerate (near-zero) standard deviations
    collapse to the deterministic limit max(best - mean, 0).
    """
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    sigma = np.sqrt(np.clip(variance, 0.0, None))
    improve = best - mean
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > SIGMA_FLOOR, improve / np.where(sigma > 0, sigma, 1.0), 0.0)
    ei = improve * ndtr(z) + sigma * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    ei = np.where(sigma > SIGMA_FLOOR, ei, np.maximum(improve, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def probability_feasible(mean, variance, limit):
    """Probability that a Gaussian prediction stays at or below `limit`."""
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    sigma = np.sqrt(np.clip(variance, 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > SIGMA_FLOOR, (limit - mean) / np.where(sigma > 0, sigma, 1.0), 0.0)
    p = ndtr(z)
    p = np.where(sigma > SIGMA_FLOOR, p, (mean < limit).astype(float))
    return float(p) if p.ndim == 0 else p


def _log_expected_improvement(mean, variance, best):
    """log EI, kept finite and ordered far into the no-improvement tail.

    Equivalent to log(expected_improvement(...)) but does not underflow for
    strongly negative standardized improvement, so the acquisition surface
    keeps ranking candidates (by posterior spread) even when every EI value
    rounds to zero in linear space.
    """
    mean = np.asarray(mean, dtype=float)
    sigma = np.sqrt(np.clip(np.asarray(variance, dtype=float), 0.0, None))
    improve = best - mean
    out = np.full(np.broadcast(mean, sigma).shape, -np.inf)

    degenerate = sigma <= SIGMA_FLOOR
    with np.errstate(divide="ignore"):
        out = np.where(degenerate & (improve > 0), np.log(np.maximum(improve, 0.0)), out)

    z = np.where(degenerate, 0.0, improve / np.where(sigma > 0, sigma, 1.0))
    log_phi = -0.5 * z * z - _LOG_SQRT_2PI
    # h(z) = z*cdf(z) + pdf(z); three regimes for numerical stability
    direct = z > -1.0
    h_direct = z * ndtr(z) + _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_h = np.where(direct, np.log(np.maximum(h_direct, 1e-320)), 0.0)
        mid = (~direct) & (z > -1e8)
        z_mid = np.where(mid, z, -2.0)
        mills = z_mid * np.exp(log_ndtr(z_mid) + 0.5 * z_mid * z_mid + _LOG_SQRT_2PI)
        log_h = np.where(mid, log_phi + np.log1p(mills), log_h)
        far = z <= -1e8
        log_h = np.where(far, log_phi - 2.0 * np.log(np.where(far, -z, 1.0)), log_h)
    with np.errstate(divide="ignore"):
        log_ei = np.log(np.where(degenerate, 1.0, sigma)) + log_h
    out = np.where(degenerate, out, log_ei)
    return out


def _log_feasibility_sum(x_matrix, constraint_models, constraints):
    """Sum of per-constraint log feasibility probabilities at each row."""
    total = np.zeros(len(x_matrix))
    for spec in constraints:
        mean, std = constraint_models[spec.name].predict(x_matrix, return_std=True)
        sigma = np.clip(std, 0.0, None)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(sigma > SIGMA_FLOOR, (spec.limit - mean) / np.where(sigma > 0, sigma, 1.0), 0.0)
        log_p = log_ndtr(z)
        with np.errstate(divide="ignore"):
            log_p = np.where(
                sigma > SIGMA_FLOOR, log_p, np.where(mean < spec.limit, 0.0, -np.inf)
            )
        total = total + log_p
    return total


def feasible_best(trials, constraints) -> float | None:
    """Lowest measured cost among trials whose measured constraint values all
    sit within their limits; None when no trial qualifies."""
    best = None
    for trial in trials:
        if all(
            trial.outcome.constraint_value(c.name) <= c.limit for c in constraints
        ):
            if best is None or trial.cost < best:
                best = trial.cost
    return best


def _feasibility_product(x_matrix, constraint_models, constraints):
    prod = np.ones(len(x_matrix))
    per_constraint = {}
    for spec in constraints:
        model = constraint_models[spec.name]
        mean, std = model.predict(x_matrix, return_std=True)
        p = probability_feasible(mean, std**2, spec.limit)
        per_constraint[spec.name] = p
        prod = prod * p
    return prod, per_constraint


def constrained_ei(x, cost_model, constraint_models, constraints, best):
    """Constrained expected improvement at one point (or a batch of points).

    With a feasible incumbent, EI is damped by the product of per-constraint
    feasibility probabilities. Without one, the product alone is returned and
    the search degenerates to pure feasibility seeking.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    prod, _ = _feasibility_product(X, constraint_models, constraints)
    if best is None:
        value = prod
    else:
        mean, std = cost_model.predict(X, return_std=True)
        value = expected_improvement(mean, std**2, best) * prod
    return float(value[0]) if np.asarray(x).ndim == 1 else value


@dataclass(frozen=True)
class AcquisitionResult:
    """Argmax of the acquisition surface plus diagnostics at that point."""

    x: np.ndarray
    value: float
    feasibility_probabilities: dict


def _grid_axes(domain: Domain, n: int):
    return [np.linspace(lo, hi, n) for lo, hi in zip(domain.lower, domain.upper)]


def grid_points(domain: Domain, n: int = GRID_N) -> np.ndarray:
    """All points of the n-per-axis evaluation lattice, (n**D, D).

    The last axis varies fastest, so for the (speed, feed) layout the feed
    coordinate cycles within each speed row.
    """
    axes = _grid_axes(domain, n)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _tie_break_keys(points: np.ndarray) -> tuple:
    # Later coordinates take precedence: for (speed, feed) that means the
    # lowest feed rate wins, then the lowest speed.
    return tuple(points[:, d] for d in range(points.shape[1]))


def _select_best(points: np.ndarray, values: np.ndarray):
    """Index of the maximal value; exact ties resolve lexicographically."""
    order = np.lexsort(_tie_break_keys(points) + (-values,))
    return int(order[0])


def _refine_maximum(objective, start_norm, domain: Domain):
    span = np.asarray(domain.upper) - np.asarray(domain.lower)
    lo = np.asarray(domain.lower)

    def neg(u):
        return -objective((lo + np.clip(u, 0.0, 1.0) * span)[None, :])[0]

    res = minimize(
        neg,
        np.asarray(start_norm, dtype=float),
        method="Nelder-Mead",
        bounds=[(0.0, 1.0)] * domain.dim,
        options={"xatol": REFINE_XATOL, "fatol": 1e-12, "maxfev": REFINE_MAXFEV},
    )
    u = np.clip(res.x, 0.0, 1.0)
    x = lo + u * span
    return x, float(-neg(u))


def maximize_acquisition(
    cost_model,
    constraint_models,
    constraints,
    best,
    domain: Domain,
    seed=None,
    grid_n: int = GRID_N,
) -> AcquisitionResult:
    """Maximize constrained EI over `domain`.

    Evaluates the full grid_n-per-axis lattice, then refines from the top
    REFINE_TOP cells with a bounded simplex search. The reported value never
    falls below any lattice value. Ranking happens in log space so the search
    stays informative where linear EI underflows. The whole procedure is
    deterministic; `seed` is accepted for interface symmetry with the
    stochastic parts of the engine but no randomness is consumed.
    """
    pts = grid_points(domain, grid_n)

    def log_score(x_matrix):
        score = _log_feasibility_sum(x_matrix, constraint_models, constraints)
        if best is not None:
            m, s = cost_model.predict(x_matrix, return_std=True)
            score = score + _log_expected_improvement(m, s**2, best)
        return score

    scores = log_score(pts)

    if not np.any(np.isfinite(scores)):
        # Acquisition identically zero (e.g. constraints impossible): rank by
        # the plain feasibility product; remaining ties resolve to the lowest
        # feed rate, then the lowest speed.
        prod, _ = _feasibility_product(pts, constraint_models, constraints)
        idx = _select_best(pts, prod)
        return AcquisitionResult(
            x=pts[idx],
            value=0.0,
            feasibility_probabilities=_probs_at(pts[idx], constraint_models, constraints),
        )

    def objective(x_matrix):
        return log_score(x_matrix)

    top = np.argsort(-scores, kind="stable")[:REFINE_TOP]
    span = np.asarray(domain.upper) - np.asarray(domain.lower)
    lo = np.asarray(domain.lower)
    cand_pts = [pts[i] for i in top]
    cand_vals = [float(scores[i]) for i in top]
    for i in top:
        start_norm = (pts[i] - lo) / span
        x_ref, v_ref = _refine_maximum(objective, start_norm, domain)
        cand_pts.append(x_ref)
        cand_vals.append(v_ref)
    cand_pts = np.asarray(cand_pts)
    cand_vals = np.asarray(cand_vals)
    idx = _select_best(cand_pts, cand_vals)
    x_star = cand_pts[idx]
    return AcquisitionResult(
        x=x_star,
        value=float(np.exp(cand_vals[idx])),
        feasibility_probabilities=_probs_at(x_star, constraint_models, constraints),
    )


def _probs_at(x, constraint_models, constraints) -> dict:
    _, per = _feasibility_product(np.atleast_2d(x), constraint_models, constraints)
    return {name: float(p[0]) for name, p in per.items()}
