"""Exact Gaussian-process regression with a Matérn-5/2 ARD kernel.

The estimator follows the scikit-learn fit/predict convention so it can be
cloned, inspected with ``get_params`` and composed with the wider ecosystem.
All linear algebra goes through a Cholesky factorization of the regularized
covariance matrix; hyperparameters are selected by maximizing the marginal
log likelihood in log space with analytic gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin

from .validation import check_matrix, check_vector

_SQRT5 = math.sqrt(5.0)
_LOG_2PI = math.log(2.0 * math.pi)

JITTER_INITIAL = 1e-10
JITTER_FACTOR = 10.0
JITTER_CAP = 1e-4

# Signal variance is floored well above zero: targets are standardized, so a
# fit claiming far-field variance under 5% of the data spread is asserting the
# surface is flat everywhere, which a handful of points cannot support and
# which falsely satisfies uncertainty-based stopping rules downstream.
DEFAULT_SIGNAL_VARIANCE_BOUNDS = (0.05, 1e2)
DEFAULT_LENGTH_SCALE_BOUNDS = (0.05, 10.0)
DEFAULT_NOISE_VARIANCE_BOUNDS = (1e-6, 1.0)

# The target scale is never taken below this fraction of the mean magnitude;
# near-identical early measurements must not shrink raw-unit uncertainty.
RELATIVE_SCALE_FLOOR = 0.1


class NumericalConditioningError(RuntimeError):
    """Cholesky factorization failed even after the jitter ladder.

    Attributes
    ----------
    jitter_levels : tuple of float
        Every diagonal jitter that was attempted, in order.
    """

    def __init__(self, message: str, jitter_levels=()):
        super().__init__(message)
        self.jitter_levels = tuple(jitter_levels)


@dataclass(frozen=True)
class Hyperparams:
    """Kernel and noise hyperparameters.

    signal_variance and noise_variance are in squared output units;
    length_scales has one entry per input dimension.
    """

    signal_variance: float
    length_scales: tuple
    noise_variance: float

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.length_scales))
        object.__setattr__(self, "length_scales", ls)
        values = (self.signal_variance, *ls, self.noise_variance)
        if not all(math.isfinite(v) and v > 0 for v in values):
            raise ValueError(f"hyperparameters must be finite and strictly positive: {self}")

    @property
    def dim(self) -> int:
        return len(self.length_scales)

    def to_log_vector(self) -> np.ndarray:
        return np.log(
            np.array([self.signal_variance, *self.length_scales, self.noise_variance])
        )

    @classmethod
    def from_log_vector(cls, theta) -> "Hyperparams":
        theta = np.asarray(theta, dtype=float)
        return cls(
            signal_variance=float(np.exp(theta[0])),
            length_scales=tuple(np.exp(theta[1:-1])),
            noise_variance=float(np.exp(theta[-1])),
        )


def matern52_ard(x, x2, signal_variance: float, length_scales) -> float:
    """Matérn-5/2 covariance between two points with per-dimension scaling.

    k = sv * (1 + sqrt(5) r + 5/3 r^2) * exp(-sqrt(5) r) where r is the
    length-scale-weighted Euclidean distance.
    """
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    ls = np.asarray(length_scales, dtype=float).ravel()
    if x.shape != x2.shape or x.shape != ls.shape:
        raise ValueError(
            f"dimension mismatch: x has {x.size}, x2 has {x2.size}, "
            f"length_scales has {ls.size}"
        )
    scaled = (x - x2) / ls
    r = math.sqrt(float(np.dot(scaled, scaled)))
    return signal_variance * (1.0 + _SQRT5 * r + (5.0 / 3.0) * r * r) * math.exp(-_SQRT5 * r)


def matern52_ard_matrix(X, X2, signal_variance: float, length_scales) -> np.ndarray:
    """Cross-covariance matrix of shape (len(X), len(X2))."""
    X = np.asarray(X, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    ls = np.asarray(length_scales, dtype=float).ravel()
    if X.shape[-1] != ls.size or X2.shape[-1] != ls.size:
        raise ValueError("input dimension does not match length_scales")
    scaled = (X[:, None, :] - X2[None, :, :]) / ls
    r2 = np.einsum("ijk,ijk->ij", scaled, scaled)
    r = np.sqrt(r2)
    return signal_variance * (1.0 + _SQRT5 * r + (5.0 / 3.0) * r2) * np.exp(-_SQRT5 * r)


def cholesky_with_jitter(A, initial: float = JITTER_INITIAL, factor: float = JITTER_FACTOR,
                         cap: float = JITTER_CAP):
    """Lower Cholesky factor of A, escalating diagonal jitter on failure.

    Returns (L, jitter_used). jitter_used is 0.0 when A factorizes as given.
    Raises NumericalConditioningError once the jitter ladder passes `cap`.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    eye = np.eye(n)
    tried = []
    jitter = 0.0
    while True:
        try:
            L = cholesky(A + jitter * eye if jitter else A, lower=True, check_finite=False)
            return L, jitter
        except np.linalg.LinAlgError:
            pass
        tried.append(jitter)
        jitter = initial if jitter == 0.0 else jitter * factor
        if jitter > cap * (1.0 + 1e-12):
            raise NumericalConditioningError(
                f"covariance matrix is not positive definite after jitter up to {cap:g}",
                jitter_levels=tried,
            )


def _fit_core(X, y, hyper: Hyperparams):
    """Factorize K + noise*I and precompute alpha = (K + noise*I)^-1 y."""
    K = matern52_ard_matrix(X, X, hyper.signal_variance, hyper.length_scales)
    A = K + hyper.noise_variance * np.eye(len(X))
    L, jitter = cholesky_with_jitter(A)
    alpha = cho_solve((L, True), y, check_finite=False)
    return L, alpha, jitter


def _lml_from_factor(y, L, alpha) -> float:
    t = len(y)
    return float(
        -0.5 * np.dot(y, alpha) - np.sum(np.log(np.diag(L))) - 0.5 * t * _LOG_2PI
    )


def log_marginal_likelihood(X, y, hyper: Hyperparams) -> float:
    """Marginal log likelihood of (X, y) under the given hyperparameters."""
    X = check_matrix(X, "X")
    y = check_vector(y, "y", length=X.shape[0])
    if len(y) < 1:
        raise ValueError("log marginal likelihood requires at least one observation")
    L, alpha, _ = _fit_core(X, y, hyper)
    return _lml_from_factor(y, L, alpha)


def _lml_value_and_grad(theta, X, y, diffs_sq):
    """LML and its gradient w.r.t. log hyperparameters.

    diffs_sq is the precomputed (t, t, D) tensor of squared coordinate
    differences, shared across evaluations.
    """
    t, D = X.shape
    sv = math.exp(theta[0])
    ls = np.exp(theta[1 : 1 + D])
    noise = math.exp(theta[-1])

    S = diffs_sq / (ls * ls)  # (t, t, D), entries ((x_d - x'_d)/l_d)^2
    r2 = np.sum(S, axis=2)
    r = np.sqrt(r2)
    decay = np.exp(-_SQRT5 * r)
    K_unit = (1.0 + _SQRT5 * r + (5.0 / 3.0) * r2) * decay
    K = sv * K_unit
    A = K + noise * np.eye(t)
    L, _ = cholesky_with_jitter(A)
    alpha = cho_solve((L, True), y, check_finite=False)
    lml = _lml_from_factor(y, L, alpha)

    A_inv = cho_solve((L, True), np.eye(t), check_finite=False)
    W = np.outer(alpha, alpha) - A_inv

    grad = np.empty(D + 2)
    grad[0] = 0.5 * np.sum(W * K)
    # d k / d log l_d = sv * (5/3)(1 + sqrt5 r) exp(-sqrt5 r) * S_d
    E = sv * (5.0 / 3.0) * (1.0 + _SQRT5 * r) * decay
    WE = W * E
    for d in range(D):
        grad[1 + d] = 0.5 * np.sum(WE * S[:, :, d])
    grad[-1] = 0.5 * noise * np.trace(W)
    return lml, grad


def _log_bounds(D, signal_variance_bounds, length_scale_bounds, noise_variance_bounds):
    bounds = [signal_variance_bounds] + [length_scale_bounds] * D + [noise_variance_bounds]
    for lo, hi in bounds:
        if not (0 < lo < hi):
            raise ValueError(f"hyperparameter bounds must satisfy 0 < low < high, got ({lo}, {hi})")
    return np.log(np.asarray(bounds, dtype=float))


def optimize_hyperparameters(
    X,
    y,
    signal_variance_bounds=DEFAULT_SIGNAL_VARIANCE_BOUNDS,
    length_scale_bounds=DEFAULT_LENGTH_SCALE_BOUNDS,
    noise_variance_bounds=DEFAULT_NOISE_VARIANCE_BOUNDS,
    n_restarts: int = 8,
    random_state=None,
    extra_starts=(),
) -> Hyperparams:
    """Maximize the marginal log likelihood over box-bounded log hyperparameters.

    Runs `n_restarts` L-BFGS-B searches from seeded uniform draws in the log
    box (plus any `extra_starts`), and returns the best result; ties resolve
    to the lowest restart index. The returned value never falls below the
    likelihood at any start point.
    """
    X = check_matrix(X, "X")
    y = check_vector(y, "y", length=X.shape[0])
    t, D = X.shape
    if t < 2:
        raise ValueError("hyperparameter optimization requires at least two observations")
    log_b = _log_bounds(D, signal_variance_bounds, length_scale_bounds, noise_variance_bounds)

    rng = np.random.default_rng(random_state)
    starts = rng.uniform(log_b[:, 0], log_b[:, 1], size=(int(n_restarts), D + 2))
    extra = [
        np.clip(h.to_log_vector(), log_b[:, 0], log_b[:, 1])
        for h in extra_starts
        if h is not None
    ]
    if extra:
        starts = np.vstack([starts] + extra) if starts.size else np.asarray(extra)

    diffs = X[:, None, :] - X[None, :, :]
    diffs_sq = diffs * diffs

    def objective(theta):
        lml, grad = _lml_value_and_grad(theta, X, y, diffs_sq)
        return -lml, -grad

    candidates = []  # (lml, restart_index, theta)
    failures = []
    for idx, start in enumerate(starts):
        try:
            start_lml, _ = _lml_value_and_grad(start, X, y, diffs_sq)
        except NumericalConditioningError as err:
            failures.append(err)
            continue
        best_theta, best_lml = start, start_lml
        try:
            res = minimize(
                objective,
                start,
                jac=True,
                method="L-BFGS-B",
                bounds=log_b,
            )
            if np.all(np.isfinite(res.x)) and -res.fun > best_lml:
                best_theta, best_lml = res.x, float(-res.fun)
        except NumericalConditioningError as err:
            failures.append(err)  # keep the evaluable start as candidate
        candidates.append((best_lml, idx, best_theta))

    if not candidates:
        levels = tuple(lv for err in failures for lv in err.jitter_levels)
        raise NumericalConditioningError(
            "every hyperparameter restart failed to factorize", jitter_levels=levels
        )
    candidates.sort(key=lambda c: (-c[0], c[1]))
    return Hyperparams.from_log_vector(candidates[0][2])


class MaternGPRegressor(RegressorMixin, BaseEstimator):
    """Gaussian-process regressor with a Matérn-5/2 ARD kernel.

    Parameters
    ----------
    hyperparams : Hyperparams, optional
        Fixed hyperparameters. Required when `optimize=False` or when fewer
        than two training points are supplied; otherwise used as an extra
        start for the likelihood search.
    optimize : bool
        Re-select hyperparameters by marginal-likelihood maximization at fit
        time (needs >= 2 points).
    n_restarts : int
        Number of seeded random restarts for the likelihood search.
    signal_variance_bounds, length_scale_bounds, noise_variance_bounds : pair
        Box bounds for the search, in normalized units.
    input_bounds : array-like of shape (2, D), optional
        Per-dimension (lower, upper) rows; inputs are affinely mapped onto
        the unit cube before any kernel evaluation. None leaves inputs as-is.
    normalize_y : bool
        Standardize targets to zero mean / unit variance over the training
        set; predictions are mapped back to raw units.
    random_state : int, Generator, optional
        Seeds the restart draws; fitting is deterministic given it.

    A fitted instance is never mutated by prediction and is safe to share
    across threads; refitting should go through a fresh instance (or sklearn
    `clone`) when older snapshots must stay valid.
    """

    def __init__(
        self,
        hyperparams: Hyperparams | None = None,
        optimize: bool = True,
        n_restarts: int = 8,
        signal_variance_bounds=DEFAULT_SIGNAL_VARIANCE_BOUNDS,
        length_scale_bounds=DEFAULT_LENGTH_SCALE_BOUNDS,
        noise_variance_bounds=DEFAULT_NOISE_VARIANCE_BOUNDS,
        input_bounds=None,
        normalize_y: bool = True,
        random_state=None,
    ):
        self.hyperparams = hyperparams
        self.optimize = optimize
        self.n_restarts = n_restarts
        self.signal_variance_bounds = signal_variance_bounds
        self.length_scale_bounds = length_scale_bounds
        self.noise_variance_bounds = noise_variance_bounds
        self.input_bounds = input_bounds
        self.normalize_y = normalize_y
        self.random_state = random_state

    # -- normalization -----------------------------------------------------

    def _input_maps(self, D):
        if self.input_bounds is None:
            return np.zeros(D), np.ones(D)
        b = np.asarray(self.input_bounds, dtype=float)
        if b.shape != (2, D):
            raise ValueError(f"input_bounds must have shape (2, {D}), got {b.shape}")
        lo, hi = b[0], b[1]
        if not np.all(hi > lo):
            raise ValueError("input_bounds rows must satisfy lower < upper")
        return lo, hi - lo

    def _normalize_X(self, X):
        return (X - self._x_offset_) / self._x_scale_

    # -- estimator API ------------------------------------------------------

    def fit(self, X, y):
        X = check_matrix(X, "X")
        y = check_vector(y, "y", length=X.shape[0])
        t, D = X.shape
        self.n_features_in_ = D
        self._x_offset_, self._x_scale_ = self._input_maps(D)
        Xn = self._normalize_X(X)

        if self.normalize_y and t > 0:
            self._y_mean_ = float(np.mean(y))
            scale = max(float(np.std(y)), RELATIVE_SCALE_FLOOR * abs(self._y_mean_))
            self._y_scale_ = scale if scale > 1e-12 else 1.0
        else:
            self._y_mean_, self._y_scale_ = 0.0, 1.0
        yn = (y - self._y_mean_) / self._y_scale_

        if self.optimize and t >= 2:
            hyper = optimize_hyperparameters(
                Xn,
                yn,
                signal_variance_bounds=self.signal_variance_bounds,
                length_scale_bounds=self.length_scale_bounds,
                noise_variance_bounds=self.noise_variance_bounds,
                n_restarts=self.n_restarts,
                random_state=self.random_state,
                extra_starts=(self.hyperparams,) if self.hyperparams is not None else (),
            )
        elif self.hyperparams is not None:
            if self.hyperparams.dim != D:
                raise ValueError(
                    f"hyperparams cover {self.hyperparams.dim} dimensions, data has {D}"
                )
            hyper = self.hyperparams
        else:
            raise ValueError(
                "fixed hyperparams are required when optimization is disabled "
                "or fewer than two training points are given"
            )

        self.X_train_ = X
        self.y_train_ = y
        self._Xn_ = Xn
        self._yn_ = yn
        self.hyperparams_ = hyper
        if t > 0:
            self.L_, self.alpha_, self.jitter_ = _fit_core(Xn, yn, hyper)
            self.lml_ = _lml_from_factor(yn, self.L_, self.alpha_)
        else:
            self.L_ = np.zeros((0, 0))
            self.alpha_ = np.zeros(0)
            self.jitter_ = 0.0
            self.lml_ = 0.0
        return self

    def predict(self, X, return_std: bool = False):
        """Posterior mean (and latent standard deviation) in raw units."""
        if not hasattr(self, "hyperparams_"):
            raise RuntimeError("this MaternGPRegressor instance is not fitted yet")
        X = check_matrix(X, "X", n_features=self.n_features_in_)
        Xn = self._normalize_X(X)
        hyper = self.hyperparams_
        if len(self._yn_) == 0:
            mean_n = np.zeros(len(Xn))
            var_n = np.full(len(Xn), hyper.signal_variance)
        else:
            k = matern52_ard_matrix(Xn, self._Xn_, hyper.signal_variance, hyper.length_scales)
            mean_n = k @ self.alpha_
            v = solve_triangular(self.L_, k.T, lower=True, check_finite=False)
            var_n = hyper.signal_variance - np.einsum("ij,ij->j", v, v)
            np.clip(var_n, 0.0, None, out=var_n)
        mean = self._y_mean_ + self._y_scale_ * mean_n
        if not return_std:
            return mean
        std = self._y_scale_ * np.sqrt(var_n)
        return mean, std

    def log_marginal_likelihood(self, hyperparams: Hyperparams | None = None) -> float:
        """LML of the (normalized) training data at the fitted or given hyperparameters."""
        if not hasattr(self, "hyperparams_"):
            raise RuntimeError("this MaternGPRegressor instance is not fitted yet")
        if hyperparams is None:
            return self.lml_
        return log_marginal_likelihood(self._Xn_, self._yn_, hyperparams)
