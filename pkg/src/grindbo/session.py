"""Optimization session engine: the propose/measure/refit/recommend loop.

A Session carries the trial history, the three fitted surrogates (cost,
temperature, roughness), the recommendation and convergence histories, and
the queue of pending proposals. All mutation goes through ``record_trial``
and ``advance``; everything downstream of the seed is deterministic, and
per-step random streams are derived from (seed, purpose, trial count) so a
replayed trial log reproduces every decision bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import acquisition as acq
from .cost import CostParams, cost_per_insert, removed_volume
from .gp import MaternGPRegressor, NumericalConditioningError
from .types import (
    ConstraintSpec,
    Domain,
    Proposal,
    ProcessParams,
    TrialOutcome,
    TrialRecord,
    default_constraints,
    default_domain,
)
from .validation import check_positive_scalar, check_seed

MODEL_TARGETS = ("cost", "temperature", "roughness")

CONVERGENCE_WINDOW = 3
FEED_SPAN_LIMIT_MMPM = 0.4
SPEED_SPAN_LIMIT_MPS = 0.2

# Purpose tags for derived random streams.
_RNG_INIT = 0
_RNG_HYPEROPT = 1
_RNG_ACQUISITION = 2
_RNG_PLANT = 3


@dataclass(frozen=True)
class SessionConfig:
    """Static configuration of one optimization session."""

    domain: Domain = field(default_factory=default_domain)
    constraints: tuple = ()
    cost_params: CostParams = field(default_factory=CostParams)
    epsilon: float = 0.04
    seed: int = 0
    max_trials: int = 30

    def __post_init__(self):
        if not self.constraints:
            object.__setattr__(self, "constraints", tuple(default_constraints()))
        else:
            object.__setattr__(self, "constraints", tuple(self.constraints))
        names = sorted(c.name for c in self.constraints)
        if names != ["roughness", "temperature"]:
            raise ValueError(
                f"constraints must be exactly temperature and roughness, got {names}"
            )
        check_positive_scalar(self.epsilon, "epsilon")
        check_seed(self.seed)
        if self.max_trials < 2:
            raise ValueError("max_trials must allow at least the two initial trials")

    def constraint(self, name: str) -> ConstraintSpec:
        for c in self.constraints:
            if c.name == name:
                return c
        raise KeyError(name)

    def p_mins(self) -> dict:
        return {c.name: c.p_min for c in self.constraints}


@dataclass(frozen=True)
class Recommendation:
    """Predicted-optimal parameters with cost and feasibility diagnostics.

    cost_ci_halfwidth is twice the predicted cost standard deviation at the
    recommended point, i.e. half of the ~95% credible interval width.
    """

    params: ProcessParams
    expected_cost: float
    cost_ci_halfwidth: float
    feasibility: dict


@dataclass(frozen=True)
class ConvergenceStatus:
    converged: bool
    criterion_value: float | None
    consecutive_hits: int
    recent_feed_span: float | None
    recent_speed_span: float | None


@dataclass(frozen=True)
class AggregatedTemperature:
    value: float
    degraded: bool


def aggregate_temperature(per_sensor_series) -> AggregatedTemperature:
    """Average of each sensor's ten highest readings, then across sensors.

    Sensors with fewer than ten readings contribute the mean of everything
    they have and mark the result degraded.
    """
    if not per_sensor_series:
        raise ValueError("at least one sensor series is required")
    degraded = False
    sensor_means = []
    for i, series in enumerate(per_sensor_series):
        values = np.asarray(series, dtype=float).ravel()
        if values.size == 0:
            raise ValueError(f"sensor {i} has no readings")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"sensor {i} has non-finite readings")
        if values.size < 10:
            degraded = True
            top = values
        else:
            top = np.sort(values)[-10:]
        sensor_means.append(float(np.mean(top)))
    return AggregatedTemperature(value=float(np.mean(sensor_means)), degraded=degraded)


def _derived_rng_key(seed: int, purpose: int, *rest) -> list:
    return [int(seed), int(purpose), *[int(r) for r in rest]]


def plant_run_seed(seed: int, trial_index: int) -> list:
    """Seed material for the simulated plant run feeding trial `trial_index`."""
    return _derived_rng_key(seed, _RNG_PLANT, trial_index)


class Session:
    """Mutable state of one optimization run.

    Create with :meth:`create`, feed measurements with :meth:`record_trial`,
    then call :meth:`advance` to refit the surrogates, log a recommendation
    and convergence status, and (when the pending queue is empty) push a new
    acquisition proposal. Reads never mutate state; one writer per session.
    """

    def __init__(self, config: SessionConfig):
        self.config = config
        self.trials: list[TrialRecord] = []
        self.pending_proposals: list[Proposal] = []
        self.proposal_history: list[Proposal] = []
        self.recommendations: list[Recommendation | None] = []
        self.convergence_history: list[ConvergenceStatus] = []
        self.degraded = False
        self._models: dict | None = None
        self._model_hypers: dict | None = None
        self._models_trial_count: int | None = None

    # -- construction --------------------------------------------------------

    @classmethod
    def create(cls, config: SessionConfig) -> "Session":
        """New session with the two seeded random initial proposals queued."""
        session = cls(config)
        rng = np.random.default_rng(_derived_rng_key(config.seed, _RNG_INIT))
        lo = np.asarray(config.domain.lower)
        hi = np.asarray(config.domain.upper)
        for _ in range(2):
            x = rng.uniform(lo, hi)
            session._queue_proposal(Proposal(ProcessParams.from_array(x), origin="random-init"))
        return session

    @classmethod
    def replay(cls, config: SessionConfig, trial_log) -> "Session":
        """Rebuild a session by re-recording a trial log; every proposal,
        recommendation and convergence decision is recomputed from the seed."""
        session = cls.create(config)
        for entry in trial_log:
            session.record_trial(entry.params, entry.outcome, origin=entry.origin)
            session.advance()
        return session

    # -- proposals -------------------------------------------------------------

    def _queue_proposal(self, proposal: Proposal):
        self.pending_proposals.append(proposal)
        self.proposal_history.append(proposal)

    def next_proposal(self) -> Proposal | None:
        return self.pending_proposals[0] if self.pending_proposals else None

    # -- trial recording ---------------------------------------------------------

    def record_trial(
        self, params: ProcessParams, outcome: TrialOutcome, origin: str | None = None
    ) -> TrialRecord:
        """Append one measured trial; costs it, consumes a matching pending
        proposal, and invalidates the fitted models."""
        explicit_manual = origin == "manual"
        if origin is None:
            origin = "manual"
            if self.pending_proposals and self._matches(
                self.pending_proposals[0].params, params
            ):
                origin = self.pending_proposals[0].origin
        out_of_domain = not self.config.domain.contains(params.to_array())
        if out_of_domain and not explicit_manual:
            raise ValueError(
                f"params {params} are outside the domain; only trials explicitly "
                "marked origin=manual may deviate"
            )
        if self.pending_proposals and self._matches(self.pending_proposals[0].params, params):
            self.pending_proposals.pop(0)

        v_w = removed_volume(outcome.dressing_interval, self.config.cost_params)
        cost = cost_per_insert(params.cutting_speed, params.feed_rate, v_w, self.config.cost_params)
        record = TrialRecord(
            index=len(self.trials),
            params=params,
            outcome=outcome,
            cost=cost,
            origin=origin,
            out_of_domain=out_of_domain,
        )
        self.trials.append(record)
        self._models = None
        self._models_trial_count = None
        return record

    @staticmethod
    def _matches(a: ProcessParams, b: ProcessParams) -> bool:
        return a.cutting_speed == b.cutting_speed and a.feed_rate == b.feed_rate

    # -- surrogate models ------------------------------------------------------

    def _target_values(self, name: str) -> np.ndarray:
        if name == "cost":
            return np.array([t.cost for t in self.trials])
        if name == "temperature":
            return np.array([t.outcome.first_side_temperature for t in self.trials])
        if name == "roughness":
            return np.array([t.outcome.max_roughness for t in self.trials])
        raise KeyError(name)

    def _input_matrix(self) -> np.ndarray:
        return np.array([t.params.to_array() for t in self.trials])

    def refit_models(self) -> dict:
        """Fit fresh cost/temperature/roughness surrogates on the current
        trials, re-optimizing hyperparameters; falls back to the previous
        hyperparameters (and flags the session) if the search fails."""
        t = len(self.trials)
        if t < 2:
            raise ValueError("model fitting requires at least two trials")
        X = self._input_matrix()
        bounds = np.array([self.config.domain.lower, self.config.domain.upper])
        models = {}
        hypers = {}
        for idx, name in enumerate(MODEL_TARGETS):
            y = self._target_values(name)
            seed_key = _derived_rng_key(self.config.seed, _RNG_HYPEROPT, t, idx)
            # The previous iteration's hyperparameters join the restart pool so
            # consecutive refits do not hop between near-tied likelihood optima.
            previous = (self._model_hypers or {}).get(name)
            model = MaternGPRegressor(
                hyperparams=previous, input_bounds=bounds, random_state=seed_key
            )
            try:
                model.fit(X, y)
            except NumericalConditioningError:
                previous = (self._model_hypers or {}).get(name)
                if previous is None:
                    raise
                model = MaternGPRegressor(
                    hyperparams=previous,
                    optimize=False,
                    input_bounds=bounds,
                    random_state=seed_key,
                ).fit(X, y)
                self.degraded = True
            models[name] = model
            hypers[name] = model.hyperparams_
        self._models = models
        self._model_hypers = hypers
        self._models_trial_count = t
        return models

    @property
    def models(self) -> dict | None:
        return self._models

    def models_or_fit(self) -> dict:
        if self._models is None or self._models_trial_count != len(self.trials):
            self.refit_models()
        return self._models

    def restore_models(self, hypers: dict):
        """Rebuild fitted models from stored hyperparameters without a new
        likelihood search (used when reloading persisted sessions)."""
        t = len(self.trials)
        if t < 2:
            return
        X = self._input_matrix()
        bounds = np.array([self.config.domain.lower, self.config.domain.upper])
        models = {}
        for name in MODEL_TARGETS:
            models[name] = MaternGPRegressor(
                hyperparams=hypers[name], optimize=False, input_bounds=bounds
            ).fit(X, self._target_values(name))
        self._models = models
        self._model_hypers = dict(hypers)
        self._models_trial_count = t

    # -- recommendation ----------------------------------------------------------

    def feasible_best(self) -> float | None:
        return acq.feasible_best(self.trials, self.config.constraints)

    def recommend_optimum(
        self, p_min_temperature: float | None = None, p_min_roughness: float | None = None
    ) -> Recommendation | None:
        """Parameters minimizing predicted mean cost subject to both
        feasibility probabilities meeting their thresholds; None when no
        point on the search lattice qualifies."""
        return self.recommend_sweep(
            [(p_min_temperature, p_min_roughness)]
        )[0]

    def recommend_sweep(self, threshold_pairs) -> list:
        """Recommendations for several (p_min_T, p_min_Ra) pairs at once.

        All pairs share one candidate pool (lattice plus every refined
        point), so tightening thresholds can only shrink the feasible pool:
        expected cost is exactly nondecreasing across nested thresholds.
        """
        models = self.models_or_fit()
        pairs = []
        for p_t, p_ra in threshold_pairs:
            pairs.append(
                (
                    p_t if p_t is not None else self.config.constraint("temperature").p_min,
                    p_ra if p_ra is not None else self.config.constraint("roughness").p_min,
                )
            )

        domain = self.config.domain
        pts = acq.grid_points(domain, acq.GRID_N)
        mean_cost, std_cost = models["cost"].predict(pts, return_std=True)
        probs = {}
        for name in ("temperature", "roughness"):
            m, s = models[name].predict(pts, return_std=True)
            probs[name] = acq.probability_feasible(m, s**2, self.config.constraint(name).limit)

        extra_points = []
        for p_t, p_ra in set(pairs):
            mask = (probs["temperature"] >= p_t) & (probs["roughness"] >= p_ra)
            if not mask.any():
                continue
            extra_points.extend(
                self._refine_recommendation(models, pts, mean_cost, mask, p_t, p_ra)
            )

        if extra_points:
            extra = np.asarray(extra_points)
            mean_e, std_e = models["cost"].predict(extra, return_std=True)
            probs_e = {}
            for name in ("temperature", "roughness"):
                m, s = models[name].predict(extra, return_std=True)
                probs_e[name] = acq.probability_feasible(
                    m, s**2, self.config.constraint(name).limit
                )
            all_pts = np.vstack([pts, extra])
            all_mean = np.concatenate([mean_cost, mean_e])
            all_std = np.concatenate([std_cost, std_e])
            all_probs = {
                name: np.concatenate([probs[name], probs_e[name]])
                for name in probs
            }
        else:
            all_pts, all_mean, all_std, all_probs = pts, mean_cost, std_cost, probs

        results = []
        for p_t, p_ra in pairs:
            mask = (all_probs["temperature"] >= p_t) & (all_probs["roughness"] >= p_ra)
            if not mask.any():
                results.append(None)
                continue
            masked_mean = np.where(mask, all_mean, np.inf)
            order = np.lexsort(
                tuple(all_pts[:, d] for d in range(all_pts.shape[1])) + (masked_mean,)
            )
            best = int(order[0])
            results.append(
                Recommendation(
                    params=ProcessParams.from_array(all_pts[best]),
                    expected_cost=float(all_mean[best]),
                    cost_ci_halfwidth=float(2.0 * all_std[best]),
                    feasibility={name: float(all_probs[name][best]) for name in all_probs},
                )
            )
        return results

    def _refine_recommendation(self, models, pts, mean_cost, mask, p_t, p_ra):
        """Simplex descent of predicted mean cost from the best feasible
        cells, with infeasibility pushed away by a soft barrier."""
        from scipy.optimize import minimize

        domain = self.config.domain
        lo = np.asarray(domain.lower)
        span = np.asarray(domain.upper) - lo
        limits = {n: self.config.constraint(n).limit for n in ("temperature", "roughness")}
        thresholds = {"temperature": p_t, "roughness": p_ra}
        big = float(np.max(mean_cost[np.isfinite(mean_cost)])) + 1e3

        def objective(u):
            x = (lo + np.clip(u, 0.0, 1.0) * span)[None, :]
            m_cost = float(models["cost"].predict(x)[0])
            penalty = 0.0
            for name in ("temperature", "roughness"):
                m, s = models[name].predict(x, return_std=True)
                p = float(acq.probability_feasible(m[0], s[0] ** 2, limits[name]))
                if p < thresholds[name]:
                    penalty += big + (thresholds[name] - p)
            return m_cost + penalty

        masked = np.where(mask, mean_cost, np.inf)
        top = np.argsort(masked, kind="stable")[: acq.REFINE_TOP]
        refined = []
        for i in top:
            if not np.isfinite(masked[i]):
                continue
            start = (pts[i] - lo) / span
            res = minimize(
                objective,
                start,
                method="Nelder-Mead",
                bounds=[(0.0, 1.0)] * domain.dim,
                options={"xatol": 1e-4, "fatol": 1e-12, "maxfev": 400},
            )
            refined.append(lo + np.clip(res.x, 0.0, 1.0) * span)
        return refined

    # -- acquisition --------------------------------------------------------------

    def propose_next_trial(self) -> Proposal:
        """Maximize constrained expected improvement and queue the argmax."""
        models = self.models_or_fit()
        best = self.feasible_best()
        result = acq.maximize_acquisition(
            cost_model=models["cost"],
            constraint_models={n: models[n] for n in ("temperature", "roughness")},
            constraints=self.config.constraints,
            best=best,
            domain=self.config.domain,
            seed=_derived_rng_key(self.config.seed, _RNG_ACQUISITION, len(self.trials)),
        )
        proposal = Proposal(ProcessParams.from_array(result.x), origin="acquisition")
        self._queue_proposal(proposal)
        return proposal

    # -- convergence ---------------------------------------------------------------

    def check_convergence(self) -> ConvergenceStatus:
        """Converged when the last three recommendations all have
        2*sigma below epsilon and their parameters moved within the span
        limits (0.4 mm/min feed, 0.2 m/s speed)."""
        recs = self.recommendations
        criterion = recs[-1].cost_ci_halfwidth if recs and recs[-1] is not None else None

        hits = 0
        for rec in reversed(recs):
            if rec is not None and rec.cost_ci_halfwidth < self.config.epsilon:
                hits += 1
            else:
                break

        feed_span = speed_span = None
        window = recs[-CONVERGENCE_WINDOW:]
        if len(window) == CONVERGENCE_WINDOW and all(r is not None for r in window):
            feeds = [r.params.feed_rate for r in window]
            speeds = [r.params.cutting_speed for r in window]
            feed_span = max(feeds) - min(feeds)
            speed_span = max(speeds) - min(speeds)

        converged = (
            hits >= CONVERGENCE_WINDOW
            and feed_span is not None
            and feed_span <= FEED_SPAN_LIMIT_MMPM
            and speed_span <= SPEED_SPAN_LIMIT_MPS
        )
        return ConvergenceStatus(
            converged=converged,
            criterion_value=criterion,
            consecutive_hits=hits,
            recent_feed_span=feed_span,
            recent_speed_span=speed_span,
        )

    @property
    def converged(self) -> bool:
        return bool(self.convergence_history) and self.convergence_history[-1].converged

    @property
    def at_trial_cap(self) -> bool:
        return len(self.trials) >= self.config.max_trials

    # -- the loop step ---------------------------------------------------------------

    def advance(self) -> dict:
        """One post-measurement pass: refit, recommend at the configured
        thresholds, log convergence, and propose the next trial if the
        queue is empty and the session is still running."""
        if len(self.trials) < 2:
            status = ConvergenceStatus(False, None, 0, None, None)
            return {
                "recommendation": None,
                "convergence": status,
                "next_proposal": self.next_proposal(),
            }
        self.models_or_fit()
        rec = self.recommend_optimum()
        self.recommendations.append(rec)
        status = self.check_convergence()
        self.convergence_history.append(status)
        if not status.converged and not self.at_trial_cap and not self.pending_proposals:
            self.propose_next_trial()
        return {
            "recommendation": rec,
            "convergence": status,
            "next_proposal": None if status.converged else self.next_proposal(),
        }
