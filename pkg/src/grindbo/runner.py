"""Unattended optimization runs against the synthetic plant."""

from __future__ import annotations

from dataclasses import dataclass

from .plant import PlantModel, simulate_run
from .session import Session, SessionConfig, plant_run_seed


@dataclass(frozen=True)
class IterationRecord:
    """One progress-log line of an unattended run."""

    iteration: int
    cutting_speed_mps: float
    feed_rate_mmpm: float
    cost_U: float
    criterion_value_U: float | None
    feasible: bool
    converged: bool

    def format_line(self) -> str:
        crit = "nan" if self.criterion_value_U is None else f"{self.criterion_value_U:.6f}"
        return (
            f"iter={self.iteration} "
            f"cutting_speed_mps={self.cutting_speed_mps:.4f} "
            f"feed_rate_mmpm={self.feed_rate_mmpm:.4f} "
            f"cost_U={self.cost_U:.6f} "
            f"two_sigma_U={crit} "
            f"feasible={'true' if self.feasible else 'false'} "
            f"converged={'true' if self.converged else 'false'}"
        )


def run_simulated_session(config: SessionConfig, plant: PlantModel, on_iteration=None) -> Session:
    """Drive a session to convergence (or the trial cap) with plant runs.

    Follows the live loop: take the next proposal, run the plant there,
    record the outcome, then refit/recommend/judge and queue the next
    proposal. `on_iteration` receives an IterationRecord after every trial.
    """
    session = Session.create(config)
    while not session.converged and not session.at_trial_cap:
        proposal = session.next_proposal()
        if proposal is None:  # defensive; the queue refills in advance()
            proposal = session.propose_next_trial()
        index = len(session.trials)
        outcome = simulate_run(plant, proposal.params, seed=plant_run_seed(config.seed, index))
        record = session.record_trial(proposal.params, outcome, origin=proposal.origin)
        summary = session.advance()
        if on_iteration is not None:
            feasible = all(
                outcome.constraint_value(c.name) <= c.limit for c in config.constraints
            )
            rec = summary["recommendation"]
            on_iteration(
                IterationRecord(
                    iteration=record.index,
                    cutting_speed_mps=record.params.cutting_speed,
                    feed_rate_mmpm=record.params.feed_rate,
                    cost_U=record.cost,
                    criterion_value_U=None if rec is None else rec.cost_ci_halfwidth,
                    feasible=feasible,
                    converged=summary["convergence"].converged,
                )
            )
    return session
