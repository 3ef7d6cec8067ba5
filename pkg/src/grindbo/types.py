"""Shared domain types: parameter points, trial records, constraints, bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Canonical wire names for the two optimized inputs, in axis order.
AXIS_NAMES = ("cutting_speed_mps", "feed_rate_mmpm")


@dataclass(frozen=True)
class ProcessParams:
    """One point in the optimization domain.

    cutting_speed is in m/s, feed_rate in mm/min.
    """

    cutting_speed: float
    feed_rate: float

    def to_array(self) -> np.ndarray:
        return np.array([self.cutting_speed, self.feed_rate], dtype=float)

    @classmethod
    def from_array(cls, x) -> "ProcessParams":
        x = np.asarray(x, dtype=float).ravel()
        if x.size != 2:
            raise ValueError(f"expected 2 coordinates (speed, feed), got {x.size}")
        return cls(cutting_speed=float(x[0]), feed_rate=float(x[1]))


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box of admissible inputs; lower < upper componentwise."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("domain lower/upper must be 1-D and the same length")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ValueError("domain bounds must be finite")
        if not np.all(lo < hi):
            raise ValueError("domain requires lower < upper componentwise")
        object.__setattr__(self, "lower", tuple(float(v) for v in lo))
        object.__setattr__(self, "upper", tuple(float(v) for v in hi))

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, x, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float).ravel()
        lo = np.asarray(self.lower) - atol
        hi = np.asarray(self.upper) + atol
        return bool(x.size == self.dim and np.all(x >= lo) and np.all(x <= hi))

    def normalize(self, X) -> np.ndarray:
        """Affine map of raw coordinates onto the unit cube."""
        X = np.asarray(X, dtype=float)
        lo = np.asarray(self.lower)
        span = np.asarray(self.upper) - lo
        return (X - lo) / span

    def denormalize(self, U) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        lo = np.asarray(self.lower)
        span = np.asarray(self.upper) - lo
        return lo + U * span


def default_domain() -> Domain:
    """Cutting speed 12-30 m/s, feed rate 10-40 mm/min."""
    return Domain(lower=(12.0, 10.0), upper=(30.0, 40.0))


@dataclass(frozen=True)
class ConstraintSpec:
    """An upper limit on a measured quantity plus the minimal probability
    with which the fitted model must predict it to hold."""

    name: str
    limit: float
    p_min: float = 0.5

    def __post_init__(self):
        if not math.isfinite(self.limit):
            raise ValueError(f"constraint {self.name!r}: limit must be finite")
        if not (0.0 < self.p_min < 1.0):
            raise ValueError(
                f"constraint {self.name!r}: p_min must lie strictly in (0, 1), got {self.p_min}"
            )


def default_constraints(p_min_temperature: float = 0.5, p_min_roughness: float = 0.5):
    """Temperature limit 585 degC and roughness limit 230 nm."""
    return [
        ConstraintSpec(name="temperature", limit=585.0, p_min=p_min_temperature),
        ConstraintSpec(name="roughness", limit=230.0, p_min=p_min_roughness),
    ]


@dataclass(frozen=True)
class TrialOutcome:
    """Measurements from one grinding run.

    first_side_temperature: aggregated reading of the first ground side after
        dressing, degC (the temperature constraint observable).
    max_roughness: maximum roughness measured over the run, nm.
    dressing_interval: inserts ground until burn (or until the run was
        stopped), in half-insert steps; feeds the cost model only.
    censored: run stopped at the insert cap without burn, so the interval is
        a lower bound.
    """

    first_side_temperature: float
    max_roughness: float
    dressing_interval: float
    censored: bool = False

    def __post_init__(self):
        for name in ("first_side_temperature", "max_roughness", "dressing_interval"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"outcome field {name} must be finite and positive, got {v}")

    def constraint_value(self, name: str) -> float:
        if name == "temperature":
            return self.first_side_temperature
        if name == "roughness":
            return self.max_roughness
        raise KeyError(f"unknown constraint observable {name!r}")


TRIAL_ORIGINS = ("random-init", "acquisition", "manual")


@dataclass(frozen=True)
class TrialRecord:
    """One completed trial: where it ran, what was measured, what it cost."""

    index: int
    params: ProcessParams
    outcome: TrialOutcome
    cost: float
    origin: str = "manual"
    out_of_domain: bool = False

    def __post_init__(self):
        if self.origin not in TRIAL_ORIGINS:
            raise ValueError(f"origin must be one of {TRIAL_ORIGINS}, got {self.origin!r}")


@dataclass(frozen=True)
class Proposal:
    """A suggested next trial and where the suggestion came from."""

    params: ProcessParams
    origin: str = "acquisition"
