"""Synthetic grinding plant for unattended end-to-end runs.

Roughness and fresh-wheel temperature are affine in the two process inputs;
during a run the temperature climbs linearly with accumulated removed volume
(wheel dulling) until it crosses the burn threshold, which ends the run. The
dressing interval advances in half-insert steps because each insert is ground
on two sides. Default coefficients are calibrated so the reference point
(24.3 m/s, 11.7 mm/min) yields a noiseless interval of exactly 7.5 inserts
and the hot corner of the domain burns on the first side.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .cost import CostParams, dressing_overhead
from .types import Domain, ProcessParams, TrialOutcome


@dataclass(frozen=True)
class PlantModel:
    """Response-surface coefficients and run mechanics of the synthetic plant.

    The defaults satisfy two calibration anchors: a noiseless dressing
    interval of exactly 7.5 inserts at (24.3 m/s, 11.7 mm/min), and burn on
    the very first side at the domain's hot corner (30 m/s, 40 mm/min). The
    slopes place the cost-optimal operating point in the interior of the
    domain, pinned against the roughness limit, so the optimizer has to
    trade grinding time against dressing amortization under both
    constraints.
    """

    roughness_base_nm: float = 701.0
    roughness_speed_slope_nm_per_mps: float = -23.0
    roughness_feed_slope_nm_per_mmpm: float = 0.8
    temp_base_C: float = -250.0
    temp_feed_slope_C_per_mmpm: float = 26.0
    temp_speed_slope_C_per_mps: float = 9.0
    dulling_slope_C_per_mm3: float = 0.14037
    roughness_noise_sd_nm: float = 10.0
    temperature_noise_sd_C: float = 25.0
    burn_threshold_C: float = 585.0
    insert_cap: int = 8
    volume_per_insert_mm3: float = 310.6

    def __post_init__(self):
        if self.roughness_noise_sd_nm < 0 or self.temperature_noise_sd_C < 0:
            raise ValueError("noise standard deviations must be non-negative")
        if self.insert_cap < 1:
            raise ValueError("insert_cap must be at least 1")
        if self.dulling_slope_C_per_mm3 <= 0:
            raise ValueError("dulling slope must be positive")
        if self.volume_per_insert_mm3 <= 0:
            raise ValueError("volume per insert must be positive")

    # -- noiseless surfaces --------------------------------------------------

    def fresh_temperature(self, cutting_speed, feed_rate):
        return (
            self.temp_base_C
            + self.temp_feed_slope_C_per_mmpm * np.asarray(feed_rate, dtype=float)
            + self.temp_speed_slope_C_per_mps * np.asarray(cutting_speed, dtype=float)
        )

    def roughness(self, cutting_speed, feed_rate):
        return (
            self.roughness_base_nm
            + self.roughness_speed_slope_nm_per_mps * np.asarray(cutting_speed, dtype=float)
            + self.roughness_feed_slope_nm_per_mmpm * np.asarray(feed_rate, dtype=float)
        )

    def side_temperatures(self, params: ProcessParams) -> np.ndarray:
        """Noiseless temperature of each ground side, fresh wheel first."""
        n_sides = 2 * self.insert_cap
        t0 = float(self.fresh_temperature(params.cutting_speed, params.feed_rate))
        half_volume = self.volume_per_insert_mm3 / 2.0
        worn = self.dulling_slope_C_per_mm3 * half_volume * np.arange(n_sides)
        return t0 + worn

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PlantModel":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown plant config fields: {sorted(unknown)}")
        return cls(**known)

    @classmethod
    def from_file(cls, path) -> "PlantModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def default_plant() -> PlantModel:
    return PlantModel()


def _interval_from_side_temps(temps, threshold: float, insert_cap: int):
    """Dressing interval in inserts from a per-side temperature sequence.

    The run ends at the first side whose temperature exceeds the threshold;
    the interval counts the sides ground up to and including the last clean
    one, at half an insert per side, but never reports less than half an
    insert. A run that never burns is censored at the cap.
    """
    temps = np.asarray(temps, dtype=float)
    over = temps > threshold
    if not over.any():
        return float(insert_cap), True
    burn_side = int(np.argmax(over)) + 1  # 1-based
    clean_sides = max(burn_side - 1, 1)
    return clean_sides / 2.0, False


def true_surfaces(plant: PlantModel, params: ProcessParams) -> TrialOutcome:
    """Noiseless plant response at `params`."""
    temps = plant.side_temperatures(params)
    interval, censored = _interval_from_side_temps(temps, plant.burn_threshold_C, plant.insert_cap)
    return TrialOutcome(
        first_side_temperature=float(temps[0]),
        max_roughness=float(plant.roughness(params.cutting_speed, params.feed_rate)),
        dressing_interval=interval,
        censored=censored,
    )


def simulate_run(plant: PlantModel, params: ProcessParams, seed) -> TrialOutcome:
    """One noisy grinding run; deterministic for a given seed.

    Per-side temperature and roughness readings each get independent Gaussian
    noise. Burn is judged on the noisy readings, matching how the real run
    is stopped. Roughness is reported as the run maximum over sides measured
    before the burn (the burned side is skipped unless it is the only one).
    """
    rng = np.random.default_rng(seed)
    n_sides = 2 * plant.insert_cap
    # Readings are physical magnitudes; the noise tail cannot push them
    # below zero, so clamp at a token positive floor.
    temps = np.maximum(
        plant.side_temperatures(params)
        + rng.normal(0.0, plant.temperature_noise_sd_C, n_sides),
        1.0,
    )
    roughness = np.maximum(
        plant.roughness(params.cutting_speed, params.feed_rate)
        + rng.normal(0.0, plant.roughness_noise_sd_nm, n_sides),
        1.0,
    )
    interval, censored = _interval_from_side_temps(temps, plant.burn_threshold_C, plant.insert_cap)
    measured_sides = n_sides if censored else max(int(round(interval * 2)), 1)
    return TrialOutcome(
        first_side_temperature=float(temps[0]),
        max_roughness=float(np.max(roughness[:measured_sides])),
        dressing_interval=interval,
        censored=censored,
    )


def _interval_grid(plant: PlantModel, t0_grid: np.ndarray):
    """Vectorized noiseless dressing interval for fresh-wheel temperatures."""
    step = plant.dulling_slope_C_per_mm3 * plant.volume_per_insert_mm3 / 2.0
    q = (plant.burn_threshold_C - t0_grid) / step
    clean_sides = np.clip(np.floor(q) + 1.0, 1.0, 2 * plant.insert_cap)
    interval = clean_sides / 2.0
    censored = q >= 2 * plant.insert_cap - 1
    return interval, censored


def true_cost_grid(plant: PlantModel, domain: Domain, cost_params: CostParams, n: int = 1001):
    """Noiseless cost/constraint surfaces on an n-per-axis lattice.

    Returns (speeds, feeds, cost, temperature, roughness, feasible) where the
    2-D arrays are indexed [speed, feed] and feasibility applies the hard
    temperature and roughness limits of the reference problem (585 degC,
    230 nm) to the noiseless observables.
    """
    speeds = np.linspace(domain.lower[0], domain.upper[0], n)
    feeds = np.linspace(domain.lower[1], domain.upper[1], n)
    V, F = np.meshgrid(speeds, feeds, indexing="ij")
    t0 = plant.fresh_temperature(V, F)
    ra = plant.roughness(V, F)
    interval, _ = _interval_grid(plant, t0)
    time_term = (
        cost_params.machine_rate_per_h
        * cost_params.sides_per_insert
        * cost_params.infeed_per_side_mm
        / (60.0 * F)
    )
    cost = time_term + dressing_overhead(cost_params) / interval
    feasible = (t0 <= plant.burn_threshold_C) & (ra <= 230.0)
    return speeds, feeds, cost, t0, ra, feasible


def true_constrained_optimum(
    plant: PlantModel, domain: Domain, cost_params: CostParams, n: int = 1001
):
    """Lowest-cost lattice point satisfying both noiseless constraints."""
    speeds, feeds, cost, _, _, feasible = true_cost_grid(plant, domain, cost_params, n)
    masked = np.where(feasible, cost, np.inf)
    idx = np.unravel_index(np.argmin(masked), masked.shape)
    if not math.isfinite(masked[idx]):
        raise ValueError("no feasible point in the domain for this plant")
    return ProcessParams(cutting_speed=float(speeds[idx[0]]), feed_rate=float(feeds[idx[1]])), float(
        masked[idx]
    )
