"""Per-insert production cost from grinding time and dressing amortization.

Cost has two parts: machine time to grind the insert (scales with 1/feed) and
the dressing cycle (machine time plus wheel and dresser wear) amortized over
the material removed between dressings. Cutting speed enters only through its
effect on the dressing interval, never directly. Cost units are abstract "U";
machine rate is per hour while feeds are per minute and dressing time is in
seconds, so the terms below carry explicit conversions.
"""

from __future__ import annotations

from dataclasses import dataclass

from .validation import check_positive_scalar


@dataclass(frozen=True)
class CostParams:
    """Cost constants. Defaults describe the cup-wheel insert-grinding cell."""

    removed_volume_per_insert_mm3: float = 310.6
    sides_per_insert: float = 2.0
    infeed_per_side_mm: float = 2.25
    dressing_time_s: float = 19.0
    wheel_layer_thickness_mm: float = 4.0
    wheel_dressing_wear_mm: float = 0.001
    dresser_thickness_mm: float = 65.0
    dresser_dressing_wear_mm: float = 0.1
    machine_rate_per_h: float = 100.0
    wheel_cost: float = 1500.0
    dresser_cost: float = 95.0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            check_positive_scalar(getattr(self, name), name)


def removed_volume(dressing_interval: float, params: CostParams) -> float:
    """Material removed between dressings, mm^3, for an interval in inserts."""
    check_positive_scalar(dressing_interval, "dressing_interval")
    return dressing_interval * params.removed_volume_per_insert_mm3


def dressing_overhead(params: CostParams) -> float:
    """Cost of one dressing cycle: machine time plus wheel and dresser wear."""
    machine = params.machine_rate_per_h * params.dressing_time_s / 3600.0
    wheel = params.wheel_cost * params.wheel_dressing_wear_mm / params.wheel_layer_thickness_mm
    dresser = params.dresser_cost * params.dresser_dressing_wear_mm / params.dresser_thickness_mm
    return machine + wheel + dresser


def cost_per_insert(v_s: float, f: float, V_w: float, params: CostParams) -> float:
    """Total cost to grind one insert, in U.

    v_s (m/s) has no direct term; it shapes the cost only through the
    measured removed volume V_w (mm^3). f is the feed rate in mm/min.
    """
    check_positive_scalar(f, "f")
    check_positive_scalar(V_w, "V_w")
    grind_minutes = params.sides_per_insert * params.infeed_per_side_mm / f
    time_term = params.machine_rate_per_h * grind_minutes / 60.0
    dressing_term = dressing_overhead(params) * params.removed_volume_per_insert_mm3 / V_w
    return time_term + dressing_term
