"""Per-agent mixed reward: prosumer objective + EV constraint + community.

Every component is a penalty (<= 0). The weighted total is
alpha*r_prosumer + beta*r_ev + zeta*r_rec.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .envsim import DepartureEvent, StepResult
from .scenario import Objective, Scenario


@dataclass(frozen=True)
class RewardWeights:
    alpha: float = 0.2
    beta: float = 0.7
    zeta: float = 0.1
    ev_shortfall_scale: float = 10.0  # kappa
    rec_square_scale: float = 0.1

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.zeta < 0:
            raise ValueError("weights must be >= 0")
        if self.alpha == self.beta == self.zeta == 0:
            raise ValueError("at least one of alpha/beta/zeta must be > 0")
        if self.ev_shortfall_scale <= 0 or self.rec_square_scale <= 0:
            raise ValueError("scales must be > 0")


@dataclass(frozen=True)
class RewardBreakdown:
    r_prosumer: float
    r_ev: float
    r_rec: float
    total: float


def r_prosumer(objective: Objective, e_kwh: float, price: float, carbon: float) -> float:
    """Objective-specific penalty on grid import; exports are never penalized."""
    imported = max(0.0, e_kwh)
    if objective is Objective.COST:
        return -price * imported
    if objective is Objective.CARBON:
        return -carbon * imported
    return -imported  # self-consumption: any import is a miss


def r_ev(departures: Iterable[DepartureEvent], kappa: float) -> float:
    """Departure-SoC shortfall penalty; surplus charge is never rewarded."""
    return sum(
        -kappa * max(0.0, ev.required_soc - ev.achieved_soc) for ev in departures
    )


def r_rec(e_community: float, e_prev: float, square_scale: float) -> float:
    """Community flattening: squared net level (peaks and valleys both cost,
    so neighbor exports that offset imports help) plus a ramping penalty."""
    return -square_scale * e_community * e_community - abs(e_community - e_prev)


def combine(w: RewardWeights, rp: float, rev: float, rrec: float) -> RewardBreakdown:
    return RewardBreakdown(rp, rev, rrec, w.alpha * rp + w.beta * rev + w.zeta * rrec)


def prosumer_normalizers(s: Scenario) -> np.ndarray:
    """Per-dwelling divisor applied to r_prosumer before weighting, so the
    three objectives land on comparable scales across dwellings: each
    dwelling's maximum non-shiftable load, floored at 1 to avoid blowups on
    all-zero profiles."""
    return np.array([max(1.0, float(dw.non_shiftable_load.max())) for dw in s.dwellings])


def step_rewards(
    s: Scenario,
    res: StepResult,
    t: int,
    e_prev: float,
    w: RewardWeights,
    normalizers: np.ndarray,
) -> list[RewardBreakdown]:
    """All agents' rewards for one step result. `e_prev` is the previous
    step's community net (pass the current one at t=0: no ramp penalty)."""
    rrec = r_rec(res.community_net, e_prev, w.rec_square_scale)
    price, carbon = float(s.price[t]), float(s.carbon_intensity[t])
    out = []
    for i, dw in enumerate(s.dwellings):
        rp = r_prosumer(dw.objective, float(res.net_loads[i]), price, carbon)
        rp /= normalizers[i]
        rev = r_ev(
            (ev for ev in res.departures if ev.dwelling_index == i),
            w.ev_shortfall_scale,
        )
        out.append(combine(w, rp, rev, rrec))
    return out
