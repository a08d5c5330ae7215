"""Deterministic rule-based controller that seeds exploration.

Charging rule per connected EV: charge just enough (capped at full power)
whenever the remaining schedule turns tight, or whenever the hour is
off-peak and there is any deficit. Storage follows fixed charge/discharge
hour windows. The controller never discharges an EV.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .envsim import EnvState, action_dim
from .scenario import Scenario


def _check_hours(hours: frozenset[int], name: str) -> frozenset[int]:
    if any(h < 0 or h > 23 for h in hours):
        raise ValueError(f"{name}: hour values must be in 0..23")
    return hours


@dataclass(frozen=True)
class RbcConfig:
    cheap_hours: frozenset[int] = frozenset(range(0, 6))
    storage_charge_hours: frozenset[int] = frozenset(range(1, 5))
    storage_discharge_hours: frozenset[int] = frozenset(range(18, 21))

    def __post_init__(self):
        _check_hours(self.cheap_hours, "cheap_hours")
        _check_hours(self.storage_charge_hours, "storage_charge_hours")
        _check_hours(self.storage_discharge_hours, "storage_discharge_hours")


def rbc_action(
    s: Scenario, st: EnvState, dwelling_index: int, cfg: RbcConfig
) -> np.ndarray:
    """Action vector for one dwelling at the current step."""
    t = st.t
    hour = int(s.hour_of_day[t])
    dw = s.dwellings[dwelling_index]
    a = np.zeros(action_dim(s, dwelling_index))
    for j, ch in enumerate(dw.chargers):
        cs = st.chargers[dwelling_index][j]
        if not cs.connected:
            continue
        sess = ch.sessions[cs.session_idx]
        deficit_grid = (
            max(0.0, sess.required_soc_departure - cs.soc)
            * ch.battery_capacity_kwh
            / ch.charge_efficiency
        )
        if deficit_grid <= 0:
            continue
        steps_left = sess.departure_step - t
        per_step = ch.max_charge_kw * s.step_hours
        # Urgency uses (steps_left - 1): waiting one more idle step must
        # still leave a feasible schedule, otherwise charge now.
        if deficit_grid >= (steps_left - 1) * per_step or hour in cfg.cheap_hours:
            a[j] = min(1.0, deficit_grid / per_step)
    if dw.heating_storage is not None:
        k = len(dw.chargers)
        if hour in cfg.storage_charge_hours:
            a[k] = 0.5
        elif hour in cfg.storage_discharge_hours:
            a[k] = -0.5
    return a
