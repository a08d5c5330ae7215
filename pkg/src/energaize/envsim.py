"""Environment stepping: energy balance, asset dynamics and observations.

All operations are pure functions over an immutable `Scenario` and a small
`EnvState` value; `step` returns a fresh state, never mutating its input.
Connection transitions happen at step boundaries after the energy exchange,
so the last connected step of a session is still controllable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import ChargerSpec, Scenario, StorageSpec, validate_scenario

HOURS_CAP = 24  # departure-lookahead cap used in observations


class InvalidScenarioError(ValueError):
    pass


class EpisodeFinishedError(RuntimeError):
    pass


class ActionShapeMismatchError(ValueError):
    pass


class IndexOutOfRangeError(IndexError):
    pass


@dataclass(frozen=True)
class ChargerState:
    """connected + soc of one charge point.

    `session_idx` indexes the charger's session list: the active session when
    connected, otherwise the next session yet to arrive (== len(sessions)
    when exhausted).
    """

    connected: bool
    soc: float
    session_idx: int

    def active_session(self, spec: ChargerSpec):
        return spec.sessions[self.session_idx] if self.connected else None


@dataclass(frozen=True)
class EnvState:
    t: int
    chargers: tuple[tuple[ChargerState, ...], ...]  # [dwelling][charger]
    storages: tuple[float | None, ...]  # kWh per dwelling, None if absent


@dataclass(frozen=True)
class DepartureEvent:
    dwelling_index: int
    charger_id: str
    achieved_soc: float
    required_soc: float


@dataclass(frozen=True)
class StepResult:
    net_loads: np.ndarray  # per-dwelling e_i_t, kWh, signed (+ = import)
    community_net: float  # E_t
    departures: tuple[DepartureEvent, ...]
    state: EnvState  # state at t+1
    charger_grid_kwh: tuple[tuple[float, ...], ...]  # per (dwelling, charger)
    storage_grid_kwh: tuple[float, ...]  # per dwelling (0.0 if no storage)


def reset(s: Scenario) -> EnvState:
    violations = validate_scenario(s)
    if violations:
        raise InvalidScenarioError("; ".join(violations))
    chargers = []
    for dw in s.dwellings:
        row = []
        for ch in dw.chargers:
            if ch.sessions and ch.sessions[0].arrival_step == 0:
                row.append(ChargerState(True, ch.sessions[0].arrival_soc, 0))
            else:
                soc = ch.sessions[0].arrival_soc if ch.sessions else 0.0
                row.append(ChargerState(False, soc, 0))
        chargers.append(tuple(row))
    storages = tuple(
        0.5 * dw.heating_storage.capacity_kwh if dw.heating_storage is not None else None
        for dw in s.dwellings
    )
    return EnvState(t=0, chargers=tuple(chargers), storages=storages)


def apply_charger_action(
    cs: ChargerState, spec: ChargerSpec, a: float, dt: float
) -> tuple[ChargerState, float]:
    """Exchange energy with one EV battery; returns (new state, grid kWh).

    Grid-side bookkeeping: charging losses are billed to the grid, discharge
    is credited net of conversion losses. Infeasible amounts clip, never fail.
    """
    if not cs.connected:
        return cs, 0.0
    a = float(np.clip(a, -1.0, 1.0))
    cap = spec.battery_capacity_kwh
    if a >= 0:
        requested_gain = a * spec.max_charge_kw * dt * spec.charge_efficiency
        headroom = (1.0 - cs.soc) * cap
        if requested_gain >= headroom:
            gain, new_soc = headroom, 1.0
        else:
            gain, new_soc = requested_gain, cs.soc + requested_gain / cap
        grid = gain / spec.charge_efficiency
    else:
        requested_draw = -a * spec.max_discharge_kw * dt
        stored = cs.soc * cap
        if requested_draw >= stored:
            draw, new_soc = stored, 0.0
        else:
            draw, new_soc = requested_draw, cs.soc - requested_draw / cap
        grid = -(draw * spec.discharge_efficiency)
    return ChargerState(cs.connected, new_soc, cs.session_idx), grid


def apply_storage_action(
    level_kwh: float, spec: StorageSpec, a: float, dt: float
) -> tuple[float, float]:
    """Charge/discharge a dwelling storage; round-trip loss split √η per leg,
    then standing decay. Returns (new level kWh, grid kWh)."""
    a = float(np.clip(a, -1.0, 1.0))
    eta = math.sqrt(spec.round_trip_efficiency)
    if a >= 0:
        requested_gain = a * spec.max_power_kw * dt * eta
        headroom = spec.capacity_kwh - level_kwh
        if requested_gain >= headroom:
            gain, new_level = headroom, spec.capacity_kwh
        else:
            gain, new_level = requested_gain, level_kwh + requested_gain
        grid = gain / eta if eta > 0 else 0.0
    else:
        requested_draw = -a * spec.max_power_kw * dt
        if requested_draw >= level_kwh:
            draw, new_level = level_kwh, 0.0
        else:
            draw, new_level = requested_draw, level_kwh - requested_draw
        grid = -(draw * eta)
    new_level *= 1.0 - spec.loss_per_step
    return new_level, grid


def action_dim(s: Scenario, dwelling_index: int) -> int:
    dw = s.dwellings[dwelling_index]
    return len(dw.chargers) + (1 if dw.heating_storage is not None else 0)


def step(s: Scenario, st: EnvState, actions: list[np.ndarray]) -> StepResult:
    """Apply one joint action: energy exchange at t, then session transitions
    into t+1. Action layout per dwelling: one entry per charger, then one per
    storage."""
    if st.t >= s.horizon_steps:
        raise EpisodeFinishedError(f"episode already finished at t={st.t}")
    if len(actions) != s.n_dwellings:
        raise ActionShapeMismatchError(
            f"got {len(actions)} action vectors for {s.n_dwellings} dwellings"
        )
    t, dt = st.t, s.step_hours
    net = np.empty(s.n_dwellings)
    new_chargers: list[tuple[ChargerState, ...]] = []
    new_storages: list[float | None] = []
    charger_grid: list[tuple[float, ...]] = []
    storage_grid: list[float] = []
    departures: list[DepartureEvent] = []

    for i, dw in enumerate(s.dwellings):
        a = np.asarray(actions[i], dtype=float).ravel()
        want = action_dim(s, i)
        if len(a) != want:
            raise ActionShapeMismatchError(
                f"dwelling {dw.id}: action length {len(a)} != {want}"
            )
        e = float(dw.non_shiftable_load[t]) - float(dw.pv_generation[t])

        row: list[ChargerState] = []
        grid_row: list[float] = []
        for j, ch in enumerate(dw.chargers):
            cs, grid = apply_charger_action(st.chargers[i][j], ch, float(a[j]), dt)
            e += grid
            grid_row.append(grid)
            # Boundary transitions into t+1: depart first, then arrive.
            if cs.connected and ch.sessions[cs.session_idx].departure_step == t + 1:
                sess = ch.sessions[cs.session_idx]
                departures.append(
                    DepartureEvent(i, ch.id, cs.soc, sess.required_soc_departure)
                )
                cs = ChargerState(False, cs.soc, cs.session_idx + 1)
            if (
                not cs.connected
                and cs.session_idx < len(ch.sessions)
                and ch.sessions[cs.session_idx].arrival_step == t + 1
            ):
                cs = ChargerState(True, ch.sessions[cs.session_idx].arrival_soc, cs.session_idx)
            row.append(cs)

        sg = 0.0
        if dw.heating_storage is not None:
            level, sg = apply_storage_action(
                st.storages[i], dw.heating_storage, float(a[len(dw.chargers)]), dt
            )
            e += sg
            new_storages.append(level)
        else:
            new_storages.append(None)
        storage_grid.append(sg)
        charger_grid.append(tuple(grid_row))
        new_chargers.append(tuple(row))
        net[i] = e

    net.flags.writeable = False
    return StepResult(
        net_loads=net,
        community_net=float(net.sum()),
        departures=tuple(departures),
        state=EnvState(t + 1, tuple(new_chargers), tuple(new_storages)),
        charger_grid_kwh=tuple(charger_grid),
        storage_grid_kwh=tuple(storage_grid),
    )


def observation_dim(s: Scenario, dwelling_index: int) -> int:
    dw = s.dwellings[dwelling_index]
    return 31 + 4 + 4 * len(dw.chargers) + (1 if dw.heating_storage is not None else 0)


def observe(s: Scenario, st: EnvState, dwelling_index: int) -> np.ndarray:
    """Local observation vector, fixed order: hour one-hot(24), weekday
    one-hot(7), load, pv, price, carbon, then per charger (connected, soc,
    steps-to-departure capped at 24 and /24, required soc), then storage
    fraction."""
    if not (0 <= dwelling_index < s.n_dwellings):
        raise IndexOutOfRangeError(f"dwelling index {dwelling_index} out of range")
    if st.t >= s.horizon_steps:
        raise EpisodeFinishedError(f"no observation at t={st.t}")
    t = st.t
    dw = s.dwellings[dwelling_index]
    obs = np.zeros(observation_dim(s, dwelling_index))
    obs[int(s.hour_of_day[t])] = 1.0
    obs[24 + int(s.day_of_week[t])] = 1.0
    obs[31] = dw.non_shiftable_load[t]
    obs[32] = dw.pv_generation[t]
    obs[33] = s.price[t]
    obs[34] = s.carbon_intensity[t]
    k = 35
    for j, ch in enumerate(dw.chargers):
        cs = st.chargers[dwelling_index][j]
        if cs.connected:
            sess = ch.sessions[cs.session_idx]
            obs[k] = 1.0
            obs[k + 1] = cs.soc
            obs[k + 2] = min(sess.departure_step - t, HOURS_CAP) / HOURS_CAP
            obs[k + 3] = sess.required_soc_departure
        else:
            obs[k + 1] = cs.soc  # last-known soc; other slots stay 0
        k += 4
    if dw.heating_storage is not None:
        obs[k] = st.storages[dwelling_index] / dw.heating_storage.capacity_kwh
    return obs


def baseline_actions(s: Scenario, st: EnvState) -> list[np.ndarray]:
    """Naive plug-and-charge policy: every connected EV charges at max power
    until it reaches its required soc, storages idle. This is the no-control
    behavior that KPI ratios normalize against."""
    out = []
    for i, dw in enumerate(s.dwellings):
        a = np.zeros(action_dim(s, i))
        for j, ch in enumerate(dw.chargers):
            cs = st.chargers[i][j]
            if not cs.connected:
                continue
            sess = ch.sessions[cs.session_idx]
            deficit_grid = (
                max(0.0, sess.required_soc_departure - cs.soc)
                * ch.battery_capacity_kwh
                / ch.charge_efficiency
            )
            if deficit_grid > 0:
                a[j] = min(1.0, deficit_grid / (ch.max_charge_kw * s.step_hours))
        out.append(a)
    return out


@dataclass(frozen=True)
class Rollout:
    """Raw arrays from one full episode, consumed by trace/KPI builders."""

    net: np.ndarray  # (T, n) per-dwelling net load
    community: np.ndarray  # (T,)
    ev_grid: np.ndarray  # (T, n) summed charger grid energy per dwelling
    departures: tuple[DepartureEvent, ...]


def rollout_policy(s: Scenario, policy) -> Rollout:
    """Run one episode under `policy(scenario, state) -> list of action
    vectors` and collect per-step results."""
    st = reset(s)
    T, n = s.horizon_steps, s.n_dwellings
    net = np.zeros((T, n))
    ev = np.zeros((T, n))
    departures: list[DepartureEvent] = []
    for t in range(T):
        res = step(s, st, policy(s, st))
        net[t] = res.net_loads
        ev[t] = [sum(row) for row in res.charger_grid_kwh]
        departures.extend(res.departures)
        st = res.state
    return Rollout(
        net=net, community=net.sum(axis=1), ev_grid=ev, departures=tuple(departures)
    )
