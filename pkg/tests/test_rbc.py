"""Rule-based controller: rules, bounds, and the feasibility guarantee."""

import numpy as np
import pytest

from energaize.envsim import reset, rollout_policy, step
from energaize.rbc import RbcConfig, rbc_action
from energaize.scenario import (
    ChargerSpec,
    DwellingSpec,
    EvSession,
    Objective,
    Scenario,
    StorageSpec,
)


def build(horizon, sessions, eta=1.0, start_hour=0, storage=None, max_charge=7.4):
    ch = ChargerSpec(
        id="ev1", max_charge_kw=max_charge, max_discharge_kw=7.4,
        battery_capacity_kwh=40.0, charge_efficiency=eta, discharge_efficiency=eta,
        sessions=tuple(sessions),
    )
    dw = DwellingSpec(
        id="d1", objective=Objective.COST,
        non_shiftable_load=np.zeros(horizon), pv_generation=np.zeros(horizon),
        heating_storage=storage, chargers=(ch,),
    )
    return Scenario(
        horizon_steps=horizon, step_hours=1.0, dwellings=(dw,),
        price=np.full(horizon, 0.2), carbon_intensity=np.zeros(horizon),
        start_hour=start_hour,
    )


CFG = RbcConfig()


def test_disconnected_charger_idle():
    s = build(6, [EvSession(3, 5, 0.2, 0.8)], start_hour=12)
    assert rbc_action(s, reset(s), 0, CFG)[0] == 0.0


def test_urgency_branch_hand_computed():
    # soc 0.2, required 0.8, 40 kWh, unit efficiency, 2 steps left:
    # deficit 24 kWh cannot wait, full-power action.
    s = build(12, [EvSession(0, 12, 0.2, 0.8)], start_hour=12)
    st = reset(s)
    for _ in range(10):  # advance to t=10, expensive hours throughout
        st = step(s, st, [np.array([0.0])]).state
    assert rbc_action(s, st, 0, CFG)[0] == 1.0


def test_idles_when_slack_and_expensive():
    # 12 steps left, deficit 24 kWh < 11*7.4: no urgency, hour 12 not cheap.
    s = build(12, [EvSession(0, 12, 0.2, 0.8)], start_hour=12)
    assert rbc_action(s, reset(s), 0, CFG)[0] == 0.0


def test_charges_in_cheap_hours_without_urgency():
    s = build(12, [EvSession(0, 12, 0.2, 0.8)], start_hour=2)
    a = rbc_action(s, reset(s), 0, CFG)[0]
    assert a == 1.0  # deficit 24 > 7.4, clipped


def test_action_sized_to_deficit():
    s = build(12, [EvSession(0, 12, 0.75, 0.8)], start_hour=2)
    a = rbc_action(s, reset(s), 0, CFG)[0]
    assert a == pytest.approx(2.0 / 7.4)  # 0.05 * 40 = 2 kWh


def test_no_deficit_no_charge():
    s = build(6, [EvSession(0, 6, 0.8, 0.8)], start_hour=2)
    assert rbc_action(s, reset(s), 0, CFG)[0] == 0.0


def test_never_discharges_ev():
    rng = np.random.default_rng(0)
    s = build(24, [EvSession(0, 24, 0.9, 0.3)])
    st = reset(s)
    for _ in range(24):
        a = rbc_action(s, st, 0, CFG)
        assert a[0] >= 0.0
        st = step(s, st, [a]).state


def test_storage_windows():
    storage = StorageSpec(10.0, 2.0, 1.0)
    s = build(24, [EvSession(0, 24, 0.8, 0.8)], storage=storage)
    st = reset(s)
    by_hour = {}
    for t in range(24):
        by_hour[int(s.hour_of_day[t])] = rbc_action(s, st, 0, CFG)[1]
        st = step(s, st, [np.zeros(2)]).state
    assert all(by_hour[h] == 0.5 for h in CFG.storage_charge_hours)
    assert all(by_hour[h] == -0.5 for h in CFG.storage_discharge_hours)
    others = set(range(24)) - CFG.storage_charge_hours - CFG.storage_discharge_hours
    assert all(by_hour[h] == 0.0 for h in others)


def test_determinism_and_bounds():
    s = build(24, [EvSession(0, 24, 0.1, 0.9)])
    st = reset(s)
    for _ in range(24):
        a1 = rbc_action(s, st, 0, CFG)
        a2 = rbc_action(s, st, 0, CFG)
        assert np.array_equal(a1, a2)
        assert np.all(a1 >= -1.0) and np.all(a1 <= 1.0)
        st = step(s, st, [a1]).state


def test_config_rejects_bad_hours():
    with pytest.raises(ValueError):
        RbcConfig(cheap_hours=frozenset({25}))


def test_feasibility_on_100_random_feasible_scenarios():
    """Every RBC-controlled EV must depart at or above its requirement on
    sessions where full-power charging over the window would suffice."""
    rng = np.random.default_rng(42)
    for case in range(100):
        horizon = int(rng.integers(24, 72))
        eta = float(rng.uniform(0.85, 1.0))
        max_charge = float(rng.uniform(3.0, 11.0))
        capacity = float(rng.uniform(20.0, 60.0))
        sessions = []
        t0 = int(rng.integers(0, 6))
        while t0 < horizon - 2 and len(sessions) < 4:
            arrival = t0
            departure = int(rng.integers(arrival + 1, min(arrival + 20, horizon) + 1))
            required = float(rng.uniform(0.3, 0.95))
            # Feasible by construction: deliverable soc over the window.
            window_soc = eta * max_charge * (departure - arrival) / capacity
            arrival_soc = max(0.0, required - rng.uniform(0.2, 1.0) * min(window_soc, required))
            sessions.append(EvSession(arrival, departure, arrival_soc, required))
            t0 = departure + int(rng.integers(0, 5))
        ch = ChargerSpec(
            id="ev1", max_charge_kw=max_charge, max_discharge_kw=0.0,
            battery_capacity_kwh=capacity, charge_efficiency=eta,
            discharge_efficiency=1.0, sessions=tuple(sessions),
        )
        dw = DwellingSpec(
            id="d1", objective=Objective.COST,
            non_shiftable_load=np.zeros(horizon), pv_generation=np.zeros(horizon),
            chargers=(ch,),
        )
        s = Scenario(
            horizon_steps=horizon, step_hours=1.0, dwellings=(dw,),
            price=np.full(horizon, 0.2), carbon_intensity=np.zeros(horizon),
            start_hour=int(rng.integers(0, 24)),
        )
        cfg = RbcConfig()
        ro = rollout_policy(s, lambda sc, st: [rbc_action(sc, st, 0, cfg)])
        assert len(ro.departures) == len(sessions)
        for evd in ro.departures:
            assert evd.achieved_soc >= evd.required_soc - 1e-9, (
                f"case {case}: departed at {evd.achieved_soc} < {evd.required_soc}"
            )
