"""Scenario types, validation, file round trips and the synthetic generator."""

import numpy as np
import pytest

from energaize.scenario import (
    ChargerSpec,
    EvSession,
    DwellingSpec,
    InvariantViolationError,
    LengthMismatchError,
    MissingFileError,
    Objective,
    Scenario,
    StorageSpec,
    generate_synthetic,
    load_scenario,
    save_scenario,
    scenario_fingerprint,
    scenarios_equal,
    validate_scenario,
)


def tiny_scenario(horizon=4, **kw) -> Scenario:
    dw = DwellingSpec(
        id="d1",
        objective=Objective.COST,
        non_shiftable_load=np.ones(horizon),
        pv_generation=np.zeros(horizon),
        **kw,
    )
    return Scenario(
        horizon_steps=horizon,
        step_hours=1.0,
        dwellings=(dw,),
        price=np.full(horizon, 0.2),
        carbon_intensity=np.full(horizon, 0.3),
    )


def test_valid_scenario_has_no_violations():
    assert validate_scenario(tiny_scenario()) == []


def test_length_mismatch_is_reported_with_name():
    s = tiny_scenario()
    bad = Scenario(
        horizon_steps=4,
        step_hours=1.0,
        dwellings=s.dwellings,
        price=np.full(3, 0.2),
        carbon_intensity=s.carbon_intensity,
    )
    msgs = validate_scenario(bad)
    assert any("price" in m for m in msgs)


def test_session_ordering_violations_found():
    ch = ChargerSpec(
        id="ev1", max_charge_kw=7.4, max_discharge_kw=0.0, battery_capacity_kwh=40,
        charge_efficiency=0.95, discharge_efficiency=0.95,
        sessions=(EvSession(2, 2, 0.4, 0.8),),
    )
    s = tiny_scenario(chargers=(ch,))
    msgs = validate_scenario(s)
    assert any("arrival_step < departure_step" in m for m in msgs)
    assert any("ev1" in m for m in msgs)


def test_overlapping_sessions_rejected():
    ch = ChargerSpec(
        id="ev1", max_charge_kw=7.4, max_discharge_kw=0.0, battery_capacity_kwh=40,
        charge_efficiency=0.95, discharge_efficiency=0.95,
        sessions=(EvSession(0, 3, 0.4, 0.8), EvSession(2, 4, 0.4, 0.8)),
    )
    msgs = validate_scenario(tiny_scenario(chargers=(ch,)))
    assert any("overlap" in m for m in msgs)


def test_soc_bounds_checked():
    ch = ChargerSpec(
        id="ev1", max_charge_kw=7.4, max_discharge_kw=0.0, battery_capacity_kwh=40,
        charge_efficiency=0.95, discharge_efficiency=0.95,
        sessions=(EvSession(0, 2, 1.4, 0.8),),
    )
    msgs = validate_scenario(tiny_scenario(chargers=(ch,)))
    assert any("arrival_soc" in m for m in msgs)


def test_duplicate_dwelling_ids_rejected():
    s = tiny_scenario()
    dup = Scenario(
        horizon_steps=4,
        step_hours=1.0,
        dwellings=(s.dwellings[0], s.dwellings[0]),
        price=s.price,
        carbon_intensity=s.carbon_intensity,
    )
    assert any("duplicate" in m for m in validate_scenario(dup))


def test_calendar_derivation():
    s = Scenario(
        horizon_steps=50,
        step_hours=1.0,
        dwellings=tiny_scenario().dwellings,
        price=np.zeros(50),
        carbon_intensity=np.zeros(50),
        start_hour=22,
        start_weekday=6,
    )
    assert s.hour_of_day[0] == 22
    assert s.hour_of_day[2] == 0  # wraps at midnight
    assert s.day_of_week[0] == 6
    assert s.day_of_week[2] == 0  # new day wraps the week


def test_series_are_read_only():
    s = tiny_scenario()
    with pytest.raises(ValueError):
        s.price[0] = 9.9


def test_save_load_roundtrip(tmp_path):
    s = generate_synthetic(seed=3, n_dwellings=2, days=2)
    path = save_scenario(s, tmp_path / "scenario.json")
    loaded = load_scenario(path)
    assert scenarios_equal(s, loaded)
    assert scenario_fingerprint(s) == scenario_fingerprint(loaded)


def test_load_missing_descriptor(tmp_path):
    with pytest.raises(MissingFileError):
        load_scenario(tmp_path / "nope.json")


def test_load_missing_series_csv(tmp_path):
    s = generate_synthetic(seed=3, n_dwellings=1, days=1)
    path = save_scenario(s, tmp_path / "scenario.json")
    (tmp_path / "price.csv").unlink()
    with pytest.raises(MissingFileError):
        load_scenario(path)


def test_load_wrong_series_length(tmp_path):
    s = generate_synthetic(seed=3, n_dwellings=1, days=1)
    path = save_scenario(s, tmp_path / "scenario.json")
    lines = (tmp_path / "price.csv").read_text().splitlines()
    (tmp_path / "price.csv").write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(LengthMismatchError):
        load_scenario(path)


def test_load_rejects_bad_header(tmp_path):
    s = generate_synthetic(seed=3, n_dwellings=1, days=1)
    path = save_scenario(s, tmp_path / "scenario.json")
    body = (tmp_path / "price.csv").read_text().splitlines()[1:]
    (tmp_path / "price.csv").write_text("time,val\n" + "\n".join(body) + "\n")
    with pytest.raises(InvariantViolationError):
        load_scenario(path)


def test_csv_files_use_lf_and_header(tmp_path):
    s = generate_synthetic(seed=1, n_dwellings=1, days=1)
    save_scenario(s, tmp_path / "scenario.json")
    raw = (tmp_path / "price.csv").read_bytes()
    assert b"\r" not in raw
    assert raw.startswith(b"step,value\n")


def test_synthetic_is_seed_deterministic():
    a = generate_synthetic(seed=7, n_dwellings=3, days=2)
    b = generate_synthetic(seed=7, n_dwellings=3, days=2)
    c = generate_synthetic(seed=8, n_dwellings=3, days=2)
    assert scenario_fingerprint(a) == scenario_fingerprint(b)
    assert scenario_fingerprint(a) != scenario_fingerprint(c)


def test_synthetic_structure():
    s = generate_synthetic(seed=7, n_dwellings=3, days=28)
    assert s.horizon_steps == 28 * 24
    assert s.n_dwellings == 3
    assert validate_scenario(s) == []
    # Two-tier tariff: cheap hours 0-5, expensive otherwise.
    assert sorted(set(np.asarray(s.price))) == [0.10, 0.30]
    for dw in s.dwellings:
        assert len(dw.chargers) == 1
        ch = dw.chargers[0]
        assert ch.max_discharge_kw > 0  # V2G enabled
        assert len(ch.sessions) == 28
        for sess in ch.sessions:
            assert sess.required_soc_departure > sess.arrival_soc
    # All three objectives represented.
    assert {dw.objective for dw in s.dwellings} == set(Objective)


def test_synthetic_sessions_feasible():
    s = generate_synthetic(seed=7, n_dwellings=3, days=28)
    for dw in s.dwellings:
        for ch in dw.chargers:
            for sess in ch.sessions:
                need = (sess.required_soc_departure - sess.arrival_soc) * ch.battery_capacity_kwh
                window = (sess.departure_step - sess.arrival_step) * ch.max_charge_kw
                assert need <= ch.charge_efficiency * window


def test_fingerprint_changes_with_any_field():
    base = generate_synthetic(seed=2, n_dwellings=1, days=1)
    other = Scenario(
        horizon_steps=base.horizon_steps,
        step_hours=base.step_hours,
        dwellings=base.dwellings,
        price=base.price,
        carbon_intensity=base.carbon_intensity,
        start_hour=5,
    )
    assert scenario_fingerprint(base) != scenario_fingerprint(other)


def test_storage_fields_roundtrip(tmp_path):
    dw = DwellingSpec(
        id="d1",
        objective=Objective.SELF_CONSUMPTION,
        non_shiftable_load=np.ones(4),
        pv_generation=np.zeros(4),
        heating_storage=StorageSpec(10.0, 2.0, 0.9, 0.01),
    )
    s = Scenario(4, 1.0, (dw,), np.zeros(4), np.zeros(4))
    loaded = load_scenario(save_scenario(s, tmp_path / "s.json"))
    st = loaded.dwellings[0].heating_storage
    assert (st.capacity_kwh, st.max_power_kw, st.round_trip_efficiency, st.loss_per_step) == (
        10.0, 2.0, 0.9, 0.01,
    )
