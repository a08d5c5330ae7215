"""Scenario definitions: dwellings, assets, EV sessions and community time series.

A scenario is immutable once built.  The on-disk form is one JSON descriptor
plus one CSV per time series (columns ``step,value``); see ``load_scenario``
and ``save_scenario``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np


class Objective(str, Enum):
    """Per-dwelling optimization goal selected by the prosumer."""

    COST = "cost"
    SELF_CONSUMPTION = "self_consumption"
    CARBON = "carbon"


class ScenarioError(ValueError):
    """Base class for scenario ingestion problems."""


class MissingFileError(ScenarioError):
    """Descriptor or referenced CSV does not exist."""


class LengthMismatchError(ScenarioError):
    """A time series does not match the scenario horizon."""


class InvariantViolationError(ScenarioError):
    """Loaded data violates a structural invariant."""


@dataclass(frozen=True)
class EvSession:
    arrival_step: int
    departure_step: int
    arrival_soc: float
    required_soc_departure: float


@dataclass(frozen=True)
class ChargerSpec:
    id: str
    max_charge_kw: float
    max_discharge_kw: float  # 0 disables V2G
    battery_capacity_kwh: float
    charge_efficiency: float
    discharge_efficiency: float
    sessions: tuple[EvSession, ...] = ()


@dataclass(frozen=True)
class StorageSpec:
    capacity_kwh: float
    max_power_kw: float
    round_trip_efficiency: float
    loss_per_step: float = 0.0


@dataclass(frozen=True)
class DwellingSpec:
    id: str
    objective: Objective
    non_shiftable_load: np.ndarray  # kWh per step
    pv_generation: np.ndarray  # kWh per step
    heating_storage: StorageSpec | None = None
    chargers: tuple[ChargerSpec, ...] = ()

    def __post_init__(self):
        # simulation state must never leak back into scenario data
        object.__setattr__(
            self, "non_shiftable_load", _series(self.non_shiftable_load, "non_shiftable_load")
        )
        object.__setattr__(self, "pv_generation", _series(self.pv_generation, "pv_generation"))


@dataclass(frozen=True)
class Scenario:
    horizon_steps: int
    step_hours: float
    dwellings: tuple[DwellingSpec, ...]
    price: np.ndarray  # currency/kWh per step
    carbon_intensity: np.ndarray  # kgCO2/kWh per step
    start_hour: int = 0
    start_weekday: int = 0
    # Derived per-step calendar, filled in __post_init__.
    hour_of_day: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    day_of_week: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "price", _series(self.price, "price"))
        object.__setattr__(
            self, "carbon_intensity", _series(self.carbon_intensity, "carbon_intensity")
        )
        hours = np.floor(self.start_hour + np.arange(self.horizon_steps) * self.step_hours)
        object.__setattr__(self, "hour_of_day", _frozen((hours % 24).astype(int)))
        object.__setattr__(
            self, "day_of_week", _frozen(((self.start_weekday + hours // 24) % 7).astype(int))
        )

    @property
    def n_dwellings(self) -> int:
        return len(self.dwellings)

    @property
    def steps_per_day(self) -> int:
        return max(1, round(24.0 / self.step_hours))


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def _series(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise InvariantViolationError(f"{name}: expected a 1-D series")
    return _frozen(arr)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_scenario(s: Scenario) -> list[str]:
    """Return every invariant violation as a human-readable string.

    An empty list means the scenario is valid.  The input is never mutated.
    """
    out: list[str] = []
    if s.horizon_steps < 1:
        out.append("horizon_steps must be >= 1")
    if s.step_hours <= 0:
        out.append("step_hours must be > 0")
    if len(s.dwellings) < 1:
        out.append("at least one dwelling is required")

    def check_series(arr: np.ndarray, name: str, nonneg: bool = True):
        if len(arr) != s.horizon_steps:
            out.append(f"{name}: length {len(arr)} != horizon_steps {s.horizon_steps}")
        elif nonneg and np.any(arr < 0):
            row = int(np.argmax(arr < 0))
            out.append(f"{name}: negative value at step {row}")

    check_series(s.price, "price")
    check_series(s.carbon_intensity, "carbon_intensity")

    seen_ids: set[str] = set()
    for dw in s.dwellings:
        where = f"dwellings[{dw.id}]"
        if dw.id in seen_ids:
            out.append(f"{where}: duplicate dwelling id")
        seen_ids.add(dw.id)
        check_series(dw.non_shiftable_load, f"{where}.non_shiftable_load")
        check_series(dw.pv_generation, f"{where}.pv_generation")
        if dw.heating_storage is not None:
            st = dw.heating_storage
            if st.capacity_kwh <= 0:
                out.append(f"{where}.storage: capacity_kwh must be > 0")
            if st.max_power_kw <= 0:
                out.append(f"{where}.storage: max_power_kw must be > 0")
            if not (0 < st.round_trip_efficiency <= 1):
                out.append(f"{where}.storage: round_trip_efficiency must be in (0,1]")
            if not (0 <= st.loss_per_step < 1):
                out.append(f"{where}.storage: loss_per_step must be in [0,1)")
        seen_ch: set[str] = set()
        for ch in dw.chargers:
            cw = f"{where}.chargers[{ch.id}]"
            if ch.id in seen_ch:
                out.append(f"{cw}: duplicate charger id")
            seen_ch.add(ch.id)
            if ch.max_charge_kw <= 0:
                out.append(f"{cw}: max_charge_kw must be > 0")
            if ch.max_discharge_kw < 0:
                out.append(f"{cw}: max_discharge_kw must be >= 0")
            if ch.battery_capacity_kwh <= 0:
                out.append(f"{cw}: battery_capacity_kwh must be > 0")
            if not (0 < ch.charge_efficiency <= 1):
                out.append(f"{cw}: charge_efficiency must be in (0,1]")
            if not (0 < ch.discharge_efficiency <= 1):
                out.append(f"{cw}: discharge_efficiency must be in (0,1]")
            prev_dep = None
            for k, sess in enumerate(ch.sessions):
                sw = f"{cw}.sessions[{k}]"
                if not sess.arrival_step < sess.departure_step:
                    out.append(
                        f"{sw}: arrival_step < departure_step violated "
                        f"({sess.arrival_step} >= {sess.departure_step})"
                    )
                if sess.departure_step > s.horizon_steps:
                    out.append(f"{sw}: departure_step {sess.departure_step} beyond horizon")
                if sess.arrival_step < 0:
                    out.append(f"{sw}: arrival_step must be >= 0")
                if not (0 <= sess.arrival_soc <= 1):
                    out.append(f"{sw}: arrival_soc {sess.arrival_soc} outside [0,1]")
                if not (0 <= sess.required_soc_departure <= 1):
                    out.append(
                        f"{sw}: required_soc_departure {sess.required_soc_departure} outside [0,1]"
                    )
                if prev_dep is not None and sess.arrival_step < prev_dep:
                    out.append(
                        f"{cw}.sessions[{k - 1}] and sessions[{k}] overlap "
                        f"(arrival {sess.arrival_step} < previous departure {prev_dep})"
                    )
                prev_dep = sess.departure_step
    return out


# ---------------------------------------------------------------------------
# Descriptor + CSV ingestion
# ---------------------------------------------------------------------------

def _read_series_csv(path: Path, name: str, horizon: int) -> np.ndarray:
    if not path.exists():
        raise MissingFileError(f"{name}: file not found: {path}")
    values: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["step", "value"]:
            raise InvariantViolationError(f"{name}: expected header 'step,value' in {path}")
        for row_no, row in enumerate(reader):
            if not row:
                continue
            try:
                values.append(float(row[1]))
            except (IndexError, ValueError):
                raise InvariantViolationError(
                    f"{name}: unparseable value at row {row_no + 2} of {path}"
                ) from None
    if len(values) != horizon:
        raise LengthMismatchError(
            f"{name}: {len(values)} rows, expected horizon_steps {horizon}"
        )
    return _series(values, name)


def load_scenario(descriptor_path: str | Path) -> Scenario:
    """Load a scenario from a JSON descriptor plus its referenced CSV series.

    Raises MissingFileError, LengthMismatchError or InvariantViolationError;
    the returned scenario always satisfies every invariant.
    """
    descriptor_path = Path(descriptor_path)
    if not descriptor_path.exists():
        raise MissingFileError(f"descriptor not found: {descriptor_path}")
    base = descriptor_path.parent
    with open(descriptor_path, encoding="utf-8") as fh:
        doc = json.load(fh)

    try:
        horizon = int(doc["horizon_steps"])
        step_hours = float(doc.get("step_hours", 1.0))
        cal = doc.get("calendar", {})
        start_hour = int(cal.get("start_hour", 0))
        start_weekday = int(cal.get("start_weekday", 0))
        price = _read_series_csv(base / doc["price_csv"], "price", horizon)
        carbon = _read_series_csv(base / doc["carbon_csv"], "carbon_intensity", horizon)
        dwellings = []
        for dd in doc["dwellings"]:
            did = str(dd["id"])
            objective = Objective(dd["objective"])
            load = _read_series_csv(
                base / dd["load_csv"], f"dwellings[{did}].non_shiftable_load", horizon
            )
            pv = _read_series_csv(base / dd["pv_csv"], f"dwellings[{did}].pv_generation", horizon)
            storage = None
            if dd.get("storage") is not None:
                sd = dd["storage"]
                storage = StorageSpec(
                    capacity_kwh=float(sd["capacity_kwh"]),
                    max_power_kw=float(sd["max_power_kw"]),
                    round_trip_efficiency=float(sd["round_trip_efficiency"]),
                    loss_per_step=float(sd.get("loss_per_step", 0.0)),
                )
            chargers = []
            for cd in dd.get("chargers", []):
                sessions = tuple(
                    EvSession(
                        arrival_step=int(sd["arrival_step"]),
                        departure_step=int(sd["departure_step"]),
                        arrival_soc=float(sd["arrival_soc"]),
                        required_soc_departure=float(sd["required_soc_departure"]),
                    )
                    for sd in cd.get("sessions", [])
                )
                chargers.append(
                    ChargerSpec(
                        id=str(cd["id"]),
                        max_charge_kw=float(cd["max_charge_kw"]),
                        max_discharge_kw=float(cd.get("max_discharge_kw", 0.0)),
                        battery_capacity_kwh=float(cd["battery_capacity_kwh"]),
                        charge_efficiency=float(cd.get("charge_efficiency", 1.0)),
                        discharge_efficiency=float(cd.get("discharge_efficiency", 1.0)),
                        sessions=sessions,
                    )
                )
            dwellings.append(
                DwellingSpec(
                    id=did,
                    objective=objective,
                    non_shiftable_load=load,
                    pv_generation=pv,
                    heating_storage=storage,
                    chargers=tuple(chargers),
                )
            )
    except KeyError as exc:
        raise InvariantViolationError(f"descriptor missing required key: {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise InvariantViolationError(f"descriptor field error: {exc}") from None

    scenario = Scenario(
        horizon_steps=horizon,
        step_hours=step_hours,
        dwellings=tuple(dwellings),
        price=price,
        carbon_intensity=carbon,
        start_hour=start_hour,
        start_weekday=start_weekday,
    )
    violations = validate_scenario(scenario)
    if violations:
        raise InvariantViolationError("; ".join(violations))
    return scenario


def _write_series_csv(path: Path, values: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("step,value\n")
        for i, v in enumerate(values):
            fh.write(f"{i},{float(v)!r}\n")


def save_scenario(s: Scenario, descriptor_path: str | Path) -> Path:
    """Write the descriptor JSON and one CSV per series next to it.

    Floats are serialized via ``repr`` so a reload compares equal bit for bit.
    """
    descriptor_path = Path(descriptor_path)
    base = descriptor_path.parent
    base.mkdir(parents=True, exist_ok=True)
    _write_series_csv(base / "price.csv", s.price)
    _write_series_csv(base / "carbon.csv", s.carbon_intensity)
    dwellings = []
    for dw in s.dwellings:
        load_csv = f"{dw.id}_load.csv"
        pv_csv = f"{dw.id}_pv.csv"
        _write_series_csv(base / load_csv, dw.non_shiftable_load)
        _write_series_csv(base / pv_csv, dw.pv_generation)
        dd: dict = {
            "id": dw.id,
            "objective": dw.objective.value,
            "load_csv": load_csv,
            "pv_csv": pv_csv,
        }
        if dw.heating_storage is not None:
            st = dw.heating_storage
            dd["storage"] = {
                "capacity_kwh": st.capacity_kwh,
                "max_power_kw": st.max_power_kw,
                "round_trip_efficiency": st.round_trip_efficiency,
                "loss_per_step": st.loss_per_step,
            }
        dd["chargers"] = [
            {
                "id": ch.id,
                "max_charge_kw": ch.max_charge_kw,
                "max_discharge_kw": ch.max_discharge_kw,
                "battery_capacity_kwh": ch.battery_capacity_kwh,
                "charge_efficiency": ch.charge_efficiency,
                "discharge_efficiency": ch.discharge_efficiency,
                "sessions": [
                    {
                        "arrival_step": sess.arrival_step,
                        "departure_step": sess.departure_step,
                        "arrival_soc": sess.arrival_soc,
                        "required_soc_departure": sess.required_soc_departure,
                    }
                    for sess in ch.sessions
                ],
            }
            for ch in dw.chargers
        ]
        dwellings.append(dd)
    doc = {
        "horizon_steps": s.horizon_steps,
        "step_hours": s.step_hours,
        "price_csv": "price.csv",
        "carbon_csv": "carbon.csv",
        "calendar": {"start_hour": s.start_hour, "start_weekday": s.start_weekday},
        "dwellings": dwellings,
    }
    with open(descriptor_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return descriptor_path


def scenario_fingerprint(s: Scenario) -> str:
    """SHA-256 over a canonical serialization of every scenario field."""
    payload = {
        "horizon_steps": s.horizon_steps,
        "step_hours": repr(s.step_hours),
        "start_hour": s.start_hour,
        "start_weekday": s.start_weekday,
        "price": [repr(float(v)) for v in s.price],
        "carbon": [repr(float(v)) for v in s.carbon_intensity],
        "dwellings": [
            {
                "id": dw.id,
                "objective": dw.objective.value,
                "load": [repr(float(v)) for v in dw.non_shiftable_load],
                "pv": [repr(float(v)) for v in dw.pv_generation],
                "storage": None
                if dw.heating_storage is None
                else [
                    repr(dw.heating_storage.capacity_kwh),
                    repr(dw.heating_storage.max_power_kw),
                    repr(dw.heating_storage.round_trip_efficiency),
                    repr(dw.heating_storage.loss_per_step),
                ],
                "chargers": [
                    {
                        "id": ch.id,
                        "params": [
                            repr(ch.max_charge_kw),
                            repr(ch.max_discharge_kw),
                            repr(ch.battery_capacity_kwh),
                            repr(ch.charge_efficiency),
                            repr(ch.discharge_efficiency),
                        ],
                        "sessions": [
                            [
                                sess.arrival_step,
                                sess.departure_step,
                                repr(sess.arrival_soc),
                                repr(sess.required_soc_departure),
                            ]
                            for sess in ch.sessions
                        ],
                    }
                    for ch in dw.chargers
                ],
            }
            for dw in s.dwellings
        ],
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def scenarios_equal(a: Scenario, b: Scenario) -> bool:
    """Field-by-field equality (used by the serialization round-trip check)."""
    return scenario_fingerprint(a) == scenario_fingerprint(b)


# ---------------------------------------------------------------------------
# Synthetic generator
# ---------------------------------------------------------------------------

CHEAP_PRICE = 0.10
PEAK_PRICE = 0.30
CHEAP_HOURS = range(0, 6)  # two-tier tariff: off-peak 00:00-06:00


def generate_synthetic(seed: int, n_dwellings: int, days: int) -> Scenario:
    """Build a deterministic desk-scale community scenario.

    Residential-shaped sinusoid-plus-noise loads, a daytime PV bell, a
    two-tier price pattern and one commuter EV session per charger per day
    (vehicle away 08:00-18:00).  Identical seeds give bit-identical output.
    """
    if n_dwellings < 1 or days < 1:
        raise ValueError("n_dwellings and days must both be >= 1")
    rng = np.random.default_rng(seed)
    horizon = 24 * days
    hours = np.arange(horizon) % 24

    price = np.where(np.isin(hours, list(CHEAP_HOURS)), CHEAP_PRICE, PEAK_PRICE).astype(float)
    # Grid carbon intensity: lowest mid-day (solar-heavy mix), highest evening.
    carbon = 0.25 + 0.12 * np.cos(2 * np.pi * (hours - 20) / 24.0)

    dwellings = []
    for i in range(n_dwellings):
        base = rng.uniform(0.25, 0.55)
        amp = rng.uniform(0.5, 1.0)
        phase = rng.uniform(-1.5, 1.5)
        noise = rng.normal(0.0, 0.05, size=horizon)
        # Evening-peaked residential profile (peak near 19:00).
        load = base + amp * 0.5 * (1.0 + np.sin(2 * np.pi * (hours - 13 + phase) / 24.0)) + noise
        load = np.maximum(load, 0.0)

        pv_scale = rng.uniform(1.0, 2.5)
        bell = np.maximum(0.0, np.sin(np.pi * (hours - 6) / 12.0))
        clearness = np.repeat(rng.uniform(0.6, 1.0, size=days), 24)
        pv = pv_scale * bell * clearness

        sessions = []
        for d in range(days):
            arrival = 24 * d + 18
            departure = min(24 * d + 32, horizon)  # away 08:00-18:00; home overnight
            required = rng.uniform(0.70, 0.85)
            arrival_soc = required - rng.uniform(0.25, 0.40)
            sessions.append(
                EvSession(
                    arrival_step=arrival,
                    departure_step=departure,
                    arrival_soc=round(arrival_soc, 4),
                    required_soc_departure=round(required, 4),
                )
            )
        charger = ChargerSpec(
            id="ev1",
            max_charge_kw=7.4,
            max_discharge_kw=7.4,
            battery_capacity_kwh=40.0,
            charge_efficiency=0.95,
            discharge_efficiency=0.95,
            sessions=tuple(sessions),
        )
        dwellings.append(
            DwellingSpec(
                id=f"d{i + 1}",
                objective=list(Objective)[i % 3],
                non_shiftable_load=_series(load, "load"),
                pv_generation=_series(pv, "pv"),
                chargers=(charger,),
            )
        )
    return Scenario(
        horizon_steps=horizon,
        step_hours=1.0,
        dwellings=tuple(dwellings),
        price=_series(price, "price"),
        carbon_intensity=_series(carbon, "carbon"),
    )
