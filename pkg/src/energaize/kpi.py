"""Load-shaping KPIs over episode traces, normalized to a baseline trace.

REC level: consumption D, price C, carbon G, grid-import share Z, average
daily peak P, ramping R, and 1 - load factor. Dwelling level: C, G, Z.
Every KPI is reported raw for both traces plus the controlled/baseline
ratio, with guard flags instead of exceptions on degenerate denominators.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scenario import Scenario

COMMUNITY = "community"

REC_KPIS = ("D", "C", "G", "Z", "P", "R", "1-L")
DWELLING_KPIS = ("C", "G", "Z")

KPI_LABELS = {
    "D": "Electricity Consumption (D)",
    "C": "Electricity Price (C)",
    "G": "Carbon Emissions (G)",
    "Z": "Zero Net Energy (Z)",
    "P": "Average Daily Peak (P)",
    "R": "Ramping (R)",
    "1-L": "1 - Load Factor (1-L)",
}

OBJECTIVE_LETTER = {"cost": "C", "carbon": "G", "self_consumption": "Z"}


class EmptyTraceError(ValueError):
    pass


class TraceMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Trace:
    """One full episode of per-step, per-dwelling net loads.

    `load`/`pv` carry the scenario's gross-consumption ingredients for the
    self-consumption KPI; they are attached when the trace is built from a
    rollout or re-attached from the scenario after a CSV round trip.
    """

    net: np.ndarray  # (T, n) signed kWh, + = import
    community: np.ndarray  # (T,)
    price: np.ndarray  # (T,)
    carbon: np.ndarray  # (T,)
    steps_per_day: int
    dwelling_ids: tuple[str, ...]
    load: np.ndarray | None = None  # (T, n)
    pv: np.ndarray | None = None  # (T, n)
    ev_grid: np.ndarray | None = None  # (T, n) summed charger grid energy

    def __post_init__(self):
        T, n = self.net.shape
        if T == 0 or n == 0:
            raise EmptyTraceError("trace has no steps or no dwellings")
        if len(self.dwelling_ids) != n:
            raise TraceMismatchError("dwelling id count != net column count")
        for name in ("community", "price", "carbon"):
            if len(getattr(self, name)) != T:
                raise TraceMismatchError(f"{name} length != step count")
        if not np.allclose(self.community, self.net.sum(axis=1), atol=1e-9 * n, rtol=0):
            raise TraceMismatchError("community series != row sums of net")

    def column(self, scope: str) -> np.ndarray:
        """Community series or one dwelling's net-load column."""
        if scope == COMMUNITY:
            return self.community
        try:
            return self.net[:, self.dwelling_ids.index(scope)]
        except ValueError:
            raise TraceMismatchError(f"unknown dwelling id {scope!r}") from None


def _full_days(arr: np.ndarray, spd: int) -> tuple[np.ndarray, bool]:
    days = len(arr) // spd
    return arr[: days * spd].reshape(days, spd), len(arr) % spd != 0


def _seq_sum(arr: np.ndarray) -> float:
    # Left-to-right accumulation: totals must not depend on vectorized
    # reduction blocking, so a plain re-computation reproduces them bit for
    # bit.
    return float(sum(arr.tolist()))


def kpi_consumption_D(trace: Trace, scope: str = COMMUNITY) -> float:
    return _seq_sum(np.maximum(trace.column(scope), 0.0))


def kpi_price_C(trace: Trace, scope: str = COMMUNITY) -> float:
    return _seq_sum(trace.price * np.maximum(trace.column(scope), 0.0))


def kpi_carbon_G(trace: Trace, scope: str = COMMUNITY) -> float:
    return _seq_sum(trace.carbon * np.maximum(trace.column(scope), 0.0))


def gross_consumption(trace: Trace) -> np.ndarray:
    """Per-dwelling consumption before PV offsets: non-shiftable load plus
    energy drawn by assets (net = load - pv + assets)."""
    if trace.load is None or trace.pv is None:
        raise TraceMismatchError("trace lacks load/pv series needed for Z")
    assets = trace.net - trace.load + trace.pv
    return trace.load + np.maximum(assets, 0.0)


def kpi_znet_Z(trace: Trace, scope: str = COMMUNITY) -> tuple[float, tuple[str, ...]]:
    """Grid-import share of gross consumption (lower = more self-consumed).
    Returns (value, flags); a zero-gross scope yields 1.0 flagged."""
    gross = gross_consumption(trace)
    if scope == COMMUNITY:
        g = _seq_sum(gross.ravel())
    else:
        g = _seq_sum(gross[:, trace.dwelling_ids.index(scope)])
    imports = _seq_sum(np.maximum(trace.column(scope), 0.0))
    if g <= 0:
        return 1.0, ("zero-gross",)
    return imports / g, ()


def kpi_daily_peak_P(trace: Trace) -> tuple[float, tuple[str, ...]]:
    days, dropped = _full_days(trace.community, trace.steps_per_day)
    flags = ("partial-day-dropped",) if dropped else ()
    if len(days) == 0:
        return float("nan"), flags + ("no-full-day",)
    peaks = days.max(axis=1)
    return _seq_sum(peaks) / len(peaks), flags


def kpi_ramping_R(trace: Trace) -> float:
    return _seq_sum(np.abs(np.diff(trace.community)))


def kpi_one_minus_load_factor(trace: Trace) -> tuple[float, tuple[str, ...]]:
    days, dropped = _full_days(trace.community, trace.steps_per_day)
    flags = ("partial-day-dropped",) if dropped else ()
    vals = []
    skipped = False
    for day in days:
        peak = float(day.max())
        if peak <= 0:
            skipped = True
            continue
        mean = _seq_sum(day) / len(day)
        vals.append(1.0 - mean / peak)
    if skipped:
        flags += ("flat-day-skipped",)
    if not vals:
        return float("nan"), flags + ("no-usable-day",)
    return sum(vals) / len(vals), flags


@dataclass(frozen=True)
class KpiRow:
    level: str  # "rec" | "dwelling"
    scope: str  # COMMUNITY or dwelling id
    kpi: str
    raw_controlled: float
    raw_baseline: float
    ratio: float | None
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class KpiReport:
    rows: tuple[KpiRow, ...]
    objectives: dict[str, str] = field(default_factory=dict)  # dwelling id -> objective

    def row(self, level: str, scope: str, kpi: str) -> KpiRow:
        for r in self.rows:
            if (r.level, r.scope, r.kpi) == (level, scope, kpi):
                return r
        raise KeyError((level, scope, kpi))


def _ratio(controlled: float, baseline: float) -> tuple[float | None, tuple[str, ...]]:
    if not np.isfinite(controlled) or not np.isfinite(baseline):
        return None, ("non-finite",)
    if baseline == 0:
        return None, ("division-guard",)
    return controlled / baseline, ()


def attach_series(trace: Trace, s: Scenario) -> Trace:
    """Return a copy carrying the scenario's load/pv arrays (Z inputs)."""
    if tuple(dw.id for dw in s.dwellings) != trace.dwelling_ids:
        raise TraceMismatchError("scenario dwelling ids do not match trace")
    if s.horizon_steps != trace.net.shape[0]:
        raise TraceMismatchError("scenario horizon does not match trace length")
    load = np.column_stack([dw.non_shiftable_load for dw in s.dwellings])
    pv = np.column_stack([dw.pv_generation for dw in s.dwellings])
    return Trace(
        net=trace.net,
        community=trace.community,
        price=trace.price,
        carbon=trace.carbon,
        steps_per_day=trace.steps_per_day,
        dwelling_ids=trace.dwelling_ids,
        load=load,
        pv=pv,
        ev_grid=trace.ev_grid,
    )


def build_report(controlled: Trace, baseline: Trace, s: Scenario | None = None) -> KpiReport:
    if controlled.net.shape != baseline.net.shape:
        raise TraceMismatchError(
            f"trace shapes differ: {controlled.net.shape} vs {baseline.net.shape}"
        )
    if controlled.dwelling_ids != baseline.dwelling_ids:
        raise TraceMismatchError("traces cover different dwelling sets")
    if s is not None:
        controlled = attach_series(controlled, s)
        baseline = attach_series(baseline, s)

    def scalar(fn, tr):
        return fn(tr), ()

    rows: list[KpiRow] = []

    def add(level, scope, kpi, compute):
        rc, fc = compute(controlled)
        rb, fb = compute(baseline)
        ratio, fr = _ratio(rc, rb)
        rows.append(KpiRow(level, scope, kpi, rc, rb, ratio, tuple(dict.fromkeys(fc + fb + fr))))

    add("rec", COMMUNITY, "D", lambda tr: scalar(kpi_consumption_D, tr))
    add("rec", COMMUNITY, "C", lambda tr: scalar(kpi_price_C, tr))
    add("rec", COMMUNITY, "G", lambda tr: scalar(kpi_carbon_G, tr))
    add("rec", COMMUNITY, "Z", lambda tr: kpi_znet_Z(tr))
    add("rec", COMMUNITY, "P", kpi_daily_peak_P)
    add("rec", COMMUNITY, "R", lambda tr: scalar(kpi_ramping_R, tr))
    add("rec", COMMUNITY, "1-L", kpi_one_minus_load_factor)
    for did in controlled.dwelling_ids:
        add("dwelling", did, "C", lambda tr, d=did: scalar(lambda t: kpi_price_C(t, d), tr))
        add("dwelling", did, "G", lambda tr, d=did: scalar(lambda t: kpi_carbon_G(t, d), tr))
        add("dwelling", did, "Z", lambda tr, d=did: kpi_znet_Z(tr, d))

    objectives = {}
    if s is not None:
        objectives = {dw.id: dw.objective.value for dw in s.dwellings}
    return KpiReport(tuple(rows), objectives)


def trace_from_rollout(s: Scenario, ro) -> Trace:
    """Package an episode rollout (per-dwelling net loads plus charger grid
    energy) as a Trace with the scenario series attached."""
    return Trace(
        net=ro.net,
        community=ro.community,
        price=np.asarray(s.price),
        carbon=np.asarray(s.carbon_intensity),
        steps_per_day=s.steps_per_day,
        dwelling_ids=tuple(dw.id for dw in s.dwellings),
        load=np.column_stack([dw.non_shiftable_load for dw in s.dwellings]),
        pv=np.column_stack([dw.pv_generation for dw in s.dwellings]),
        ev_grid=ro.ev_grid,
    )


# ---------------------------------------------------------------------------
# Trace and report files
# ---------------------------------------------------------------------------

def write_trace_csv(trace: Trace, path: str | Path) -> None:
    """One row per dwelling per step: step, dwelling_id, net_load_kwh,
    community_net_kwh, price, carbon."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("step,dwelling_id,net_load_kwh,community_net_kwh,price,carbon\n")
        T, n = trace.net.shape
        for t in range(T):
            for i in range(n):
                fh.write(
                    f"{t},{trace.dwelling_ids[i]},{float(trace.net[t, i])!r},"
                    f"{float(trace.community[t])!r},{float(trace.price[t])!r},"
                    f"{float(trace.carbon[t])!r}\n"
                )


def read_trace_csv(path: str | Path, steps_per_day: int = 24) -> Trace:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    rows: dict[int, dict[str, float]] = {}
    community: dict[int, float] = {}
    price: dict[int, float] = {}
    carbon: dict[int, float] = {}
    ids: list[str] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            t = int(rec["step"])
            did = rec["dwelling_id"]
            if did not in ids:
                ids.append(did)
            rows.setdefault(t, {})[did] = float(rec["net_load_kwh"])
            community[t] = float(rec["community_net_kwh"])
            price[t] = float(rec["price"])
            carbon[t] = float(rec["carbon"])
    if not rows:
        raise EmptyTraceError(f"no rows in {path}")
    T = max(rows) + 1
    net = np.zeros((T, len(ids)))
    for t in range(T):
        for i, did in enumerate(ids):
            net[t, i] = rows[t][did]
    return Trace(
        net=net,
        community=np.array([community[t] for t in range(T)]),
        price=np.array([price[t] for t in range(T)]),
        carbon=np.array([carbon[t] for t in range(T)]),
        steps_per_day=steps_per_day,
        dwelling_ids=tuple(ids),
    )


def _fmt(x: float | None) -> str:
    if x is None:
        return ""
    return repr(float(x))


def write_report_csv(report: KpiReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("level,scope,kpi,raw_controlled,raw_baseline,ratio,flags\n")
        for r in report.rows:
            fh.write(
                f"{r.level},{r.scope},{r.kpi},{_fmt(r.raw_controlled)},"
                f"{_fmt(r.raw_baseline)},{_fmt(r.ratio)},{';'.join(r.flags)}\n"
            )


def render_report_text(report: KpiReport) -> str:
    """Aligned two-block table: REC-level KPIs, then per-dwelling KPIs with
    each dwelling's objective letter."""

    def num(x) -> str:
        if x is None or not np.isfinite(x):
            return "-"
        return f"{x:.4f}"

    lines = ["REC-level KPIs", ""]
    header = f"{'KPI':<30}{'controlled':>14}{'baseline':>14}{'ratio':>10}  flags"
    lines.append(header)
    lines.append("-" * len(header))
    for r in report.rows:
        if r.level != "rec":
            continue
        lines.append(
            f"{KPI_LABELS[r.kpi]:<30}{num(r.raw_controlled):>14}"
            f"{num(r.raw_baseline):>14}{num(r.ratio):>10}  {';'.join(r.flags)}"
        )
    lines += ["", "Dwelling-level KPIs", ""]
    header2 = f"{'dwelling':<12}{'objective':<20}{'KPI':<8}{'controlled':>14}{'baseline':>14}{'ratio':>10}"
    lines.append(header2)
    lines.append("-" * len(header2))
    for r in report.rows:
        if r.level != "dwelling":
            continue
        obj = report.objectives.get(r.scope, "")
        tag = f"{obj} ({OBJECTIVE_LETTER.get(obj, '?')})" if obj else ""
        lines.append(
            f"{r.scope:<12}{tag:<20}{r.kpi:<8}{num(r.raw_controlled):>14}"
            f"{num(r.raw_baseline):>14}{num(r.ratio):>10}"
        )
    return "\n".join(lines) + "\n"
