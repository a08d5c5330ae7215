"""Brute-force KPI reference used as an oracle by test_kpi.

Plain-loop implementations of each KPI formula, written independently of
the package (no numpy vectorization, no shared helpers) so agreement is
meaningful.
"""

from __future__ import annotations


def ref_consumption(series: list[float]) -> float:
    total = 0.0
    for x in series:
        if x > 0:
            total += x
    return total


def ref_price(series: list[float], price: list[float]) -> float:
    total = 0.0
    for x, p in zip(series, price):
        if x > 0:
            total += p * x
    return total


def ref_carbon(series: list[float], carbon: list[float]) -> float:
    total = 0.0
    for x, c in zip(series, carbon):
        if x > 0:
            total += c * x
    return total


def ref_znet(
    series: list[float],
    net: list[list[float]],
    load: list[list[float]],
    pv: list[list[float]],
    column: int | None = None,
) -> float:
    """Import share of gross consumption for one scope.

    `series` is the scope's net-load series (community total or one
    dwelling's column); gross consumption is accumulated per dwelling as
    load plus positive asset draw, over all columns for the community or
    just `column` for one dwelling.
    """
    imports = 0.0
    for x in series:
        if x > 0:
            imports += x
    gross = 0.0
    for t in range(len(load)):
        cols = range(len(load[t])) if column is None else [column]
        for i in cols:
            assets = net[t][i] - load[t][i] + pv[t][i]
            gross += load[t][i] + (assets if assets > 0 else 0.0)
    if gross <= 0:
        return 1.0
    return imports / gross


def ref_daily_peak(series: list[float], steps_per_day: int) -> float:
    n_days = len(series) // steps_per_day
    peaks = []
    for d in range(n_days):
        day = series[d * steps_per_day : (d + 1) * steps_per_day]
        peaks.append(max(day))
    return sum(peaks) / len(peaks)


def ref_ramping(series: list[float]) -> float:
    total = 0.0
    for t in range(1, len(series)):
        total += abs(series[t] - series[t - 1])
    return total


def ref_one_minus_load_factor(series: list[float], steps_per_day: int) -> float:
    n_days = len(series) // steps_per_day
    vals = []
    for d in range(n_days):
        day = series[d * steps_per_day : (d + 1) * steps_per_day]
        peak = max(day)
        if peak <= 0:
            continue
        mean = sum(day) / len(day)
        vals.append(1.0 - mean / peak)
    return sum(vals) / len(vals)
