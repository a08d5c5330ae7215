"""Request/response bodies for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class SyntheticRequest(BaseModel):
    seed: int = 0
    dwellings: int = Field(default=3, ge=1)
    days: int = Field(default=28, ge=1)
    out: str  # descriptor JSON path to write


class SyntheticResponse(BaseModel):
    descriptor: str
    fingerprint: str
    horizon_steps: int
    dwellings: int


class ValidateRequest(BaseModel):
    scenario: str  # descriptor path


class ValidateResponse(BaseModel):
    valid: bool
    violations: list[str]


class RunRequest(BaseModel):
    """Points at a TOML config; optional fields override file values."""

    config: str
    out: str | None = None
    seed: int | None = None


class BaselineResponse(BaseModel):
    trace_csv: str
    steps: int
    dwellings: int
    community_import_kwh: float


class TrainRequest(RunRequest):
    episodes: int | None = Field(default=None, ge=0)


class TrainResponse(BaseModel):
    checkpoint_dir: str
    training_log_csv: str
    episodes: int
    final_mean_reward: float | None


class EvalRequest(RunRequest):
    checkpoints: str | None = None


class EvalResponse(BaseModel):
    trace_csv: str
    departures: int
    mean_departure_shortfall: float


class ReportRequest(RunRequest):
    baseline_trace: str | None = None
    controlled_trace: str | None = None


class KpiRowModel(BaseModel):
    level: str
    scope: str
    kpi: str
    raw_controlled: float
    raw_baseline: float
    ratio: float | None
    flags: list[str]


class ReportResponse(BaseModel):
    report_csv: str
    report_txt: str
    rows: list[KpiRowModel]
