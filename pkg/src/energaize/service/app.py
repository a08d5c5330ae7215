"""HTTP service exposing the run pipeline.

Every endpoint wraps the corresponding function in `runs`; handlers run the
work synchronously and return when artifacts are on disk. Input problems map
to 400, checkpoint/scenario mismatches to 409, training divergence to 500.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..envsim import InvalidScenarioError
from ..kpi import EmptyTraceError, TraceMismatchError
from ..maddpg import NumericDivergenceError
from ..runs import (
    ArtifactMismatchError,
    ConfigError,
    load_config,
    run_baseline,
    run_eval,
    run_report,
    run_synthetic,
    run_train,
)
from ..scenario import ScenarioError, load_scenario, validate_scenario
from .schemas import (
    BaselineResponse,
    EvalRequest,
    EvalResponse,
    HealthResponse,
    KpiRowModel,
    ReportRequest,
    ReportResponse,
    RunRequest,
    SyntheticRequest,
    SyntheticResponse,
    TrainRequest,
    TrainResponse,
    ValidateRequest,
    ValidateResponse,
)

_INPUT_ERRORS = (
    ConfigError,
    ScenarioError,
    InvalidScenarioError,
    TraceMismatchError,
    EmptyTraceError,
    FileNotFoundError,
    ValueError,
)


def _config_for(req: RunRequest, extra: dict | None = None):
    overrides = {"out": req.out, "seed": req.seed}
    overrides.update(extra or {})
    return load_config(req.config, overrides)


def create_app() -> FastAPI:
    app = FastAPI(title="energaize", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/synthetic", response_model=SyntheticResponse)
    def synthetic(req: SyntheticRequest) -> SyntheticResponse:
        try:
            return SyntheticResponse(**run_synthetic(req.seed, req.dwellings, req.days, req.out))
        except _INPUT_ERRORS as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None

    @app.post("/validate", response_model=ValidateResponse)
    def validate(req: ValidateRequest) -> ValidateResponse:
        try:
            scenario = load_scenario(req.scenario)
        except ScenarioError as exc:
            return ValidateResponse(valid=False, violations=[str(exc)])
        return ValidateResponse(valid=True, violations=validate_scenario(scenario))

    @app.post("/baseline", response_model=BaselineResponse)
    def baseline(req: RunRequest) -> BaselineResponse:
        try:
            return BaselineResponse(**run_baseline(_config_for(req)))
        except _INPUT_ERRORS as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None

    @app.post("/train", response_model=TrainResponse)
    def train(req: TrainRequest) -> TrainResponse:
        try:
            cfg = _config_for(req, {"episodes": req.episodes})
            return TrainResponse(**run_train(cfg))
        except _INPUT_ERRORS as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        except NumericDivergenceError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from None

    @app.post("/eval", response_model=EvalResponse)
    def evaluate(req: EvalRequest) -> EvalResponse:
        try:
            return EvalResponse(**run_eval(_config_for(req), req.checkpoints))
        except ArtifactMismatchError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        except _INPUT_ERRORS as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None

    @app.post("/report", response_model=ReportResponse)
    def report(req: ReportRequest) -> ReportResponse:
        try:
            result = run_report(_config_for(req), req.baseline_trace, req.controlled_trace)
        except _INPUT_ERRORS as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return ReportResponse(
            report_csv=result["report_csv"],
            report_txt=result["report_txt"],
            rows=[KpiRowModel(**row) for row in result["rows"]],
        )

    return app
