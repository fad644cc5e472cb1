"""HTTP face of the simulator.

Every endpoint accepts an optional inline config (same schema as the YAML
file) plus seed/threshold overrides, so clients never manage server-side
state. The CLI drives the same underlying functions.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, ValidationError

from . import __version__
from .config import ExperimentConfig
from .pipeline import ledger_summary, run_baseline, run_gated, sweep_rows
from .verification import verify_all


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: dict | None = None
    threshold: float | None = None
    seed: int | None = None


class RunSummary(BaseModel):
    kind: str
    gamma_th: float | None
    config_hash: str
    seed: int
    code_version: str
    ticks: int
    transmits: int
    total_bytes: int
    total_energy_j: float
    reference_energy_j: float


class SweepResponse(BaseModel):
    rows: list[RunSummary]


class VerifyCheck(BaseModel):
    name: str
    passed: bool
    measured: str
    tolerance: str
    detail: str


class VerifyResponse(BaseModel):
    passed: bool
    checks: list[VerifyCheck]


class HealthResponse(BaseModel):
    status: str
    version: str


def resolve_config(request: RunRequest) -> ExperimentConfig:
    """Validate the inline config and apply the scalar overrides."""
    try:
        cfg = ExperimentConfig.model_validate(request.config or {})
    except ValidationError as exc:
        errors = exc.errors(include_url=False, include_context=False, include_input=False)
        raise HTTPException(status_code=422, detail=errors) from exc
    if request.seed is not None:
        cfg.seed = request.seed
    if request.threshold is not None:
        if request.threshold < 0:
            raise HTTPException(status_code=422, detail="threshold must be >= 0")
        cfg.sampler.voi_threshold = request.threshold
    return cfg


def create_app() -> FastAPI:
    app = FastAPI(title="semsim", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/run", response_model=RunSummary)
    def run(request: RunRequest) -> RunSummary:
        cfg = resolve_config(request)
        return RunSummary(**ledger_summary(run_gated(cfg)))

    @app.post("/baseline", response_model=RunSummary)
    def baseline(request: RunRequest) -> RunSummary:
        cfg = resolve_config(request)
        return RunSummary(**ledger_summary(run_baseline(cfg)))

    @app.post("/sweep", response_model=SweepResponse)
    def sweep(request: RunRequest) -> SweepResponse:
        cfg = resolve_config(request)
        _rows, ledgers = sweep_rows(cfg)
        return SweepResponse(rows=[RunSummary(**ledger_summary(l)) for l in ledgers])

    @app.post("/verify", response_model=VerifyResponse)
    def verify(request: RunRequest) -> VerifyResponse:
        cfg = resolve_config(request)
        results = verify_all(cfg)
        return VerifyResponse(
            passed=all(r.passed for r in results),
            checks=[VerifyCheck(**r.__dict__) for r in results],
        )

    return app


app = create_app()
