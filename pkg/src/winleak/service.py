"""HTTP service over the experiment harness.

Endpoints accept an ``ExperimentConfig`` document and return the same
report documents the harness writes to disk. Toolkit errors map to status
codes: configuration 422, data format 400, invariant 500.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Any, Optional, Union

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from . import __version__, harness
from .core import ConfigError, DataFormatError, InvariantError, WinleakError
from .synth import AmbientSynthConfig, BodySynthConfig

STATUS = {ConfigError: 422, DataFormatError: 400, InvariantError: 500}


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: harness.ExperimentConfig
    out: Optional[str] = None  # server-side output directory; overrides config.output_dir
    seed: Optional[int] = None
    split_index: int = Field(default=0, ge=0)

    def resolved(self) -> harness.ExperimentConfig:
        cfg = self.config if self.seed is None else self.config.with_seed(self.seed)
        if self.split_index >= len(cfg.splits):
            raise ConfigError(f"split_index {self.split_index} out of range for {len(cfg.splits)} split specs")
        return cfg


class SynthRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    synth: Union[AmbientSynthConfig, BodySynthConfig] = Field(discriminator="mode")
    out: str
    seed: Optional[int] = None


class SynthResponse(BaseModel):
    manifest: str
    mode: str
    seed: int


class Health(BaseModel):
    status: str = "ok"
    version: str = __version__


class ErrorBody(BaseModel):
    error: str
    detail: str


app = FastAPI(title="winleak", version=__version__)


@app.exception_handler(WinleakError)
async def _toolkit_error(request: Request, exc: WinleakError) -> JSONResponse:
    code = next((c for t, c in STATUS.items() if isinstance(exc, t)), 500)
    return JSONResponse(status_code=code, content=ErrorBody(error=type(exc).__name__, detail=str(exc)).model_dump())


@app.get("/health", response_model=Health)
def health() -> Health:
    return Health()


@app.get("/schema/config")
def schema() -> dict[str, Any]:
    return harness.config_schema()


@app.post("/run")
def run(req: RunRequest) -> dict[str, Any]:
    return harness.run(req.resolved(), req.out, req.split_index)


@app.post("/compare")
def compare(req: RunRequest) -> dict[str, Any]:
    return harness.compare(req.resolved(), req.out)


@app.post("/audit")
def audit(req: RunRequest) -> dict[str, Any]:
    return harness.audit(req.resolved(), req.out, req.split_index)


@app.post("/synth", response_model=SynthResponse)
def synth(req: SynthRequest) -> SynthResponse:
    cfg = req.synth
    if req.seed is not None:
        cfg = replace(cfg, seed=req.seed)
    path = harness.write_synth(cfg, req.out)
    return SynthResponse(manifest=str(path), mode=cfg.mode, seed=cfg.seed)
