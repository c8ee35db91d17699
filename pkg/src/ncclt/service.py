"""HTTP facade over the experiment drivers.

One POST endpoint per mode; the request carries the config document verbatim
plus a worker count (transport detail, never echoed into reports). Config
problems are HTTP 400; runtime lab errors come back as exit_code 2 so the
thin client can forward the status without re-interpreting exceptions.
"""

from __future__ import annotations

from typing import List, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__, experiments
from .config import config_from_dict
from .errors import ConfigError, LabError


class FileEntry(BaseModel):
    name: str
    content: str


class RunRequest(BaseModel):
    config: dict
    workers: int = Field(default=1, ge=1)


class RunResponse(BaseModel):
    exit_code: int
    report: dict
    files: List[FileEntry]
    error: Optional[str] = None


app = FastAPI(title="ncclt", version=__version__)


def _run_mode(mode: str, req: RunRequest) -> RunResponse:
    try:
        cfg = config_from_dict(req.config)
        if cfg.mode != mode:
            raise ConfigError(f"config.mode is {cfg.mode!r} but the endpoint runs {mode!r}")
        result = experiments.run(cfg, workers=req.workers)
    except ConfigError as e:
        raise HTTPException(status_code=400, detail=str(e)) from e
    except LabError as e:
        return RunResponse(
            exit_code=2, report={}, files=[], error=f"{type(e).__name__}: {e}"
        )
    return RunResponse(
        exit_code=result.exit_code,
        report=result.report,
        files=[FileEntry(name=n, content=c) for n, c in result.files],
    )


@app.get("/v1/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/v1/rate", response_model=RunResponse)
def rate(req: RunRequest) -> RunResponse:
    return _run_mode("rate", req)


@app.post("/v1/variance", response_model=RunResponse)
def variance(req: RunRequest) -> RunResponse:
    return _run_mode("variance", req)


@app.post("/v1/stein", response_model=RunResponse)
def stein(req: RunRequest) -> RunResponse:
    return _run_mode("stein", req)


@app.post("/v1/check-inequalities", response_model=RunResponse)
def check_inequalities(req: RunRequest) -> RunResponse:
    return _run_mode("inequalities", req)


@app.post("/v1/return-times", response_model=RunResponse)
def return_times(req: RunRequest) -> RunResponse:
    return _run_mode("return-times", req)


@app.post("/v1/dump-neighborhoods", response_model=RunResponse)
def dump_neighborhoods(req: RunRequest) -> RunResponse:
    return _run_mode("dump-neighborhoods", req)
