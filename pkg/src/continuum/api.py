import logging
from typing import Any, Dict, List

from fastapi import Body, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import config
from .errors import ContinuumError, SafetyError, ScenarioError
from .models import parse_scenario
from .pipeline import RunSummary, certify_scenario, run_scenario
from .run_db import get_run, init_db, list_runs, record_run
from .safety import CertificateReport

config.configure_logging()
init_db()

app = FastAPI(title="Continuum Formation Service")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"]
)


def _error(exc: ContinuumError) -> JSONResponse:
    if isinstance(exc, ScenarioError):
        status = 422
    elif isinstance(exc, SafetyError):
        status = 409
    else:
        status = 400
    return JSONResponse(status_code=status, content={"error": str(exc), "module": exc.module})


@app.get("/health")
def health():
    return {"status": "ok"}


@app.post("/certify", response_model=CertificateReport)
def post_certify(scenario: Dict[str, Any] = Body(...)):
    try:
        sc = parse_scenario(scenario)
        _, _, report = certify_scenario(sc)
    except ContinuumError as e:
        return _error(e)
    record_run(sc.name, "certify", sc.seed, report.passed,
               report.model_dump(mode="json", exclude={"samples", "pretty_message"}))
    return report


@app.post("/run", response_model=RunSummary)
def post_run(scenario: Dict[str, Any] = Body(...), force: bool = False):
    try:
        sc = parse_scenario(scenario)
        result = run_scenario(sc, force=force)
    except ContinuumError as e:
        return _error(e)
    except Exception as e:
        logging.exception("Run endpoint failed")
        return JSONResponse(status_code=500, content={"error": str(e)})
    summary = result.summary
    record_run(sc.name, "run", sc.seed, summary.passed, summary.model_dump(mode="json", exclude={"pretty_message"}))
    return summary


@app.get("/runs")
def get_runs(limit: int = 50) -> List[Dict[str, Any]]:
    return list_runs(limit=limit)


@app.get("/runs/{run_id}")
def get_run_by_id(run_id: str):
    row = get_run(run_id)
    if row is None:
        raise HTTPException(status_code=404, detail=f"run {run_id} not found")
    return row
