import json
import uuid
from datetime import datetime, timezone
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional

from sqlalchemy import create_engine, text
from sqlalchemy.engine import Engine

from . import config


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds").replace("+00:00", "Z")


@lru_cache(maxsize=None)
def _engine_for(path: str) -> Engine:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return create_engine(f"sqlite:///{path}", future=True)


def get_engine(path: Optional[Path] = None) -> Engine:
    # resolved per call so CONTINUUM_DB_PATH can change between tests
    return _engine_for(str(path or config.db_path()))


def init_db(path: Optional[Path] = None) -> None:
    """Create the runs table if it doesn't exist."""
    with get_engine(path).begin() as conn:
        conn.execute(
            text(
                """
                CREATE TABLE IF NOT EXISTS runs (
                    id TEXT PRIMARY KEY,
                    scenario TEXT NOT NULL,
                    command TEXT NOT NULL CHECK(command IN ('certify','run','sweep')),
                    seed INTEGER NOT NULL,
                    passed INTEGER NOT NULL,
                    summary TEXT NOT NULL,
                    created_at TEXT NOT NULL
                )
                """
            )
        )


def record_run(scenario: str, command: str, seed: int, passed: bool, summary: Dict[str, Any],
               path: Optional[Path] = None) -> Dict[str, Any]:
    init_db(path)
    row = {
        "id": uuid.uuid4().hex,
        "scenario": scenario,
        "command": command,
        "seed": seed,
        "passed": int(passed),
        "summary": json.dumps(summary, ensure_ascii=False, sort_keys=True),
        "created_at": _utcnow(),
    }
    with get_engine(path).begin() as conn:
        conn.execute(
            text(
                """
                INSERT INTO runs (id, scenario, command, seed, passed, summary, created_at)
                VALUES (:id, :scenario, :command, :seed, :passed, :summary, :created_at)
                """
            ),
            row,
        )
    return _decode(row)


def _decode(row: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(row)
    out["passed"] = bool(out["passed"])
    out["summary"] = json.loads(out["summary"]) if out.get("summary") else {}
    return out


def list_runs(limit: int = 50, path: Optional[Path] = None) -> List[Dict[str, Any]]:
    init_db(path)
    with get_engine(path).begin() as conn:
        rows = conn.execute(
            text(
                """
                SELECT id, scenario, command, seed, passed, created_at
                FROM runs ORDER BY created_at DESC, rowid DESC LIMIT :limit
                """
            ),
            {"limit": limit},
        ).mappings().all()
    return [dict(r, passed=bool(r["passed"])) for r in rows]


def get_run(run_id: str, path: Optional[Path] = None) -> Optional[Dict[str, Any]]:
    init_db(path)
    with get_engine(path).begin() as conn:
        row = conn.execute(
            text("SELECT id, scenario, command, seed, passed, summary, created_at FROM runs WHERE id=:id"),
            {"id": run_id},
        ).mappings().first()
    return _decode(dict(row)) if row else None
