import json
from pathlib import Path

import pytest

from src.continuum.formation import paper_formation

ROOT = Path(__file__).resolve().parents[1]
SCENARIO_DIR = ROOT / "data" / "scenarios"


@pytest.fixture
def paper_spec():
    return paper_formation()


@pytest.fixture
def bundled_path():
    def _path(name: str) -> Path:
        return SCENARIO_DIR / f"{name}.scenario"
    return _path


@pytest.fixture(autouse=True)
def isolated_data(tmp_path, monkeypatch):
    monkeypatch.setenv("CONTINUUM_DB_PATH", str(tmp_path / "runs.sqlite3"))
    monkeypatch.setenv("CONTINUUM_OUTPUT_DIR", str(tmp_path / "out"))
    yield


@pytest.fixture
def write_scenario(tmp_path):
    def _write(data: dict, name: str = "test.scenario") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path
    return _write
