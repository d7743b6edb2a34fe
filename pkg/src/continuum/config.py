import logging
import os
from pathlib import Path

from dotenv import load_dotenv

def init_env() -> None:
    # Load .env if present; don't override OS-provided env vars
    load_dotenv(override=False)

init_env()

# Root for bundled scenarios, run outputs and the run ledger
DATA_DIR = Path(os.getenv("CONTINUUM_DATA_DIR", str(Path("data").absolute())))

SCENARIO_DIR = DATA_DIR / "scenarios"

LOG_LEVEL = os.getenv("CONTINUUM_LOG_LEVEL", "INFO")


def output_dir_override() -> str | None:
    """CONTINUUM_OUTPUT_DIR, read at call time so tests and shells can set it late."""
    value = os.getenv("CONTINUUM_OUTPUT_DIR", "").strip()
    return value or None


def db_path() -> Path:
    return Path(os.getenv("CONTINUUM_DB_PATH", str(DATA_DIR / "runs.sqlite3")))


def default_run_dir(scenario_name: str) -> Path:
    return DATA_DIR / "runs" / scenario_name


def configure_logging(level: str | None = None) -> None:
    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
