"""
Runtime Settings
================

Environment-based configuration for the experiment runner.

Values are read once at import time. A `.env` file next to the project root
is loaded first, so settings work regardless of the working directory the
CLI is started from.
"""

import os
import logging

from dotenv import load_dotenv

BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
ENV_PATH = os.path.join(BASE_DIR, ".env")
load_dotenv(dotenv_path=ENV_PATH, override=False)


def _env_int(name: str, default: int) -> int:
    raw = (os.environ.get(name) or "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        logging.getLogger(__name__).warning(f"Ignoring non-integer {name}={raw!r}; using {default}")
        return default


# =========================
# Config
# =========================

OUTPUT_DIR = (os.environ.get("NEARDGD_OUTPUT_DIR") or os.path.join(".", "results")).strip()
WORKERS = max(1, _env_int("NEARDGD_WORKERS", 1))
LOG_LEVEL = (os.environ.get("NEARDGD_LOG_LEVEL") or "INFO").strip().upper()
PRESETS_DIR = (os.environ.get("NEARDGD_PRESETS_DIR") or os.path.join(BASE_DIR, "data", "presets")).strip()


def configure_logging(level: str = None) -> None:
    """Configure the root logger once for CLI use."""
    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
