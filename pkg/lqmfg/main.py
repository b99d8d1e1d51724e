# lqmfg/main.py
from __future__ import annotations

import logging
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

# Load .env from the working directory, then the repo root, before settings are parsed
BASE_DIR = Path(__file__).resolve().parent.parent
load_dotenv()
load_dotenv(BASE_DIR / ".env")

from lqmfg.core.settings import settings  # noqa: E402
from lqmfg.cli import main as cli_main  # noqa: E402

# ──────────────────────────────────────────────────────────────
# Structured logging (stderr; stdout carries the JSON documents)
# ──────────────────────────────────────────────────────────────

logging.basicConfig(
    level=getattr(logging, settings.log_level.upper(), logging.INFO),
    format="%(asctime)s %(levelname)s %(name)s %(message)s",
    stream=sys.stderr,
)
logger = logging.getLogger(__name__)


def main(argv: Optional[List[str]] = None) -> int:
    logger.debug("[app] algo_version=%s threads=%d", settings.algo_version, settings.worker_count())
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
