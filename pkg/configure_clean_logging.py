#!/usr/bin/env python3
"""
Logging bootstrap for the vmm CLI: progress on stdout, optional append-mode log file
"""

import logging
import sys
from typing import Optional


def configure_clean_logging(level: str = 'INFO', log_file: Optional[str] = None):
    """
    Configures the root logger once per process and quiets chatty third-party loggers
    """
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, mode='a'))  # append across runs

    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )

    for name in ('matplotlib', 'numba', 'urllib3'):
        logging.getLogger(name).setLevel(logging.WARNING)

    logging.getLogger(__name__).debug("✅ Logging configured")


if __name__ == "__main__":
    configure_clean_logging('DEBUG')

    logger = logging.getLogger(__name__)
    logger.info("🔥 Logging smoke test")
    logger.warning("⚠️ Warning message")
    logger.error("❌ Error message")
