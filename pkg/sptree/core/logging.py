import logging
import sys
from pathlib import Path
from logging.handlers import RotatingFileHandler
from sptree.core.config import settings

_CONFIGURED = False


def setup_logging(level: int = None):
    """
    Configure logging for the command-line runs
    """
    global _CONFIGURED
    log_level = level if level is not None else (logging.DEBUG if settings.DEBUG else logging.INFO)
    root_logger = logging.getLogger()

    if _CONFIGURED:
        root_logger.setLevel(log_level)
        return root_logger

    log_dir = Path(settings.LOG_DIR)
    log_dir.mkdir(parents=True, exist_ok=True)

    log_format = logging.Formatter(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(log_format)
    console_handler.setLevel(log_level)

    file_handler = RotatingFileHandler(
        log_dir / "sptree.log",
        maxBytes=10485760,  # 10MB
        backupCount=5
    )
    file_handler.setFormatter(log_format)
    file_handler.setLevel(log_level)

    root_logger.setLevel(log_level)
    root_logger.addHandler(console_handler)
    root_logger.addHandler(file_handler)

    logging.getLogger("sqlalchemy.engine").setLevel(logging.WARNING)
    logging.getLogger("numba").setLevel(logging.WARNING)

    _CONFIGURED = True
    return root_logger
