import json
import logging
import sys
from typing import Optional

from app.core.config import get_settings

STRUCTURED_FIELDS = (
    "experiment",
    "seed",
    "replications",
    "threads",
    "artifact",
    "duration_ms",
    "exit_code",
    "error_code",
)


# -------------------------------------------------
# Log Formatters
# -------------------------------------------------
class JsonFormatter(logging.Formatter):
    """
    Outputs one JSON object per log line.
    """

    def format(self, record: logging.LogRecord) -> str:
        log_record = {
            "app": get_settings().APP_NAME,
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }

        # Optional structured fields
        for field in STRUCTURED_FIELDS:
            if hasattr(record, field):
                log_record[field] = getattr(record, field)

        if record.exc_info:
            log_record["exception"] = self.formatException(record.exc_info)

        return json.dumps(log_record, default=str)


# -------------------------------------------------
# Logging Setup
# -------------------------------------------------
def setup_logging() -> None:
    """
    Configures process-wide logging.

    - JSON logs in production
    - Human-readable logs in development
    """
    settings = get_settings()
    root_logger = logging.getLogger()
    level = logging.DEBUG if settings.DEBUG else settings.LOG_LEVEL.upper()
    root_logger.setLevel(level)

    root_logger.handlers.clear()

    handler = logging.StreamHandler(sys.stderr)

    if settings.APP_ENV == "production":
        handler.setFormatter(JsonFormatter())
    else:
        handler.setFormatter(
            logging.Formatter("[%(asctime)s] [%(levelname)s] %(name)s: %(message)s")
        )

    root_logger.addHandler(handler)


# -------------------------------------------------
# Logger Factory
# -------------------------------------------------
def get_logger(name: Optional[str] = None) -> logging.Logger:
    """
    Returns a configured logger instance.
    """
    return logging.getLogger(name)
