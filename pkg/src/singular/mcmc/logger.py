"""Logging setup."""

import json
import logging
import sys
import warnings
from datetime import datetime, timezone
from typing import Any, Dict, Optional


class JsonFormatter(logging.Formatter):
    """
    JSON line formatter.

    Outputs one JSON object per record with:
    - standard fields (timestamp, level, message, logger)
    - the formatted exception, if any
    - any extra fields passed via logger.info("msg", extra={...})
    """

    # Standard fields that shouldn't be duplicated in the output
    RESERVED_ATTRS = {
        "name",
        "msg",
        "args",
        "asctime",
        "created",
        "filename",
        "funcName",
        "levelname",
        "levelno",
        "lineno",
        "module",
        "msecs",
        "message",
        "pathname",
        "process",
        "processName",
        "relativeCreated",
        "thread",
        "threadName",
        "exc_info",
        "exc_text",
        "stack_info",
        "taskName",
    }

    def format(self, record: logging.LogRecord) -> str:
        """Format log record as JSON."""
        log_object: Dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created, tz=timezone.utc)
            .isoformat()
            .replace("+00:00", "Z"),
            "level": record.levelname,
            "message": record.getMessage(),
            "logger": record.name,
        }

        if record.exc_info:
            log_object["exception"] = self.formatException(record.exc_info)

        for key, value in record.__dict__.items():
            if key not in self.RESERVED_ATTRS and key not in log_object:
                log_object[key] = value

        return json.dumps(log_object, default=str)


class ExtraFormatter(logging.Formatter):
    """Plain text formatter appending extra fields as key=value pairs."""

    def format(self, record: logging.LogRecord) -> str:
        """Format record, then append extras."""
        line = super().format(record)
        extras = [
            f"{key}={value}"
            for key, value in record.__dict__.items()
            if key not in JsonFormatter.RESERVED_ATTRS
        ]
        if extras:
            line = f"{line} [{' '.join(extras)}]"
        return line


def configure_logging(level: str = "INFO", json_lines: bool = False, stream: Optional[Any] = None) -> logging.Logger:
    """Install a single stderr handler on the root logger."""
    root_logger = logging.getLogger()
    root_logger.setLevel(logging.WARNING)

    for log_handler in root_logger.handlers[:]:
        root_logger.removeHandler(log_handler)

    handler = logging.StreamHandler(stream or sys.stderr)
    if json_lines:
        handler.setFormatter(JsonFormatter())
    else:
        handler.setFormatter(
            ExtraFormatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
        )
    root_logger.addHandler(handler)

    package_logger = logging.getLogger("singular.mcmc")
    package_logger.setLevel(level)

    logging.getLogger("numpy").setLevel(logging.WARNING)
    logging.getLogger("scipy").setLevel(logging.WARNING)
    warnings.filterwarnings("ignore", category=RuntimeWarning, module="numpy")

    return package_logger
