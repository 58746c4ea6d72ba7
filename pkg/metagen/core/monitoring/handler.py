"""Logging handler that appends pipeline errors to a JSON-lines file.

Attached to the `metagen` logger at ERROR level in the local settings (and not
in test). For each record it writes one JSON object (level, logger, message,
exception type and message, traceback, app version) to
``settings.METAGEN_ERROR_LOG``. Any failure inside the handler is swallowed via
the standard `logging.Handler` contract (`handleError`) so it can never break
the command or training run being logged.

It throttles on `(exception_type, logger_name)`: only the first matching error
per process is written. A sweep of five seeds that all fail the same way
therefore leaves one entry, not five. Records carry no timestamp, so two runs
that fail identically leave identical files.
"""

import json
import logging
from pathlib import Path


class ErrorReportingHandler(logging.Handler):
    def __init__(self, path: str | Path | None = None, level: int = logging.NOTSET):
        super().__init__(level)
        self.path = Path(path) if path else None
        self._seen: set[tuple[str, str]] = set()

    def emit(self, record: logging.LogRecord) -> None:
        try:
            context = self._extract_context(record)
            if self._is_throttled(context):
                return
            self._persist(record, context, self._format_traceback(record))
        except Exception:  # noqa: BLE001 - a logging handler must never raise
            self.handleError(record)

    def _extract_context(self, record: logging.LogRecord) -> dict:
        exception_type = ""
        exception_message = ""
        if record.exc_info:
            exc_type, exc_value = record.exc_info[0], record.exc_info[1]
            if exc_type is not None:
                exception_type = exc_type.__name__
            if exc_value is not None:
                exception_message = str(exc_value)
        return {
            "logger_name": record.name,
            "exception_type": exception_type,
            "exception_message": exception_message,
        }

    def _is_throttled(self, context: dict) -> bool:
        key = (context["exception_type"], context["logger_name"])
        if key in self._seen:
            return True
        self._seen.add(key)
        return False

    def _format_traceback(self, record: logging.LogRecord) -> str:
        if not record.exc_info:
            return ""
        return logging.Formatter().formatException(record.exc_info)

    def _log_path(self) -> Path:
        if self.path is not None:
            return self.path
        from django.conf import settings  # noqa: PLC0415 - deferred until an error is logged

        return Path(settings.METAGEN_ERROR_LOG)

    def _persist(self, record: logging.LogRecord, context: dict, traceback_text: str) -> None:
        from metagen.core.services.version import get_app_version  # noqa: PLC0415 - deferred until an error is logged

        entry = {
            "level": record.levelname,
            "logger_name": context["logger_name"],
            "message": record.getMessage(),
            "exception_type": context["exception_type"],
            "exception_message": context["exception_message"],
            "traceback": traceback_text,
            "app_version": get_app_version(),
        }
        path = self._log_path()
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as f:
            f.write(json.dumps(entry) + "\n")
