"""Pipeline error monitoring.

Captures failed pipeline commands and training runs through a single logging
handler that appends them to a JSON-lines file (``settings.METAGEN_ERROR_LOG``).

Wired up in `config.settings.local` LOGGING; left out of `config.settings.test`,
so it never fires during the test suite unless a test attaches it.
"""

from metagen.core.monitoring.handler import ErrorReportingHandler

__all__ = ["ErrorReportingHandler"]
