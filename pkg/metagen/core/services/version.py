"""Application version, recorded in manifests and error reports.

Read from the ``APP_VERSION`` env var; release builds set it, local runs fall
back to ``unknown``.
"""

import os
from functools import cache


@cache
def get_app_version() -> str:
    return os.environ.get("APP_VERSION", "").strip() or "unknown"
