"""
Django settings for the metagen project.

Django hosts the command-line surface (management commands), configuration and
logging; the project keeps no database and serves no HTTP traffic.
"""

import os
from pathlib import Path

# env vars

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent
APPS_DIR = BASE_DIR / "metagen"

# Application definition
INSTALLED_APPS = [
    "metagen.core",
]

# Artifacts (datasets, checkpoints, manifests, reports) are plain files.
DATABASES = {}

TIME_ZONE = "UTC"

USE_TZ = True

# PIPELINE
# ----------------------------------------------------------------------------------------------------------------------
# Default root for generated datasets and experiment output when no path is given.
METAGEN_DATA_DIR = Path(os.environ.get("METAGEN_DATA_DIR", str(BASE_DIR / "data")))

# Upper bound on concurrently trained runs. Each run is single-threaded internally.
METAGEN_THREADS = max(1, int(os.environ.get("METAGEN_THREADS", str(min(4, os.cpu_count() or 1)))))

# JSON-lines file the error-reporting handler appends to (see metagen.core.monitoring).
METAGEN_ERROR_LOG = Path(os.environ.get("METAGEN_ERROR_LOG", str(METAGEN_DATA_DIR / "errors.jsonl")))
