"""Base class for the pipeline management commands.

Lives outside ``commands/`` (so Django does not treat it as a runnable command).
"""

import argparse
import logging
import os
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from django.core.management.base import BaseCommand, CommandError

from metagen.core.errors import ConfigFileError, DatasetParseError, DomainError, SchemaVersionError
from metagen.core.services.options import option_key, parse_bool, parse_config_file
from metagen.core.services.training import TrainingData, load_training_data

EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUN_FAILURE = 3

# argparse exits with this status on a usage error.
_ARGPARSE_ERROR = 2


class ValidationFailure(Exception):  # noqa: N818 - reads as the outcome it reports
    """Input was understood but is not acceptable: bad paths, bad values, a failed check."""


def require_file(path: Path, what: str) -> Path:
    path = Path(path)
    if not path.is_file():
        msg = f"{what} not found: {path}"
        raise ValidationFailure(msg)
    return path


def require_writable(path: Path, what: str, *, directory: bool = False) -> Path:
    """Fail before any work when ``path`` cannot be created or written.

    The nearest existing ancestor must be a writable directory; an existing
    ``path`` must be a directory when ``directory`` is set and a file otherwise.
    """
    path = Path(path)
    if path.exists() and path.is_dir() != directory:
        kind = "a file" if path.is_dir() else "a directory"
        msg = f"{what} must be {kind}: {path}"
        raise ValidationFailure(msg)
    ancestor = path.absolute().parent
    while not ancestor.exists():
        ancestor = ancestor.parent
    if not ancestor.is_dir() or not os.access(ancestor, os.W_OK | os.X_OK):
        msg = f"{what} is not writable: {path} ({ancestor} is not a writable directory)"
        raise ValidationFailure(msg)
    return path


def training_data_from(dataset: Path) -> TrainingData:
    """Load and split a dataset file; an absent or malformed file is a validation failure."""
    path = require_file(dataset, "dataset")
    try:
        data = load_training_data(path)
    except (DatasetParseError, SchemaVersionError, DomainError) as e:
        raise ValidationFailure(str(e)) from e
    return data


@dataclass(frozen=True, slots=True)
class OptionSpec:
    parse: Callable[[str], Any]
    default: Any


class PipelineCommand(BaseCommand):
    """Base for the pipeline commands (``gen_data``, ``train``, ``evaluate``, ...).

    Subclasses declare their options with :meth:`add_option` / :meth:`add_flag`
    and implement :meth:`run_pipeline`, returning a JSON-serialisable payload.
    This base owns option resolution, the success/failure result protocol and
    error logging:

    - every command takes ``--config PATH``; a value comes from the command
      line if given, else from the config file, else from the option default
    - success -> ``self.result = {"success": True, "result": <payload>}``
    - failure -> ``self.result = {"success": False, "error": <message>}`` and
      a :class:`CommandError` carrying the exit code: 1 usage, 2 validation
      (:class:`ValidationFailure`), 3 run failure (any other exception).
      Run failures are logged with their traceback (``logger.exception``).
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.result = None
        self._option_specs: dict[str, OptionSpec] = {}
        self._options_parsed = False

    def create_parser(self, prog_name, subcommand, **kwargs):
        self._option_specs = {}
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.add_argument("--config", type=str, default=None, help="Key-value file with option values")
        return parser

    def add_option(self, parser, flag: str, *, type: Callable[[str], Any] = str, default=None, **kwargs):  # noqa: A002 - mirrors argparse
        """Add ``flag``; its default is applied after the config file, so flags left unset stay ``None`` here."""
        dest = option_key(flag)
        self._option_specs[dest] = OptionSpec(type, default)
        parser.add_argument(flag, dest=dest, type=type, default=None, **kwargs)

    def add_flag(self, parser, flag: str, **kwargs):
        dest = option_key(flag)
        self._option_specs[dest] = OptionSpec(parse_bool, False)
        parser.add_argument(flag, dest=dest, action="store_true", default=None, **kwargs)

    def run_pipeline(self, **options):
        """Do the work and return a JSON-serialisable success payload."""
        raise NotImplementedError

    def run_from_argv(self, argv):
        try:
            super().run_from_argv(argv)
        except SystemExit as e:
            if e.code == _ARGPARSE_ERROR and not self._options_parsed:
                raise SystemExit(EXIT_USAGE) from e
            raise

    def resolve_options(self, options: dict) -> dict:
        config_path = options.get("config")
        config = {}
        if config_path:
            try:
                config = parse_config_file(config_path)
            except ConfigFileError as e:
                raise ValidationFailure(str(e)) from e
            for key, (line_number, _) in sorted(config.items(), key=lambda item: item[1][0]):
                if key not in self._option_specs:
                    msg = f"{config_path}:{line_number}: unknown key {key!r}"
                    raise ValidationFailure(msg)

        resolved = dict(options)
        for dest, spec in self._option_specs.items():
            if options.get(dest) is not None:
                continue
            if dest in config:
                line_number, raw = config[dest]
                try:
                    resolved[dest] = spec.parse(raw)
                except (argparse.ArgumentTypeError, ValueError) as e:
                    msg = f"{config_path}:{line_number}: {dest}: {e}"
                    raise ValidationFailure(msg) from e
            else:
                resolved[dest] = spec.default() if callable(spec.default) else spec.default
        return resolved

    def handle(self, *args, **options):
        self._options_parsed = True
        # Log against the concrete command's module so the error report names
        # the command that failed, not this base module.
        command_logger = logging.getLogger(self.__class__.__module__)
        try:
            payload = self.run_pipeline(**self.resolve_options(options))
        except ValidationFailure as e:
            command_logger.warning("Invalid input: %s", e)
            self.result = {"success": False, "error": str(e)}
            raise CommandError(str(e), returncode=EXIT_VALIDATION) from e
        except Exception as e:
            command_logger.exception("Pipeline command failed")
            self.result = {"success": False, "error": str(e)}
            raise CommandError(str(e), returncode=EXIT_RUN_FAILURE) from e
        self.result = {"success": True, "result": payload}
