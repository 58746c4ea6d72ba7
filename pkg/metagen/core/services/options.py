"""Key-value config files and the option types shared by the pipeline commands.

A config file holds one ``key = value`` per line; ``#`` starts a comment and
blank lines are ignored. Keys are command flag names, with ``-`` and ``_``
interchangeable (``batch-size`` and ``batch_size`` are the same key).
"""

import argparse
from pathlib import Path

from metagen.core.errors import ConfigFileError

TRUE_WORDS = frozenset({"1", "true", "yes", "on"})
FALSE_WORDS = frozenset({"0", "false", "no", "off"})


def option_key(name: str) -> str:
    return name.strip().lstrip("-").replace("-", "_")


def parse_config_file(path: Path) -> dict[str, tuple[int, str]]:
    """``{key: (line_number, raw value)}``; a repeated key is an error."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigFileError(path, 0, f"cannot read config file ({e.strerror})") from e
    values: dict[str, tuple[int, str]] = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigFileError(path, line_number, f"expected 'key = value', got {raw.strip()!r}")
        key = option_key(key)
        if key in values:
            raise ConfigFileError(path, line_number, f"{key!r} already set on line {values[key][0]}")
        values[key] = (line_number, value.strip())
    return values


def parse_bool(text: str) -> bool:
    word = text.strip().lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    msg = f"expected a boolean, got {text!r}"
    raise argparse.ArgumentTypeError(msg)


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        msg = f"expected an integer, got {text!r}"
        raise argparse.ArgumentTypeError(msg) from None
    if value < 1:
        msg = f"expected a positive integer, got {value}"
        raise argparse.ArgumentTypeError(msg)
    return value


def non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        msg = f"expected an integer, got {text!r}"
        raise argparse.ArgumentTypeError(msg) from None
    if value < 0:
        msg = f"expected a non-negative integer, got {value}"
        raise argparse.ArgumentTypeError(msg)
    return value


def positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        msg = f"expected a number, got {text!r}"
        raise argparse.ArgumentTypeError(msg) from None
    if not value > 0:
        msg = f"expected a positive number, got {value}"
        raise argparse.ArgumentTypeError(msg)
    return value


def int_list(text: str) -> tuple[int, ...]:
    """``"0,1,2"`` (spaces allowed) as a tuple of distinct ints."""
    try:
        values = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        msg = f"expected comma-separated integers, got {text!r}"
        raise argparse.ArgumentTypeError(msg) from None
    if not values:
        msg = "expected at least one value"
        raise argparse.ArgumentTypeError(msg)
    if len(set(values)) != len(values):
        msg = f"values must be distinct, got {text!r}"
        raise argparse.ArgumentTypeError(msg)
    return values


def bin_counts(text: str) -> tuple[int, int]:
    """``"50"`` or ``"50,40"``: bins along the first and second parameter of each pair."""
    parts = [part for part in text.split(",") if part.strip()]
    if len(parts) not in (1, 2):
        msg = f"expected 'M' or 'M,N', got {text!r}"
        raise argparse.ArgumentTypeError(msg)
    counts = [positive_int(part) for part in parts]
    return (counts[0], counts[-1])


def choice_list(choices: tuple[str, ...]):
    """Comma-separated subset of ``choices``, kept in the order of ``choices``."""

    def parse(text: str) -> tuple[str, ...]:
        picked = [part.strip() for part in text.split(",") if part.strip()]
        unknown = [name for name in picked if name not in choices]
        if unknown or not picked:
            msg = f"expected a comma-separated subset of {', '.join(choices)}, got {text!r}"
            raise argparse.ArgumentTypeError(msg)
        return tuple(name for name in choices if name in picked)

    return parse
