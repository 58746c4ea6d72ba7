"""Dataset synthesis for the nested-cylinder use case.

Radii are drawn in three equal branches; each branch samples one anchor radius
uniformly and the others conditionally, so every record honours the thickness
margin and the contact constraint by construction. Densities and lever arms are
uniform, and ``m_cube`` is solved from the equilibrium equation, so a dataset
record is always exactly balanced.

A dataset is one RNG stream seeded once: records are produced branch block by
branch block and then (optionally) shuffled with the same stream. The same
``(seed, config)`` therefore always yields the same bytes on disk.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path

import numpy as np

from metagen.core.errors import DatasetParseError, DomainError, SchemaVersionError
from metagen.core.services.domain import (
    N_POINTS,
    PARAM_FIELDS,
    THICKNESS,
    Condition,
    ParamsBatch,
    SystemParams,
    equilibrium_mass,
    render_batch,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_RECORDS = 20000
VALIDATION_FRACTION = 0.1
MASS_TOLERANCE = 1e-6

R_MIN_INNER = 10.0
R_MIN_CONTACT = 15.0
R_MAX_CONTACT = 95.0
R_MAX_OUTER = 100.0
R_MIN_EXT_FIRST = 25.0
DENSITY_RANGE = (1.0, 12.0)
X_RANGE = (1.0, 99.0)
LEVER_LENGTH = 100.0

# Independent stream for the train/validation split, so the split depends on the
# dataset seed alone and never on how many draws generation consumed.
SPLIT_STREAM = 0x5B1


class Branch(StrEnum):
    EXT_FIRST = "ExtFirst"
    CONTACT_FIRST = "ContactFirst"
    INT_FIRST = "IntFirst"


BRANCH_ORDER = (Branch.EXT_FIRST, Branch.CONTACT_FIRST, Branch.INT_FIRST)


@dataclass(frozen=True, slots=True)
class DatasetRecord:
    params: SystemParams
    cond: Condition
    branch: Branch


@dataclass(frozen=True, slots=True)
class DatasetConfig:
    n_records: int = DEFAULT_RECORDS
    seed: int = 0
    n_points: int = N_POINTS
    shuffle: bool = True

    def __post_init__(self):
        if self.n_records < 1:
            raise DomainError("n_records", self.n_records, "n_records >= 1")
        if self.n_points < 3:  # noqa: PLR2004 - a circle needs three points
            raise DomainError("n_points", self.n_points, "n_points >= 3")


@dataclass
class DatasetFile:
    """A loaded dataset plus its header and the load report."""

    records: list[DatasetRecord]
    seed: int
    n_points: int = N_POINTS
    warnings: list[str] = field(default_factory=list)


def sample_radii(branch: Branch, rng: np.random.Generator) -> tuple[float, float, float, float]:
    """Draw ``(r_ext1, r_int1, r_ext2, r_int2)`` for one record of ``branch``."""
    if branch == Branch.EXT_FIRST:
        r_ext1 = rng.uniform(R_MIN_EXT_FIRST, R_MAX_OUTER)
        r_contact = rng.uniform(R_MIN_CONTACT, r_ext1 - THICKNESS)
        r_int2 = rng.uniform(R_MIN_INNER, r_contact - THICKNESS)
    elif branch == Branch.CONTACT_FIRST:
        r_contact = rng.uniform(R_MIN_CONTACT, R_MAX_CONTACT)
        r_ext1 = rng.uniform(r_contact + THICKNESS, R_MAX_OUTER)
        r_int2 = rng.uniform(R_MIN_INNER, r_contact - THICKNESS)
    else:
        r_int2 = rng.uniform(R_MIN_INNER, R_MAX_CONTACT - THICKNESS)
        r_contact = rng.uniform(r_int2 + THICKNESS, R_MAX_CONTACT)
        r_ext1 = rng.uniform(r_contact + THICKNESS, R_MAX_OUTER)
    return float(r_ext1), float(r_contact), float(r_contact), float(r_int2)


def sample_record(branch: Branch, rng: np.random.Generator) -> DatasetRecord:
    r_ext1, r_int1, r_ext2, r_int2 = sample_radii(branch, rng)
    d1 = float(rng.uniform(*DENSITY_RANGE))
    d2 = float(rng.uniform(*DENSITY_RANGE))
    params = SystemParams(r_ext1, r_int1, r_ext2, r_int2, d1, d2)
    x = float(rng.uniform(*X_RANGE))
    y = LEVER_LENGTH - x
    return DatasetRecord(params, Condition(x, y, equilibrium_mass(params, x, y)), branch)


def branch_counts(n_records: int) -> dict[Branch, int]:
    """Equal thirds; the remainder goes round-robin starting at ExtFirst."""
    base, remainder = divmod(n_records, len(BRANCH_ORDER))
    return {branch: base + (1 if i < remainder else 0) for i, branch in enumerate(BRANCH_ORDER)}


def build_dataset(cfg: DatasetConfig) -> list[DatasetRecord]:
    rng = np.random.default_rng(cfg.seed)
    counts = branch_counts(cfg.n_records)
    records = [sample_record(branch, rng) for branch in BRANCH_ORDER for _ in range(counts[branch])]
    if cfg.shuffle:
        records = [records[i] for i in rng.permutation(len(records))]
    logger.info(
        "Built %d records (seed %d): %s",
        len(records),
        cfg.seed,
        ", ".join(f"{branch}={count}" for branch, count in counts.items()),
    )
    return records


def split_dataset(
    records: list[DatasetRecord], seed: int, validation_fraction: float = VALIDATION_FRACTION
) -> tuple[list[DatasetRecord], list[DatasetRecord]]:
    """Deterministic train/validation split, a pure function of the dataset seed."""
    order = np.random.default_rng([seed, SPLIT_STREAM]).permutation(len(records))
    n_validation = max(1, round(len(records) * validation_fraction)) if len(records) > 1 else 0
    validation = [records[i] for i in np.sort(order[:n_validation])]
    train = [records[i] for i in np.sort(order[n_validation:])]
    return train, validation


@dataclass(frozen=True, slots=True)
class DatasetArrays:
    """Column arrays of a record list, ready for training and scoring."""

    params: ParamsBatch
    x: np.ndarray
    y: np.ndarray
    m_cube: np.ndarray
    systems: np.ndarray

    def __len__(self) -> int:
        return len(self.x)


def to_arrays(records: list[DatasetRecord], n_points: int = N_POINTS) -> DatasetArrays:
    params = ParamsBatch.from_params([r.params for r in records])
    conds = np.array([r.cond.as_tuple() for r in records], dtype=np.float64).reshape(-1, 3)
    return DatasetArrays(
        params=params,
        x=conds[:, 0].copy(),
        y=conds[:, 1].copy(),
        m_cube=conds[:, 2].copy(),
        systems=render_batch(params, n_points),
    )


# Serialization
# ----------------------------------------------------------------------------------------------------------------------


def _record_to_dict(record: DatasetRecord) -> dict:
    row = dict(zip(PARAM_FIELDS, record.params.as_tuple(), strict=True))
    row.update(x=record.cond.x, y=record.cond.y, m_cube=record.cond.m_cube, branch=str(record.branch))
    return row


def save_dataset(records: list[DatasetRecord], path: Path, *, seed: int, n_points: int = N_POINTS) -> Path:
    """Write one JSON header line and one JSON line per record (scalars only)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"schema_version": SCHEMA_VERSION, "seed": seed, "n_records": len(records), "n_points": n_points}
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(header) + "\n")
        for record in records:
            f.write(json.dumps(_record_to_dict(record)) + "\n")
    return path


def _parse_record(path: Path, line_number: int, line: str) -> DatasetRecord:
    try:
        row = json.loads(line)
    except json.JSONDecodeError as e:
        raise DatasetParseError(path, line_number, f"invalid JSON ({e.msg})") from e
    if not isinstance(row, dict):
        raise DatasetParseError(path, line_number, "expected a JSON object")
    try:
        params = SystemParams(*(float(row[name]) for name in PARAM_FIELDS))
        cond = Condition(float(row["x"]), float(row["y"]), float(row["m_cube"]))
        branch = Branch(row["branch"])
    except KeyError as e:
        raise DatasetParseError(path, line_number, f"missing field {e.args[0]!r}") from e
    except (TypeError, ValueError) as e:
        raise DatasetParseError(path, line_number, str(e)) from e
    return DatasetRecord(params, cond, branch)


def _consistency_warning(record: DatasetRecord, line_number: int) -> str | None:
    params, cond = record.params, record.cond
    if params.r_ext2 != params.r_int1:
        return f"line {line_number}: contact constraint violated (r_ext2 - r_int1 = {params.r_ext2 - params.r_int1})"
    try:
        expected = equilibrium_mass(params, cond.x, cond.y)
    except DomainError as e:
        return f"line {line_number}: {e}"
    relative = abs(cond.m_cube - expected) / max(abs(expected), math.ulp(1.0))
    if relative > MASS_TOLERANCE:
        return f"line {line_number}: m_cube inconsistent with equilibrium (relative error {relative:.3g})"
    return None


def load_dataset(path: Path) -> DatasetFile:
    """Read a dataset file; malformed lines raise, physically inconsistent ones are reported."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise DatasetParseError(path, 1, f"cannot read file ({e.strerror or e})") from e
    try:
        lines = raw.decode("utf-8").splitlines()
    except UnicodeDecodeError as e:
        raise DatasetParseError(path, raw.count(b"\n", 0, e.start) + 1, "not valid UTF-8") from e
    if not lines:
        raise DatasetParseError(path, 1, "file is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise DatasetParseError(path, 1, f"invalid header ({e.msg})") from e
    if not isinstance(header, dict) or "schema_version" not in header:
        raise DatasetParseError(path, 1, "header must carry schema_version")
    if header["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionError(path, header["schema_version"], SCHEMA_VERSION)

    records = []
    warnings = []
    for line_number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        record = _parse_record(path, line_number, line)
        warning = _consistency_warning(record, line_number)
        if warning:
            warnings.append(warning)
        records.append(record)

    expected = header.get("n_records")
    if expected is not None and expected != len(records):
        raise DatasetParseError(path, len(lines) + 1, f"expected {expected} records, found {len(records)} (truncated?)")
    for warning in warnings:
        logger.warning("%s: %s", path, warning)
    return DatasetFile(
        records=records,
        seed=int(header.get("seed", 0)),
        n_points=int(header.get("n_points", N_POINTS)),
        warnings=warnings,
    )
