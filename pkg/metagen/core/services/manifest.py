"""Experiment manifest: one JSON file listing every run of an output directory.

Paths are stored relative to the manifest's directory, so a finished run
directory can be moved or archived as a whole. The file carries no timestamps;
two identical experiments produce identical manifests.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from enum import StrEnum
from pathlib import Path

from metagen.core.autodiff.checkpoint import file_sha256
from metagen.core.errors import ManifestError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


class RunStatus(StrEnum):
    COMPLETED = "completed"
    FAILED = "failed"
    DIRTY = "dirty"


@dataclass
class RunEntry:
    run_id: str
    kind: str
    seed: int
    config_hash: str
    status: RunStatus
    checkpoint: str = ""
    checkpoint_sha256: str = ""
    runlog: str = ""
    message: str = ""
    app_version: str = ""
    component: str = ""

    def to_dict(self) -> dict:
        data = asdict(self)
        data["status"] = str(self.status)
        return data


@dataclass
class Manifest:
    path: Path
    runs: dict[str, RunEntry] = field(default_factory=dict)

    @property
    def root(self) -> Path:
        return self.path.parent

    @classmethod
    def for_dir(cls, out_dir: Path) -> Manifest:
        return cls.load(Path(out_dir) / MANIFEST_NAME)

    @classmethod
    def load(cls, path: Path) -> Manifest:
        """Read ``path``; a missing file is an empty manifest."""
        path = Path(path)
        if not path.exists():
            return cls(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            runs = {
                run_id: RunEntry(**{**entry, "status": RunStatus(entry["status"])})
                for run_id, entry in data["runs"].items()
            }
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ManifestError(path, f"unreadable manifest ({e})") from e
        return cls(path, runs)

    def save(self) -> Path:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        data = {
            "manifest_version": MANIFEST_VERSION,
            "runs": {run_id: self.runs[run_id].to_dict() for run_id in sorted(self.runs)},
        }
        tmp = self.path.with_name(self.path.name + ".tmp")
        tmp.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(self.path)
        return self.path

    def record(self, entry: RunEntry) -> None:
        self.runs[entry.run_id] = entry

    def resolve(self, relative: str) -> Path:
        return self.root / relative

    def relative(self, path: Path) -> str:
        return Path(path).relative_to(self.root).as_posix()

    def is_current(self, run_id: str, config_hash: str) -> bool:
        """True when ``run_id`` completed with ``config_hash`` and its checkpoint still hashes to the recorded value."""
        entry = self.runs.get(run_id)
        if entry is None or entry.status != RunStatus.COMPLETED or entry.config_hash != config_hash:
            return False
        checkpoint = self.resolve(entry.checkpoint)
        return checkpoint.is_file() and file_sha256(checkpoint) == entry.checkpoint_sha256

    def mark_dirty(self, run_id: str, reason: str) -> None:
        entry = self.runs.get(run_id)
        if entry is None or entry.status == RunStatus.DIRTY:
            return
        logger.warning("Run %s is dirty (%s); it will be retrained", run_id, reason)
        entry.status = RunStatus.DIRTY
        entry.message = reason

    def completed(self, kind: str | None = None) -> list[RunEntry]:
        return [
            entry
            for _, entry in sorted(self.runs.items())
            if entry.status == RunStatus.COMPLETED and (kind is None or entry.kind == kind)
        ]

    def failed(self) -> list[RunEntry]:
        return [entry for _, entry in sorted(self.runs.items()) if entry.status == RunStatus.FAILED]

    def hash_set(self) -> dict[str, str]:
        """``{run_id: checkpoint_sha256}`` of completed runs."""
        return {entry.run_id: entry.checkpoint_sha256 for entry in self.completed()}
