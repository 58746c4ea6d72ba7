"""Checkpoint container: an ``.npz`` archive with a JSON header.

The header (``__header__``) is self-describing: model kind, architecture,
seed, config hash and normalization statistics. Arrays are stored under their
parameter names. Archives are written with fixed member timestamps and sorted
member order, so the same weights always produce the same bytes and the same
sha256.
"""

import hashlib
import io
import json
import zipfile
from pathlib import Path

import numpy as np

from metagen.core.errors import CheckpointError

FORMAT_VERSION = 1
HEADER_KEY = "__header__"
_FIXED_DATE = (1980, 1, 1, 0, 0, 0)


def _member(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(f"{name}.npy", date_time=_FIXED_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def save_checkpoint(path: Path, *, header: dict, arrays: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    if HEADER_KEY in arrays:
        raise CheckpointError(path, f"{HEADER_KEY} is a reserved array name")
    path.parent.mkdir(parents=True, exist_ok=True)
    full_header = {"format_version": FORMAT_VERSION, **header}
    members = {HEADER_KEY: np.array(json.dumps(full_header, sort_keys=True))}
    members.update({name: np.ascontiguousarray(arrays[name]) for name in sorted(arrays)})

    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w") as zf:
        for name, array in members.items():
            buffer = io.BytesIO()
            np.lib.format.write_array(buffer, array, allow_pickle=False)
            zf.writestr(_member(name), buffer.getvalue())
    tmp.replace(path)
    return path


def load_checkpoint(path: Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Return ``(header, arrays)``; raise CheckpointError for anything unreadable."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(path, "file not found")
    try:
        with np.load(path, allow_pickle=False) as npz:
            arrays = {name: npz[name] for name in npz.files}
    except (OSError, ValueError, zipfile.BadZipFile) as e:
        raise CheckpointError(path, f"unreadable checkpoint ({e})") from e
    if HEADER_KEY not in arrays:
        raise CheckpointError(path, "missing header")
    try:
        header = json.loads(str(arrays.pop(HEADER_KEY)))
    except json.JSONDecodeError as e:
        raise CheckpointError(path, f"corrupt header ({e.msg})") from e
    if not isinstance(header, dict) or header.get("format_version") != FORMAT_VERSION:
        found = header.get("format_version") if isinstance(header, dict) else None
        raise CheckpointError(path, f"format_version {found!r} is not supported")
    return header, arrays


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def array_digest(arrays: dict[str, np.ndarray]) -> str:
    """Hash of named arrays (names, shapes and raw bytes), independent of the file container."""
    digest = hashlib.sha256()
    for name in sorted(arrays):
        array = np.ascontiguousarray(arrays[name], dtype=np.float64)
        digest.update(name.encode())
        digest.update(str(array.shape).encode())
        digest.update(array.tobytes())
    return digest.hexdigest()
