"""Shared plumbing for every generator kind: registry, checkpoints and sampling.

Generators work in normalized space: systems are flat point clouds divided by
``COORD_SCALE`` and conditions are the rows produced by a
:class:`ConditionNormalizer`. ``sample_systems`` converts back to coordinates.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import ClassVar

import numpy as np

from metagen.core.autodiff import Module, Tensor
from metagen.core.autodiff.checkpoint import load_checkpoint, save_checkpoint
from metagen.core.errors import CheckpointError, ShapeMismatchError
from metagen.core.services.domain import (
    COORD_SCALE,
    N_POINTS,
    Condition,
    ConditionNormalizer,
    PointCloudSystem,
    component_slices,
)

logger = logging.getLogger(__name__)

SAMPLE_CHUNK = 4096

_registry: dict[str, type[Generator]] = {}


def register(cls: type[Generator]) -> type[Generator]:
    if cls.kind in _registry:
        msg = f"generator kind {cls.kind!r} is registered twice"
        raise ValueError(msg)
    _registry[cls.kind] = cls
    return cls


def generator_class(kind: str) -> type[Generator]:
    try:
        return _registry[kind]
    except KeyError:
        msg = f"unknown generator kind {kind!r}; known: {', '.join(sorted(_registry))}"
        raise KeyError(msg) from None


def registered_kinds() -> list[str]:
    return sorted(_registry)


@dataclass(frozen=True, slots=True)
class VAEOutput:
    """Reconstruction per component (or one ``system`` entry) plus the posterior."""

    recon: dict[str, Tensor]
    mu: Tensor
    logvar: Tensor


class Generator(Module):
    """A model that maps a latent draw and a normalized condition to a flat system.

    Subclasses set ``kind``, ``default_arch`` and implement :meth:`decode`.
    Architecture hyperparameters live in ``self.arch`` and are written to the
    checkpoint header, which is how :func:`load_generator` rebuilds the model.
    """

    kind: ClassVar[str]
    default_arch: ClassVar[dict]

    def __init__(self, arch: dict | None = None):
        unknown = set(arch or {}) - set(self.default_arch)
        if unknown:
            msg = f"{self.kind}: unknown architecture keys {sorted(unknown)}"
            raise ValueError(msg)
        self.arch = {**self.default_arch, **(arch or {})}
        self.normalizer: ConditionNormalizer | None = None

    @property
    def latent_dim(self) -> int:
        return self.arch["latent"]

    @property
    def n_points(self) -> int:
        return self.arch.get("n_points", N_POINTS)

    @property
    def slices(self) -> dict[str, slice]:
        return component_slices(self.n_points)

    @property
    def system_size(self) -> int:
        return 12 * self.n_points

    def decode(self, z, cond) -> Tensor:
        raise NotImplementedError

    def checkpoint_header(self, *, seed: int, config_hash: str) -> dict:
        return {
            "kind": self.kind,
            "arch": self.arch,
            "seed": seed,
            "config_hash": config_hash,
            "normalizer": self.normalizer.to_dict() if self.normalizer else None,
        }

    def save(self, path: Path, *, seed: int, config_hash: str) -> Path:
        header = self.checkpoint_header(seed=seed, config_hash=config_hash)
        return save_checkpoint(path, header=header, arrays=self.state_dict())


def load_generator(path: Path, kind: str | None = None) -> tuple[Generator, dict]:
    """Rebuild a generator from its checkpoint; returns ``(model, header)``."""
    header, arrays = load_checkpoint(path)
    found = header.get("kind")
    if kind is not None and found != kind:
        raise CheckpointError(path, f"expected a {kind!r} checkpoint, found {found!r}")
    try:
        cls = generator_class(found)
    except KeyError as e:
        raise CheckpointError(path, e.args[0]) from e
    # Weights are overwritten right away; the seed only has to exist.
    model = cls(header.get("arch"), np.random.default_rng(0))
    try:
        model.load_state_dict(arrays)
    except (CheckpointError, ShapeMismatchError) as e:
        raise CheckpointError(path, str(e)) from e
    if header.get("normalizer"):
        model.normalizer = ConditionNormalizer(**header["normalizer"])
    return model, header


def sample_latent(model: Generator, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((n, model.latent_dim))


def sample_systems(
    model: Generator,
    x: np.ndarray,
    y: np.ndarray,
    m_cube: np.ndarray,
    rng: np.random.Generator,
    chunk: int = SAMPLE_CHUNK,
) -> np.ndarray:
    """Draw one system per condition; returns flat coordinates ``(B, 12n)``.

    Latents are drawn chunk by chunk from ``rng``, so the result depends on the
    chunk size as well as the seed.
    """
    if model.normalizer is None:
        raise CheckpointError("<model>", f"{model.kind} has no condition normalizer; was it trained?")
    cond = model.normalizer.transform(x, y, m_cube)
    out = np.empty((len(cond), model.system_size))
    for start in range(0, len(cond), chunk):
        block = cond[start : start + chunk]
        z = sample_latent(model, len(block), rng)
        out[start : start + len(block)] = model.decode(z, block).data * COORD_SCALE
    return out


def sample_system(model: Generator, cond: Condition, rng: np.random.Generator) -> PointCloudSystem:
    flat = sample_systems(model, np.array([cond.x]), np.array([cond.y]), np.array([cond.m_cube]), rng)
    return PointCloudSystem.from_flat(flat[0], model.n_points)


def split_components(system: np.ndarray, n_points: int = N_POINTS) -> dict[str, np.ndarray]:
    if system.ndim != 2 or system.shape[1] != 12 * n_points:  # noqa: PLR2004 - (batch, features)
        raise ShapeMismatchError("split_components", system.shape, (-1, 12 * n_points))
    return {name: system[:, part] for name, part in component_slices(n_points).items()}
