"""Nested-cylinder use case: value types, equilibrium physics and point-cloud geometry.

A system is two hollow cylinders nested around the origin. The outer cylinder
(radii ``r_ext1``/``r_int1``, density ``d1``) touches the inner one (``r_ext2``/
``r_int2``, density ``d2``) when ``r_int1 == r_ext2``. The assembly balances a
cube of mass ``m_cube`` on a lever: cylinders at distance ``y``, cube at ``x``.

Networks never see scalars directly: every radius and every density is rendered
as a circle of ``n`` points at the fixed angles ``2*pi*i/n``. The flat layout of
a system is, in order, outer-ext, outer-int, inner-ext, inner-int, d1, d2; each
circle as interleaved ``(x, y)`` pairs.

All functions are pure. Scalar functions accept either floats or equally shaped
numpy arrays wherever they only do arithmetic, which is how the evaluation
pipeline scores 5×10⁴ generated systems at once.
"""

import math
from dataclasses import dataclass, field, fields

import numpy as np

from metagen.core.errors import DomainError, ShapeMismatchError

THICKNESS = 5.0
N_POINTS = 30
COORD_SCALE = 100.0
SYSTEM_SIZE = 6 * N_POINTS * 2
PARAM_FIELDS = ("r_ext1", "r_int1", "r_ext2", "r_int2", "d1", "d2")

COMPONENTS = ("outer_cyl", "inner_cyl", "density1", "density2")


def component_slices(n: int = N_POINTS) -> dict[str, slice]:
    """Slices of the flat system vector, one per unitary component."""
    return {
        "outer_cyl": slice(0, 4 * n),
        "inner_cyl": slice(4 * n, 8 * n),
        "density1": slice(8 * n, 10 * n),
        "density2": slice(10 * n, 12 * n),
    }


COMPONENT_SLICES = component_slices()


@dataclass(frozen=True, slots=True)
class SystemParams:
    """Scalar ground truth of one system (dimensionless units)."""

    r_ext1: float
    r_int1: float
    r_ext2: float
    r_int2: float
    d1: float
    d2: float

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in PARAM_FIELDS)


@dataclass(frozen=True, slots=True)
class ParamsBatch:
    """Column view of many systems: same field names as SystemParams, ndarray values."""

    r_ext1: np.ndarray
    r_int1: np.ndarray
    r_ext2: np.ndarray
    r_int2: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    @classmethod
    def from_params(cls, params: list[SystemParams]) -> ParamsBatch:
        matrix = np.array([p.as_tuple() for p in params], dtype=np.float64).reshape(-1, len(PARAM_FIELDS))
        return cls.from_matrix(matrix)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> ParamsBatch:
        return cls(*(np.ascontiguousarray(matrix[:, i]) for i in range(len(PARAM_FIELDS))))

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([getattr(self, name) for name in PARAM_FIELDS])

    def __len__(self) -> int:
        return len(self.r_ext1)

    def row(self, index: int) -> SystemParams:
        return SystemParams(*(float(getattr(self, name)[index]) for name in PARAM_FIELDS))


@dataclass(frozen=True, slots=True)
class Condition:
    """Conditioning triple; ``normalized`` is filled in by a ConditionNormalizer."""

    x: float
    y: float
    m_cube: float
    normalized: tuple[float, float, float] | None = None

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.m_cube)


@dataclass(frozen=True, slots=True)
class ConditionNormalizer:
    """Maps (x, y, m_cube) to (x/100, y/100, standardized log m_cube).

    The log-mass statistics are frozen from a training set and travel with every
    checkpoint, so a model is always fed conditions on the scale it was trained on.
    """

    log_mass_mean: float
    log_mass_std: float

    @classmethod
    def fit(cls, m_cube: np.ndarray) -> ConditionNormalizer:
        log_mass = np.log(np.asarray(m_cube, dtype=np.float64))
        std = float(log_mass.std())
        return cls(log_mass_mean=float(log_mass.mean()), log_mass_std=std if std > 0 else 1.0)

    def transform(self, x: np.ndarray, y: np.ndarray, m_cube: np.ndarray) -> np.ndarray:
        m_cube = np.asarray(m_cube, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_mass = np.log(m_cube)
        out = np.column_stack(
            [
                np.asarray(x, dtype=np.float64) / COORD_SCALE,
                np.asarray(y, dtype=np.float64) / COORD_SCALE,
                (log_mass - self.log_mass_mean) / self.log_mass_std,
            ]
        )
        if not np.isfinite(out).all():
            raise DomainError("condition", "non-finite after normalization", "m_cube > 0 and finite x, y")
        return out

    def normalize(self, cond: Condition) -> Condition:
        row = self.transform(np.array([cond.x]), np.array([cond.y]), np.array([cond.m_cube]))[0]
        return Condition(cond.x, cond.y, cond.m_cube, normalized=(float(row[0]), float(row[1]), float(row[2])))

    def to_dict(self) -> dict:
        return {"log_mass_mean": self.log_mass_mean, "log_mass_std": self.log_mass_std}


@dataclass(frozen=True, slots=True)
class Circle:
    """Ordered 2-D points of one rendered circle, shape ``(n, 2)``."""

    points: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True, slots=True)
class PointCloudSystem:
    outer_cyl: tuple[Circle, Circle]
    inner_cyl: tuple[Circle, Circle]
    density1: Circle
    density2: Circle

    def circles(self) -> list[Circle]:
        return [*self.outer_cyl, *self.inner_cyl, self.density1, self.density2]

    def flatten(self) -> np.ndarray:
        return np.concatenate([circle.points.reshape(-1) for circle in self.circles()])

    @classmethod
    def from_flat(cls, flat: np.ndarray, n_points: int = N_POINTS) -> PointCloudSystem:
        flat = np.asarray(flat, dtype=np.float64)
        expected = 12 * n_points
        if flat.shape != (expected,):
            raise ShapeMismatchError("PointCloudSystem.from_flat", flat.shape, (expected,))
        circles = [Circle(points) for points in flat.reshape(6, n_points, 2)]
        return cls(
            outer_cyl=(circles[0], circles[1]),
            inner_cyl=(circles[2], circles[3]),
            density1=circles[4],
            density2=circles[5],
        )


def annulus_mass(params: SystemParams | ParamsBatch):
    """Mass of both cylinders per unit height: pi*[(re1²-ri1²)d1 + (re2²-ri2²)d2]."""
    return math.pi * (
        (params.r_ext1**2 - params.r_int1**2) * params.d1 + (params.r_ext2**2 - params.r_int2**2) * params.d2
    )


def equilibrium_mass(params: SystemParams, x: float, y: float) -> float:
    """Cube mass that balances ``params`` on the lever arms ``x`` (cube) and ``y`` (cylinders)."""
    if x <= 0:
        raise DomainError("x", x, "x > 0")
    if y <= 0:
        raise DomainError("y", y, "y > 0")
    if params.r_ext1 < params.r_int1:
        raise DomainError("r_ext1", params.r_ext1, f"r_ext1 >= r_int1 ({params.r_int1})")
    if params.r_ext2 < params.r_int2:
        raise DomainError("r_ext2", params.r_ext2, f"r_ext2 >= r_int2 ({params.r_int2})")
    return annulus_mass(params) * y / x


def circle_angles(n: int = N_POINTS) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n) / n


def render_circle(r: float, n: int = N_POINTS) -> Circle:
    if r <= 0:
        raise DomainError("radius", r, "r > 0")
    if n < 3:  # noqa: PLR2004 - a circle needs three points
        raise DomainError("n", n, "n >= 3")
    theta = circle_angles(n)
    return Circle(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))


def render_system(params: SystemParams, n: int = N_POINTS) -> PointCloudSystem:
    return PointCloudSystem(
        outer_cyl=(render_circle(params.r_ext1, n), render_circle(params.r_int1, n)),
        inner_cyl=(render_circle(params.r_ext2, n), render_circle(params.r_int2, n)),
        density1=render_circle(params.d1, n),
        density2=render_circle(params.d2, n),
    )


def estimate_radius(circle: Circle) -> float:
    return float(np.linalg.norm(circle.points, axis=1).mean())


def estimate_params(pc: PointCloudSystem) -> SystemParams:
    return SystemParams(*(estimate_radius(circle) for circle in pc.circles()))


def render_batch(params: ParamsBatch, n: int = N_POINTS) -> np.ndarray:
    """Render many systems at once into the flat ``(B, 12n)`` layout."""
    theta = circle_angles(n)
    unit = np.column_stack([np.cos(theta), np.sin(theta)]).reshape(-1)
    radii = params.as_matrix()
    if (radii <= 0).any():
        raise DomainError("radius", float(radii.min()), "r > 0")
    return (radii[:, :, None] * unit[None, None, :]).reshape(len(params), -1)


def estimate_batch(flat: np.ndarray, n: int = N_POINTS) -> ParamsBatch:
    """Inverse of render_batch: mean point norm of each of the six circles."""
    flat = np.asarray(flat, dtype=np.float64)
    if flat.ndim != 2 or flat.shape[1] != 12 * n:  # noqa: PLR2004 - (batch, features)
        raise ShapeMismatchError("estimate_batch", flat.shape, (-1, 12 * n))
    points = flat.reshape(len(flat), 6, n, 2)
    return ParamsBatch.from_matrix(np.linalg.norm(points, axis=3).mean(axis=2))


def params_from_dict(data: dict) -> SystemParams:
    return SystemParams(**{f.name: float(data[f.name]) for f in fields(SystemParams)})
