"""Evaluation tools for generated systems.

- contact error: ``r_ext2 - r_int1`` (signed; reports use the absolute value)
- performance error: distance to the equilibrium, ``pi[...]*y - m_cube*x`` (signed)
- histogram dissimilarity: L1 distance between normalized 2-D histograms of a
  pair of parameters. Reports label it "wasserstein" because that is the
  approximation it stands in for; it is not an optimal-transport distance.

Histograms use fixed ranges (radii [0, 110], densities [0, 13]) so numbers are
comparable across models; samples outside the range are clamped into the edge
bins so a badly wrong generator still gets scored.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from metagen.core.errors import (
    ConditionMismatchError,
    DomainError,
    EmptySampleError,
    HistogramShapeError,
    NonFiniteError,
)
from metagen.core.services.domain import PARAM_FIELDS, Condition, ParamsBatch, SystemParams, annulus_mass

DEFAULT_BINS = (50, 50)
RADIUS_RANGE = (0.0, 110.0)
DENSITY_RANGE = (0.0, 13.0)
DEFAULT_SAMPLE_COUNT = 50_000
ERROR_HISTOGRAM_BINS = 50

# The four joint distributions compared in the study, keyed by metric suffix.
JOINT_PAIRS = {
    "rext1_rint2": ("r_ext1", "r_int2"),
    "rext1_rext2": ("r_ext1", "r_ext2"),
    "rext2_rint2": ("r_ext2", "r_int2"),
    "d1_d2": ("d1", "d2"),
}

ERROR_METRICS = (
    "abs_contact_mean",
    "abs_contact_std",
    "abs_contact_median",
    "abs_performance_mean",
    "abs_performance_std",
    "abs_performance_median",
)
METRIC_NAMES = (
    *ERROR_METRICS,
    *(f"wasserstein_{pair}" for pair in JOINT_PAIRS),
    *(f"coverage_{pair}" for pair in JOINT_PAIRS),
    *(f"marginal_{name}" for name in PARAM_FIELDS),
    "residual_slope",
    "residual_intercept",
    "residual_ordinate_mean",
)


def value_range(name: str) -> tuple[float, float]:
    return DENSITY_RANGE if name.startswith("d") else RADIUS_RANGE


def contact_error(p: SystemParams | ParamsBatch):
    return p.r_ext2 - p.r_int1


def performance_error(p: SystemParams | ParamsBatch, c: Condition):
    return annulus_mass(p) * c.y - c.m_cube * c.x


@dataclass(frozen=True, slots=True)
class Histogram2D:
    bins: np.ndarray = field(repr=False)
    x_range: tuple[float, float]
    y_range: tuple[float, float]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bins.shape


def histogram2d(
    samples,
    m: int = DEFAULT_BINS[0],
    n: int = DEFAULT_BINS[1],
    x_range: tuple[float, float] = RADIUS_RANGE,
    y_range: tuple[float, float] = RADIUS_RANGE,
) -> Histogram2D:
    """Normalized ``m × n`` histogram of ``(a, b)`` pairs.

    Bins are ``range/m`` wide; only the last bin on each axis includes its right
    edge. Out-of-range samples are clamped to the edge bins; NaN or infinite
    samples raise :class:`NonFiniteError`.
    """
    points = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    if len(points) == 0:
        raise EmptySampleError
    if not np.isfinite(points).all():
        raise NonFiniteError("histogram samples")
    if m < 1 or n < 1:
        raise DomainError("bins", (m, n), "m >= 1 and n >= 1")
    a = np.clip(points[:, 0], *x_range)
    b = np.clip(points[:, 1], *y_range)
    counts, _, _ = np.histogram2d(a, b, bins=(m, n), range=(x_range, y_range))
    return Histogram2D(counts / counts.sum(), tuple(x_range), tuple(y_range))


def hist_distance(h1: Histogram2D, h2: Histogram2D) -> float:
    if h1.shape != h2.shape or h1.x_range != h2.x_range or h1.y_range != h2.y_range:
        raise HistogramShapeError((h1.shape, h1.x_range, h1.y_range), (h2.shape, h2.x_range, h2.y_range))
    return float(np.abs(h1.bins - h2.bins).sum())


def support_coverage(generated: Histogram2D, reference: Histogram2D) -> float:
    """Fraction of the reference-occupied bins that the generated sample also occupies."""
    occupied = reference.bins > 0
    if not occupied.any():
        return 1.0
    return float((generated.bins[occupied] > 0).sum() / occupied.sum())


def marginal_distance(a: np.ndarray, b: np.ndarray, bins: int, value_range: tuple[float, float]) -> float:
    """1-D counterpart of hist_distance for one parameter."""
    h_a, _ = np.histogram(np.clip(a, *value_range), bins=bins, range=value_range)
    h_b, _ = np.histogram(np.clip(b, *value_range), bins=bins, range=value_range)
    return float(np.abs(h_a / h_a.sum() - h_b / h_b.sum()).sum())


def residual_pairs(p: ParamsBatch, c: Condition) -> tuple[np.ndarray, np.ndarray]:
    """The two sides of the equilibrium: ``(m_generated * y, m_cube * x)``."""
    return annulus_mass(p) * c.y, c.m_cube * c.x


def residual_fit(generated_side: np.ndarray, cube_side: np.ndarray) -> tuple[float, float]:
    """Least-squares ``generated_side ≈ slope * cube_side + intercept``."""
    slope, intercept = np.polyfit(cube_side, generated_side, deg=1)
    return float(slope), float(intercept)


def box_stats(values: np.ndarray) -> dict[str, float]:
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    iqr = q3 - q1
    inside = values[(values >= q1 - 1.5 * iqr) & (values <= q3 + 1.5 * iqr)]
    return {
        "q1": float(q1),
        "median": float(median),
        "q3": float(q3),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
    }


@dataclass(frozen=True, slots=True)
class SampleSet:
    """Systems (as scalars) together with the conditions they were drawn for."""

    params: ParamsBatch
    x: np.ndarray
    y: np.ndarray
    m_cube: np.ndarray

    def __len__(self) -> int:
        return len(self.x)

    @property
    def cond(self) -> Condition:
        return Condition(self.x, self.y, self.m_cube)

    def column(self, name: str) -> np.ndarray:
        return getattr(self.params, name)


@dataclass
class RunScores:
    """Everything one model×seed evaluation produces: scalar metrics plus plot data."""

    metrics: dict[str, float]
    sample_count: int
    joint_histograms: dict[str, tuple[Histogram2D, Histogram2D]]
    abs_contact: np.ndarray = field(repr=False)
    abs_performance: np.ndarray = field(repr=False)
    residuals: tuple[np.ndarray, np.ndarray] = field(repr=False)


def _same_conditions(generated: SampleSet, reference: SampleSet) -> bool:
    return (
        len(generated) == len(reference)
        and np.array_equal(generated.x, reference.x)
        and np.array_equal(generated.y, reference.y)
        and np.array_equal(generated.m_cube, reference.m_cube)
    )


def evaluate_samples(generated: SampleSet, reference: SampleSet, bins: tuple[int, int] = DEFAULT_BINS) -> RunScores:
    if not _same_conditions(generated, reference):
        raise ConditionMismatchError(len(generated), len(reference))
    if len(generated) == 0:
        raise EmptySampleError
    if not np.isfinite(generated.params.as_matrix()).all():
        raise NonFiniteError("generated systems")

    abs_contact = np.abs(contact_error(generated.params))
    abs_performance = np.abs(performance_error(generated.params, generated.cond))
    metrics = {
        "abs_contact_mean": float(abs_contact.mean()),
        "abs_contact_std": float(abs_contact.std()),
        "abs_contact_median": float(np.median(abs_contact)),
        "abs_performance_mean": float(abs_performance.mean()),
        "abs_performance_std": float(abs_performance.std()),
        "abs_performance_median": float(np.median(abs_performance)),
    }

    joint_histograms = {}
    for pair, (first, second) in JOINT_PAIRS.items():
        ranges = (value_range(first), value_range(second))
        h_gen = histogram2d(np.column_stack([generated.column(first), generated.column(second)]), *bins, *ranges)
        h_ref = histogram2d(np.column_stack([reference.column(first), reference.column(second)]), *bins, *ranges)
        joint_histograms[pair] = (h_gen, h_ref)
        metrics[f"wasserstein_{pair}"] = hist_distance(h_gen, h_ref)
    for pair, (h_gen, h_ref) in joint_histograms.items():
        metrics[f"coverage_{pair}"] = support_coverage(h_gen, h_ref)
    for name in PARAM_FIELDS:
        metrics[f"marginal_{name}"] = marginal_distance(
            generated.column(name), reference.column(name), bins[0], value_range(name)
        )

    residuals = residual_pairs(generated.params, generated.cond)
    metrics["residual_slope"], metrics["residual_intercept"] = residual_fit(*residuals)
    metrics["residual_ordinate_mean"] = float(residuals[0].mean())

    return RunScores(
        metrics={name: metrics[name] for name in METRIC_NAMES},
        sample_count=len(generated),
        joint_histograms=joint_histograms,
        abs_contact=abs_contact,
        abs_performance=abs_performance,
        residuals=residuals,
    )


# Report aggregation
# ----------------------------------------------------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ReportRow:
    model: str
    seed: int
    metric: str
    value: float
    sample_count: int


@dataclass(frozen=True, slots=True)
class MetricSummary:
    mean: float
    variance: float
    n_seeds: int


@dataclass
class EvalReport:
    """Per model×seed metric rows; cross-seed mean/variance via :meth:`summary`."""

    rows: list[ReportRow] = field(default_factory=list)
    failed_runs: dict[str, list[int]] = field(default_factory=dict)

    def add(self, model: str, seed: int, scores: RunScores) -> None:
        self.rows.extend(
            ReportRow(model, seed, metric, value, scores.sample_count) for metric, value in scores.metrics.items()
        )

    def models(self) -> list[str]:
        return list(dict.fromkeys(row.model for row in self.rows))

    def seeds(self, model: str) -> list[int]:
        return sorted({row.seed for row in self.rows if row.model == model})

    def summary(self) -> dict[str, dict[str, MetricSummary]]:
        """``{model: {metric: MetricSummary}}``; report assembly is order-independent."""
        grouped: dict[str, dict[str, list[tuple[int, float]]]] = {}
        for row in self.rows:
            grouped.setdefault(row.model, {}).setdefault(row.metric, []).append((row.seed, row.value))
        out = {}
        for model, per_metric in grouped.items():
            out[model] = {}
            for metric, pairs in per_metric.items():
                values = np.array([value for _, value in sorted(pairs)])
                out[model][metric] = MetricSummary(
                    mean=float(values.mean()),
                    variance=float(values.var()) if len(values) > 1 else 0.0,
                    n_seeds=len(values),
                )
        return out


def relative_gap(value: float, baseline: float) -> float:
    """``|value - baseline| / |baseline|``, infinite when the baseline is zero and the values differ."""
    if baseline == 0:
        return 0.0 if value == 0 else math.inf
    return abs(value - baseline) / abs(baseline)
