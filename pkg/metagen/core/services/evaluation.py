"""Scoring trained generators and writing the plot-ready CSV files.

Evaluation conditions are held out: a fresh dataset is drawn with the
evaluation seed, its systems are the reference sample, and every model × seed
generates one system for each of its conditions. All runs are therefore scored
against the same reference at the same conditions.
"""

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings

from metagen.core.errors import DomainError, NonFiniteError, ReportInputError
from metagen.core.generators import MODEL_KINDS, load_generator, sample_systems
from metagen.core.services.datagen import DatasetConfig, build_dataset
from metagen.core.services.domain import N_POINTS, ParamsBatch, estimate_batch
from metagen.core.services.manifest import Manifest, RunEntry
from metagen.core.services.metrics import (
    DEFAULT_BINS,
    DEFAULT_SAMPLE_COUNT,
    ERROR_HISTOGRAM_BINS,
    JOINT_PAIRS,
    EvalReport,
    Histogram2D,
    RunScores,
    SampleSet,
    box_stats,
    evaluate_samples,
)

logger = logging.getLogger(__name__)

DEFAULT_EVAL_SEED = 1
RESIDUAL_LIMIT = 5000
CIRCLE_NAMES = ("outer_ext", "outer_int", "inner_ext", "inner_int", "density1", "density2")

REPORT_FILE = "report.csv"
HISTOGRAMS_FILE = "histograms.csv"
ERRORS_FILE = "errors.csv"
RESIDUALS_FILE = "residuals.csv"
SYSTEMS_FILE = "systems.csv"
FAILED_FILE = "failed_runs.csv"


@dataclass(frozen=True, slots=True)
class EvalConfig:
    sample_count: int = DEFAULT_SAMPLE_COUNT
    seed: int = DEFAULT_EVAL_SEED
    bins: tuple[int, int] = DEFAULT_BINS
    models: tuple[str, ...] | None = None
    seeds: tuple[int, ...] | None = None
    dump_systems: int = 0
    residual_limit: int = RESIDUAL_LIMIT

    def __post_init__(self):
        if self.sample_count < 1:
            raise DomainError("sample_count", self.sample_count, "sample_count >= 1")
        if min(self.bins) < 1:
            raise DomainError("bins", self.bins, "bins >= 1")
        if self.dump_systems < 0:
            raise DomainError("dump_systems", self.dump_systems, "dump_systems >= 0")
        if self.residual_limit < 0:
            raise DomainError("residual_limit", self.residual_limit, "residual_limit >= 0")

    def selects(self, entry: RunEntry) -> bool:
        return (
            entry.kind in MODEL_KINDS
            and (self.models is None or entry.kind in self.models)
            and (self.seeds is None or entry.seed in self.seeds)
        )


@dataclass
class RunEvaluation:
    model: str
    seed: int
    scores: RunScores
    systems: np.ndarray = field(repr=False)


@dataclass
class EvaluationResult:
    report: EvalReport
    runs: list[RunEvaluation]
    reference_histograms: dict[str, Histogram2D]
    failed: dict[tuple[str, int], str] = field(default_factory=dict)


def reference_samples(count: int, seed: int, n_points: int = N_POINTS) -> SampleSet:
    """Held-out systems and conditions, drawn like a training dataset but with ``seed``."""
    records = build_dataset(DatasetConfig(n_records=count, seed=seed, n_points=n_points))
    conds = np.array([r.cond.as_tuple() for r in records], dtype=np.float64)
    return SampleSet(
        params=ParamsBatch.from_params([r.params for r in records]),
        x=conds[:, 0].copy(),
        y=conds[:, 1].copy(),
        m_cube=conds[:, 2].copy(),
    )


def generate_samples(model, reference: SampleSet, rng: np.random.Generator) -> tuple[SampleSet, np.ndarray]:
    """One generated system per reference condition, as scalars and as flat point clouds."""
    flat = sample_systems(model, reference.x, reference.y, reference.m_cube, rng)
    params = estimate_batch(flat, model.n_points)
    return SampleSet(params, reference.x, reference.y, reference.m_cube), flat


def _evaluate_entry(entry: RunEntry, manifest: Manifest, reference: SampleSet, cfg: EvalConfig) -> RunEvaluation:
    model, _ = load_generator(manifest.resolve(entry.checkpoint), entry.kind)
    rng = np.random.default_rng([cfg.seed, entry.seed, MODEL_KINDS.index(entry.kind)])
    generated, flat = generate_samples(model, reference, rng)
    scores = evaluate_samples(generated, reference, cfg.bins)
    logger.info(
        "%s seed %d: |E_c| %.4g, |E_p| %.4g, slope %.3f",
        entry.kind,
        entry.seed,
        scores.metrics["abs_contact_mean"],
        scores.metrics["abs_performance_mean"],
        scores.metrics["residual_slope"],
    )
    return RunEvaluation(entry.kind, entry.seed, scores, flat[: cfg.dump_systems].copy())


def evaluate_manifest(manifest: Manifest, cfg: EvalConfig, threads: int | None = None) -> EvaluationResult:
    entries = sorted(
        (entry for entry in manifest.completed() if cfg.selects(entry)),
        key=lambda entry: (MODEL_KINDS.index(entry.kind), entry.seed),
    )
    if not entries:
        raise ReportInputError(manifest.path, "no completed model runs to evaluate")

    n_points = load_generator(manifest.resolve(entries[0].checkpoint), entries[0].kind)[0].n_points
    reference = reference_samples(cfg.sample_count, cfg.seed, n_points)
    result = EvaluationResult(EvalReport(), [], {})

    def evaluate(entry: RunEntry) -> RunEvaluation | str:
        try:
            return _evaluate_entry(entry, manifest, reference, cfg)
        except NonFiniteError as e:
            logger.warning("%s seed %d produced non-finite systems; excluded", entry.kind, entry.seed)
            return str(e)

    with ThreadPoolExecutor(max_workers=max(1, threads or settings.METAGEN_THREADS)) as pool:
        outcomes = list(pool.map(evaluate, entries))

    for entry, outcome in zip(entries, outcomes, strict=True):
        if isinstance(outcome, str):
            result.failed[(entry.kind, entry.seed)] = outcome
            continue
        result.runs.append(outcome)
        result.report.add(outcome.model, outcome.seed, outcome.scores)
    for entry in manifest.failed():
        if cfg.selects(entry):
            result.failed[(entry.kind, entry.seed)] = entry.message or "training failed"
    for kind, seed in sorted(result.failed):
        result.report.failed_runs.setdefault(kind, []).append(seed)

    if result.runs:
        result.reference_histograms = {
            pair: reference_hist for pair, (_, reference_hist) in result.runs[0].scores.joint_histograms.items()
        }
    return result


# Output files
# ----------------------------------------------------------------------------------------------------------------------


@contextmanager
def _csv_writer(path: Path, fieldnames: list[str]):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(fieldnames)
        yield writer


def write_report_csv(report: EvalReport, path: Path) -> Path:
    with _csv_writer(Path(path), ["model", "seed", "metric", "value", "sample_count"]) as writer:
        for row in report.rows:
            writer.writerow([row.model, row.seed, row.metric, repr(row.value), row.sample_count])
    return Path(path)


def write_failed_csv(result: EvaluationResult, path: Path) -> Path:
    with _csv_writer(Path(path), ["model", "seed", "message"]) as writer:
        for (kind, seed), message in sorted(result.failed.items()):
            writer.writerow([kind, seed, message])
    return Path(path)


def _histogram_rows(model: str, seed, pair: str, source: str, hist: Histogram2D):
    (x_low, x_high), (y_low, y_high) = hist.x_range, hist.y_range
    m, n = hist.shape
    x_edges = np.linspace(x_low, x_high, m + 1)
    y_edges = np.linspace(y_low, y_high, n + 1)
    for i, j in zip(*np.nonzero(hist.bins), strict=True):
        yield [model, seed, pair, source, i, j, x_edges[i], x_edges[i + 1], y_edges[j], y_edges[j + 1], hist.bins[i, j]]


def write_histograms_csv(result: EvaluationResult, path: Path) -> Path:
    """Non-empty bins of every joint histogram; the shared reference is written once."""
    columns = ["model", "seed", "pair", "source", "i", "j", "x_low", "x_high", "y_low", "y_high", "probability"]
    with _csv_writer(Path(path), columns) as writer:
        for pair in JOINT_PAIRS:
            if pair in result.reference_histograms:
                writer.writerows(_histogram_rows("reference", "", pair, "reference", result.reference_histograms[pair]))
            for run in result.runs:
                generated, _ = run.scores.joint_histograms[pair]
                writer.writerows(_histogram_rows(run.model, run.seed, pair, "generated", generated))
    return Path(path)


def error_histogram_upper(values: list[np.ndarray]) -> float:
    """Pooled 99th percentile, the shared upper edge of the error histograms."""
    upper = float(np.percentile(np.concatenate(values), 99)) if values else 0.0
    return upper if upper > 0 else 1.0


def write_errors_csv(result: EvaluationResult, path: Path) -> Path:
    """Per run: histogram of absolute errors plus box-plot statistics."""
    with _csv_writer(Path(path), ["model", "seed", "metric", "stat", "low", "high", "value"]) as writer:
        for metric in ("abs_contact", "abs_performance"):
            upper = error_histogram_upper([getattr(run.scores, metric) for run in result.runs])
            edges = np.linspace(0.0, upper, ERROR_HISTOGRAM_BINS + 1)
            for run in result.runs:
                values = getattr(run.scores, metric)
                counts, _ = np.histogram(np.clip(values, 0.0, upper), bins=edges)
                for low, high, count in zip(edges[:-1], edges[1:], counts, strict=True):
                    writer.writerow([run.model, run.seed, metric, "bin", low, high, count])
                for stat, value in box_stats(values).items():
                    writer.writerow([run.model, run.seed, metric, stat, "", "", value])
    return Path(path)


def write_residuals_csv(result: EvaluationResult, path: Path, limit: int = RESIDUAL_LIMIT) -> Path:
    with _csv_writer(Path(path), ["model", "seed", "m_generated_y", "m_cube_x"]) as writer:
        for run in result.runs:
            generated_side, cube_side = run.scores.residuals
            for a, b in zip(generated_side[:limit], cube_side[:limit], strict=True):
                writer.writerow([run.model, run.seed, a, b])
    return Path(path)


def write_systems_csv(result: EvaluationResult, path: Path) -> Path:
    with _csv_writer(Path(path), ["model", "seed", "index", "component", "point", "x", "y"]) as writer:
        for run in result.runs:
            for index, flat in enumerate(run.systems):
                circles = flat.reshape(len(CIRCLE_NAMES), -1, 2)
                for name, points in zip(CIRCLE_NAMES, circles, strict=True):
                    for point, (x, y) in enumerate(points):
                        writer.writerow([run.model, run.seed, index, name, point, x, y])
    return Path(path)


def write_outputs(result: EvaluationResult, out_dir: Path, cfg: EvalConfig) -> dict[str, Path]:
    out_dir = Path(out_dir)
    written = {
        "report": write_report_csv(result.report, out_dir / REPORT_FILE),
        "failed": write_failed_csv(result, out_dir / FAILED_FILE),
        "histograms": write_histograms_csv(result, out_dir / HISTOGRAMS_FILE),
        "errors": write_errors_csv(result, out_dir / ERRORS_FILE),
        "residuals": write_residuals_csv(result, out_dir / RESIDUALS_FILE, cfg.residual_limit),
    }
    if cfg.dump_systems:
        written["systems"] = write_systems_csv(result, out_dir / SYSTEMS_FILE)
    return written
