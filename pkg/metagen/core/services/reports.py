"""Cross-seed summaries, per-metric verdicts and the reference ordering check.

A verdict ranks the models on one metric by their cross-seed mean; it is only
given when at least two models were evaluated. The line format is stable:

    verdict <metric>: <model> < <model> < ... (best: <model>)

with ``>`` instead of ``<`` for metrics where higher is better.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

from metagen.core.errors import ReportInputError
from metagen.core.generators import MODEL_KINDS
from metagen.core.services.evaluation import FAILED_FILE, REPORT_FILE
from metagen.core.services.metrics import (
    JOINT_PAIRS,
    EvalReport,
    MetricSummary,
    ReportRow,
    relative_gap,
)

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.csv"
VERDICTS_FILE = "verdicts.txt"

META_VAE, SMVAE, VANILLA_VAE, VANILLA_GAN = MODEL_KINDS

WASSERSTEIN_METRICS = tuple(f"wasserstein_{pair}" for pair in JOINT_PAIRS)
# Metrics that receive a verdict, with the direction that counts as better.
VERDICT_METRICS = {
    "abs_contact_mean": "lower",
    "abs_performance_mean": "lower",
    **dict.fromkeys(WASSERSTEIN_METRICS, "lower"),
    **{f"coverage_{pair}": "higher" for pair in JOINT_PAIRS},
}

SMVAE_TOLERANCE = 0.25
CONTACT_FACTOR = 2.0
SLOPE_BOUNDS = (0.9, 1.1)
INTERCEPT_FRACTION = 0.05


def read_report_csv(path: Path) -> EvalReport:
    path = Path(path)
    if not path.is_file():
        raise ReportInputError(path, "report not found; run evaluate first")
    report = EvalReport()
    with path.open(encoding="utf-8", newline="") as f:
        for line_number, row in enumerate(csv.DictReader(f), start=2):
            try:
                report.rows.append(
                    ReportRow(
                        model=row["model"],
                        seed=int(row["seed"]),
                        metric=row["metric"],
                        value=float(row["value"]),
                        sample_count=int(row["sample_count"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as e:
                raise ReportInputError(path, f"line {line_number}: malformed row ({e})") from e
    if not report.rows:
        raise ReportInputError(path, "report has no rows")

    failed_path = path.with_name(FAILED_FILE)
    if failed_path.is_file():
        with failed_path.open(encoding="utf-8", newline="") as f:
            for row in csv.DictReader(f):
                report.failed_runs.setdefault(row["model"], []).append(int(row["seed"]))
    return report


def _ordered_models(summary: dict[str, dict[str, MetricSummary]]) -> list[str]:
    known = [kind for kind in MODEL_KINDS if kind in summary]
    return known + sorted(set(summary) - set(known))


def summary_rows(report: EvalReport) -> list[dict]:
    summary = report.summary()
    rows = []
    for model in _ordered_models(summary):
        failed = len(report.failed_runs.get(model, []))
        for metric, stats in summary[model].items():
            rows.append(
                {
                    "model": model,
                    "metric": metric,
                    "mean": stats.mean,
                    "variance": stats.variance,
                    "n_seeds": stats.n_seeds,
                    "failed_seeds": failed,
                }
            )
    return rows


@dataclass(frozen=True, slots=True)
class Verdict:
    metric: str
    ranking: tuple[str, ...]
    direction: str

    @property
    def winner(self) -> str:
        return self.ranking[0]

    def line(self) -> str:
        sign = " < " if self.direction == "lower" else " > "
        return f"verdict {self.metric}: {sign.join(self.ranking)} (best: {self.winner})"


def verdicts(summary: dict[str, dict[str, MetricSummary]]) -> list[Verdict]:
    models = _ordered_models(summary)
    if len(models) < 2:  # noqa: PLR2004 - a ranking needs two models
        return []
    out = []
    for metric, direction in VERDICT_METRICS.items():
        ranked = [model for model in models if metric in summary[model]]
        if len(ranked) < 2:  # noqa: PLR2004 - a ranking needs two models
            continue
        ranked.sort(key=lambda model: summary[model][metric].mean, reverse=direction == "higher")
        out.append(Verdict(metric, tuple(ranked), direction))
    return out


def check_reference_ordering(summary: dict[str, dict[str, MetricSummary]]) -> list[str]:
    """Violations of the expected model ordering; an empty list means it holds.

    - mean |E_p| and the four joint dissimilarities: Meta-VAE < vanilla VAE < vanilla GAN,
      with SMVAE within 25% of Meta-VAE
    - mean |E_c| of the vanilla GAN at least twice that of every other model
    - Meta-VAE residual fit: slope in [0.9, 1.1], |intercept| under 5% of the mean ordinate;
      the vanilla GAN must miss at least one of these bounds
    """
    missing = [kind for kind in MODEL_KINDS if kind not in summary]
    if missing:
        return [f"missing model(s): {', '.join(missing)}"]

    def mean(model: str, metric: str) -> float:
        return summary[model][metric].mean

    problems = []
    for metric in ("abs_performance_mean", *WASSERSTEIN_METRICS):
        meta, vae, gan = mean(META_VAE, metric), mean(VANILLA_VAE, metric), mean(VANILLA_GAN, metric)
        if not meta < vae < gan:
            problems.append(
                f"{metric}: expected {META_VAE} < {VANILLA_VAE} < {VANILLA_GAN}, got {meta:.4g}, {vae:.4g}, {gan:.4g}"
            )
        gap = relative_gap(mean(SMVAE, metric), meta)
        if gap > SMVAE_TOLERANCE:
            problems.append(f"{metric}: {SMVAE} is {gap:.0%} away from {META_VAE} (limit {SMVAE_TOLERANCE:.0%})")

    gan_contact = mean(VANILLA_GAN, "abs_contact_mean")
    others = max(mean(kind, "abs_contact_mean") for kind in MODEL_KINDS if kind != VANILLA_GAN)
    if gan_contact < CONTACT_FACTOR * others:
        problems.append(
            f"abs_contact_mean: {VANILLA_GAN} ({gan_contact:.4g}) is not "
            f"{CONTACT_FACTOR:g}x the largest other ({others:.4g})"
        )

    if not residual_fit_holds(summary[META_VAE]):
        problems.append(f"residual fit of {META_VAE} is outside slope {SLOPE_BOUNDS} or intercept bound")
    if residual_fit_holds(summary[VANILLA_GAN]):
        problems.append(f"residual fit of {VANILLA_GAN} unexpectedly satisfies the equilibrium bounds")
    return problems


def residual_fit_holds(stats: dict[str, MetricSummary]) -> bool:
    slope = stats["residual_slope"].mean
    intercept = stats["residual_intercept"].mean
    ordinate = stats["residual_ordinate_mean"].mean
    return SLOPE_BOUNDS[0] <= slope <= SLOPE_BOUNDS[1] and abs(intercept) < INTERCEPT_FRACTION * abs(ordinate)


@dataclass
class ReportOutcome:
    rows: list[dict]
    verdicts: list[Verdict]
    problems: list[str] | None
    failed_runs: dict[str, list[int]]

    def lines(self) -> list[str]:
        lines = [verdict.line() for verdict in self.verdicts]
        lines.extend(
            f"excluded {model}: {len(seeds)} failed seed(s) ({', '.join(map(str, seeds))})"
            for model, seeds in sorted(self.failed_runs.items())
        )
        if self.problems is not None:
            lines.append("ordering: holds" if not self.problems else "ordering: violated")
            lines.extend(f"  {problem}" for problem in self.problems)
        return lines


def build_report(report: EvalReport, *, check_ordering: bool = False) -> ReportOutcome:
    summary = report.summary()
    return ReportOutcome(
        rows=summary_rows(report),
        verdicts=verdicts(summary),
        problems=check_reference_ordering(summary) if check_ordering else None,
        failed_runs={model: sorted(seeds) for model, seeds in report.failed_runs.items()},
    )


def write_report(outcome: ReportOutcome, out_dir: Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary_path = out_dir / SUMMARY_FILE
    with summary_path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["model", "metric", "mean", "variance", "n_seeds", "failed_seeds"])
        writer.writeheader()
        writer.writerows(outcome.rows)
    verdicts_path = out_dir / VERDICTS_FILE
    verdicts_path.write_text("".join(f"{line}\n" for line in outcome.lines()), encoding="utf-8")
    return {"summary": summary_path, "verdicts": verdicts_path}


def load_report(eval_dir: Path) -> EvalReport:
    return read_report_csv(Path(eval_dir) / REPORT_FILE)
