"""Score every completed model run against held-out reference systems.

Writes report.csv, failed_runs.csv, histograms.csv, errors.csv, residuals.csv
and (with --dump-systems) systems.csv; see docs/plot_data.md for the columns.

Usage:
    python manage.py evaluate --run-dir data/runs --out data/eval --samples 50000
"""

from pathlib import Path

from django.conf import settings

from metagen.core.errors import DomainError, ManifestError, ReportInputError
from metagen.core.generators import MODEL_KINDS
from metagen.core.management.pipeline import PipelineCommand, ValidationFailure, require_file
from metagen.core.services.evaluation import (
    DEFAULT_EVAL_SEED,
    RESIDUAL_LIMIT,
    EvalConfig,
    evaluate_manifest,
    write_outputs,
)
from metagen.core.services.manifest import MANIFEST_NAME, Manifest
from metagen.core.services.metrics import DEFAULT_BINS, DEFAULT_SAMPLE_COUNT
from metagen.core.services.options import bin_counts, choice_list, int_list, non_negative_int, positive_int
from metagen.core.services.training import verify_manifest


class Command(PipelineCommand):
    help = "Evaluate trained models and write plot-ready CSV files"

    def add_arguments(self, parser):
        self.add_option(
            parser,
            "--run-dir",
            type=Path,
            default=lambda: settings.METAGEN_DATA_DIR / "runs",
            help="Experiment directory holding manifest.json",
        )
        self.add_option(parser, "--out", type=Path, default=None, help="Output directory (default: <run-dir>/eval)")
        self.add_option(
            parser, "--samples", type=positive_int, default=DEFAULT_SAMPLE_COUNT, help="Conditions per model run"
        )
        self.add_option(parser, "--bins", type=bin_counts, default=DEFAULT_BINS, help="Histogram bins, 'M' or 'M,N'")
        self.add_option(parser, "--seed", type=non_negative_int, default=DEFAULT_EVAL_SEED, help="Evaluation seed")
        self.add_option(parser, "--models", type=choice_list(MODEL_KINDS), default=None, help="Models to evaluate")
        self.add_option(parser, "--seeds", type=int_list, default=None, help="Training seeds to evaluate")
        self.add_option(
            parser, "--dump-systems", type=non_negative_int, default=0, help="Generated systems to dump per run"
        )
        self.add_option(
            parser,
            "--residual-limit",
            type=non_negative_int,
            default=RESIDUAL_LIMIT,
            help="Residual pairs written per run",
        )
        self.add_option(
            parser, "--threads", type=positive_int, default=lambda: settings.METAGEN_THREADS, help="Worker threads"
        )

    def run_pipeline(self, **options):
        run_dir = Path(options["run_dir"])
        try:
            manifest = Manifest.load(require_file(run_dir / MANIFEST_NAME, "run manifest"))
        except ManifestError as e:
            raise ValidationFailure(str(e)) from e
        stale = verify_manifest(manifest)
        if stale:
            msg = f"checkpoint missing or modified for {', '.join(stale)}; rerun train"
            raise ValidationFailure(msg)
        try:
            cfg = EvalConfig(
                sample_count=options["samples"],
                seed=options["seed"],
                bins=tuple(options["bins"]),
                models=options["models"],
                seeds=options["seeds"],
                dump_systems=options["dump_systems"],
                residual_limit=options["residual_limit"],
            )
        except DomainError as e:
            raise ValidationFailure(str(e)) from e

        try:
            result = evaluate_manifest(manifest, cfg, options["threads"])
        except ReportInputError as e:
            raise ValidationFailure(str(e)) from e
        out_dir = Path(options["out"] or run_dir / "eval")
        written = write_outputs(result, out_dir, cfg)
        self.stdout.write(
            self.style.SUCCESS(f"Evaluated {len(result.runs)} run(s), {len(result.failed)} excluded; wrote {out_dir}")
        )
        return {
            "out": str(out_dir),
            "evaluated": [f"{run.model}-s{run.seed}" for run in result.runs],
            "failed": sorted(f"{kind}-s{seed}" for kind, seed in result.failed),
            "files": {name: str(path) for name, path in written.items()},
        }
