"""Pretrain the four marginal VAEs (two cylinders, two densities).

Usage:
    python manage.py train_marginals --dataset data/train.jsonl --out data/runs
"""

from pathlib import Path

from django.conf import settings

from metagen.core.errors import RunFailureError
from metagen.core.management.pipeline import PipelineCommand, require_writable, training_data_from
from metagen.core.services.options import non_negative_int, positive_int
from metagen.core.services.training import DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, TrainConfig, run_marginals


class Command(PipelineCommand):
    help = "Pretrain one marginal VAE per unitary component; up-to-date marginals are skipped"

    def add_arguments(self, parser):
        self.add_option(
            parser, "--dataset", type=Path, default=lambda: settings.METAGEN_DATA_DIR / "train.jsonl", help="Dataset"
        )
        self.add_option(
            parser, "--out", type=Path, default=lambda: settings.METAGEN_DATA_DIR / "runs", help="Experiment directory"
        )
        self.add_option(parser, "--epochs", type=positive_int, default=DEFAULT_EPOCHS, help="Training epochs")
        self.add_option(parser, "--batch-size", type=positive_int, default=DEFAULT_BATCH_SIZE, help="Batch size")
        self.add_option(parser, "--seed", type=non_negative_int, default=0, help="Seed shared by the four marginals")
        self.add_option(
            parser, "--threads", type=positive_int, default=lambda: settings.METAGEN_THREADS, help="Worker threads"
        )

    def resolve_options(self, options):
        resolved = super().resolve_options(options)
        require_writable(resolved["out"], "--out", directory=True)
        return resolved

    def run_pipeline(self, **options):
        data = training_data_from(options["dataset"])
        cfg = TrainConfig(
            marginal_epochs=options["epochs"],
            batch_size=options["batch_size"],
            marginal_seed=options["seed"],
        )
        result = run_marginals(data, cfg, options["out"], options["threads"])
        if result.failed:
            raise RunFailureError(result.failed)
        self.stdout.write(
            self.style.SUCCESS(
                f"Marginals in {result.manifest.path}: {len(result.trained)} trained, {len(result.skipped)} up to date"
            )
        )
        return {"manifest": str(result.manifest.path), "trained": result.trained, "skipped": result.skipped}
