"""Generate the nested-cylinder training dataset.

Usage:
    python manage.py gen_data --n 20000 --seed 0 --out data/train.jsonl
"""

import logging
from pathlib import Path

from django.conf import settings

from metagen.core.autodiff.checkpoint import file_sha256
from metagen.core.errors import DomainError
from metagen.core.management.pipeline import PipelineCommand, ValidationFailure, require_writable
from metagen.core.services.datagen import DEFAULT_RECORDS, DatasetConfig, build_dataset, save_dataset
from metagen.core.services.domain import N_POINTS
from metagen.core.services.options import non_negative_int, parse_bool, positive_int

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = "Generate a dataset of valid nested-cylinder systems with their balance conditions"

    def add_arguments(self, parser):
        self.add_option(parser, "--n", type=positive_int, default=DEFAULT_RECORDS, help="Number of records")
        self.add_option(parser, "--seed", type=non_negative_int, default=0, help="Random seed")
        self.add_option(
            parser,
            "--out",
            type=Path,
            default=lambda: settings.METAGEN_DATA_DIR / "train.jsonl",
            help="Output JSON-lines file",
        )
        self.add_option(parser, "--n-points", type=positive_int, default=N_POINTS, help="Points per circle")
        self.add_option(
            parser, "--shuffle", type=parse_bool, default=True, help="Shuffle records across branches (yes/no)"
        )

    def resolve_options(self, options):
        resolved = super().resolve_options(options)
        require_writable(resolved["out"], "--out")
        return resolved

    def run_pipeline(self, **options):
        try:
            cfg = DatasetConfig(
                n_records=options["n"],
                seed=options["seed"],
                n_points=options["n_points"],
                shuffle=options["shuffle"],
            )
        except DomainError as e:
            raise ValidationFailure(str(e)) from e

        records = build_dataset(cfg)
        path = save_dataset(records, options["out"], seed=cfg.seed, n_points=cfg.n_points)
        sha256 = file_sha256(path)
        logger.info("Wrote %d records to %s", len(records), path)
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(records)} records to {path}"))
        return {"path": str(path), "records": len(records), "seed": cfg.seed, "sha256": sha256}
