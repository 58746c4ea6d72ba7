"""Summarise an evaluation across seeds and rank the models per metric.

Usage:
    python manage.py report --input data/runs/eval --assert-paper-ordering
"""

from pathlib import Path

from django.conf import settings

from metagen.core.errors import ReportInputError
from metagen.core.management.pipeline import PipelineCommand, ValidationFailure
from metagen.core.services.reports import build_report, load_report, write_report


class Command(PipelineCommand):
    help = "Write cross-seed summaries and per-metric verdicts; optionally check the expected model ordering"

    def add_arguments(self, parser):
        self.add_option(
            parser,
            "--input",
            type=Path,
            default=lambda: settings.METAGEN_DATA_DIR / "runs" / "eval",
            help="Directory written by evaluate",
        )
        self.add_option(parser, "--out", type=Path, default=None, help="Output directory (default: --input)")
        self.add_flag(
            parser,
            "--assert-paper-ordering",
            help="Exit with status 2 unless the Meta-VAE wins the expected orderings",
        )

    def run_pipeline(self, **options):
        eval_dir = Path(options["input"])
        try:
            report = load_report(eval_dir)
        except ReportInputError as e:
            raise ValidationFailure(str(e)) from e
        outcome = build_report(report, check_ordering=options["assert_paper_ordering"])
        written = write_report(outcome, Path(options["out"] or eval_dir))
        for line in outcome.lines():
            self.stdout.write(line)
        if outcome.problems:
            msg = f"model ordering violated: {'; '.join(outcome.problems)}"
            raise ValidationFailure(msg)
        return {
            "verdicts": [verdict.line() for verdict in outcome.verdicts],
            "files": {name: str(path) for name, path in written.items()},
        }
