"""Desk-scale runs: the default dataset, budgets and seeds, end to end.

These take on the order of an hour on a 4-core machine and are deselected by
default. Run them with ``pytest -m slow``.
"""

import csv
import tempfile
import time
from io import StringIO
from pathlib import Path

import numpy as np
import pytest
from django.core.management import call_command
from django.test import SimpleTestCase

from metagen.core.generators import MetaVAE, load_generator, sample_systems
from metagen.core.management.commands.report import Command as ReportCommand
from metagen.core.services.domain import COMPONENTS, COORD_SCALE, component_slices
from metagen.core.services.evaluation import reference_samples
from metagen.core.services.manifest import Manifest
from metagen.core.services.training import load_training_data

# Mean absolute radius error of a marginal reconstruction, in length units.
RADIUS_TOLERANCE = {"outer_cyl": 2.0, "inner_cyl": 2.0, "density1": 0.5, "density2": 0.5}


def read_log(path: Path) -> list[dict]:
    with path.open(encoding="utf-8", newline="") as f:
        return [{key: float(value) for key, value in row.items()} for row in csv.DictReader(f)]


def mean_radius_error(model, systems: np.ndarray) -> float:
    part = systems[:, component_slices(model.n_points)[model.component]]
    out = model.forward(part, np.random.default_rng(0), deterministic=True)
    recon = out.recon[model.component].data * COORD_SCALE

    def radii(flat: np.ndarray) -> np.ndarray:
        return np.linalg.norm(flat.reshape(len(flat), -1, model.n_points, 2), axis=3).mean(axis=2)

    return float(np.abs(radii(recon) - radii(part * COORD_SCALE)).mean())


@pytest.mark.slow
class DeskScalePipelineTest(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.root = Path(cls.enterClassContext(tempfile.TemporaryDirectory()))
        cls.dataset = cls.root / "train.jsonl"
        cls.runs = cls.root / "runs"
        quiet = {"stdout": StringIO()}
        call_command("gen_data", "--out", str(cls.dataset), **quiet)
        call_command("train", "--dataset", str(cls.dataset), "--out", str(cls.runs), "--threads", "4", **quiet)
        call_command("evaluate", "--run-dir", str(cls.runs), "--threads", "4", **quiet)
        cls.manifest = Manifest.for_dir(cls.runs)

    def test_marginal_reconstructions_are_accurate(self):
        validation = load_training_data(self.dataset).validation
        for component in COMPONENTS:
            entry = self.manifest.runs[f"marginal-{component}"]
            model, _ = load_generator(self.manifest.resolve(entry.checkpoint))

            error = mean_radius_error(model, validation.systems)

            assert error < RADIUS_TOLERANCE[component], f"{component}: {error:.3f}"

    def test_marginal_validation_loss_drops_tenfold(self):
        for component in COMPONENTS:
            log = read_log(self.manifest.resolve(self.manifest.runs[f"marginal-{component}"].runlog))

            assert log[-1]["val_loss"] < log[0]["val_loss"] / 10, component

    def test_vae_family_loss_decreases_early(self):
        for entry in self.manifest.completed():
            if entry.kind == "vanilla-gan" or entry.component:
                continue
            losses = [row["val_loss"] for row in read_log(self.manifest.resolve(entry.runlog))[:6]]

            assert all(a > b for a, b in zip(losses, losses[1:], strict=False)), entry.run_id

    def test_gan_survives_on_most_seeds(self):
        assert len(self.manifest.completed("vanilla-gan")) >= 4

    def test_meta_vae_marginal_decoders_stay_frozen(self):
        marginals = {
            component: load_generator(self.manifest.resolve(self.manifest.runs[f"marginal-{component}"].checkpoint))[0]
            for component in COMPONENTS
        }
        for entry in self.manifest.completed(MetaVAE.kind):
            meta, _ = load_generator(self.manifest.resolve(entry.checkpoint), MetaVAE.kind)
            for component, marginal in marginals.items():
                own = meta.marginal_decoders[component].state_dict()
                for key, value in marginal.decoder.state_dict().items():
                    np.testing.assert_array_equal(own[key], value, err_msg=f"{entry.run_id}:{component}")

    def test_sampling_fifty_thousand_systems_is_fast(self):
        entry = self.manifest.completed(MetaVAE.kind)[0]
        model, _ = load_generator(self.manifest.resolve(entry.checkpoint), MetaVAE.kind)
        reference = reference_samples(50_000, seed=1)

        started = time.perf_counter()
        sample_systems(model, reference.x, reference.y, reference.m_cube, np.random.default_rng(0))

        assert time.perf_counter() - started < 60

    def test_reference_ordering_holds(self):
        command = ReportCommand()
        out = StringIO()

        call_command(command, "--input", str(self.runs / "eval"), "--assert-paper-ordering", stdout=out)

        assert command.result["success"] is True
        assert "ordering: holds" in out.getvalue()
