"""Tests for the training loop, the experiment runner and the manifest."""

import json
from unittest import mock

import numpy as np
import pytest
from django.test import SimpleTestCase

from metagen.core.autodiff.checkpoint import file_sha256
from metagen.core.errors import DomainError, GraphError, ManifestError, MissingMarginalsError, TrainingDivergedError
from metagen.core.generators import MetaVAE, load_generator
from metagen.core.services.domain import COMPONENTS
from metagen.core.services.manifest import Manifest, RunEntry, RunStatus
from metagen.core.services.training import (
    RunLog,
    TrainConfig,
    batch_indices,
    config_hash,
    fit,
    load_training_data,
    run_experiment,
    run_id_for,
    run_marginals,
    train_model,
    verify_manifest,
)
from metagen.core.tests.pipeline_helpers import TINY_RECORDS, TempDirMixin, tiny_config, write_tiny_dataset

MARGINAL_RUNS = {f"marginal-{name}" for name in COMPONENTS}


class TrainConfigTest(SimpleTestCase):
    def test_invalid_values_are_domain_errors(self):
        for overrides in ({"epochs": 0}, {"batch_size": 0}, {"seeds": ()}, {"seeds": (1, 1)}, {"lr": -1.0}):
            with pytest.raises(DomainError):
                TrainConfig(**overrides)

    def test_unknown_model_kind(self):
        with pytest.raises(DomainError) as excinfo:
            TrainConfig(models=("diffusion",))

        assert excinfo.value.quantity == "models"

    def test_learning_rate_override(self):
        assert TrainConfig().optimizer_settings("smvae")["lr"] == 1e-3
        assert TrainConfig(lr=5e-4).optimizer_settings("vanilla-gan")["lr"] == 5e-4
        assert TrainConfig().optimizer_settings("vanilla-gan")["beta1"] == 0.5

    def test_config_hash_is_key_order_independent(self):
        assert config_hash({"a": 1, "b": [2, 3]}) == config_hash({"b": [2, 3], "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})


class BatchIndicesTest(SimpleTestCase):
    def test_batches_cover_every_index_once(self):
        batches = list(batch_indices(70, 32, seed=3, epoch=1))

        assert [len(b) for b in batches] == [32, 32, 6]
        assert sorted(np.concatenate(batches).tolist()) == list(range(70))

    def test_order_depends_on_seed_and_epoch_only(self):
        first = np.concatenate(list(batch_indices(50, 8, seed=1, epoch=2)))

        np.testing.assert_array_equal(first, np.concatenate(list(batch_indices(50, 8, seed=1, epoch=2))))
        assert not np.array_equal(first, np.concatenate(list(batch_indices(50, 8, seed=1, epoch=3))))


class RunLogTest(SimpleTestCase):
    def test_epochs_must_increase(self):
        log = RunLog("vanilla-vae-s0", 0, "")
        log.add(0, 1.0, 1.0, 0.0)

        with pytest.raises(ValueError, match="does not follow"):
            log.add(0, 0.5, 0.5, 0.1)


class FitTest(TempDirMixin, SimpleTestCase):
    def setUp(self):
        super().setUp()
        self.data = load_training_data(write_tiny_dataset(self.tmp))

    def test_training_data_is_split_and_normalized(self):
        assert len(self.data.train) + len(self.data.validation) == TINY_RECORDS
        assert len(self.data.validation) == TINY_RECORDS // 10
        assert np.abs(self.data.train.systems).max() <= 1.0
        assert self.data.train.cond[:, 2].mean() == pytest.approx(0.0, abs=1e-9)

    def test_log_holds_untrained_epoch_then_every_epoch(self):
        for kind in ("smvae", "vanilla-vae", "vanilla-gan"):
            _, log = train_model(kind, self.data, tiny_config(epochs=3, models=(kind,)), seed=0)

            assert [record.epoch for record in log.epochs] == [0, 1, 2, 3], kind
            assert all(np.isfinite(log.val_losses())), kind

    def test_same_seed_trains_identical_weights(self):
        cfg = tiny_config(epochs=2, models=("vanilla-vae",))
        first, _ = train_model("vanilla-vae", self.data, cfg, seed=4)
        second, _ = train_model("vanilla-vae", self.data, cfg, seed=4)

        for key, value in first.state_dict().items():
            np.testing.assert_array_equal(value, second.state_dict()[key])

    def test_meta_vae_without_marginals(self):
        with pytest.raises(MissingMarginalsError) as excinfo:
            train_model("meta-vae", self.data, tiny_config(), seed=0, marginals={})

        assert excinfo.value.missing == list(COMPONENTS)

    def test_non_finite_loss_raises_training_diverged(self):
        model, _ = train_model("vanilla-vae", self.data, tiny_config(models=("vanilla-vae",)), seed=0)
        nan_loss = mock.Mock(item=mock.Mock(return_value=float("nan")))
        with mock.patch.object(model, "loss", return_value=nan_loss):
            with pytest.raises(TrainingDivergedError) as excinfo:
                fit(
                    model,
                    self.data,
                    run_id="vanilla-vae-s0",
                    seed=0,
                    epochs=1,
                    batch_size=32,
                    optimizer_settings={"lr": 1e-3},
                )

        assert excinfo.value.run_id == "vanilla-vae-s0"
        assert excinfo.value.epoch == 0


class RunExperimentTest(TempDirMixin, SimpleTestCase):
    def setUp(self):
        super().setUp()
        self.data = load_training_data(write_tiny_dataset(self.tmp))

    def test_meta_vae_run_trains_marginals_first(self):
        result = run_experiment(self.data, tiny_config(), self.tmp / "runs")

        assert set(result.trained) == {*MARGINAL_RUNS, "meta-vae-s0"}
        assert result.failed == {}
        manifest = Manifest.for_dir(self.tmp / "runs")
        assert {entry.run_id for entry in manifest.completed()} == set(result.trained)
        assert (self.tmp / "runs" / "checkpoints" / "meta-vae-s0.npz").is_file()
        assert (self.tmp / "runs" / "logs" / "marginal-outer_cyl.csv").is_file()

    def test_meta_vae_checkpoint_carries_the_frozen_marginals(self):
        result = run_experiment(self.data, tiny_config(epochs=2), self.tmp / "runs")
        manifest = result.manifest

        meta, _ = load_generator(manifest.resolve(manifest.runs["meta-vae-s0"].checkpoint), MetaVAE.kind)
        for component in COMPONENTS:
            marginal, _ = load_generator(manifest.resolve(manifest.runs[f"marginal-{component}"].checkpoint))
            for key, value in marginal.decoder.state_dict().items():
                np.testing.assert_array_equal(meta.marginal_decoders[component].state_dict()[key], value)

    def test_rerun_is_a_no_op(self):
        run_experiment(self.data, tiny_config(), self.tmp / "runs")
        before = (self.tmp / "runs" / "manifest.json").read_bytes()

        again = run_experiment(self.data, tiny_config(), self.tmp / "runs")

        assert again.trained == []
        assert set(again.skipped) == {*MARGINAL_RUNS, "meta-vae-s0"}
        assert (self.tmp / "runs" / "manifest.json").read_bytes() == before

    def test_two_directories_get_identical_checkpoints(self):
        cfg = tiny_config(models=("meta-vae", "vanilla-vae"), seeds=(0, 1))
        first = run_experiment(self.data, cfg, self.tmp / "a")
        second = run_experiment(self.data, cfg, self.tmp / "b")

        assert first.manifest.hash_set() == second.manifest.hash_set()
        assert len(first.manifest.hash_set()) == 4 + 2 * 2

    def test_thread_count_does_not_change_results(self):
        cfg = tiny_config(models=("smvae", "vanilla-vae"), seeds=(0, 1, 2))
        serial = run_experiment(self.data, cfg, self.tmp / "serial", threads=1)
        parallel = run_experiment(self.data, cfg, self.tmp / "parallel", threads=4)

        assert serial.manifest.hash_set() == parallel.manifest.hash_set()

    def test_deleted_checkpoint_is_retrained_to_the_same_bytes(self):
        run_experiment(self.data, tiny_config(), self.tmp / "runs")
        checkpoint = self.tmp / "runs" / "checkpoints" / "meta-vae-s0.npz"
        sha = file_sha256(checkpoint)
        checkpoint.unlink()

        with self.assertLogs("metagen.core.services.manifest", level="WARNING"):
            again = run_experiment(self.data, tiny_config(), self.tmp / "runs")

        assert again.trained == ["meta-vae-s0"]
        assert file_sha256(checkpoint) == sha

    def test_changed_config_retrains_only_affected_runs(self):
        run_experiment(self.data, tiny_config(), self.tmp / "runs")

        again = run_experiment(self.data, tiny_config(epochs=2), self.tmp / "runs")

        assert again.trained == ["meta-vae-s0"]
        assert set(again.skipped) == MARGINAL_RUNS

    def test_diverged_run_is_recorded_as_failed(self):
        def diverge(kind, data, cfg, seed, marginals=None, run_hash=""):
            raise TrainingDivergedError(run_id_for(kind, seed), 1)

        with (
            mock.patch("metagen.core.services.training.train_model", side_effect=diverge),
            self.assertLogs("metagen.core.services.training", level="ERROR"),
        ):
            result = run_experiment(self.data, tiny_config(models=("vanilla-vae",)), self.tmp / "runs")

        assert result.failed == {"vanilla-vae-s0": "vanilla-vae-s0: loss became non-finite at epoch 1"}
        entry = Manifest.for_dir(self.tmp / "runs").runs["vanilla-vae-s0"]
        assert entry.status == RunStatus.FAILED
        assert entry.checkpoint == ""

    def test_failed_run_is_retried_next_time(self):
        with (
            mock.patch(
                "metagen.core.services.training.train_model", side_effect=TrainingDivergedError("smvae-s0", 1)
            ),
            self.assertLogs("metagen.core.services.training", level="ERROR"),
        ):
            run_experiment(self.data, tiny_config(models=("smvae",)), self.tmp / "runs")

        again = run_experiment(self.data, tiny_config(models=("smvae",)), self.tmp / "runs")

        assert again.trained == ["smvae-s0"]

    def test_unexpected_error_keeps_sibling_runs_on_record(self):
        def crash_seed_zero(kind, data, cfg, seed, marginals=None, run_hash=""):
            if seed == 0:
                msg = "backward already ran on this graph"
                raise GraphError(msg)
            return train_model(kind, data, cfg, seed, marginals, run_hash)

        cfg = tiny_config(models=("vanilla-vae",), seeds=(0, 1))
        with (
            mock.patch("metagen.core.services.training.train_model", side_effect=crash_seed_zero),
            self.assertLogs("metagen.core.services.training", level="ERROR") as logs,
        ):
            result = run_experiment(self.data, cfg, self.tmp / "runs", threads=2)

        assert result.trained == ["vanilla-vae-s1"]
        assert result.failed == {"vanilla-vae-s0": "backward already ran on this graph"}
        assert "Run vanilla-vae-s0 failed" in logs.output[0]
        stored = json.loads((self.tmp / "runs" / "manifest.json").read_text(encoding="utf-8"))
        statuses = {run_id: entry["status"] for run_id, entry in stored["runs"].items()}
        assert statuses == {"vanilla-vae-s0": "failed", "vanilla-vae-s1": "completed"}

        again = run_experiment(self.data, cfg, self.tmp / "runs", threads=2)

        assert again.trained == ["vanilla-vae-s0"]
        assert again.skipped == ["vanilla-vae-s1"]

    def test_checkpoint_write_failure_becomes_a_failed_run(self):
        with (
            mock.patch("metagen.core.generators.base.Generator.save", side_effect=OSError("disk full")),
            self.assertLogs("metagen.core.services.training", level="ERROR"),
        ):
            result = run_experiment(self.data, tiny_config(models=("smvae",)), self.tmp / "runs")

        assert result.failed == {"smvae-s0": "disk full"}
        assert Manifest.for_dir(self.tmp / "runs").runs["smvae-s0"].status == RunStatus.FAILED

    def test_run_marginals_alone(self):
        result = run_marginals(self.data, tiny_config(), self.tmp / "runs")

        assert set(result.trained) == MARGINAL_RUNS
        assert verify_manifest(result.manifest) == []


class ManifestTest(TempDirMixin, SimpleTestCase):
    def entry(self, **overrides) -> RunEntry:
        values = {
            "run_id": "smvae-s0",
            "kind": "smvae",
            "seed": 0,
            "config_hash": "abc",
            "status": RunStatus.COMPLETED,
            "checkpoint": "checkpoints/smvae-s0.npz",
        }
        values.update(overrides)
        return RunEntry(**values)

    def test_missing_file_is_an_empty_manifest(self):
        manifest = Manifest.for_dir(self.tmp)

        assert manifest.runs == {}
        assert manifest.path == self.tmp / "manifest.json"

    def test_save_then_load(self):
        manifest = Manifest.for_dir(self.tmp)
        manifest.record(self.entry())
        manifest.save()

        loaded = Manifest.for_dir(self.tmp)

        assert loaded.runs == manifest.runs
        assert json.loads(manifest.path.read_text())["manifest_version"] == 1

    def test_corrupt_file(self):
        (self.tmp / "manifest.json").write_text("{not json", encoding="utf-8")

        with pytest.raises(ManifestError):
            Manifest.for_dir(self.tmp)

    def test_unknown_status(self):
        (self.tmp / "manifest.json").write_text(
            json.dumps({"runs": {"x": {**self.entry().to_dict(), "status": "lost"}}}), encoding="utf-8"
        )

        with pytest.raises(ManifestError):
            Manifest.for_dir(self.tmp)

    def test_is_current_checks_hash_and_checkpoint_bytes(self):
        checkpoint = self.tmp / "checkpoints" / "smvae-s0.npz"
        checkpoint.parent.mkdir()
        checkpoint.write_bytes(b"weights")
        manifest = Manifest.for_dir(self.tmp)
        manifest.record(self.entry(checkpoint_sha256=file_sha256(checkpoint)))

        assert manifest.is_current("smvae-s0", "abc")
        assert not manifest.is_current("smvae-s0", "other")
        assert not manifest.is_current("vanilla-vae-s0", "abc")

        checkpoint.write_bytes(b"tampered")
        assert not manifest.is_current("smvae-s0", "abc")
        assert verify_manifest(manifest) == ["smvae-s0"]

    def test_mark_dirty_logs_once(self):
        manifest = Manifest.for_dir(self.tmp)
        manifest.record(self.entry())

        with self.assertLogs("metagen.core.services.manifest", level="WARNING") as logs:
            manifest.mark_dirty("smvae-s0", "config changed")
            manifest.mark_dirty("smvae-s0", "config changed")

        assert len(logs.records) == 1
        assert manifest.runs["smvae-s0"].status == RunStatus.DIRTY
        assert manifest.completed() == []
