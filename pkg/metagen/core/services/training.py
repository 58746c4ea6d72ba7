"""Multi-seed training of the marginal VAEs and the four system-level models.

Every random choice comes from a numpy stream keyed by the run seed plus a
purpose tag (initialization, batch order, latent noise, validation noise), so
a run is a pure function of ``(dataset, seed, config)`` no matter which thread
executes it or in what order runs finish.

Runs are independent jobs on a thread pool of ``settings.METAGEN_THREADS``
workers. Only the calling thread touches the manifest: it records each job's
outcome as it completes and rewrites the file, so a crash leaves every finished
run on record.
"""

import csv
import hashlib
import json
import logging
import time
from collections.abc import Callable, Iterator
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings

from metagen.core.autodiff import Adam, bce, frozen
from metagen.core.autodiff.checkpoint import file_sha256
from metagen.core.autodiff.optim import GAN_SETTINGS, VAE_SETTINGS
from metagen.core.errors import (
    CheckpointError,
    DomainError,
    GraphError,
    MissingMarginalsError,
    NonFiniteError,
    TrainingDivergedError,
)
from metagen.core.generators import (
    MODEL_KINDS,
    GanOptimizers,
    Generator,
    MarginalVAE,
    MetaVAE,
    VanillaCGAN,
    cgan_step,
    generator_class,
    load_generator,
)
from metagen.core.services.datagen import DatasetFile, load_dataset, split_dataset, to_arrays
from metagen.core.services.domain import COMPONENTS, COORD_SCALE, ConditionNormalizer, component_slices
from metagen.core.services.manifest import Manifest, RunEntry, RunStatus
from metagen.core.services.version import get_app_version

logger = logging.getLogger(__name__)

DEFAULT_EPOCHS = 200
DEFAULT_BATCH_SIZE = 128
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
EVAL_CHUNK = 2048

# Purpose tags mixed into every seed.
INIT_STREAM = 1
BATCH_STREAM = 2
NOISE_STREAM = 3
VALIDATION_STREAM = 4


@dataclass(frozen=True, slots=True)
class TrainConfig:
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    models: tuple[str, ...] = MODEL_KINDS
    marginal_epochs: int = DEFAULT_EPOCHS
    marginal_seed: int = 0
    lr: float | None = None
    arch: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        if self.epochs < 1:
            raise DomainError("epochs", self.epochs, "epochs >= 1")
        if self.marginal_epochs < 1:
            raise DomainError("marginal_epochs", self.marginal_epochs, "marginal_epochs >= 1")
        if self.batch_size < 1:
            raise DomainError("batch_size", self.batch_size, "batch_size >= 1")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise DomainError("seeds", self.seeds, "a non-empty set of distinct seeds")
        unknown = [kind for kind in self.models if kind not in MODEL_KINDS]
        if unknown or not self.models:
            raise DomainError("models", self.models, f"a non-empty subset of {', '.join(MODEL_KINDS)}")
        if self.lr is not None and self.lr <= 0:
            raise DomainError("lr", self.lr, "lr > 0")

    def optimizer_settings(self, kind: str) -> dict:
        base = GAN_SETTINGS if kind == VanillaCGAN.kind else VAE_SETTINGS
        return {**base, "lr": self.lr} if self.lr is not None else dict(base)


def config_hash(payload: dict) -> str:
    """sha256 of the canonical JSON form of ``payload``."""
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def run_id_for(kind: str, seed: int | None = None, component: str | None = None) -> str:
    if kind == MarginalVAE.kind:
        return f"marginal-{component}"
    return f"{kind}-s{seed}"


# Run logs
# ----------------------------------------------------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float


@dataclass
class RunLog:
    """Per-epoch losses of one run. Epoch 0 holds the losses of the untrained model."""

    run_id: str
    seed: int
    config_hash: str
    epochs: list[EpochRecord] = field(default_factory=list)

    def add(self, epoch: int, train_loss: float, val_loss: float, seconds: float) -> None:
        if self.epochs and epoch <= self.epochs[-1].epoch:
            msg = f"{self.run_id}: epoch {epoch} does not follow epoch {self.epochs[-1].epoch}"
            raise ValueError(msg)
        self.epochs.append(EpochRecord(epoch, train_loss, val_loss, seconds))

    @property
    def initial_val_loss(self) -> float:
        return self.epochs[0].val_loss

    @property
    def final_val_loss(self) -> float:
        return self.epochs[-1].val_loss

    def val_losses(self) -> list[float]:
        return [record.val_loss for record in self.epochs]

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["epoch", "train_loss", "val_loss", "seconds"])
            writer.writeheader()
            for record in self.epochs:
                writer.writerow(asdict(record))
        return path


# Data
# ----------------------------------------------------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Split:
    """Normalized network inputs: systems divided by COORD_SCALE, conditions normalized."""

    systems: np.ndarray
    cond: np.ndarray

    def __len__(self) -> int:
        return len(self.systems)


@dataclass(frozen=True, slots=True)
class TrainingData:
    train: Split
    validation: Split
    normalizer: ConditionNormalizer
    n_points: int
    dataset_sha256: str = ""


def prepare_data(dataset: DatasetFile, dataset_sha256: str = "") -> TrainingData:
    """Split 90/10 by dataset seed, render, and normalize with statistics of the training part."""
    train_records, validation_records = split_dataset(dataset.records, dataset.seed)
    if not validation_records:
        raise DomainError("n_records", len(dataset.records), "at least 2 records to hold out a validation set")
    train = to_arrays(train_records, dataset.n_points)
    validation = to_arrays(validation_records, dataset.n_points)
    normalizer = ConditionNormalizer.fit(train.m_cube)

    def split(arrays) -> Split:
        return Split(arrays.systems / COORD_SCALE, normalizer.transform(arrays.x, arrays.y, arrays.m_cube))

    logger.info("Training on %d records, validating on %d", len(train), len(validation))
    return TrainingData(split(train), split(validation), normalizer, dataset.n_points, dataset_sha256)


def batch_indices(n: int, batch_size: int, seed: int, epoch: int) -> Iterator[np.ndarray]:
    """Shuffled minibatches, a pure function of ``(seed, epoch)``."""
    order = np.random.default_rng([seed, epoch, BATCH_STREAM]).permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


# Single runs
# ----------------------------------------------------------------------------------------------------------------------


def _inputs_for(model: Generator, split: Split, idx) -> tuple[np.ndarray, np.ndarray]:
    systems = split.systems[idx]
    if isinstance(model, MarginalVAE):
        part = component_slices(model.n_points)[model.component]
        systems = systems[:, part]
    return systems, split.cond[idx]


def _vae_loss_over(model: Generator, split: Split, rng: np.random.Generator) -> float:
    """Sample-weighted mean loss over ``split`` without recording a graph."""
    total = 0.0
    with frozen(model):
        for start in range(0, len(split), EVAL_CHUNK):
            idx = slice(start, start + EVAL_CHUNK)
            systems, cond = _inputs_for(model, split, idx)
            total += model.loss(systems, cond, rng).item() * len(systems)
    return total / len(split)


def _gan_loss_over(model: VanillaCGAN, split: Split, rng: np.random.Generator) -> float:
    """Discriminator loss on real and generated systems of ``split``."""
    total = 0.0
    with frozen(model):
        for start in range(0, len(split), EVAL_CHUNK):
            systems, cond = split.systems[start : start + EVAL_CHUNK], split.cond[start : start + EVAL_CHUNK]
            fake = model.decode(rng.standard_normal((len(systems), model.latent_dim)), cond)
            loss = bce(model.critic(systems, cond), 1.0) + bce(model.critic(fake, cond), 0.0)
            total += loss.item() * len(systems)
    return total / len(split)


def _check_finite(run_id: str, epoch: int, value: float, name: str = "loss") -> None:
    if not np.isfinite(value):
        raise TrainingDivergedError(run_id, epoch, name)


def fit(
    model: Generator,
    data: TrainingData,
    *,
    run_id: str,
    seed: int,
    epochs: int,
    batch_size: int,
    optimizer_settings: dict,
    run_hash: str = "",
) -> RunLog:
    """Train ``model`` in place for a fixed budget; no early stopping."""
    log = RunLog(run_id, seed, run_hash)
    is_gan = isinstance(model, VanillaCGAN)
    if is_gan:
        optimizers = GanOptimizers(model, **optimizer_settings)

        def evaluate(split: Split) -> float:
            return _gan_loss_over(model, split, np.random.default_rng([seed, VALIDATION_STREAM]))
    else:
        optimizer = Adam(model.trainable_parameters(), **optimizer_settings)

        def evaluate(split: Split) -> float:
            return _vae_loss_over(model, split, np.random.default_rng([seed, VALIDATION_STREAM]))

    try:
        log.add(0, evaluate(data.train), evaluate(data.validation), 0.0)
    except NonFiniteError as e:
        raise TrainingDivergedError(run_id, 0) from e
    _check_finite(run_id, 0, log.initial_val_loss, "validation loss")

    for epoch in range(1, epochs + 1):
        started = time.perf_counter()
        noise = np.random.default_rng([seed, epoch, NOISE_STREAM])
        total = 0.0
        try:
            for idx in batch_indices(len(data.train), batch_size, seed, epoch):
                systems, cond = _inputs_for(model, data.train, idx)
                if is_gan:
                    losses = cgan_step(model, optimizers, systems, cond, noise)
                    step_loss = losses.g_loss
                    _check_finite(run_id, epoch, losses.d_loss, "discriminator loss")
                else:
                    optimizer.zero_grad()
                    loss = model.loss(systems, cond, noise)
                    step_loss = loss.item()
                    _check_finite(run_id, epoch, step_loss)
                    loss.backward()
                    optimizer.step()
                total += step_loss * len(idx)
            val_loss = evaluate(data.validation)
        except NonFiniteError as e:
            raise TrainingDivergedError(run_id, epoch) from e
        _check_finite(run_id, epoch, val_loss, "validation loss")
        log.add(epoch, total / len(data.train), val_loss, time.perf_counter() - started)
        logger.info("%s epoch %d/%d: train %.6g, val %.6g", run_id, epoch, epochs, total / len(data.train), val_loss)
    return log


def marginal_run_hash(component: str, data: TrainingData, cfg: TrainConfig) -> str:
    return config_hash(
        {
            "kind": MarginalVAE.kind,
            "component": component,
            "seed": cfg.marginal_seed,
            "epochs": cfg.marginal_epochs,
            "batch_size": cfg.batch_size,
            "optimizer": cfg.optimizer_settings(MarginalVAE.kind),
            "arch": cfg.arch.get(MarginalVAE.kind, {}),
            "dataset": data.dataset_sha256,
        }
    )


def model_run_hash(kind: str, seed: int, data: TrainingData, cfg: TrainConfig, marginal_hashes=None) -> str:
    payload = {
        "kind": kind,
        "seed": seed,
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "optimizer": cfg.optimizer_settings(kind),
        "arch": cfg.arch.get(kind, {}),
        "dataset": data.dataset_sha256,
    }
    if kind == MetaVAE.kind:
        payload["marginals"] = dict(sorted((marginal_hashes or {}).items()))
    return config_hash(payload)


def train_marginal(component: str, data: TrainingData, cfg: TrainConfig) -> tuple[MarginalVAE, RunLog]:
    seed = cfg.marginal_seed
    overrides = cfg.arch.get(MarginalVAE.kind, {}).get(component, {})
    model = MarginalVAE.for_component(
        component, np.random.default_rng([seed, INIT_STREAM]), n_points=data.n_points, **overrides
    )
    model.normalizer = data.normalizer
    log = fit(
        model,
        data,
        run_id=run_id_for(MarginalVAE.kind, component=component),
        seed=seed,
        epochs=cfg.marginal_epochs,
        batch_size=cfg.batch_size,
        optimizer_settings=cfg.optimizer_settings(MarginalVAE.kind),
        run_hash=marginal_run_hash(component, data, cfg),
    )
    return model, log


def train_model(
    kind: str,
    data: TrainingData,
    cfg: TrainConfig,
    seed: int,
    marginals: dict[str, MarginalVAE] | None = None,
    run_hash: str = "",
) -> tuple[Generator, RunLog]:
    """Train one system-level model; the Meta-VAE needs all four pretrained marginals."""
    rng = np.random.default_rng([seed, INIT_STREAM])
    arch = {"n_points": data.n_points, **cfg.arch.get(kind, {})}
    if kind == MetaVAE.kind:
        missing = [name for name in COMPONENTS if not marginals or name not in marginals]
        if missing:
            raise MissingMarginalsError(missing)
        model = MetaVAE(arch, rng, marginals=marginals)
    else:
        model = generator_class(kind)(arch, rng)
    model.normalizer = data.normalizer

    digest_before = model.marginal_digest() if isinstance(model, MetaVAE) else None
    run_id = run_id_for(kind, seed)
    log = fit(
        model,
        data,
        run_id=run_id,
        seed=seed,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        optimizer_settings=cfg.optimizer_settings(kind),
        run_hash=run_hash,
    )
    if digest_before is not None and model.marginal_digest() != digest_before:
        msg = f"{run_id}: marginal decoder weights changed during training"
        raise GraphError(msg)
    return model, log


# Experiments
# ----------------------------------------------------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    manifest: Manifest
    trained: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class _Job:
    run_id: str
    kind: str
    seed: int
    run_hash: str
    train: Callable[[], tuple[Generator, RunLog]]
    component: str = ""


def _checkpoint_path(out_dir: Path, run_id: str) -> Path:
    return Path(out_dir) / "checkpoints" / f"{run_id}.npz"


def _runlog_path(out_dir: Path, run_id: str) -> Path:
    return Path(out_dir) / "logs" / f"{run_id}.csv"


def _execute(job: _Job, out_dir: Path) -> RunEntry:
    """Run one job in a worker thread; any failure becomes a failed entry so sibling runs still get recorded."""
    entry = RunEntry(
        run_id=job.run_id,
        kind=job.kind,
        seed=job.seed,
        config_hash=job.run_hash,
        status=RunStatus.FAILED,
        app_version=get_app_version(),
        component=job.component,
    )
    try:
        model, log = job.train()
        checkpoint = model.save(_checkpoint_path(out_dir, job.run_id), seed=job.seed, config_hash=job.run_hash)
        runlog = log.write_csv(_runlog_path(out_dir, job.run_id))
    except Exception as e:
        logger.exception("Run %s failed", job.run_id)
        entry.message = str(e) or type(e).__name__
        return entry
    entry.status = RunStatus.COMPLETED
    entry.checkpoint = checkpoint.relative_to(out_dir).as_posix()
    entry.checkpoint_sha256 = file_sha256(checkpoint)
    entry.runlog = runlog.relative_to(out_dir).as_posix()
    logger.info("Run %s completed (val loss %.6g -> %.6g)", job.run_id, log.initial_val_loss, log.final_val_loss)
    return entry


def _run_jobs(jobs: list[_Job], manifest: Manifest, out_dir: Path, threads: int, result: ExperimentResult) -> None:
    if not jobs:
        return
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = {pool.submit(_execute, job, out_dir): job for job in jobs}
        for future in as_completed(futures):
            entry = future.result()
            manifest.record(entry)
            manifest.save()
            if entry.status == RunStatus.COMPLETED:
                result.trained.append(entry.run_id)
            else:
                result.failed[entry.run_id] = entry.message


def _plan(manifest: Manifest, run_id: str, run_hash: str, result: ExperimentResult) -> bool:
    """True when ``run_id`` must be (re)trained; marks stale completed runs dirty."""
    if manifest.is_current(run_id, run_hash):
        result.skipped.append(run_id)
        return False
    entry = manifest.runs.get(run_id)
    if entry is not None and entry.status == RunStatus.COMPLETED:
        reason = "config changed" if entry.config_hash != run_hash else "checkpoint missing or modified"
        manifest.mark_dirty(run_id, reason)
    return True


def _load_marginals(manifest: Manifest) -> dict[str, MarginalVAE]:
    marginals = {}
    for entry in manifest.completed(MarginalVAE.kind):
        try:
            model, _ = load_generator(manifest.resolve(entry.checkpoint), MarginalVAE.kind)
        except CheckpointError:
            logger.exception("Cannot load marginal checkpoint of %s", entry.run_id)
            continue
        marginals[model.component] = model
    return marginals


def _marginal_hashes(manifest: Manifest) -> dict[str, str]:
    return {
        entry.component: entry.checkpoint_sha256
        for entry in manifest.completed(MarginalVAE.kind)
        if entry.component in COMPONENTS
    }


def run_marginals(data: TrainingData, cfg: TrainConfig, out_dir: Path, threads: int | None = None) -> ExperimentResult:
    """Pretrain (or reuse) the four marginal VAEs of ``out_dir``."""
    out_dir = Path(out_dir)
    manifest = Manifest.for_dir(out_dir)
    result = ExperimentResult(manifest)
    jobs = []
    for component in COMPONENTS:
        run_id = run_id_for(MarginalVAE.kind, component=component)
        run_hash = marginal_run_hash(component, data, cfg)
        if _plan(manifest, run_id, run_hash, result):
            jobs.append(
                _Job(
                    run_id,
                    MarginalVAE.kind,
                    cfg.marginal_seed,
                    run_hash,
                    lambda component=component: train_marginal(component, data, cfg),
                    component=component,
                )
            )
    manifest.save()
    _run_jobs(jobs, manifest, out_dir, threads or settings.METAGEN_THREADS, result)
    return result


def run_experiment(
    data: TrainingData, cfg: TrainConfig, out_dir: Path, threads: int | None = None
) -> ExperimentResult:
    """Marginals first (when a Meta-VAE is requested), then every model kind × seed."""
    out_dir = Path(out_dir)
    threads = threads or settings.METAGEN_THREADS
    if MetaVAE.kind in cfg.models:
        result = run_marginals(data, cfg, out_dir, threads)
        manifest = result.manifest
    else:
        manifest = Manifest.for_dir(out_dir)
        result = ExperimentResult(manifest)

    marginals = _load_marginals(manifest) if MetaVAE.kind in cfg.models else {}
    marginal_hashes = _marginal_hashes(manifest)
    jobs = []
    for kind in cfg.models:
        for seed in cfg.seeds:
            run_id = run_id_for(kind, seed)
            run_hash = model_run_hash(kind, seed, data, cfg, marginal_hashes)
            if _plan(manifest, run_id, run_hash, result):
                jobs.append(
                    _Job(
                        run_id,
                        kind,
                        seed,
                        run_hash,
                        lambda kind=kind, seed=seed, run_hash=run_hash: train_model(
                            kind, data, cfg, seed, marginals, run_hash
                        ),
                    )
                )
    manifest.save()
    _run_jobs(jobs, manifest, out_dir, threads, result)
    logger.info(
        "Experiment in %s: %d trained, %d up to date, %d failed",
        out_dir,
        len(result.trained),
        len(result.skipped),
        len(result.failed),
    )
    return result


def load_training_data(dataset_path: Path) -> TrainingData:
    dataset_path = Path(dataset_path)
    return prepare_data(load_dataset(dataset_path), file_sha256(dataset_path))


def verify_manifest(manifest: Manifest) -> list[str]:
    """Run ids whose checkpoint no longer matches the manifest."""
    problems = []
    for entry in manifest.completed():
        path = manifest.resolve(entry.checkpoint)
        if not path.is_file() or file_sha256(path) != entry.checkpoint_sha256:
            problems.append(entry.run_id)
    return problems

