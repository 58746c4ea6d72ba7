from pathlib import Path


class MetagenError(Exception):
    """Base class for every failure the pipeline raises on purpose."""


class DomainError(MetagenError, ValueError):
    """Raised when physical inputs are outside the use case's domain."""

    def __init__(self, quantity: str, value, requirement: str):
        self.quantity = quantity
        self.value = value
        self.requirement = requirement
        super().__init__(f"{quantity}={value!r} violates {requirement}")


class ShapeMismatchError(MetagenError, ValueError):
    """Raised when two arrays that must line up do not."""

    def __init__(self, operation: str, left: tuple, right: tuple):
        self.operation = operation
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(f"{operation}: incompatible shapes {self.left} and {self.right}")


class GraphError(MetagenError, RuntimeError):
    """Raised when the autodiff graph contract is broken (e.g. backward twice)."""


class NonFiniteError(MetagenError, FloatingPointError):
    """Raised when a value that must be finite is NaN or infinite."""

    def __init__(self, what: str):
        self.what = what
        super().__init__(f"{what} contains non-finite values")


class DatasetParseError(MetagenError, ValueError):
    """Raised when a dataset file line cannot be parsed."""

    def __init__(self, path: Path | str, line_number: int, reason: str):
        self.path = Path(path)
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"{self.path}:{line_number}: {reason}")


class SchemaVersionError(MetagenError, ValueError):
    """Raised when a file was written with an incompatible schema version."""

    def __init__(self, path: Path | str, found, expected: int):
        self.path = Path(path)
        self.found = found
        self.expected = expected
        super().__init__(f"{self.path}: schema_version {found!r} is not supported (expected {expected})")


class EmptySampleError(MetagenError, ValueError):
    """Raised when a histogram is requested over zero samples."""

    def __init__(self):
        super().__init__("cannot build a histogram from an empty sample")


class HistogramShapeError(MetagenError, ValueError):
    """Raised when two histograms with different grids are compared."""

    def __init__(self, left, right):
        self.left = left
        self.right = right
        super().__init__(f"histograms are not comparable: {left} vs {right}")


class ConditionMismatchError(MetagenError, ValueError):
    """Raised when generated and reference samples were drawn for different conditions."""

    def __init__(self, n_generated: int, n_reference: int):
        self.n_generated = n_generated
        self.n_reference = n_reference
        super().__init__(
            f"generated ({n_generated}) and reference ({n_reference}) samples do not share the same conditions"
        )


class TrainingDivergedError(MetagenError, FloatingPointError):
    """Raised when a training loss turns non-finite."""

    def __init__(self, run_id: str, epoch: int, loss_name: str = "loss"):
        self.run_id = run_id
        self.epoch = epoch
        self.loss_name = loss_name
        super().__init__(f"{run_id}: {loss_name} became non-finite at epoch {epoch}")


class MissingMarginalsError(MetagenError, ValueError):
    """Raised when a Meta-VAE run is started without its four marginal checkpoints."""

    def __init__(self, missing: list[str]):
        self.missing = missing
        super().__init__(f"Meta-VAE needs pretrained marginals; missing: {', '.join(missing)}")


class CheckpointError(MetagenError, ValueError):
    """Raised when a checkpoint cannot be read or does not match the expected model."""

    def __init__(self, path: Path | str, reason: str):
        self.path = Path(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")


class ConfigFileError(MetagenError, ValueError):
    """Raised for an unreadable or invalid key-value config file."""

    def __init__(self, path: Path | str, line_number: int, reason: str):
        self.path = Path(path)
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"{self.path}:{line_number}: {reason}")


class ReportInputError(MetagenError, ValueError):
    """Raised when report inputs are missing or malformed."""

    def __init__(self, path: Path | str, reason: str):
        self.path = Path(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")


class ManifestError(MetagenError, ValueError):
    """Raised when an experiment manifest cannot be read."""

    def __init__(self, path: Path | str, reason: str):
        self.path = Path(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")


class RunFailureError(MetagenError, RuntimeError):
    """Raised when required training runs did not complete."""

    def __init__(self, failed: dict[str, str]):
        self.failed = failed
        details = "; ".join(f"{run_id}: {message}" for run_id, message in sorted(failed.items()))
        super().__init__(f"{len(failed)} run(s) failed: {details}")
