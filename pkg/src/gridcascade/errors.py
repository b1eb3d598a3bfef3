"""Exception hierarchy shared across the package.

Every error raised by gridcascade derives from :class:`GridCascadeError` and
carries a short machine-parsable ``category`` used by the CLI for its one-line
exit messages.
"""

from __future__ import annotations


class GridCascadeError(Exception):
    """Base class for all errors raised by this package."""

    category = "error"


class GridFormatError(GridCascadeError):
    """A grid CSV file could not be parsed (names the offending file/row)."""

    category = "grid-format"


class GridValidationError(GridCascadeError):
    """Grid data violates a structural invariant (ids, balance, connectivity)."""

    category = "grid-invalid"


class SolverError(GridCascadeError):
    """The DC power-flow linear system is numerically degenerate."""

    category = "solver"


class InvalidSampleError(GridCascadeError):
    """A cascade sample (or its initial-failure set) is malformed."""

    category = "invalid-sample"


class ShapeError(GridCascadeError):
    """Autodiff primitive invoked with incompatible tensor shapes."""

    category = "shape"


class LabelOverflowError(GridCascadeError):
    """A failure-iteration label exceeds the model's class count."""

    category = "label-overflow"


class CheckpointError(GridCascadeError):
    """Checkpoint file rejected: bad magic, version, or checksum."""

    category = "checkpoint"


class ConfigMismatchError(GridCascadeError):
    """Checkpoint or config disagrees with the expected model configuration."""

    category = "config-mismatch"


class PipelineError(GridCascadeError):
    """A pipeline stage is missing an input artifact or was misconfigured."""

    category = "missing-artifact"
