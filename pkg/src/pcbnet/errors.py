"""Exception hierarchy. Every error carries a machine-parseable category."""

from __future__ import annotations


class PcbnetError(Exception):
    """Base class for all package errors."""

    category = "error"


class DimensionError(PcbnetError):
    """Tensor shapes incompatible with the requested operation."""

    category = "dimension"


class GraphError(PcbnetError):
    """Backward-pass contract violated (e.g. non-scalar loss)."""

    category = "graph"


class LabelError(PcbnetError):
    """Classification target out of range or not binary."""

    category = "label"


class OptimizerError(PcbnetError):
    """Optimizer invoked on a parameter with no gradient."""

    category = "optimizer"


class ConfigError(PcbnetError):
    """Invalid configuration value."""

    category = "config"


class ValidationError(PcbnetError):
    """Dataset records failed validation; message lists offending rows."""

    category = "validation"


class VocabularyError(PcbnetError):
    """Token id outside the vocabulary table."""

    category = "vocabulary"


class InputError(PcbnetError):
    """A modality required by the model is missing from the batch."""

    category = "input"


class CapabilityError(PcbnetError):
    """Operation not supported by this model (e.g. attribution without text)."""

    category = "capability"


class SizeError(PcbnetError):
    """Dataset or split too small for the requested operation."""

    category = "size"


class DatasetLookupError(PcbnetError):
    """Requested record id not present in the dataset."""

    category = "lookup"


class TrainingError(PcbnetError):
    """Training aborted (e.g. non-finite loss)."""

    category = "training"
