"""Exception types shared across the toolkit."""


class VoxanomError(Exception):
    """Base class for all toolkit errors."""


class VolumeFormatError(VoxanomError):
    """A volume file or its sidecar is missing, malformed or inconsistent."""


class GenerationError(VoxanomError):
    """Anomaly generation could not produce a valid result."""


class FusionError(VoxanomError):
    """Sliding-window fusion inputs are inconsistent or leave voxels uncovered."""


class EvaluationError(VoxanomError):
    """An evaluation has no defined result (e.g. no positive labels)."""


class ConfigError(VoxanomError):
    """A run configuration failed validation."""
