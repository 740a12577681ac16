class TrainerError(Exception):
    """Base class for trainer failures."""


class TrainerIOError(TrainerError):
    """A volume, manifest or checkpoint file is missing or malformed."""


class TrainerConfigError(TrainerError):
    """A configuration value is invalid or inconsistent with the data."""
