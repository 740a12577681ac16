"""Training configuration.

Defaults describe the full-scale recipe: 160-cubed patches, 35000
steps, max learning rate 1e-3 and weight decay 1e-5 under a one-cycle
schedule, with deep supervision over the last 4 decoder blocks. The
``desk_config`` variant shrinks everything to run on an unremarkable
CPU in minutes: 32-cubed patches, a 3-level network at base width 8,
and a few hundred steps.
"""

from dataclasses import dataclass, asdict, replace

from .errors import TrainerConfigError


@dataclass(frozen=True)
class TrainConfig:
    patch_size: tuple[int, int, int] = (160, 160, 160)
    steps: int = 35000
    max_lr: float = 1e-3
    weight_decay: float = 1e-5
    folds: int = 1
    deep_supervision_levels: int = 4
    levels: int = 5
    base_width: int = 32
    width_cap: int = 320
    batch_size: int = 2
    anomaly_bias: float = 0.5
    seed: int = 0

    def __post_init__(self):
        patch = tuple(int(p) for p in self.patch_size)
        if len(patch) != 3 or min(patch) < 1:
            raise TrainerConfigError(f"patch_size must be 3 positive ints, got {patch}")
        for name in ("steps", "folds", "deep_supervision_levels", "levels",
                     "base_width", "width_cap", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise TrainerConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.max_lr > 0:
            raise TrainerConfigError(f"max_lr must be > 0, got {self.max_lr}")
        if self.weight_decay < 0:
            raise TrainerConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not 0.0 <= self.anomaly_bias <= 1.0:
            raise TrainerConfigError(
                f"anomaly_bias must be in [0, 1], got {self.anomaly_bias}")
        down = 2 ** int(self.levels)
        if any(p % down for p in patch):
            raise TrainerConfigError(
                f"patch_size {patch} must be divisible by 2**levels = {down} "
                "so encoder and decoder resolutions line up")
        object.__setattr__(self, "patch_size", patch)

    @property
    def heads(self) -> int:
        """Number of supervised outputs: the last ``deep_supervision_levels``
        decoder blocks, capped by how many decoder blocks exist."""
        return min(int(self.deep_supervision_levels), int(self.levels))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["patch_size"] = list(self.patch_size)
        return d


def config_from_dict(d: dict) -> TrainConfig:
    known = set(TrainConfig.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise TrainerConfigError(f"unknown config keys {sorted(unknown)}")
    kwargs = dict(d)
    if "patch_size" in kwargs:
        kwargs["patch_size"] = tuple(kwargs["patch_size"])
    return TrainConfig(**kwargs)


def desk_config(**overrides) -> TrainConfig:
    """Desk-scale defaults: a small network trainable in minutes on CPU.

    The values are the tuned desk recipe: 500 steps of batch 8 at
    32-cubed with a 3-level width-8 network, crops biased toward
    anomalies so the short run sees enough positive voxels.
    """
    base = TrainConfig(
        patch_size=(32, 32, 32),
        steps=500,
        folds=1,
        levels=3,
        base_width=8,
        batch_size=8,
        anomaly_bias=0.7,
    )
    return replace(base, **overrides) if overrides else base
