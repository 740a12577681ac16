"""Run configuration.

One JSON file drives the whole pipeline; every tunable that the modules
expose as a default lives here so a run is reproducible from (config,
seed) alone. Loading is strict: unknown keys are rejected and every
value is validated against its module's preconditions, with the failing
field path in the error message. Command-line flags override config
values; all randomness flows from the single root seed.
"""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corruption import GenerationConfig
from .errors import ConfigError
from .scoring import FusionConfig
from .validation import ValidationSetSpec, default_family_counts


@dataclass(frozen=True)
class ShapesConfig:
    """Brush-shape library build parameters: the parameter grid is the
    cartesian product of steps, radii (stated for a 64-voxel canvas) and
    sigmas."""

    count: int = 300
    canvas_dims: tuple[int, int, int] = (64, 64, 64)
    steps: tuple[int, ...] = (10, 20, 40)
    radii: tuple[float, ...] = (2.0, 4.0, 8.0)
    sigmas: tuple[float, ...] = (1.0, 2.0, 4.0)

    def __post_init__(self):
        if int(self.count) < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if any(int(d) < 2 for d in self.canvas_dims):
            raise ValueError(f"canvas_dims must be >= 2, got {self.canvas_dims}")
        if not self.steps or any(int(s) < 1 for s in self.steps):
            raise ValueError(f"steps must be positive integers, got {self.steps}")
        if not self.radii or any(r < 1 for r in self.radii):
            raise ValueError(f"radii must be >= 1, got {self.radii}")
        if not self.sigmas or any(not s > 0 for s in self.sigmas):
            raise ValueError(f"sigmas must be > 0, got {self.sigmas}")
        object.__setattr__(self, "canvas_dims", tuple(int(d) for d in self.canvas_dims))
        object.__setattr__(self, "steps", tuple(int(s) for s in self.steps))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))


@dataclass(frozen=True)
class ValidationConfig:
    counts: dict = field(default_factory=default_family_counts)
    region_size_range: tuple[int, int] = (16, 64)

    def __post_init__(self):
        # delegate the real validation; ValidationSetSpec normalizes too
        spec = ValidationSetSpec(dict(self.counts), 0, self.region_size_range)
        object.__setattr__(self, "counts", spec.counts)
        object.__setattr__(self, "region_size_range", spec.region_size_range)

    def to_spec(self, seed: int) -> ValidationSetSpec:
        return ValidationSetSpec(dict(self.counts), int(seed), self.region_size_range)


@dataclass(frozen=True)
class EvalConfig:
    task: str = "pixel"
    subset: str = "full"
    top_k: int = 100
    subsample: int | None = None
    subsample_seed: int = 0

    def __post_init__(self):
        if self.task not in ("pixel", "sample"):
            raise ValueError(f"task must be pixel or sample, got {self.task!r}")
        if self.subset not in ("full", "baseline"):
            raise ValueError(f"subset must be full or baseline, got {self.subset!r}")
        if int(self.top_k) < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if self.subsample is not None and int(self.subsample) < 1:
            raise ValueError(f"subsample must be >= 1, got {self.subsample}")


@dataclass(frozen=True)
class PathsConfig:
    """Default input/output locations; command-line flags override."""

    volumes: str | None = None
    out: str | None = None
    library: str | None = None
    manifest: str | None = None
    scores: str | None = None
    fuse: str | None = None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    workers: int = 1
    count_per_volume: int = 4
    shapes: ShapesConfig = field(default_factory=ShapesConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self):
        if int(self.workers) < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if int(self.count_per_volume) < 0:
            raise ValueError(f"count_per_volume must be >= 0, got {self.count_per_volume}")


_SECTIONS = {
    "shapes": ShapesConfig,
    "generation": GenerationConfig,
    "validation": ValidationConfig,
    "fusion": FusionConfig,
    "evaluation": EvalConfig,
    "paths": PathsConfig,
}


def _coerce(value):
    if isinstance(value, list):
        return tuple(_coerce(v) for v in value)
    return value


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown key(s) {unknown}")
    kwargs = {}
    for name, value in data.items():
        child = f"{path}.{name}" if path else name
        if cls is RunConfig and name in _SECTIONS:
            kwargs[name] = _build(_SECTIONS[name], value, child)
        elif isinstance(value, dict):
            kwargs[name] = value
        else:
            kwargs[name] = _coerce(value)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def load_config(path=None) -> RunConfig:
    """Defaults when no path is given; otherwise strict-parse the JSON."""
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return _build(RunConfig, data, "")


def config_to_dict(cfg: RunConfig) -> dict:
    """JSON-ready echo of a config (tuples as lists, stable key order)."""
    def convert(obj):
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {f.name: convert(getattr(obj, f.name))
                    for f in dataclasses.fields(obj)}
        if isinstance(obj, tuple):
            return [convert(v) for v in obj]
        if isinstance(obj, dict):
            return {k: convert(v) for k, v in sorted(obj.items())}
        if isinstance(obj, (np.integer,)):
            return int(obj)
        if isinstance(obj, (np.floating,)):
            return float(obj)
        return obj
    return convert(cfg)
