"""Synthetic corruption of healthy volumes.

A corrupted training sample blends a foreign patch into an image under a
shape-mask weight field:

    x' = x * (1 - a_s) + x_fp * a_s,    a_s = alpha * mask

with a scalar alpha drawn from [0.3, 1] and mask values in [0, 1]. The
per-voxel a_s field is the regression target a detector trains against,
so it is emitted alongside the corrupted image. With edge smoothing the
mask ramps gradually from 0 to 1, which removes the sharp intensity
step that would otherwise give the anomaly boundary away.

`generate_sample` composes the full pipeline (bank draw, patch and shape
augmentation, optional smoothing, alpha and location sampling, blending)
and `emit_dataset` streams it over a corpus into (image, label) pairs
plus a manifest.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import GenerationError
from .patches import ForeignPatch, PatchBank, augment_patch, sample_patch_from_volume
from .shapes import (ShapeLibrary, augment_shape, gen_cuboid, gen_sphere,
                     random_affine, smooth_mask)
from .volume import Volume3D, foreground_mask, read_volume, write_volume

SHAPE_FAMILIES = ("cuboid", "sphere", "brush")
GENERATION_MODES = ("hard", "smoothed", "mixed")


@dataclass(frozen=True)
class AnomalyRecord:
    """Everything needed to describe (and re-create) one placed anomaly.
    kernel_size 0 means a hard-edged mask. The pipeline draws alpha from
    [0.3, 1]; the record itself admits [0, 1] so identity and
    full-replacement cases remain representable in tests and tools."""

    shape_family: str
    alpha: float
    corner: tuple[int, int, int]
    patch_dims: tuple[int, int, int]
    kernel_size: int
    seed: int
    foreground_restricted: bool = False

    def __post_init__(self):
        if self.shape_family not in SHAPE_FAMILIES:
            raise ValueError(f"unknown shape family {self.shape_family!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.kernel_size not in (0, 3, 5, 7):
            raise ValueError(f"kernel_size must be 0 or one of 3,5,7, got {self.kernel_size}")
        corner = tuple(int(c) for c in self.corner)
        dims = tuple(int(d) for d in self.patch_dims)
        if any(c < 0 for c in corner):
            raise ValueError(f"corner must be non-negative, got {corner}")
        if any(d < 1 for d in dims):
            raise ValueError(f"patch dims must be positive, got {dims}")
        object.__setattr__(self, "corner", corner)
        object.__setattr__(self, "patch_dims", dims)
        object.__setattr__(self, "alpha", float(self.alpha))


@dataclass(frozen=True)
class AlphaMap:
    """Per-voxel blend weight over the whole image; zero outside the
    placed patch bounding box."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"alpha map must be 3D, got {data.ndim}D")
        if data.dtype != np.float32:
            data = data.astype(np.float32)
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ValueError("alpha map values must lie in [0, 1]")
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class CorruptedSample:
    image: Volume3D
    label: AlphaMap
    record: AnomalyRecord | None = None

    def __post_init__(self):
        if self.image.dims != self.label.dims:
            raise ValueError(
                f"image dims {self.image.dims} != label dims {self.label.dims}")


def sample_location(image_dims, patch_dims, fg, rng: np.random.Generator,
                    fg_threshold: float = 0.5, retries: int = 25) -> tuple[int, int, int]:
    """Uniform corner such that the patch fits strictly inside the image.

    With a foreground mask, corners are redrawn until the patch region is
    at least ``fg_threshold`` foreground by volume; the retry budget
    exhausting raises a GenerationError.
    """
    image_dims = tuple(int(d) for d in image_dims)
    patch_dims = tuple(int(d) for d in patch_dims)
    if not all(p < d for p, d in zip(patch_dims, image_dims)):
        raise GenerationError(
            f"patch dims {patch_dims} must be strictly smaller than image dims {image_dims}")
    span = np.asarray(image_dims) - np.asarray(patch_dims)
    for _ in range(max(1, int(retries))):
        corner = tuple(int(c) for c in rng.integers(0, span + 1))
        if fg is None:
            return corner
        sl = tuple(slice(c, c + p) for c, p in zip(corner, patch_dims))
        if np.count_nonzero(fg[sl]) >= fg_threshold * np.prod(patch_dims):
            return corner
    raise GenerationError(
        f"no placement with foreground fraction >= {fg_threshold} found in {retries} tries")


def interpolate(x: Volume3D, x_fp: ForeignPatch, mask: np.ndarray, alpha: float,
                corner, record: AnomalyRecord | None = None) -> CorruptedSample:
    """Blend the patch into the image under a_s = alpha * mask.

    Voxels where a_s is exactly zero keep their original bits; blended
    voxels are clamped to [0, 1]. The returned label holds the full-image
    a_s field.
    """
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise GenerationError(f"alpha must be in [0, 1], got {alpha}")
    mask = np.asarray(mask, dtype=np.float32)
    if mask.shape != x_fp.dims:
        raise GenerationError(f"mask dims {mask.shape} != patch dims {x_fp.dims}")
    if mask.size and (mask.min() < 0.0 or mask.max() > 1.0):
        raise GenerationError("mask weights must lie in [0, 1]")
    corner = tuple(int(c) for c in corner)
    if any(c < 0 for c in corner):
        raise GenerationError(f"corner must be non-negative, got {corner}")
    if any(c + p > d for c, p, d in zip(corner, x_fp.dims, x.dims)):
        raise GenerationError(
            f"patch {x_fp.dims} at corner {corner} exceeds image dims {x.dims}")
    a_s = alpha * mask
    sl = tuple(slice(c, c + p) for c, p in zip(corner, x_fp.dims))
    region = x.data[sl]
    blended = np.clip(region * (1.0 - a_s) + x_fp.data * a_s, 0.0, 1.0)
    out = x.data.copy()
    out[sl] = np.where(a_s > 0.0, blended.astype(np.float32), region)
    label = np.zeros(x.dims, dtype=np.float32)
    label[sl] = a_s
    return CorruptedSample(Volume3D(out, x.spacing), AlphaMap(label), record)


@dataclass(frozen=True)
class GenerationConfig:
    """Tunables for one corruption draw. ``mode`` picks the mask edge
    treatment: hard, smoothed, or mixed (an even coin per sample).
    ``families`` restricts the shape families in play."""

    patch_dims: tuple[int, int, int] = (64, 64, 64)
    mode: str = "mixed"
    families: tuple[str, ...] = SHAPE_FAMILIES
    alpha_range: tuple[float, float] = (0.3, 1.0)
    kernel_sizes: tuple[int, ...] = (3, 5, 7)
    foreground_restricted: bool = False
    fg_threshold: float = 0.5
    fg_retries: int = 25
    bank_capacity: int = 32
    cuboid_extent_frac: tuple[float, float] = (0.2, 0.8)
    sphere_radius_frac: tuple[float, float] = (0.1, 0.45)

    def __post_init__(self):
        if self.mode not in GENERATION_MODES:
            raise ValueError(f"mode must be one of {GENERATION_MODES}, got {self.mode!r}")
        if not self.families:
            raise ValueError("families must be non-empty")
        for f in self.families:
            if f not in SHAPE_FAMILIES:
                raise ValueError(f"unknown shape family {f!r}")
        lo, hi = self.alpha_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"alpha_range must satisfy 0 <= lo <= hi <= 1, got {self.alpha_range}")
        for k in self.kernel_sizes:
            if k not in (3, 5, 7):
                raise ValueError(f"kernel sizes must be in (3, 5, 7), got {k}")
        if any(int(d) < 2 for d in self.patch_dims):
            raise ValueError(f"patch dims must be >= 2, got {self.patch_dims}")
        if not 0.0 < self.fg_threshold <= 1.0:
            raise ValueError(f"fg_threshold must be in (0, 1], got {self.fg_threshold}")
        if self.bank_capacity < 1:
            raise ValueError(f"bank_capacity must be >= 1, got {self.bank_capacity}")
        object.__setattr__(self, "patch_dims", tuple(int(d) for d in self.patch_dims))
        object.__setattr__(self, "families", tuple(self.families))
        object.__setattr__(self, "kernel_sizes", tuple(int(k) for k in self.kernel_sizes))


def _draw_mask(library, cfg: GenerationConfig, rng: np.random.Generator):
    dims = cfg.patch_dims
    family = cfg.families[int(rng.integers(0, len(cfg.families)))]
    if family == "cuboid":
        lo, hi = cfg.cuboid_extent_frac
        extent = tuple(max(1.0, float(rng.uniform(lo, hi) * d)) for d in dims)
        base = gen_cuboid(dims, extent, rotation=tuple(rng.uniform(0, 2 * np.pi, 3)))
    elif family == "sphere":
        lo, hi = cfg.sphere_radius_frac
        radius = float(np.clip(rng.uniform(lo, hi) * min(dims), 1.0, min(dims) / 2))
        base = gen_sphere(dims, radius)
    else:
        if library is None or len(library) == 0:
            raise GenerationError("brush family requested but shape library is empty")
        if library.canvas_dims != dims:
            raise GenerationError(
                f"shape library canvas {library.canvas_dims} != patch dims {dims}")
        base = library.shapes[int(rng.integers(0, len(library)))]
    mask = augment_shape(base, random_affine(rng, dims), rng=rng)
    return family, mask


def generate_sample(x: Volume3D, bank: PatchBank, library: ShapeLibrary | None,
                    cfg: GenerationConfig, rng: np.random.Generator,
                    seed: int = 0, source_id: str = "") -> CorruptedSample:
    """One full corruption draw against a source image.

    Pipeline: bank patch -> texture augmentation -> shape draw -> affine
    augmentation -> optional edge smoothing -> alpha -> placement ->
    blend. Pure given the rng state, so a derived per-sample stream makes
    the output independent of scheduling. ``seed`` is bookkeeping echoed
    into the record; ``source_id`` names the volume so its own patches
    are avoided when the bank offers alternatives.
    """
    pool = bank.snapshot() if isinstance(bank, PatchBank) else tuple(bank)
    if not pool:
        raise GenerationError("patch bank is empty")
    idx = int(rng.integers(0, len(pool)))
    if len(pool) > 1 and source_id:
        # keep the texture foreign: skip patches cut from this same volume
        for _ in range(len(pool)):
            if pool[idx].source_id != source_id:
                break
            idx = int(rng.integers(0, len(pool)))
    patch = pool[idx]
    if patch.dims != cfg.patch_dims:
        raise GenerationError(f"bank patch dims {patch.dims} != configured {cfg.patch_dims}")
    patch = augment_patch(patch, rng)
    family, mask = _draw_mask(library, cfg, rng)
    if cfg.mode == "hard":
        smoothed = False
    elif cfg.mode == "smoothed":
        smoothed = True
    else:
        smoothed = bool(rng.random() < 0.5)
    kernel = 0
    if smoothed:
        kernel = int(cfg.kernel_sizes[int(rng.integers(0, len(cfg.kernel_sizes)))])
        mask = smooth_mask(mask, kernel)
    alpha = float(rng.uniform(cfg.alpha_range[0], cfg.alpha_range[1]))
    fg = foreground_mask(x) if cfg.foreground_restricted else None
    corner = sample_location(x.dims, cfg.patch_dims, fg, rng,
                             fg_threshold=cfg.fg_threshold, retries=cfg.fg_retries)
    record = AnomalyRecord(family, alpha, corner, cfg.patch_dims, kernel,
                           int(seed), cfg.foreground_restricted)
    return interpolate(x, patch, mask, alpha, corner, record)


@dataclass(frozen=True)
class _TaggedVolume:
    """Volume plus provenance, so foreign-patch draws can avoid it."""

    volume: Volume3D
    source_id: str


def _build_bank(sources, cfg: GenerationConfig, seed: int) -> PatchBank:
    bank = PatchBank(cfg.bank_capacity, seed=int(np.random.default_rng([seed, 0]).integers(2**31)))
    for i, tagged in enumerate(sources):
        rng = np.random.default_rng([int(seed), 1, i])
        bank.insert_replace(sample_patch_from_volume(
            tagged.volume, cfg.patch_dims, rng, source_id=tagged.source_id))
    return bank


def emit_dataset(volumes, cfg: GenerationConfig, out_dir, count_per_volume: int,
                 seed: int, library: ShapeLibrary | None = None,
                 workers: int = 1) -> dict:
    """Write ``count_per_volume`` corrupted (image, label) pairs per source
    volume, plus manifest.json listing every record.

    Sources are .rvol paths. Unreadable sources are skipped and reported
    in the returned dict (and errors.json) while the rest of the dataset
    still lands. The bank is filled with one patch per readable source
    before any generation, then snapshotted, so outputs are independent
    of worker count; sample (i, j) always uses the rng stream derived
    from (seed, i, j).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if count_per_volume < 0:
        raise ValueError(f"count_per_volume must be >= 0, got {count_per_volume}")
    sources = []
    errors = []
    for i, path in enumerate(volumes):
        path = Path(path)
        try:
            vol = read_volume(path)
            sources.append((i, _TaggedVolume(vol, path.stem)))
        except Exception as exc:  # noqa: BLE001 - each source failure is reported
            errors.append({"source": str(path), "error": str(exc)})
    entries = []
    if sources and count_per_volume > 0:
        bank = _build_bank([t for _, t in sources], cfg, seed)

        def _one(i, tagged, j):
            rng = np.random.default_rng([int(seed), 2, i, j])
            sample_seed = int(rng.integers(2**31))
            sample = generate_sample(tagged.volume, bank, library, cfg, rng,
                                     seed=sample_seed, source_id=tagged.source_id)
            img_name = f"sample_{i:04d}_{j:04d}_img.rvol"
            lbl_name = f"sample_{i:04d}_{j:04d}_lbl.rvol"
            write_volume(sample.image, out_dir / img_name)
            write_volume(Volume3D(sample.label.data, tagged.volume.spacing),
                         out_dir / lbl_name)
            rec = asdict(sample.record)
            rec["corner"] = list(rec["corner"])
            rec["patch_dims"] = list(rec["patch_dims"])
            return {"image_path": img_name, "label_path": lbl_name,
                    "source": tagged.source_id, "record": rec}

        tasks = [(i, tagged, j) for i, tagged in sources for j in range(count_per_volume)]
        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda t: _one(*t), tasks))
        else:
            results = [_one(*t) for t in tasks]
        entries.extend(results)
    (out_dir / "manifest.json").write_text(json.dumps(entries, indent=2) + "\n")
    if errors:
        (out_dir / "errors.json").write_text(json.dumps(errors, indent=2) + "\n")
    return {"entries": entries, "errors": errors}
