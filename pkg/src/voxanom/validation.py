"""Held-out validation anomalies with pixel truth.

Synthetic-corruption detectors cannot be graded on the corruptions they
trained on, so the validation set uses a disjoint battery of localized
perturbations: additive noise (hard and smoothed edges), uniform noise
(hard and smoothed), radial deformations, reflections, and translations
of region content. Each case carries a binary truth volume marking the
perturbed voxels.

The default set composition is 50 healthy cases plus 30 per anomalous
family, 260 cases in all. Cases that end up bitwise-identical to their
source (saturated clamps, symmetric content under reflection) are kept
and flagged ``degenerate`` rather than resampled, so the composition
stays fixed.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import GenerationError
from .shapes import gen_cuboid, smooth_mask
from .volume import Volume3D, read_volume, write_volume

VALIDATION_FAMILIES = ("healthy", "add_noise", "add_noise_smooth", "deform",
                       "reflect", "shift", "uniform_noise", "uniform_noise_smooth")
SMOOTHED_FAMILIES = ("add_noise_smooth", "uniform_noise_smooth")
_SMOOTH_KERNELS = (3, 5, 7)
_REGION_PAD = 3  # canvas margin so smoothing ramps stay inside the region


@dataclass(frozen=True)
class Region:
    """A binary mask on its own canvas plus the canvas corner in image
    coordinates. The canvas is padded around the shape so edge smoothing
    has room to ramp on both sides."""

    mask: np.ndarray
    corner: tuple[int, int, int]

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=np.float32)
        if mask.ndim != 3:
            raise ValueError(f"region mask must be 3D, got {mask.ndim}D")
        if not np.all((mask == 0) | (mask == 1)):
            raise ValueError("region mask must be binary")
        if not mask.any():
            raise ValueError("region mask is empty")
        corner = tuple(int(c) for c in self.corner)
        if any(c < 0 for c in corner):
            raise ValueError(f"region corner must be non-negative, got {corner}")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "corner", corner)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.mask.shape


@dataclass(frozen=True)
class ValidationCase:
    image: Volume3D
    truth: Volume3D
    family: str
    degenerate: bool = False

    def __post_init__(self):
        if self.family not in VALIDATION_FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.image.dims != self.truth.dims:
            raise ValueError(
                f"image dims {self.image.dims} != truth dims {self.truth.dims}")


def _region_slices(region: Region, image_dims) -> tuple[slice, slice, slice]:
    if any(c + m > d for c, m, d in zip(region.corner, region.dims, image_dims)):
        raise GenerationError(
            f"region {region.dims} at corner {region.corner} exceeds image {image_dims}")
    return tuple(slice(c, c + m) for c, m in zip(region.corner, region.dims))


def _weight_field(region: Region, smooth: bool, rng: np.random.Generator) -> np.ndarray:
    if not smooth:
        return region.mask
    kernel = int(_SMOOTH_KERNELS[rng.integers(0, len(_SMOOTH_KERNELS))])
    return smooth_mask(region.mask, kernel)


def _case(x: Volume3D, out, truth_region, region: Region, family: str) -> ValidationCase:
    sl = _region_slices(region, x.dims)
    truth = np.zeros(x.dims, dtype=np.float32)
    truth[sl] = truth_region
    degenerate = np.array_equal(out, x.data)
    return ValidationCase(Volume3D(out, x.spacing), Volume3D(truth, x.spacing),
                          family, degenerate)


def make_additive_noise(x: Volume3D, region: Region, magnitude: float,
                        smooth: bool, rng: np.random.Generator) -> ValidationCase:
    """Add a constant offset of random sign, weighted by the (optionally
    smoothed) region field, clamped to [0, 1]. Truth marks weights above
    0.5, which for a hard region is the mask itself."""
    if not 0.0 < magnitude <= 0.5:
        raise GenerationError(f"magnitude must be in (0, 0.5], got {magnitude}")
    w = _weight_field(region, smooth, rng)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    sl = _region_slices(region, x.dims)
    vals = x.data[sl]
    shifted = np.clip(vals + np.float32(sign * magnitude) * w, 0.0, 1.0)
    out = x.data.copy()
    out[sl] = np.where(w > 0.0, shifted.astype(np.float32), vals)
    family = "add_noise_smooth" if smooth else "add_noise"
    return _case(x, out, (w > 0.5).astype(np.float32), region, family)


def make_uniform_noise(x: Volume3D, region: Region, rng: np.random.Generator,
                       smooth: bool) -> ValidationCase:
    """Blend i.i.d. U[0,1] noise into the region under the weight field."""
    w = _weight_field(region, smooth, rng)
    sl = _region_slices(region, x.dims)
    vals = x.data[sl]
    u = rng.uniform(0.0, 1.0, size=region.dims).astype(np.float32)
    blended = (1.0 - w) * vals + w * u
    out = x.data.copy()
    out[sl] = np.where(w > 0.0, blended.astype(np.float32), vals)
    family = "uniform_noise_smooth" if smooth else "uniform_noise"
    return _case(x, out, (w > 0.5).astype(np.float32), region, family)


def make_deformation(x: Volume3D, region: Region, strength: float,
                     rng: np.random.Generator) -> ValidationCase:
    """Radial sink/source warp inside the region.

    Masked voxels are resampled (trilinear) at a radius scaled by
    ``1 -/+ strength * (1 - r/R)`` about the region center, so the warp is
    strongest at the center and fades to identity at the region boundary.
    The sign (inward pull vs outward push) is a coin flip.
    """
    if not 0.0 < strength <= 1.0:
        raise GenerationError(f"strength must be in (0, 1], got {strength}")
    sign = 1.0 if rng.random() < 0.5 else -1.0
    sl = _region_slices(region, x.dims)
    center = np.asarray(region.corner) + (np.asarray(region.dims) - 1.0) / 2.0
    axes = [np.arange(c, c + m, dtype=np.float64) for c, m in zip(region.corner, region.dims)]
    gx = axes[0][:, None, None] - center[0]
    gy = axes[1][None, :, None] - center[1]
    gz = axes[2][None, None, :] - center[2]
    r = np.sqrt(gx * gx + gy * gy + gz * gz)
    radius = min(region.dims) / 2.0
    factor = 1.0 - sign * strength * np.clip(1.0 - r / radius, 0.0, 1.0)
    coords = np.stack([center[0] + gx * factor,
                       center[1] + gy * factor,
                       center[2] + gz * factor])
    warped = ndimage.map_coordinates(x.data, coords, order=1, mode="nearest")
    vals = x.data[sl]
    out = x.data.copy()
    out[sl] = np.where(region.mask == 1.0, warped.astype(np.float32), vals)
    return _case(x, out, region.mask, region, "deform")


def make_reflection(x: Volume3D, region: Region, rng: np.random.Generator) -> ValidationCase:
    """Mirror the region canvas about a random axis and composite where
    the mask is set. Symmetric content yields a flagged degenerate case."""
    axis = int(rng.integers(0, 3))
    sl = _region_slices(region, x.dims)
    vals = x.data[sl]
    flipped = np.flip(vals, axis=axis)
    out = x.data.copy()
    out[sl] = np.where(region.mask == 1.0, flipped, vals)
    return _case(x, out, region.mask, region, "reflect")


def make_shift(x: Volume3D, region: Region, offset, rng: np.random.Generator) -> ValidationCase:
    """Translate region content by an integer offset, reading from the
    original image with edge clamping, composited under the mask."""
    offset = tuple(int(o) for o in offset)
    if all(o == 0 for o in offset):
        raise GenerationError("shift offset must be non-zero on at least one axis")
    sl = _region_slices(region, x.dims)
    axes = [np.arange(c, c + m) for c, m in zip(region.corner, region.dims)]
    src = [np.clip(ax - o, 0, d - 1) for ax, o, d in zip(axes, offset, x.dims)]
    moved = x.data[np.ix_(src[0], src[1], src[2])]
    vals = x.data[sl]
    out = x.data.copy()
    out[sl] = np.where(region.mask == 1.0, moved, vals)
    return _case(x, out, region.mask, region, "shift")


def default_family_counts() -> dict:
    counts = {f: 30 for f in VALIDATION_FAMILIES}
    counts["healthy"] = 50
    return counts


@dataclass(frozen=True)
class ValidationSetSpec:
    counts: dict = field(default_factory=default_family_counts)
    seed: int = 0
    region_size_range: tuple[int, int] = (16, 64)

    def __post_init__(self):
        for fam, n in self.counts.items():
            if fam not in VALIDATION_FAMILIES:
                raise ValueError(f"unknown family {fam!r}")
            if int(n) < 0:
                raise ValueError(f"count for {fam} must be >= 0, got {n}")
        lo, hi = (int(v) for v in self.region_size_range)
        if not 1 <= lo <= hi:
            raise ValueError(f"region_size_range must satisfy 1 <= lo <= hi, got {self.region_size_range}")
        counts = {f: int(self.counts.get(f, 0)) for f in VALIDATION_FAMILIES}
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "region_size_range", (lo, hi))

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def sample_region(image_dims, rng: np.random.Generator, size_range=(16, 64),
                  pad: int = _REGION_PAD) -> Region:
    """Draw an axis-aligned box region at a uniform location. Box extents
    come from ``size_range`` per axis, clamped so the padded canvas fits."""
    lo, hi = (int(v) for v in size_range)
    extent = []
    for d in image_dims:
        cap = int(d) - 2 * pad
        if cap < 1:
            raise GenerationError(f"image dim {d} too small for a padded region")
        extent.append(int(min(rng.integers(lo, hi + 1), cap)))
    canvas = tuple(e + 2 * pad for e in extent)
    mask = gen_cuboid(canvas, extent)
    corner = tuple(int(rng.integers(0, d - c + 1)) for d, c in zip(image_dims, canvas))
    return Region(mask, corner)


def _make_case(vol: Volume3D, family: str, rng: np.random.Generator,
               spec: ValidationSetSpec) -> ValidationCase:
    if family == "healthy":
        zeros = np.zeros(vol.dims, dtype=np.float32)
        return ValidationCase(Volume3D(vol.data.copy(), vol.spacing),
                              Volume3D(zeros, vol.spacing), "healthy")
    region = sample_region(vol.dims, rng, spec.region_size_range)
    if family in ("add_noise", "add_noise_smooth"):
        magnitude = float(rng.uniform(0.1, 0.5))
        return make_additive_noise(vol, region, magnitude,
                                   family.endswith("smooth"), rng)
    if family in ("uniform_noise", "uniform_noise_smooth"):
        return make_uniform_noise(vol, region, rng, family.endswith("smooth"))
    if family == "deform":
        return make_deformation(vol, region, float(rng.uniform(0.3, 1.0)), rng)
    if family == "reflect":
        return make_reflection(vol, region, rng)
    if family == "shift":
        offset = rng.integers(-8, 9, size=3)
        while not offset.any():
            offset = rng.integers(-8, 9, size=3)
        return make_shift(vol, region, offset, rng)
    raise GenerationError(f"unknown family {family!r}")


def build_validation_set(volumes, spec: ValidationSetSpec, out_dir,
                         workers: int = 1) -> list:
    """Emit the full validation set into ``out_dir``.

    Cases cycle through the held-out volumes in order; case ``k`` draws
    from the rng stream derived from (spec.seed, k), so the set is
    reproducible and independent of worker count. Writes one image and
    one truth volume per case plus validation_manifest.json, and returns
    the manifest entries.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    volumes = [Path(p) for p in volumes]
    plan = [(fam, k) for fam in VALIDATION_FAMILIES for k in range(spec.counts[fam])]
    if plan and not volumes:
        raise GenerationError("validation set requested but no held-out volumes given")
    loaded = {}

    def _one(case_idx, family):
        path = volumes[case_idx % len(volumes)]
        if path not in loaded:
            loaded[path] = read_volume(path)
        vol = loaded[path]
        rng = np.random.default_rng([int(spec.seed), case_idx])
        case = _make_case(vol, family, rng, spec)
        img_name = f"case_{case_idx:04d}.rvol"
        truth_name = f"case_{case_idx:04d}_truth.rvol"
        write_volume(case.image, out_dir / img_name)
        write_volume(case.truth, out_dir / truth_name)
        return {"image_path": img_name, "truth_path": truth_name,
                "family": case.family, "degenerate": bool(case.degenerate),
                "seed": case_idx}

    # volumes are cached up front so worker threads never race the cache
    for path in {volumes[i % len(volumes)] for i in range(len(plan))} if plan else set():
        loaded[path] = read_volume(path)
    tasks = list(enumerate(f for f, _ in plan))
    if workers > 1 and tasks:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(lambda t: _one(*t), tasks))
    else:
        entries = [_one(i, fam) for i, fam in tasks]
    (out_dir / "validation_manifest.json").write_text(json.dumps(entries, indent=2) + "\n")
    return entries
