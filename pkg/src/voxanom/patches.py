"""Foreign-texture patch bank.

Corruptions blend a *foreign patch*, a small sub-volume cut from some
other training image, into the target image. A `PatchBank` keeps a
rolling pool of K such patches so texture stays varied without holding
every source volume in memory: inserts append until the bank is full,
then evict a uniformly random slot.

Patches are augmented on the way out (noise, intensity shift, right-angle
flips plus an optional small trilinear rotation) so the network cannot
memorize bank entries.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import GenerationError, VolumeFormatError
from .shapes import euler_rotation_matrix
from .volume import Volume3D, read_volume, write_volume


@dataclass(frozen=True)
class ForeignPatch:
    """A copied sub-volume with provenance. Must be strictly smaller than
    the image it gets blended into; that bound is checked at placement
    time, where the target is known."""

    data: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"patch data must be 3D, got {data.ndim}D")
        if any(s < 1 for s in data.shape):
            raise ValueError(f"patch dims must be positive, got {data.shape}")
        if data.dtype != np.float32:
            data = data.astype(np.float32)
        if not np.isfinite(data).all():
            raise ValueError("patch intensities must be finite")
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


class PatchBank:
    """Bounded pool of foreign patches with uniform-slot replacement.

    A bank is owned and mutated by one producer; hand `snapshot()` copies
    to anything that samples concurrently. Evolution is a deterministic
    function of (seed, insertion sequence).
    """

    def __init__(self, capacity: int, seed: int = 0):
        if int(capacity) < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.rng_seed = int(seed)
        self._rng = np.random.default_rng(self.rng_seed)
        self._patches: list[ForeignPatch] = []

    def __len__(self) -> int:
        return len(self._patches)

    @property
    def patches(self) -> tuple[ForeignPatch, ...]:
        return tuple(self._patches)

    def snapshot(self) -> tuple[ForeignPatch, ...]:
        """Immutable view of the current membership."""
        return tuple(self._patches)

    def insert_replace(self, p: ForeignPatch) -> "PatchBank":
        if self._patches and p.dims != self._patches[0].dims:
            raise GenerationError(
                f"patch dims {p.dims} do not match bank convention {self._patches[0].dims}")
        if len(self._patches) < self.capacity:
            self._patches.append(p)
        else:
            slot = int(self._rng.integers(0, self.capacity))
            self._patches[slot] = p
        return self


def bank_insert_replace(bank: PatchBank, p: ForeignPatch) -> PatchBank:
    """Append while below capacity, thereafter overwrite a uniformly
    random slot; size never exceeds the capacity."""
    return bank.insert_replace(p)


def sample_patch_from_volume(v: Volume3D, patch_dims, rng: np.random.Generator,
                             source_id: str = "") -> ForeignPatch:
    """Copy a random contiguous sub-volume. The corner is uniform over all
    placements that keep the patch strictly inside the volume (patch dims
    must be strictly smaller than the volume on every axis)."""
    patch_dims = tuple(int(d) for d in patch_dims)
    if any(p < 1 for p in patch_dims):
        raise GenerationError(f"patch dims must be positive, got {patch_dims}")
    if not all(p < d for p, d in zip(patch_dims, v.dims)):
        raise GenerationError(
            f"patch dims {patch_dims} must be strictly smaller than volume dims {v.dims}")
    span = np.asarray(v.dims) - np.asarray(patch_dims)
    corner = rng.integers(0, span + 1)
    sl = tuple(slice(int(c), int(c) + p) for c, p in zip(corner, patch_dims))
    return ForeignPatch(v.data[sl].copy(), source_id=source_id)


def _rot90_steps(rng: np.random.Generator, dims) -> tuple[int, int, int]:
    # quarter turns that would swap unequal axes are not dims-preserving,
    # so those axes only get half turns
    planes = ((1, 2), (0, 2), (0, 1))
    steps = []
    for i, j in planes:
        choices = (0, 1, 2, 3) if dims[i] == dims[j] else (0, 2)
        steps.append(int(choices[rng.integers(0, len(choices))]))
    return tuple(steps)


def _fine_rotate(data: np.ndarray, angles) -> np.ndarray:
    if not any(angles):
        return data
    inv = euler_rotation_matrix(angles).T
    center = (np.asarray(data.shape, dtype=np.float64) - 1.0) / 2.0
    offset = center - inv @ center
    return ndimage.affine_transform(data, inv, offset=offset, order=1,
                                    mode="nearest").astype(np.float32)


def augment_patch(p: ForeignPatch, rng: np.random.Generator, *,
                  noise_sigma: float | None = None,
                  shift: float | None = None,
                  rot90_steps: tuple[int, int, int] | None = None,
                  fine_angles: tuple[float, float, float] | None = None,
                  fine_rotation_prob: float = 0.5,
                  max_fine_angle: float = math.radians(15.0)) -> ForeignPatch:
    """Texture augmentation, applied in order: additive Gaussian noise
    with sigma ~ U[0, 0.05], a global intensity shift ~ U[-0.1, 0.1],
    quarter-turn rotations per axis, an optional small trilinear rotation
    (each angle within 15 degrees), then a clamp to [0, 1].

    Every magnitude can be pinned through the keyword overrides, which
    skips the corresponding draw; by default all come from ``rng``.
    """
    data = p.data.astype(np.float32)
    if noise_sigma is None:
        noise_sigma = float(rng.uniform(0.0, 0.05))
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    if noise_sigma > 0:
        data = data + rng.normal(0.0, noise_sigma, size=data.shape).astype(np.float32)
    if shift is None:
        shift = float(rng.uniform(-0.1, 0.1))
    data = data + np.float32(shift)
    if rot90_steps is None:
        rot90_steps = _rot90_steps(rng, data.shape)
    for (i, j), k in zip(((1, 2), (0, 2), (0, 1)), rot90_steps):
        if k % 4:
            data = np.rot90(data, k=k, axes=(i, j))
    if fine_angles is None:
        if rng.random() < fine_rotation_prob:
            fine_angles = tuple(rng.uniform(-max_fine_angle, max_fine_angle, size=3))
        else:
            fine_angles = (0.0, 0.0, 0.0)
    if any(abs(a) > max_fine_angle + 1e-9 for a in fine_angles):
        raise ValueError(f"fine rotation angles {fine_angles} exceed {max_fine_angle} rad")
    data = _fine_rotate(np.ascontiguousarray(data), fine_angles)
    return ForeignPatch(np.clip(data, 0.0, 1.0), source_id=p.source_id)


def save_bank(bank: PatchBank, out_dir) -> Path:
    """Checkpoint membership as .rvol patches plus bank.json. Restores the
    pool contents only; the replacement rng restarts from the saved seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    source_ids = []
    for i, p in enumerate(bank.patches):
        write_volume(Volume3D(p.data), out_dir / f"patch_{i:04d}.rvol")
        source_ids.append(p.source_id)
    meta = {"capacity": bank.capacity, "seed": bank.rng_seed, "source_ids": source_ids}
    (out_dir / "bank.json").write_text(json.dumps(meta, indent=2) + "\n")
    return out_dir


def load_bank(path) -> PatchBank:
    path = Path(path)
    meta_path = path / "bank.json"
    if not meta_path.exists():
        raise VolumeFormatError(f"missing bank index: {meta_path}")
    meta = json.loads(meta_path.read_text())
    bank = PatchBank(int(meta["capacity"]), seed=int(meta["seed"]))
    for i, source_id in enumerate(meta["source_ids"]):
        vol = read_volume(path / f"patch_{i:04d}.rvol")
        bank.insert_replace(ForeignPatch(vol.data, source_id=str(source_id)))
    return bank
