"""Pixel-score assembly.

A detector scores one patch-sized window at a time; whole-volume score
maps come from sliding-window fusion: windows are planned with a fixed
overlap (last window clamped flush to each boundary), every window's
scores are weighted by a separable Gaussian bump peaked at the window
center, and per-voxel sums are normalized by the accumulated weight.
Center-weighting damps the usual artifacts at window seams, where
predictions are least reliable.

Also here: the voxelwise ensemble mean, the sample-level score (mean of
the 100 highest voxel scores), a deterministic gradient-magnitude
baseline scorer that stands in for a trained model in end-to-end tests,
and the on-disk exchange format for externally produced window scores.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FusionError, VolumeFormatError
from .volume import Volume3D

_WEIGHT_FLOOR = 1e-8


@dataclass(frozen=True)
class FusionConfig:
    patch_size: tuple[int, int, int] = (160, 160, 160)
    overlap: float = 0.5
    gaussian_sigma_fraction: float = 0.125

    def __post_init__(self):
        if any(int(p) < 1 for p in self.patch_size):
            raise ValueError(f"patch_size must be positive, got {self.patch_size}")
        if not 0.0 <= self.overlap < 1.0:
            raise ValueError(f"overlap must be in [0, 1), got {self.overlap}")
        if not self.gaussian_sigma_fraction > 0:
            raise ValueError(
                f"gaussian_sigma_fraction must be > 0, got {self.gaussian_sigma_fraction}")
        object.__setattr__(self, "patch_size", tuple(int(p) for p in self.patch_size))


@dataclass(frozen=True)
class Window:
    corner: tuple[int, int, int]
    size: tuple[int, int, int]

    def __post_init__(self):
        corner = tuple(int(c) for c in self.corner)
        size = tuple(int(s) for s in self.size)
        if any(c < 0 for c in corner):
            raise ValueError(f"window corner must be non-negative, got {corner}")
        if any(s < 1 for s in size):
            raise ValueError(f"window size must be positive, got {size}")
        object.__setattr__(self, "corner", corner)
        object.__setattr__(self, "size", size)

    @property
    def slices(self) -> tuple[slice, slice, slice]:
        return tuple(slice(c, c + s) for c, s in zip(self.corner, self.size))


def plan_windows(volume_dims, cfg: FusionConfig) -> list[Window]:
    """Sliding-window layout covering every voxel.

    Per axis the stride is floor(patch * (1 - overlap)), at least 1;
    starts advance by the stride and the final start is clamped so the
    last window ends flush at the boundary. Patches larger than the
    volume shrink to the volume on that axis.
    """
    volume_dims = tuple(int(d) for d in volume_dims)
    starts_per_axis = []
    sizes = []
    for d, p in zip(volume_dims, cfg.patch_size):
        p = min(p, d)
        sizes.append(p)
        stride = max(1, int(p * (1.0 - cfg.overlap)))
        starts = list(range(0, d - p + 1, stride))
        if starts[-1] != d - p:
            starts.append(d - p)
        starts_per_axis.append(starts)
    windows = []
    size = tuple(sizes)
    for sx in starts_per_axis[0]:
        for sy in starts_per_axis[1]:
            for sz in starts_per_axis[2]:
                windows.append(Window((sx, sy, sz), size))
    return windows


def gaussian_importance(size, sigma_fraction: float = 0.125) -> np.ndarray:
    """Separable Gaussian bump over a window, peak 1 at the center,
    sigma = sigma_fraction * size per axis, floored at 1e-8 so corner
    weights never vanish."""
    parts = []
    for n in (int(s) for s in size):
        center = (n - 1) / 2.0
        sigma = max(sigma_fraction * n, np.finfo(np.float64).tiny)
        x = np.arange(n, dtype=np.float64) - center
        parts.append(np.exp(-(x * x) / (2.0 * sigma * sigma)))
    w = parts[0][:, None, None] * parts[1][None, :, None] * parts[2][None, None, :]
    return np.maximum(w, _WEIGHT_FLOOR)


def fuse_scores(patch_scores, cfg: FusionConfig, volume_dims=None,
                spacing=(1.0, 1.0, 1.0)) -> Volume3D:
    """Blend per-window score patches into one volume.

    Each entry is a (Window, scores) pair with scores shaped like the
    window. Output per voxel is sum(w*s)/sum(w) over covering windows
    with Gaussian importance weights, which keeps values inside the
    convex hull of the inputs; a voxel no window covers is an error.
    Volume dims default to the tightest box enclosing all windows.
    """
    patch_scores = list(patch_scores)
    if not patch_scores:
        raise FusionError("no patch scores to fuse")
    if volume_dims is None:
        volume_dims = tuple(
            max(w.corner[a] + w.size[a] for w, _ in patch_scores) for a in range(3))
    volume_dims = tuple(int(d) for d in volume_dims)
    num = np.zeros(volume_dims, dtype=np.float64)
    den = np.zeros(volume_dims, dtype=np.float64)
    weights = {}
    for window, scores in patch_scores:
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != window.size:
            raise FusionError(
                f"scores shaped {scores.shape} do not match window size {window.size}")
        if any(c + s > d for c, s, d in zip(window.corner, window.size, volume_dims)):
            raise FusionError(
                f"window {window.corner}+{window.size} exceeds volume {volume_dims}")
        if not np.isfinite(scores).all():
            raise FusionError("window scores must be finite")
        if scores.size and (scores.min() < -1e-6 or scores.max() > 1.0 + 1e-6):
            raise FusionError("window scores must lie in [0, 1]")
        if window.size not in weights:
            weights[window.size] = gaussian_importance(window.size,
                                                       cfg.gaussian_sigma_fraction)
        w = weights[window.size]
        sl = window.slices
        num[sl] += w * scores
        den[sl] += w
    if (den == 0.0).any():
        uncovered = int((den == 0.0).sum())
        raise FusionError(f"{uncovered} voxel(s) not covered by any window")
    fused = np.clip(num / den, 0.0, 1.0).astype(np.float32)
    return Volume3D(fused, spacing)


def ensemble_mean(maps) -> Volume3D:
    """Voxelwise arithmetic mean of score volumes of identical dims."""
    maps = list(maps)
    if not maps:
        raise FusionError("ensemble of zero maps")
    dims = maps[0].dims
    for m in maps[1:]:
        if m.dims != dims:
            raise FusionError(f"ensemble dims mismatch: {m.dims} vs {dims}")
    stacked = np.stack([m.data.astype(np.float64) for m in maps])
    return Volume3D(stacked.mean(axis=0).astype(np.float32), maps[0].spacing)


def sample_score(score_map, top_k: int = 100) -> float:
    """Mean of the ``top_k`` highest voxel scores (the sample-level
    anomaly score). Volumes smaller than ``top_k`` average everything."""
    data = score_map.data if isinstance(score_map, Volume3D) else np.asarray(score_map)
    flat = data.reshape(-1)
    if flat.size == 0:
        raise FusionError("cannot score an empty map")
    if flat.size <= top_k:
        return float(flat.mean())
    top = np.partition(flat, flat.size - top_k)[flat.size - top_k:]
    return float(top.mean())


def baseline_gradient_scorer(x: Volume3D) -> Volume3D:
    """Normalized gradient-magnitude scores: central differences per axis,
    magnitude min-max scaled to [0, 1] (constant volumes score 0). A crude
    stand-in for a learned scorer, useful because blended-in anomalies
    with hard mask edges create strong local gradients."""
    gx, gy, gz = np.gradient(x.data.astype(np.float64))
    mag = np.sqrt(gx * gx + gy * gy + gz * gz)
    lo, hi = float(mag.min()), float(mag.max())
    if hi > lo:
        mag = (mag - lo) / (hi - lo)
    else:
        mag = np.zeros_like(mag)
    return Volume3D(mag.astype(np.float32), x.spacing)


def write_window_scores(out_dir, patch_scores, volume_dims) -> Path:
    """Persist (window, scores) pairs in the exchange layout: for each
    window an index file window_NNNNN.json and a raw little-endian float32
    payload window_NNNNN.rvol (x-fastest order), self-describing via the
    index fields corner/size/volume_dims/dtype/order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    volume_dims = [int(d) for d in volume_dims]
    for i, (window, scores) in enumerate(patch_scores):
        scores = np.asarray(scores, dtype=np.float32)
        if scores.shape != window.size:
            raise FusionError(
                f"scores shaped {scores.shape} do not match window size {window.size}")
        meta = {"corner": list(window.corner), "size": list(window.size),
                "volume_dims": volume_dims, "dtype": "f32le", "order": "xyz"}
        (out_dir / f"window_{i:05d}.json").write_text(
            json.dumps(meta, separators=(",", ":")) + "\n")
        (out_dir / f"window_{i:05d}.rvol").write_bytes(
            scores.astype("<f4", copy=False).tobytes(order="F"))
    return out_dir


def read_window_scores(path):
    """Load an exchange directory back into ([(Window, scores)], dims).

    Validates the same fields the volume sidecar reader does: exact key
    set, f32le dtype, xyz order, and payload length matching the window.
    """
    path = Path(path)
    metas = sorted(path.glob("window_*.json"))
    if not metas:
        raise VolumeFormatError(f"no window_*.json files in {path}")
    pairs = []
    volume_dims = None
    required = {"corner", "size", "volume_dims", "dtype", "order"}
    for meta_path in metas:
        try:
            meta = json.loads(meta_path.read_text())
        except json.JSONDecodeError as exc:
            raise VolumeFormatError(f"invalid JSON in {meta_path}: {exc}") from exc
        if set(meta) != required:
            raise VolumeFormatError(
                f"{meta_path}: expected keys {sorted(required)}, got {sorted(meta)}")
        if meta["dtype"] != "f32le":
            raise VolumeFormatError(f"{meta_path}: unsupported dtype {meta['dtype']!r}")
        if meta["order"] != "xyz":
            raise VolumeFormatError(f"{meta_path}: unsupported order {meta['order']!r}")
        window = Window(tuple(meta["corner"]), tuple(meta["size"]))
        dims = tuple(int(d) for d in meta["volume_dims"])
        if volume_dims is None:
            volume_dims = dims
        elif dims != volume_dims:
            raise VolumeFormatError(
                f"{meta_path}: volume_dims {dims} disagree with {volume_dims}")
        payload_path = meta_path.with_suffix(".rvol")
        if not payload_path.exists():
            raise VolumeFormatError(f"missing payload: {payload_path}")
        payload = payload_path.read_bytes()
        expected = int(np.prod(window.size)) * 4
        if len(payload) != expected:
            raise VolumeFormatError(
                f"{payload_path}: payload is {len(payload)} bytes, expected {expected}")
        scores = np.frombuffer(payload, dtype="<f4").reshape(window.size, order="F").copy()
        pairs.append((window, scores))
    return pairs, volume_dims
