"""Dense 3D volume container with raw binary file I/O.

A volume is a float32 scalar grid with per-axis voxel spacing in
millimeters. Arrays are indexed ``[x, y, z]`` with ``shape == (W, H, D)``.

On disk a volume is a pair of files sharing a basename:

* ``<name>.rvol`` -- raw little-endian float32 payload with x varying
  fastest, then y, then z (Fortran order relative to ``(W, H, D)``
  indexing). Its byte length must equal ``W * H * D * 4``.
* ``<name>.json`` -- sidecar
  ``{"dims": [W, H, D], "spacing": [sx, sy, sz], "dtype": "f32le",
  "order": "xyz"}``.

Writing is deterministic: the same volume always produces the same bytes,
and ``read_volume(write_volume(v))`` is bitwise-identical to ``v``.

Volumes are treated as immutable after construction; operations return
new instances and are safe to call from multiple threads.
"""

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import VolumeFormatError

SIDECAR_KEYS = ("dims", "spacing", "dtype", "order")


@dataclass(frozen=True)
class Volume3D:
    """Float32 grid of shape (W, H, D) plus voxel spacing in mm."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"volume data must be 3-dimensional, got shape {data.shape}")
        if min(data.shape) < 1:
            raise ValueError(f"volume dims must be positive, got {data.shape}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3:
            raise ValueError("spacing must have 3 components")
        if not all(math.isfinite(s) and s > 0 for s in spacing):
            raise ValueError(f"spacing components must be positive and finite, got {spacing}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)


def _paths(path) -> tuple[Path, Path]:
    path = Path(path)
    if path.suffix != ".rvol":
        path = path.with_suffix(".rvol")
    return path, path.with_suffix(".json")


def read_volume(path) -> Volume3D:
    """Read a ``.rvol`` + sidecar pair, validating both."""
    rvol_path, sidecar_path = _paths(path)
    if not rvol_path.exists():
        raise VolumeFormatError(f"missing volume payload: {rvol_path}")
    if not sidecar_path.exists():
        raise VolumeFormatError(f"missing sidecar: {sidecar_path}")
    try:
        meta = json.loads(sidecar_path.read_text())
    except json.JSONDecodeError as exc:
        raise VolumeFormatError(f"sidecar is not valid JSON: {sidecar_path}: {exc}") from exc
    if not isinstance(meta, dict):
        raise VolumeFormatError(f"sidecar must be a JSON object: {sidecar_path}")
    unknown = set(meta) - set(SIDECAR_KEYS)
    if unknown:
        raise VolumeFormatError(f"sidecar has unknown keys {sorted(unknown)}: {sidecar_path}")
    missing = set(SIDECAR_KEYS) - set(meta)
    if missing:
        raise VolumeFormatError(f"sidecar missing keys {sorted(missing)}: {sidecar_path}")

    dims = meta["dims"]
    if (not isinstance(dims, list) or len(dims) != 3
            or not all(isinstance(d, int) and d > 0 for d in dims)):
        raise VolumeFormatError(f"dims: expected 3 positive integers, got {dims!r}")
    spacing = meta["spacing"]
    if (not isinstance(spacing, list) or len(spacing) != 3
            or not all(isinstance(s, (int, float)) and math.isfinite(s) and s > 0 for s in spacing)):
        raise VolumeFormatError(f"spacing: expected 3 positive finite reals, got {spacing!r}")
    if meta["dtype"] != "f32le":
        raise VolumeFormatError(f"dtype: unsupported value {meta['dtype']!r} (expected 'f32le')")
    if meta["order"] != "xyz":
        raise VolumeFormatError(f"order: unsupported value {meta['order']!r} (expected 'xyz')")

    payload = rvol_path.read_bytes()
    expected = dims[0] * dims[1] * dims[2] * 4
    if len(payload) != expected:
        raise VolumeFormatError(
            f"payload size mismatch: dims {dims} require {expected} bytes, "
            f"file has {len(payload)}: {rvol_path}")
    data = np.frombuffer(payload, dtype="<f4").reshape(dims, order="F").copy()
    if not np.isfinite(data).all():
        raise VolumeFormatError(f"data: payload contains non-finite values: {rvol_path}")
    return Volume3D(data, tuple(float(s) for s in spacing))


def write_volume(v: Volume3D, path) -> None:
    """Write payload + sidecar. Byte output is deterministic in the input."""
    if not np.isfinite(v.data).all():
        raise VolumeFormatError("data: volume contains non-finite values, refusing to write")
    rvol_path, sidecar_path = _paths(path)
    rvol_path.write_bytes(v.data.astype("<f4", copy=False).tobytes(order="F"))
    meta = {
        "dims": list(v.dims),
        "spacing": [float(s) for s in v.spacing],
        "dtype": "f32le",
        "order": "xyz",
    }
    sidecar_path.write_text(json.dumps(meta) + "\n")


def resample_isotropic(v: Volume3D, target_spacing: float) -> Volume3D:
    """Resample to cubic voxels of ``target_spacing`` mm.

    Output extent per axis is ``round(dim * spacing / target)`` (clamped to
    at least 1 voxel, with a warning when it rounds to 0). Values come from
    trilinear interpolation at output voxel centers in physical
    coordinates, with edges clamped; every output value is a convex
    combination of input values.
    """
    t = float(target_spacing)
    if not (math.isfinite(t) and t > 0):
        raise ValueError(f"target_spacing must be positive and finite, got {target_spacing}")
    out_dims = []
    for axis, (dim, s) in enumerate(zip(v.dims, v.spacing)):
        n = int(math.floor(dim * s / t + 0.5))
        if n < 1:
            warnings.warn(
                f"resample axis {axis}: extent rounds to 0 voxels at spacing {t}; clamped to 1",
                RuntimeWarning, stacklevel=2)
            n = 1
        out_dims.append(n)
    # voxel i center sits at (i + 0.5) * spacing; map output centers to
    # fractional input indices and clamp to the grid.
    axes = [
        np.clip((np.arange(n, dtype=np.float64) + 0.5) * t / s - 0.5, 0.0, dim - 1.0)
        for n, s, dim in zip(out_dims, v.spacing, v.dims)
    ]
    grid = np.meshgrid(*axes, indexing="ij")
    out = ndimage.map_coordinates(v.data, np.stack(grid), order=1, mode="nearest")
    return Volume3D(out.astype(np.float32, copy=False), (t, t, t))


def foreground_mask(v: Volume3D) -> np.ndarray:
    """Boolean mask, true exactly where intensity > 0."""
    return v.data > 0


def min_max_normalize(v: Volume3D) -> Volume3D:
    """Rescale intensities to [0, 1]; a constant volume maps to all zeros."""
    lo = float(v.data.min())
    hi = float(v.data.max())
    if hi > lo:
        out = (v.data - lo) / (hi - lo)
    else:
        out = np.zeros_like(v.data)
    return Volume3D(out.astype(np.float32, copy=False), v.spacing)
