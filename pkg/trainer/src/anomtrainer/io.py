"""File exchange with the volume toolchain.

The trainer talks to the generation/evaluation side purely through
files, so the formats are implemented here from their contracts rather
than imported:

* volumes: ``<name>.rvol`` raw little-endian float32 with x varying
  fastest (Fortran order for ``(W, H, D)`` indexing) plus a sidecar
  ``<name>.json`` of exactly
  ``{"dims", "spacing", "dtype": "f32le", "order": "xyz"}``;
* datasets: ``manifest.json``, a bare JSON array whose entries carry
  ``image_path`` and ``label_path`` filenames relative to the manifest;
* per-window scores: ``window_NNNNN.json`` index files
  (``{"corner", "size", "volume_dims", "dtype": "f32le", "order":
  "xyz"}``) next to ``window_NNNNN.rvol`` payloads in the same raw
  float32 layout.
"""

import json
import math
from pathlib import Path

import numpy as np

from .errors import TrainerIOError

SIDECAR_KEYS = ("dims", "spacing", "dtype", "order")


def _paths(path) -> tuple[Path, Path]:
    path = Path(path)
    if path.suffix != ".rvol":
        path = path.with_suffix(".rvol")
    return path, path.with_suffix(".json")


def read_rvol(path) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Read a volume pair into ``(data, spacing)`` with data shaped (W, H, D)."""
    rvol_path, sidecar_path = _paths(path)
    if not rvol_path.exists():
        raise TrainerIOError(f"missing volume payload: {rvol_path}")
    if not sidecar_path.exists():
        raise TrainerIOError(f"missing sidecar: {sidecar_path}")
    try:
        meta = json.loads(sidecar_path.read_text())
    except json.JSONDecodeError as exc:
        raise TrainerIOError(f"sidecar is not valid JSON: {sidecar_path}: {exc}") from exc
    if not isinstance(meta, dict) or set(meta) != set(SIDECAR_KEYS):
        raise TrainerIOError(
            f"sidecar must hold exactly {sorted(SIDECAR_KEYS)}: {sidecar_path}")
    dims = meta["dims"]
    if (not isinstance(dims, list) or len(dims) != 3
            or not all(isinstance(d, int) and d > 0 for d in dims)):
        raise TrainerIOError(f"dims: expected 3 positive integers, got {dims!r}")
    spacing = meta["spacing"]
    if (not isinstance(spacing, list) or len(spacing) != 3
            or not all(isinstance(s, (int, float)) and math.isfinite(s) and s > 0
                       for s in spacing)):
        raise TrainerIOError(f"spacing: expected 3 positive reals, got {spacing!r}")
    if meta["dtype"] != "f32le":
        raise TrainerIOError(f"dtype: unsupported value {meta['dtype']!r}")
    if meta["order"] != "xyz":
        raise TrainerIOError(f"order: unsupported value {meta['order']!r}")
    payload = rvol_path.read_bytes()
    expected = dims[0] * dims[1] * dims[2] * 4
    if len(payload) != expected:
        raise TrainerIOError(
            f"payload size mismatch: dims {dims} require {expected} bytes, "
            f"file has {len(payload)}: {rvol_path}")
    data = np.frombuffer(payload, dtype="<f4").reshape(dims, order="F").copy()
    if not np.isfinite(data).all():
        raise TrainerIOError(f"payload contains non-finite values: {rvol_path}")
    return data, tuple(float(s) for s in spacing)


def write_rvol(path, data, spacing=(1.0, 1.0, 1.0)) -> None:
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 3:
        raise TrainerIOError(f"volume data must be 3-dimensional, got {data.shape}")
    if not np.isfinite(data).all():
        raise TrainerIOError("refusing to write non-finite volume data")
    rvol_path, sidecar_path = _paths(path)
    rvol_path.write_bytes(data.astype("<f4", copy=False).tobytes(order="F"))
    meta = {
        "dims": [int(n) for n in data.shape],
        "spacing": [float(s) for s in spacing],
        "dtype": "f32le",
        "order": "xyz",
    }
    sidecar_path.write_text(json.dumps(meta) + "\n")


def load_manifest(manifest) -> tuple[list[dict], Path]:
    """Load a dataset manifest, returning (entries, base_dir).

    ``manifest`` may be the manifest file, its directory, or an already
    loaded ``(entries, base_dir)`` pair. Every entry must name an
    ``image_path`` and ``label_path``; those stay relative, resolve them
    against the returned base directory.
    """
    if isinstance(manifest, (str, Path)):
        path = Path(manifest)
        if path.is_dir():
            path = path / "manifest.json"
        if not path.exists():
            raise TrainerIOError(f"missing manifest: {path}")
        try:
            entries = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise TrainerIOError(f"manifest is not valid JSON: {path}: {exc}") from exc
        base_dir = path.parent
        where = str(path)
    else:
        entries, base_dir = manifest
        entries = list(entries)
        where = str(base_dir)
    if not isinstance(entries, list):
        raise TrainerIOError(f"manifest must be a JSON array: {where}")
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "image_path" not in entry \
                or "label_path" not in entry:
            raise TrainerIOError(
                f"manifest entry {i} lacks image_path/label_path: {where}")
    return entries, Path(base_dir)


def write_window_file(out_dir, index, corner, size, volume_dims, scores) -> Path:
    """Write one (index json, raw payload) score pair; returns the json path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scores = np.asarray(scores, dtype=np.float32)
    if scores.shape != tuple(size):
        raise TrainerIOError(
            f"scores shaped {scores.shape} do not match window size {tuple(size)}")
    if not np.isfinite(scores).all():
        raise TrainerIOError("window scores must be finite")
    meta = {
        "corner": [int(c) for c in corner],
        "size": [int(s) for s in size],
        "volume_dims": [int(d) for d in volume_dims],
        "dtype": "f32le",
        "order": "xyz",
    }
    meta_path = out_dir / f"window_{index:05d}.json"
    meta_path.write_text(json.dumps(meta, separators=(",", ":")) + "\n")
    (out_dir / f"window_{index:05d}.rvol").write_bytes(
        scores.astype("<f4", copy=False).tobytes(order="F"))
    return meta_path
