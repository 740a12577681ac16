"""Sliding-window inference emitting per-window score files.

The window layout follows the shared sliding-window contract: per axis
the stride is floor(patch * (1 - overlap)) with a minimum of 1, starts
advance by the stride, the final start is clamped so the last window
ends flush at the volume boundary, and a patch larger than the volume
shrinks to the volume on that axis. Scores come from the checkpointed
model's finest head; each window becomes a (window_NNNNN.json,
window_NNNNN.rvol) pair for the fusion side to consume.
"""

from pathlib import Path

import numpy as np
import torch
from torch.nn import functional as F

from .config import config_from_dict
from .errors import TrainerConfigError
from .io import read_rvol, write_window_file
from .train import load_checkpoint
from .unet import build_network


def plan_windows(volume_dims, patch_size, overlap: float = 0.5):
    """Window corners and sizes, z fastest, covering every voxel."""
    volume_dims = tuple(int(d) for d in volume_dims)
    patch_size = tuple(int(p) for p in patch_size)
    if not 0.0 <= overlap < 1.0:
        raise TrainerConfigError(f"overlap must be in [0, 1), got {overlap}")
    if min(volume_dims) < 1 or min(patch_size) < 1:
        raise TrainerConfigError("dims and patch size must be positive")
    starts_per_axis = []
    sizes = []
    for d, p in zip(volume_dims, patch_size):
        p = min(p, d)
        sizes.append(p)
        stride = max(1, int(p * (1.0 - overlap)))
        starts = list(range(0, d - p + 1, stride))
        if starts[-1] != d - p:
            starts.append(d - p)
        starts_per_axis.append(starts)
    size = tuple(sizes)
    return [((sx, sy, sz), size)
            for sx in starts_per_axis[0]
            for sy in starts_per_axis[1]
            for sz in starts_per_axis[2]]


def _score_windows(model, volume: np.ndarray, windows, levels: int,
                   batch_size: int) -> list[np.ndarray]:
    """Forward window crops through the finest head, batched; crops whose
    size is not divisible by 2**levels are replicate-padded, scored, and
    cut back."""
    down = 2 ** levels
    size = windows[0][1]
    padded = tuple(-(-s // down) * down for s in size)
    pad = [p - s for s, p in zip(size, padded)]
    # F.pad lists (before, after) per dim, last dim first
    pad_arg = [0, pad[2], 0, pad[1], 0, pad[0]]
    out: list[np.ndarray] = []
    model.eval()
    with torch.no_grad():
        for lo in range(0, len(windows), batch_size):
            chunk = windows[lo:lo + batch_size]
            crops = np.stack([
                volume[tuple(slice(c, c + s) for c, s in zip(corner, size))]
                for corner, _ in chunk])[:, None].astype(np.float32)
            x = torch.from_numpy(crops)
            if any(pad):
                x = F.pad(x, pad_arg, mode="replicate")
            scores = model(x)[0]
            scores = scores[(slice(None), 0) + tuple(slice(0, s) for s in size)]
            out.extend(np.clip(scores.numpy(), 0.0, 1.0))
    return out


def infer_windows(checkpoint_path, volume_path, out_dir, overlap: float = 0.5,
                  batch_size: int = 4) -> Path:
    """Score one volume with a trained checkpoint, writing the exchange
    files into ``out_dir``; returns that directory."""
    ckpt = load_checkpoint(checkpoint_path)
    config = config_from_dict(ckpt["config"])
    model = build_network(config)
    model.load_state_dict(ckpt["model_state"])
    volume, _ = read_rvol(volume_path)
    windows = plan_windows(volume.shape, config.patch_size, overlap)
    scores = _score_windows(model, volume, windows, config.levels, batch_size)
    out_dir = Path(out_dir)
    for i, ((corner, size), patch_scores) in enumerate(zip(windows, scores)):
        write_window_file(out_dir, i, corner, size, volume.shape, patch_scores)
    return out_dir
