"""Patch sampling from a generated (image, alpha-label) dataset.

Volumes are read once and kept in memory, which is the right trade at
desk scale (tens of small volumes). Each draw picks a manifest entry
uniformly, then a patch corner: with probability ``anomaly_bias`` the
patch is centered on a uniformly chosen positive label voxel (corner
clamped inside the volume), otherwise the corner is uniform. Centering
on anomalies keeps short runs from spending most steps on all-healthy
crops.
"""

from pathlib import Path

import numpy as np
import torch

from .errors import TrainerConfigError, TrainerIOError
from .io import load_manifest, read_rvol


class PatchSampler:
    def __init__(self, manifest_path, patch_size, anomaly_bias: float = 0.5):
        self.patch_size = tuple(int(p) for p in patch_size)
        self.anomaly_bias = float(anomaly_bias)
        entries, base_dir = load_manifest(manifest_path)
        if not entries:
            raise TrainerIOError(f"manifest lists no samples: {manifest_path}")
        self.pairs = []
        for entry in entries:
            img, _ = read_rvol(Path(base_dir) / entry["image_path"])
            lbl, _ = read_rvol(Path(base_dir) / entry["label_path"])
            if img.shape != lbl.shape:
                raise TrainerIOError(
                    f"image {img.shape} and label {lbl.shape} disagree for "
                    f"{entry['image_path']}")
            if any(d < p for d, p in zip(img.shape, self.patch_size)):
                raise TrainerConfigError(
                    f"patch {self.patch_size} does not fit volume {img.shape} "
                    f"({entry['image_path']})")
            if float(lbl.min()) < 0.0 or float(lbl.max()) > 1.0:
                raise TrainerIOError(
                    f"label values outside [0, 1] in {entry['label_path']}")
            positives = np.argwhere(lbl > 0.0)
            self.pairs.append((img, lbl, positives))

    def __len__(self) -> int:
        return len(self.pairs)

    def _corner(self, rng, img_shape, positives):
        span = [d - p for d, p in zip(img_shape, self.patch_size)]
        if len(positives) and rng.random() < self.anomaly_bias:
            voxel = positives[rng.integers(len(positives))]
            return tuple(
                int(np.clip(v - p // 2, 0, s))
                for v, p, s in zip(voxel, self.patch_size, span))
        return tuple(int(rng.integers(s + 1)) for s in span)

    def sample_batch(self, rng, batch_size: int):
        """Draw (images, targets) float32 tensors shaped (N, 1, *patch_size)."""
        if batch_size < 1:
            raise TrainerConfigError(f"batch_size must be >= 1, got {batch_size}")
        imgs = np.empty((batch_size, 1) + self.patch_size, dtype=np.float32)
        tgts = np.empty_like(imgs)
        for n in range(batch_size):
            img, lbl, positives = self.pairs[rng.integers(len(self.pairs))]
            corner = self._corner(rng, img.shape, positives)
            sl = tuple(slice(c, c + p) for c, p in zip(corner, self.patch_size))
            imgs[n, 0] = img[sl]
            tgts[n, 0] = lbl[sl]
        return torch.from_numpy(imgs), torch.from_numpy(tgts)
