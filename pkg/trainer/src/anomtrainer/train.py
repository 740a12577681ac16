"""Training loop: AdamW under a one-cycle schedule, one model per fold.

Fold f trains on the manifest entries whose index i satisfies
``i % folds != f`` (the usual leave-one-fold-out split); a single fold
trains on everything. Each fold writes ``ckpt_fold<f>.pt`` holding the
model, optimizer and scheduler states plus the step count and loss
history, so an interrupted run resumes exactly where it stopped and the
schedule length stays consistent across segments.

Randomness is pinned per (seed, fold, step): every step draws its batch
from a fresh generator, so two runs with the same config and data are
reproducible.
"""

import json
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig, config_from_dict
from .data import PatchSampler
from .errors import TrainerConfigError, TrainerIOError
from .io import load_manifest
from .losses import deep_supervision_loss
from .unet import build_network, parameter_count


def _torch_seed(config_seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([config_seed, fold]).generate_state(1)[0])


def _loss_edges(history: list[float]) -> tuple[float, float]:
    """Mean loss over the first and last few steps (single steps are noisy)."""
    k = max(1, min(10, len(history) // 5))
    return float(np.mean(history[:k])), float(np.mean(history[-k:]))


def load_checkpoint(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise TrainerIOError(f"missing checkpoint: {path}")
    ckpt = torch.load(path, map_location="cpu", weights_only=False)
    required = {"model_state", "optimizer_state", "scheduler_state",
                "step", "fold", "config", "history"}
    if not isinstance(ckpt, dict) or not required <= set(ckpt):
        raise TrainerIOError(f"checkpoint lacks required fields: {path}")
    return ckpt


def _train_fold(config: TrainConfig, sampler: PatchSampler, fold: int,
                out_dir: Path, resume_ckpt: dict | None,
                stop_after: int | None) -> dict:
    torch.manual_seed(_torch_seed(config.seed, fold))
    model = build_network(config)
    opt = torch.optim.AdamW(model.parameters(), lr=config.max_lr,
                            weight_decay=config.weight_decay)
    sched = torch.optim.lr_scheduler.OneCycleLR(
        opt, max_lr=config.max_lr, total_steps=config.steps)
    history: list[float] = []
    start = 0
    if resume_ckpt is not None:
        model.load_state_dict(resume_ckpt["model_state"])
        opt.load_state_dict(resume_ckpt["optimizer_state"])
        sched.load_state_dict(resume_ckpt["scheduler_state"])
        history = list(resume_ckpt["history"])
        start = int(resume_ckpt["step"])
    end = config.steps if stop_after is None else min(config.steps, int(stop_after))
    if start > end:
        raise TrainerConfigError(
            f"checkpoint is at step {start}, beyond the requested {end}")

    model.train()
    for step in range(start, end):
        rng = np.random.default_rng([config.seed, fold, step])
        images, targets = sampler.sample_batch(rng, config.batch_size)
        preds = model(images)
        loss = deep_supervision_loss(preds, targets)
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
        history.append(float(loss.detach()))

    ckpt_path = out_dir / f"ckpt_fold{fold}.pt"
    torch.save({
        "model_state": model.state_dict(),
        "optimizer_state": opt.state_dict(),
        "scheduler_state": sched.state_dict(),
        "step": end,
        "fold": fold,
        "config": config.to_dict(),
        "history": history,
    }, ckpt_path)
    first, final = _loss_edges(history) if history else (float("nan"),) * 2
    return {
        "fold": fold,
        "checkpoint": str(ckpt_path),
        "step": end,
        "train_entries": len(sampler),
        "parameter_count": parameter_count(model),
        "first_loss": first,
        "final_loss": final,
        "loss_drop": 1.0 - final / first if history and first > 0 else 0.0,
    }


def train(config: TrainConfig, manifest_path, out_dir, resume=None,
          stop_after: int | None = None) -> dict:
    """Train one model per fold; returns and writes a summary.

    ``resume`` names a checkpoint to continue: only that checkpoint's
    fold runs, from its saved step, under the identical config.
    ``stop_after`` pauses every trained fold at that absolute step so a
    later resume can finish the schedule.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries, base_dir = load_manifest(manifest_path)

    resume_ckpt = None
    fold_range = range(config.folds)
    if resume is not None:
        resume_ckpt = load_checkpoint(resume)
        if config_from_dict(resume_ckpt["config"]) != config:
            raise TrainerConfigError(
                "checkpoint config does not match the requested config")
        fold_range = [int(resume_ckpt["fold"])]

    results = []
    for fold in fold_range:
        if config.folds > 1:
            indices = [i for i in range(len(entries)) if i % config.folds != fold]
        else:
            indices = list(range(len(entries)))
        sampler = PatchSampler(
            ([entries[i] for i in indices], base_dir),
            config.patch_size, anomaly_bias=config.anomaly_bias)
        results.append(_train_fold(config, sampler, fold, out_dir,
                                   resume_ckpt, stop_after))

    summary = {
        "config": config.to_dict(),
        "parameter_count": results[0]["parameter_count"] if results else 0,
        "folds": results,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary
