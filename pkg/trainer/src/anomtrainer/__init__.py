"""Desk-scale 3D U-Net harness regressing per-voxel interpolation factors."""

from .config import TrainConfig, config_from_dict, desk_config
from .data import PatchSampler
from .errors import TrainerConfigError, TrainerError, TrainerIOError
from .infer import infer_windows, plan_windows
from .io import load_manifest, read_rvol, write_rvol, write_window_file
from .losses import bce_alpha_loss, deep_supervision_loss, head_weights
from .train import load_checkpoint, train
from .unet import UNet3D, build_network, parameter_count

__all__ = [
    "TrainConfig",
    "config_from_dict",
    "desk_config",
    "PatchSampler",
    "TrainerConfigError",
    "TrainerError",
    "TrainerIOError",
    "infer_windows",
    "plan_windows",
    "load_manifest",
    "read_rvol",
    "write_rvol",
    "write_window_file",
    "bce_alpha_loss",
    "deep_supervision_loss",
    "head_weights",
    "load_checkpoint",
    "train",
    "UNet3D",
    "build_network",
    "parameter_count",
]
