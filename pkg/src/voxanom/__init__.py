"""voxanom: synthetic localized anomalies for 3D volumes.

Generation (shape masks, foreign-patch blending with per-voxel alpha
targets, edge smoothing), a held-out validation anomaly battery,
Gaussian-weighted sliding-window score fusion, and average-precision
evaluation. Volumes travel as raw little-endian float32 `.rvol` files
with a JSON sidecar.
"""

__version__ = "0.1.0"

from .corruption import (AlphaMap, AnomalyRecord, CorruptedSample,
                         GenerationConfig, emit_dataset, generate_sample,
                         interpolate, sample_location)
from .errors import (ConfigError, EvaluationError, FusionError,
                     GenerationError, VolumeFormatError, VoxanomError)
from .evaluation import (EvalReport, Subsample, average_precision,
                         evaluate_pixelwise, evaluate_samplewise,
                         load_manifest, save_report, score_path_for)
from .patches import (ForeignPatch, PatchBank, augment_patch,
                      bank_insert_replace, load_bank, sample_patch_from_volume,
                      save_bank)
from .scoring import (FusionConfig, Window, baseline_gradient_scorer,
                      ensemble_mean, fuse_scores, gaussian_importance,
                      plan_windows, read_window_scores, sample_score,
                      write_window_scores)
from .shapes import (AffineParams, BrushParams, ShapeLibrary, augment_shape,
                     build_shape_library, default_brush_grid, gaussian_kernel,
                     gen_brush_walk, gen_cuboid, gen_sphere,
                     load_shape_library, save_shape_library, smooth_mask)
from .validation import (Region, ValidationCase, ValidationSetSpec,
                         build_validation_set, make_additive_noise,
                         make_deformation, make_reflection, make_shift,
                         make_uniform_noise, sample_region)
from .volume import (Volume3D, foreground_mask, min_max_normalize,
                     read_volume, resample_isotropic, write_volume)

__all__ = [
    "AffineParams", "AlphaMap", "AnomalyRecord", "BrushParams", "ConfigError",
    "CorruptedSample", "EvalReport", "EvaluationError", "ForeignPatch",
    "FusionConfig", "FusionError", "GenerationConfig", "GenerationError",
    "PatchBank", "Region", "ShapeLibrary", "Subsample", "ValidationCase",
    "ValidationSetSpec", "Volume3D", "VolumeFormatError", "VoxanomError",
    "Window", "augment_patch", "augment_shape", "average_precision",
    "bank_insert_replace", "baseline_gradient_scorer", "build_shape_library",
    "build_validation_set", "default_brush_grid", "emit_dataset",
    "ensemble_mean", "evaluate_pixelwise", "evaluate_samplewise",
    "foreground_mask", "fuse_scores", "gaussian_importance", "gaussian_kernel",
    "gen_brush_walk", "gen_cuboid", "gen_sphere", "generate_sample",
    "interpolate", "load_bank", "load_manifest", "load_shape_library",
    "make_additive_noise", "make_deformation", "make_reflection", "make_shift",
    "make_uniform_noise", "min_max_normalize", "plan_windows", "read_volume",
    "read_window_scores", "resample_isotropic", "sample_location",
    "sample_patch_from_volume", "sample_region", "sample_score", "save_bank",
    "save_report", "score_path_for",
    "save_shape_library", "smooth_mask", "write_volume", "write_window_scores",
]
