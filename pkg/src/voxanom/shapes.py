"""Anomaly geometry generators.

A *shape mask* is a float32 array over a voxel canvas with values in
[0, 1]: binary straight out of a generator, fractional after Gaussian
edge smoothing. Generators place shapes about the canvas center; voxel
centers sit on the integer lattice, so the canvas center is
``((W-1)/2, (H-1)/2, (D-1)/2)`` (the volume midpoint when voxel ``i``
spans ``[i, i+1)``).

Three families are supported: rotated rectangular cuboids, spheres, and
free-form "brush walk" shapes painted by a spherical brush whose position
and radius follow a Gaussian random walk. Brush shapes are expensive to
rasterize, so they are pre-generated into a reusable library.
"""

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import GenerationError, VolumeFormatError
from .volume import Volume3D, read_volume, write_volume


def canvas_center(dims) -> np.ndarray:
    return (np.asarray(dims, dtype=np.float64) - 1.0) / 2.0


def euler_rotation_matrix(angles) -> np.ndarray:
    """Rotation Rz(c) @ Ry(b) @ Rx(a) for angles (a, b, c) in radians."""
    a, b, c = (float(x) for x in angles)
    ca, sa = math.cos(a), math.sin(a)
    cb, sb = math.cos(b), math.sin(b)
    cc, sc = math.cos(c), math.sin(c)
    rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    return rz @ ry @ rx


def _offset_grids(dims, center):
    xs = np.arange(dims[0], dtype=np.float64) - center[0]
    ys = np.arange(dims[1], dtype=np.float64) - center[1]
    zs = np.arange(dims[2], dtype=np.float64) - center[2]
    return xs[:, None, None], ys[None, :, None], zs[None, None, :]


def gen_cuboid(dims, extent, rotation=(0.0, 0.0, 0.0), rng=None) -> np.ndarray:
    """Binary mask of a centered cuboid of the given extent, rotated by
    Euler angles about the canvas center. ``rng`` is accepted for pipeline
    uniformity and unused: the geometry is fully determined by the inputs.
    """
    dims = tuple(int(d) for d in dims)
    extent = tuple(float(e) for e in extent)
    if any(e < 1 for e in extent):
        raise GenerationError(f"cuboid extent must be >= 1 per axis, got {extent}")
    if any(e > d for e, d in zip(extent, dims)):
        raise GenerationError(f"cuboid extent {extent} exceeds canvas {dims}")
    inv = euler_rotation_matrix(rotation).T
    x, y, z = _offset_grids(dims, canvas_center(dims))
    lx = inv[0, 0] * x + inv[0, 1] * y + inv[0, 2] * z
    ly = inv[1, 0] * x + inv[1, 1] * y + inv[1, 2] * z
    lz = inv[2, 0] * x + inv[2, 1] * y + inv[2, 2] * z
    mask = ((np.abs(lx) <= extent[0] / 2.0)
            & (np.abs(ly) <= extent[1] / 2.0)
            & (np.abs(lz) <= extent[2] / 2.0))
    if not mask.any():
        raise GenerationError(f"rotated cuboid {extent} contains no voxel centers on canvas {dims}")
    return mask.astype(np.float32)


def gen_sphere(dims, radius, rng=None) -> np.ndarray:
    """Binary mask of a centered sphere: voxels whose centers lie within
    ``radius`` (voxel units) of the canvas center. ``rng`` is unused."""
    dims = tuple(int(d) for d in dims)
    radius = float(radius)
    if not 1 <= radius <= min(dims) / 2:
        raise GenerationError(f"sphere radius {radius} out of range [1, {min(dims) / 2}]")
    x, y, z = _offset_grids(dims, canvas_center(dims))
    mask = x * x + y * y + z * z <= radius * radius
    return mask.astype(np.float32)


@dataclass(frozen=True)
class BrushParams:
    """Random-walk brush parameters: step count, initial radius, and the
    shared std-dev of the per-step position and radius increments."""

    steps: int
    initial_radius: float
    step_sigma: float
    canvas_dims: tuple[int, int, int]

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.initial_radius < 1:
            raise ValueError(f"initial_radius must be >= 1, got {self.initial_radius}")
        if not self.step_sigma > 0:
            raise ValueError(f"step_sigma must be > 0, got {self.step_sigma}")
        if any(int(d) < 2 for d in self.canvas_dims):
            raise ValueError(f"canvas dims must be >= 2, got {self.canvas_dims}")
        object.__setattr__(self, "canvas_dims", tuple(int(d) for d in self.canvas_dims))


def _stamp_ball(canvas: np.ndarray, pos: np.ndarray, radius: float) -> None:
    lo = np.maximum(np.floor(pos - radius).astype(int), 0)
    hi = np.minimum(np.ceil(pos + radius).astype(int) + 1, canvas.shape)
    x = np.arange(lo[0], hi[0], dtype=np.float64) - pos[0]
    y = np.arange(lo[1], hi[1], dtype=np.float64) - pos[1]
    z = np.arange(lo[2], hi[2], dtype=np.float64) - pos[2]
    ball = (x[:, None, None] ** 2 + y[None, :, None] ** 2 + z[None, None, :] ** 2
            <= radius * radius)
    region = canvas[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    np.maximum(region, ball.astype(np.float32), out=region)


def gen_brush_walk(params: BrushParams, rng: np.random.Generator) -> np.ndarray:
    """Paint a free-form binary shape with a spherical brush on a random walk.

    The brush starts at the canvas center with the initial radius and is
    stamped once per step; between steps the position increments
    (dx, dy, dz) and the radius increment dr are each drawn from
    N(0, step_sigma). Positions are clamped to the canvas, the radius to
    [1, min(dims)/2]. The brush also paints while it moves: each segment
    is stamped at sub-voxel intervals so the stroke stays 26-connected no
    matter how large a step is. With steps == 1 the result is exactly a
    centered sphere of the initial radius.
    """
    dims = params.canvas_dims
    canvas = np.zeros(dims, dtype=np.float32)
    max_radius = min(dims) / 2.0
    pos = canvas_center(dims).copy()
    radius = float(np.clip(params.initial_radius, 1.0, max_radius))
    _stamp_ball(canvas, pos, radius)
    upper = np.asarray(dims, dtype=np.float64) - 1.0
    for _ in range(params.steps - 1):
        delta = rng.normal(0.0, params.step_sigma, size=3)
        dr = rng.normal(0.0, params.step_sigma)
        new_pos = np.clip(pos + delta, 0.0, upper)
        new_radius = float(np.clip(radius + dr, 1.0, max_radius))
        # dense sub-stamps (<= 0.5 voxel apart) keep the stroke connected
        nsub = max(1, int(math.ceil(2.0 * float(np.linalg.norm(new_pos - pos)))))
        for k in range(1, nsub + 1):
            t = k / nsub
            _stamp_ball(canvas, pos + t * (new_pos - pos), radius + t * (new_radius - radius))
        pos, radius = new_pos, new_radius
    return canvas


@dataclass(frozen=True)
class AffineParams:
    rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: tuple[float, float, float] = (1.0, 1.0, 1.0)
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)


def random_affine(rng: np.random.Generator, dims, scale_range=(0.7, 1.3),
                  max_translation_frac=0.25) -> AffineParams:
    """Draw rotation in [0, 2pi) per axis, per-axis scale from
    ``scale_range`` and translation up to a fraction of the canvas."""
    rotation = tuple(rng.uniform(0.0, 2.0 * math.pi, size=3))
    scale = tuple(rng.uniform(scale_range[0], scale_range[1], size=3))
    limits = np.asarray(dims, dtype=np.float64) * max_translation_frac
    translation = tuple(rng.uniform(-limits, limits))
    return AffineParams(rotation, scale, translation)


def _warp_nearest(mask: np.ndarray, affine: AffineParams) -> np.ndarray:
    dims = mask.shape
    center = canvas_center(dims)
    rot = euler_rotation_matrix(affine.rotation)
    # forward map: v = R @ (S * (u - c)) + c + t; invert for output gathering
    inv = rot.T
    x, y, z = _offset_grids(dims, center + np.asarray(affine.translation))
    scale = np.asarray(affine.scale, dtype=np.float64)
    ux = (inv[0, 0] * x + inv[0, 1] * y + inv[0, 2] * z) / scale[0] + center[0]
    uy = (inv[1, 0] * x + inv[1, 1] * y + inv[1, 2] * z) / scale[1] + center[1]
    uz = (inv[2, 0] * x + inv[2, 1] * y + inv[2, 2] * z) / scale[2] + center[2]
    ix = np.rint(ux).astype(np.int64)
    iy = np.rint(uy).astype(np.int64)
    iz = np.rint(uz).astype(np.int64)
    valid = ((ix >= 0) & (ix < dims[0]) & (iy >= 0) & (iy < dims[1])
             & (iz >= 0) & (iz < dims[2]))
    out = np.zeros(dims, dtype=np.float32)
    out[valid] = mask[ix[valid], iy[valid], iz[valid]]
    return out


def augment_shape(mask: np.ndarray, affine: AffineParams | None = None,
                  rng: np.random.Generator | None = None, *,
                  scale_range=(0.7, 1.3), max_translation_frac=0.25,
                  max_retries: int = 10) -> np.ndarray:
    """Warp a binary mask through an affine transform (nearest-neighbor,
    same canvas, pivot at the canvas center).

    With ``affine=None`` a random transform is drawn from ``rng``. Empty
    warp results are rejected and redrawn up to ``max_retries`` attempts;
    without an rng to redraw from (fixed affine), or once the budget is
    spent, a GenerationError is raised.
    """
    if affine is None and rng is None:
        raise ValueError("augment_shape needs an explicit affine or an rng to draw one")
    for attempt in range(max_retries):
        if attempt == 0 and affine is not None:
            params = affine
        elif rng is not None:
            params = random_affine(rng, mask.shape, scale_range, max_translation_frac)
        else:
            break
        if not all(scale_range[0] <= s <= scale_range[1] for s in params.scale):
            raise GenerationError(
                f"affine scale {params.scale} outside configured range {scale_range}")
        warped = _warp_nearest(mask, params)
        if warped.any():
            return warped
    raise GenerationError(f"affine augmentation produced an empty mask {max_retries} time(s)")


def gaussian_kernel(size: int) -> np.ndarray:
    """Normalized 1D Gaussian taps of odd length ``size`` with
    sigma = size / 6 (puts +-3 sigma at the kernel edge)."""
    size = int(size)
    if size < 1 or size % 2 == 0:
        raise GenerationError(f"kernel size must be odd and >= 1, got {size}")
    sigma = size / 6.0
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    taps = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def smooth_mask(mask: np.ndarray, kernel_size: int) -> np.ndarray:
    """Soften a binary mask by separable 3D Gaussian convolution
    (zero-padded), so the weight ramps gradually from 0 outside to the
    mask interior. Output values stay in [0, 1]."""
    mask = np.asarray(mask, dtype=np.float32)
    if not np.all((mask == 0) | (mask == 1)):
        raise GenerationError("smooth_mask expects a binary mask")
    taps = gaussian_kernel(kernel_size)
    out = mask.astype(np.float64)
    for axis in range(3):
        out = ndimage.correlate1d(out, taps, axis=axis, mode="constant", cval=0.0)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


@dataclass(frozen=True)
class ShapeLibrary:
    """Pre-generated brush shapes plus the parameters and seed that built
    them; fully reproducible from (params grid, seed)."""

    shapes: tuple
    params_used: tuple
    seed: int
    canvas_dims: tuple[int, int, int]

    def __len__(self) -> int:
        return len(self.shapes)


def default_brush_grid(canvas_dims, steps=(10, 20, 40), radii=(2.0, 4.0, 8.0),
                       sigmas=(1.0, 2.0, 4.0)) -> list[BrushParams]:
    """Cartesian parameter grid spanning compact to sprawling shapes.

    Radii are stated for a 64-voxel canvas and scale with the actual
    canvas (clamped to >= 1 voxel); step counts and sigmas are absolute.
    """
    canvas_dims = tuple(int(d) for d in canvas_dims)
    r_scale = min(canvas_dims) / 64.0
    grid = []
    for s, r, sig in itertools.product(steps, radii, sigmas):
        grid.append(BrushParams(int(s), max(1.0, float(r) * r_scale), float(sig), canvas_dims))
    return grid


def build_shape_library(count: int, param_grid, seed: int) -> ShapeLibrary:
    """Generate ``count`` brush shapes, cycling through the parameter grid.

    Shape ``i`` uses ``param_grid[i % len(grid)]`` and its own rng stream
    derived from ``(seed, i)``, so the library is reproducible and
    independent of build parallelism.
    """
    param_grid = list(param_grid)
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if not param_grid:
        raise ValueError("param_grid must be non-empty")
    canvas = param_grid[0].canvas_dims
    if any(p.canvas_dims != canvas for p in param_grid):
        raise ValueError("all grid entries must share one canvas size")
    shapes = []
    params_used = []
    for i in range(count):
        params = param_grid[i % len(param_grid)]
        rng = np.random.default_rng([int(seed), i])
        shapes.append(gen_brush_walk(params, rng))
        params_used.append(params)
    return ShapeLibrary(tuple(shapes), tuple(params_used), int(seed), canvas)


def save_shape_library(library: ShapeLibrary, out_dir) -> Path:
    """Persist a library as one .rvol mask per shape plus library.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (shape, params) in enumerate(zip(library.shapes, library.params_used)):
        name = f"shape_{i:04d}.rvol"
        write_volume(Volume3D(shape), out_dir / name)
        entries.append({
            "path": name,
            "steps": params.steps,
            "initial_radius": params.initial_radius,
            "step_sigma": params.step_sigma,
        })
    index = {
        "seed": library.seed,
        "canvas_dims": list(library.canvas_dims),
        "entries": entries,
    }
    (out_dir / "library.json").write_text(json.dumps(index, indent=2) + "\n")
    return out_dir


def load_shape_library(path) -> ShapeLibrary:
    path = Path(path)
    index_path = path / "library.json"
    if not index_path.exists():
        raise VolumeFormatError(f"missing library index: {index_path}")
    index = json.loads(index_path.read_text())
    canvas = tuple(int(d) for d in index["canvas_dims"])
    shapes = []
    params_used = []
    for entry in index["entries"]:
        vol = read_volume(path / entry["path"])
        if vol.dims != canvas:
            raise VolumeFormatError(
                f"library shape {entry['path']} has dims {vol.dims}, expected {canvas}")
        shapes.append(vol.data)
        params_used.append(BrushParams(
            int(entry["steps"]), float(entry["initial_radius"]),
            float(entry["step_sigma"]), canvas))
    return ShapeLibrary(tuple(shapes), tuple(params_used), int(index["seed"]), canvas)
