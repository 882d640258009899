"""Voxel phantoms, projection simulation and slice export."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError
from .geometry import LaminographyGeometry, build_view
from .oracle import DEFAULT_SAMPLES, raymarch_project_volume
from .types import GridSpec, ProjectionStack, Volume

KINDS = ("engine", "nested-shells", "random-ellipsoids", "sphere")


@dataclass(frozen=True)
class PhantomSpec:
    """Phantom recipe. ``levels`` are the non-zero density values used.

    ``engine`` is a flat plate (normal along z) with ellipsoidal cavities and
    two kinds of cylindrical pipes; it stands in for a plate-like CL target.
    """

    kind: str = "engine"
    dims: int = 64
    extent: float = 2.0
    plate_fraction: float = 0.25
    levels: tuple[float, float] = (1.0, 2.0)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"phantom kind must be one of {KINDS}, got {self.kind!r}")
        if not 0.0 < self.plate_fraction < 1.0:
            raise ValidationError(f"plate_fraction must lie in (0, 1), got {self.plate_fraction}")
        if int(self.dims) <= 0:
            raise ValidationError(f"dims must be positive, got {self.dims}")
        if any(lv <= 0 for lv in self.levels):
            raise ValidationError("phantom levels must be positive")

    @property
    def grid(self) -> GridSpec:
        return GridSpec.centered(self.dims, self.extent)


def _coords(grid: GridSpec):
    x = grid.axis_centers(0)
    y = grid.axis_centers(1)
    z = grid.axis_centers(2)
    return np.meshgrid(z, y, x, indexing="ij")[::-1]


def _engine(spec: PhantomSpec, grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    X, Y, Z = _coords(grid)
    half = 0.5 * spec.extent
    thick = 0.5 * spec.plate_fraction * spec.extent
    lat = 0.6 * half
    lo, hi = spec.levels
    plate = (np.abs(X) <= lat) & (np.abs(Y) <= lat) & (np.abs(Z) <= thick)
    vol = np.where(plate, lo, 0.0)

    # Pipes: cylinders along x or y through the plate, alternating hollow and dense.
    n_pipes = 4
    for k in range(n_pipes):
        along_x = k % 2 == 0
        off = rng.uniform(-0.7, 0.7) * lat
        zc = rng.uniform(-0.3, 0.3) * thick
        r = rng.uniform(0.35, 0.55) * thick
        d2 = ((Y - off) if along_x else (X - off)) ** 2 + (Z - zc) ** 2
        tube = plate & (d2 <= r * r)
        wall = plate & (d2 <= (1.5 * r) ** 2) & ~tube
        vol[wall] = hi
        vol[tube] = hi if k % 4 == 1 else 0.0

    # Ellipsoidal cavities.
    for _ in range(5):
        c = np.array([rng.uniform(-0.75, 0.75) * lat, rng.uniform(-0.75, 0.75) * lat,
                      rng.uniform(-0.3, 0.3) * thick])
        ax = np.array([rng.uniform(0.08, 0.2) * half, rng.uniform(0.08, 0.2) * half,
                       rng.uniform(0.3, 0.6) * thick])
        q = ((X - c[0]) / ax[0]) ** 2 + ((Y - c[1]) / ax[1]) ** 2 + ((Z - c[2]) / ax[2]) ** 2
        vol[q <= 1.0] = 0.0
    # Dense bosses sitting on the plate surface, inside the plate slab.
    for _ in range(3):
        cx, cy = rng.uniform(-0.7, 0.7, size=2) * lat
        r = rng.uniform(0.06, 0.12) * half
        boss = plate & ((X - cx) ** 2 + (Y - cy) ** 2 <= r * r) & (Z >= 0.3 * thick)
        vol[boss] = hi
    return vol


def _nested_shells(spec: PhantomSpec, grid: GridSpec) -> np.ndarray:
    X, Y, Z = _coords(grid)
    r = np.sqrt(X**2 + Y**2 + Z**2) / (0.5 * spec.extent)
    lo, hi = spec.levels
    vol = np.zeros(grid.shape)
    vol[(r <= 0.8) & (r > 0.65)] = lo
    vol[(r <= 0.5) & (r > 0.35)] = hi
    vol[r <= 0.15] = lo
    return vol


def _random_ellipsoids(spec: PhantomSpec, grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    X, Y, Z = _coords(grid)
    half = 0.5 * spec.extent
    vol = np.zeros(grid.shape)
    for k in range(8):
        c = rng.uniform(-0.5, 0.5, size=3) * half
        ax = rng.uniform(0.1, 0.35, size=3) * half
        q = ((X - c[0]) / ax[0]) ** 2 + ((Y - c[1]) / ax[1]) ** 2 + ((Z - c[2]) / ax[2]) ** 2
        vol[q <= 1.0] = spec.levels[k % 2]
    return vol


def _sphere(spec: PhantomSpec, grid: GridSpec) -> np.ndarray:
    X, Y, Z = _coords(grid)
    r = np.sqrt(X**2 + Y**2 + Z**2)
    return np.where(r <= 0.25 * spec.extent, spec.levels[0], 0.0)


def generate_phantom(spec: PhantomSpec) -> Volume:
    grid = spec.grid
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "engine":
        data = _engine(spec, grid, rng)
    elif spec.kind == "nested-shells":
        data = _nested_shells(spec, grid)
    elif spec.kind == "random-ellipsoids":
        data = _random_ellipsoids(spec, grid, rng)
    else:
        data = _sphere(spec, grid)
    return Volume(data, grid.voxel_size, grid.origin)


def uniform_angles(n_views: int) -> np.ndarray:
    return 2.0 * math.pi * np.arange(n_views) / n_views


def simulate_dataset(phantom: Volume, geom: LaminographyGeometry, n_views: int,
                     noise: float = 0.0, seed: int = 0,
                     samples_per_ray: int = DEFAULT_SAMPLES,
                     angles: np.ndarray | None = None) -> ProjectionStack:
    """Noiseless (or Gaussian-noise) log-domain projections over a full orbit."""
    if n_views < 1:
        raise ValidationError(f"n_views must be >= 1, got {n_views}")
    if angles is None:
        angles = uniform_angles(n_views)
    images = np.stack([
        raymarch_project_volume(phantom, build_view(geom, th), geom, samples_per_ray)
        for th in angles
    ])
    if noise > 0:
        images = images + np.random.default_rng(seed).normal(0.0, noise, images.shape)
    return ProjectionStack(images, angles, geom.pixel_size)


def export_slices(vol: Volume, axis: str, out_dir, window: tuple[float, float] | None = None) -> list[Path]:
    """Write one 8-bit grayscale PNG per slice along ``axis`` (x, y or z)."""
    axes = {"z": 0, "y": 1, "x": 2}
    if axis not in axes:
        raise ValidationError(f"axis must be one of x, y, z, got {axis!r}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create slice directory {out_dir}: {e}") from e
    lo, hi = window if window is not None else (0.0, float(vol.data.max()))
    span = hi - lo if hi > lo else 1.0
    data = np.moveaxis(vol.data, axes[axis], 0)
    width = max(3, len(str(data.shape[0] - 1)))
    paths = []
    for k, sl in enumerate(data):
        img = np.clip(np.rint((sl - lo) / span * 255.0), 0, 255).astype(np.uint8)
        path = out_dir / f"slice_{axis}_{k:0{width}d}.png"
        try:
            Image.fromarray(img).save(path)
        except OSError as e:
            raise OSError(f"failed to write slice {path}: {e}") from e
        paths.append(path)
    return paths
