"""Artifact-filtering initialization: smooth the FDK volume, Otsu-threshold it and
seed Gaussians only inside the resulting object mask."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import DegenerateHistogram, EmptyMask, ValidationError
from .oracle import trilinear
from .types import GaussianScene, Volume

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AfConfig:
    smoothing_sigma: float = 2.0
    kernel_truncation: float = 3.0
    otsu_bins: int = 256
    num_points: int = 30000
    rng_seed: int = 0
    rho_min_fraction: float = 1e-4
    max_scale_fraction: float = 0.02
    mass_match: bool = False

    def __post_init__(self):
        if not self.smoothing_sigma > 0:
            raise ValidationError(f"smoothing_sigma must be positive, got {self.smoothing_sigma}")
        if not self.kernel_truncation > 0:
            raise ValidationError(f"kernel_truncation must be positive, got {self.kernel_truncation}")
        if int(self.otsu_bins) < 16:
            raise ValidationError(f"otsu_bins must be >= 16, got {self.otsu_bins}")
        if int(self.num_points) < 1:
            raise ValidationError(f"num_points must be >= 1, got {self.num_points}")


def gaussian_kernel1d(sigma: float, truncation: float) -> np.ndarray:
    radius = max(1, int(truncation * sigma + 0.5))
    x = np.arange(-radius, radius + 1)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def smooth_volume(vol: Volume, sigma: float, truncation: float = 3.0) -> Volume:
    """Separable isotropic Gaussian blur with zero padding."""
    if not sigma > 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    k = gaussian_kernel1d(sigma, truncation)
    out = vol.data.astype(np.float64)
    for axis in range(3):
        out = ndimage.correlate1d(out, k, axis=axis, mode="constant", cval=0.0)
    return Volume(out, vol.voxel_size, vol.origin)


def _between_class_variance(hist: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Between-class variance for a split after each bin ``k`` (class 0 = bins <= k)."""
    w0 = np.cumsum(hist)
    w1 = w0[-1] - w0
    m0 = np.cumsum(hist * centers)
    m1 = m0[-1] - m0
    with np.errstate(divide="ignore", invalid="ignore"):
        var = w0 * w1 * (m0 / w0 - m1 / w1) ** 2
    return np.where((w0 > 0) & (w1 > 0), var, -np.inf)


def otsu_threshold(vol: Volume | np.ndarray, bins: int = 256) -> float:
    """Otsu threshold over a ``bins``-bin histogram of ``[min, max]``.

    Returns the upper edge of the last background bin; ties go to the lowest
    such edge.
    """
    data = vol.data if isinstance(vol, Volume) else np.asarray(vol)
    data = data.ravel().astype(np.float64)
    lo, hi = float(data.min()), float(data.max())
    if not hi > lo:
        raise DegenerateHistogram(f"all {data.size} values equal {lo}")
    hist, edges = np.histogram(data, bins=bins, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    var = _between_class_variance(hist.astype(np.float64), centers)
    k = int(np.argmax(var))
    return float(edges[k + 1])


def build_mask(smoothed: Volume, tau: float) -> np.ndarray:
    mask = smoothed.data >= tau
    if not mask.any():
        raise EmptyMask(f"no voxel >= {tau:.6g}")
    return mask


def sample_init_points(fdk_vol: Volume, mask: np.ndarray, m: int, seed: int,
                       rho_min: float | None = None):
    """Uniformly sample ``m`` jittered points from mask voxels; densities from the FDK volume."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise EmptyMask("mask has no true voxels")
    rng = np.random.default_rng(seed)
    pick = rng.choice(idx, size=m, replace=idx.size < m)
    k, j, i = np.unravel_index(pick, mask.shape)
    grid = fdk_vol.grid
    centers = np.asarray(grid.origin) + np.stack([i, j, k], axis=1) * grid.voxel_size
    pts = centers + rng.uniform(-0.5, 0.5, size=(m, 3)) * grid.voxel_size
    if rho_min is None:
        rho_min = 1e-4 * float(fdk_vol.data.max())
    rho = np.maximum(trilinear(fdk_vol, pts), rho_min)
    return pts, rho


def _initial_scales(pts: np.ndarray, s_min: float, s_max: float) -> np.ndarray:
    if pts.shape[0] < 2:
        return np.full(pts.shape[0], s_max)
    k = min(3, pts.shape[0] - 1)
    dist, _ = cKDTree(pts).query(pts, k=k + 1)
    d = dist[:, 1:].mean(axis=1)
    # Duplicated samples (replacement draws) give zero distances.
    d = np.where(d > 0, d, s_max)
    return np.clip(d, s_min, s_max)


def uniform_points(bounds: np.ndarray, m: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return bounds[0] + rng.uniform(size=(m, 3)) * (bounds[1] - bounds[0])


def _scene_from_points(pts, rho, bounds, cfg: AfConfig, target_mass: float | None = None) -> GaussianScene:
    extent = float(np.max(bounds[1] - bounds[0]))
    s_min = 1e-4 * extent
    scales = _initial_scales(pts, s_min, cfg.max_scale_fraction * extent)
    if cfg.mass_match and target_mass is not None and target_mass > 0:
        # Overlapping kernels each carrying the local field value overshoot it;
        # rescale so the scene integrates to the same mass as the FDK field.
        mass = float(np.sum(rho * (2 * np.pi) ** 1.5 * scales**3))
        rho = rho * (target_mass / mass)
    return GaussianScene.from_activated(
        density=rho,
        position=pts,
        scale=np.repeat(scales[:, None], 3, axis=1),
        bounds=bounds,
        s_min=s_min,
    )


def uniform_scene(fdk_vol: Volume, cfg: AfConfig, bounds: np.ndarray | None = None) -> GaussianScene:
    """Initializer without artifact filtering: uniform positions, constant density."""
    bounds = fdk_vol.grid.bounds if bounds is None else np.asarray(bounds)
    pts = uniform_points(bounds, cfg.num_points, cfg.rng_seed)
    rho_min = cfg.rho_min_fraction * max(float(fdk_vol.data.max()), 1e-12)
    rho = np.full(cfg.num_points, max(float(np.mean(np.abs(fdk_vol.data))), rho_min))
    target = float(np.sum(np.abs(fdk_vol.data))) * fdk_vol.voxel_size**3
    return _scene_from_points(pts, rho, bounds, cfg, target)


def initialize_scene(fdk_vol: Volume, cfg: AfConfig = AfConfig(),
                     bounds: np.ndarray | None = None) -> GaussianScene:
    """Smooth, threshold, sample; falls back to :func:`uniform_scene` if no mask forms."""
    bounds = fdk_vol.grid.bounds if bounds is None else np.asarray(bounds)
    try:
        smoothed = smooth_volume(fdk_vol, cfg.smoothing_sigma, cfg.kernel_truncation)
        tau = otsu_threshold(smoothed, cfg.otsu_bins)
        mask = build_mask(smoothed, tau)
    except (DegenerateHistogram, EmptyMask) as e:
        log.warning("artifact filtering failed (%s); falling back to uniform initialization", e)
        return uniform_scene(fdk_vol, cfg, bounds)
    rho_min = cfg.rho_min_fraction * max(float(fdk_vol.data.max()), 1e-12)
    pts, rho = sample_init_points(fdk_vol, mask, cfg.num_points, cfg.rng_seed, rho_min)
    pts = np.clip(pts, bounds[0], bounds[1])
    target = float(np.sum(np.clip(fdk_vol.data[mask], 0, None))) * fdk_vol.voxel_size**3
    return _scene_from_points(pts, rho, bounds, cfg, target)
