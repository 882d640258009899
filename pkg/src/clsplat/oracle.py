"""Slow reference projector: Simpson quadrature of the line integral along every ray.

Used to simulate measurements from voxel phantoms and to check the splatting
renderer. Nothing here is on the training path.
"""
from __future__ import annotations

import numba
import numpy as np
from numba import prange
from scipy import ndimage

from .geometry import LaminographyGeometry, ViewTransform
from .types import GaussianScene, Volume

DEFAULT_SAMPLES = 512


def pixel_rays(view: ViewTransform, geom: LaminographyGeometry):
    """Source position and unit directions ``(nv, nu, 3)`` through every pixel center."""
    cu, cv = geom.detector_center
    u = (np.arange(geom.nu) - cu) * geom.pixel_size
    v = (np.arange(geom.nv) - cv) * geom.pixel_size
    uu, vv = np.meshgrid(u, v)
    d_cam = np.stack([uu, vv, np.full_like(uu, geom.d_sd)], axis=-1)
    d = d_cam @ view.W
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return view.source, d


def ray_box(origin: np.ndarray, d: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Slab-method entry/exit distances; ``t_far <= t_near`` marks a miss."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t0 = (lo - origin) * inv
        t1 = (hi - origin) * inv
    tmin = np.where(np.isnan(t0), -np.inf, np.minimum(t0, t1))
    tmax = np.where(np.isnan(t1), np.inf, np.maximum(t0, t1))
    t_near = np.maximum(np.max(tmin, axis=-1), 0.0)
    t_far = np.min(tmax, axis=-1)
    return t_near, t_far


@numba.njit(parallel=True, cache=True)
def _simpson_gaussians(rho, mean, prec, src, d, t_near, t_far, n, out):
    nv, nu = out.shape
    m = rho.shape[0]
    for v in prange(nv):
        for u in range(nu):
            tn = t_near[v, u]
            tf = t_far[v, u]
            if tf <= tn:
                continue
            h = (tf - tn) / n
            acc = 0.0
            for s in range(n + 1):
                t = tn + s * h
                px = src[0] + t * d[v, u, 0]
                py = src[1] + t * d[v, u, 1]
                pz = src[2] + t * d[v, u, 2]
                val = 0.0
                for g in range(m):
                    dx = px - mean[g, 0]
                    dy = py - mean[g, 1]
                    dz = pz - mean[g, 2]
                    q = (prec[g, 0, 0] * dx * dx + prec[g, 1, 1] * dy * dy + prec[g, 2, 2] * dz * dz
                         + 2.0 * (prec[g, 0, 1] * dx * dy + prec[g, 0, 2] * dx * dz + prec[g, 1, 2] * dy * dz))
                    val += rho[g] * np.exp(-0.5 * q)
                w = 1.0 if (s == 0 or s == n) else (4.0 if s % 2 == 1 else 2.0)
                acc += w * val
            out[v, u] = acc * h / 3.0


def raymarch_project(scene: GaussianScene, view: ViewTransform, geom: LaminographyGeometry,
                     samples_per_ray: int = DEFAULT_SAMPLES) -> np.ndarray:
    """Line integrals of the analytic Gaussian field, one value per pixel.

    Rays are clipped to the scene box grown by 4x the largest Gaussian scale
    (and enlarged to contain every center). The field is evaluated exactly,
    without any cutoff, at every Simpson node.
    """
    if samples_per_ray < 64:
        raise ValueError("samples_per_ray must be >= 64")
    out = np.zeros((geom.nv, geom.nu))
    if len(scene) == 0:
        return out
    pad = 4.0 * float(np.max(scene.scale))
    lo = np.minimum(scene.bounds[0], scene.position.min(axis=0)) - pad
    hi = np.maximum(scene.bounds[1], scene.position.max(axis=0)) + pad
    src, d = pixel_rays(view, geom)
    t_near, t_far = ray_box(src, d, lo, hi)
    R = scene.rotation
    prec = np.einsum("nij,nj,nkj->nik", R, scene.scale ** -2.0, R)
    n = samples_per_ray + (samples_per_ray % 2)
    _simpson_gaussians(scene.density, np.ascontiguousarray(scene.position), prec,
                       np.ascontiguousarray(src), np.ascontiguousarray(d), t_near, t_far, n, out)
    return out


def trilinear(vol: Volume, pts: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of ``vol`` at world points, zero outside the grid."""
    idx = vol.grid.world_to_index(pts)
    coords = np.stack([idx[:, 2], idx[:, 1], idx[:, 0]])
    return ndimage.map_coordinates(vol.data.astype(np.float64, copy=False), coords,
                                   order=1, mode="constant", cval=0.0, prefilter=False)


@numba.njit(inline="always")
def _trilinear_at(data, fx, fy, fz):
    nz, ny, nx = data.shape
    if fx < 0.0 or fy < 0.0 or fz < 0.0 or fx > nx - 1 or fy > ny - 1 or fz > nz - 1:
        return 0.0
    i = min(int(fx), max(nx - 2, 0))
    j = min(int(fy), max(ny - 2, 0))
    k = min(int(fz), max(nz - 2, 0))
    ax, ay, az = fx - i, fy - j, fz - k
    i1 = min(i + 1, nx - 1)
    j1 = min(j + 1, ny - 1)
    k1 = min(k + 1, nz - 1)
    c00 = data[k, j, i] * (1 - ax) + data[k, j, i1] * ax
    c01 = data[k, j1, i] * (1 - ax) + data[k, j1, i1] * ax
    c10 = data[k1, j, i] * (1 - ax) + data[k1, j, i1] * ax
    c11 = data[k1, j1, i] * (1 - ax) + data[k1, j1, i1] * ax
    return (c00 * (1 - ay) + c01 * ay) * (1 - az) + (c10 * (1 - ay) + c11 * ay) * az


@numba.njit(parallel=True, cache=True)
def _simpson_volume(data, origin, vs, src, d, t_near, t_far, n, out):
    nv, nu = out.shape
    for v in prange(nv):
        for u in range(nu):
            tn = t_near[v, u]
            tf = t_far[v, u]
            if tf <= tn:
                continue
            h = (tf - tn) / n
            acc = 0.0
            for s in range(n + 1):
                t = tn + s * h
                fx = (src[0] + t * d[v, u, 0] - origin[0]) / vs
                fy = (src[1] + t * d[v, u, 1] - origin[1]) / vs
                fz = (src[2] + t * d[v, u, 2] - origin[2]) / vs
                w = 1.0 if (s == 0 or s == n) else (4.0 if s % 2 == 1 else 2.0)
                acc += w * _trilinear_at(data, fx, fy, fz)
            out[v, u] = acc * h / 3.0


def raymarch_project_volume(vol: Volume, view: ViewTransform, geom: LaminographyGeometry,
                            samples_per_ray: int = DEFAULT_SAMPLES) -> np.ndarray:
    """Line integrals of the trilinearly interpolated voxel field (zero outside the grid)."""
    if samples_per_ray < 64:
        raise ValueError("samples_per_ray must be >= 64")
    grid = vol.grid
    lo = np.asarray(grid.origin)
    hi = lo + (np.asarray(grid.dims) - 1) * grid.voxel_size
    src, d = pixel_rays(view, geom)
    t_near, t_far = ray_box(src, d, lo, hi)
    out = np.zeros((geom.nv, geom.nu))
    n = samples_per_ray + (samples_per_ray % 2)
    _simpson_volume(np.ascontiguousarray(vol.data, dtype=np.float64), lo, float(grid.voxel_size),
                    np.ascontiguousarray(src), np.ascontiguousarray(d), t_near, t_far, n, out)
    return out
