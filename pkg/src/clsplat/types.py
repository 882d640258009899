"""Core data model: radiative Gaussians, scenes, voxel volumes and projection stacks.

A scene is stored as a struct of arrays over its ``M`` Gaussians. Positivity
constrained quantities are kept as unconstrained raw values and exposed through
activation maps:

* density ``rho = exp(raw_density)``
* scale ``s = max(exp(raw_scale), s_min)`` per axis
* rotation from the normalized quaternion ``(w, x, y, z)``

The density field is the plain sum of all kernels,
``sigma(x) = sum_i rho_i * exp(-0.5 (x - p_i)^T Sigma_i^{-1} (x - p_i))`` with
``Sigma_i = R_i S_i S_i^T R_i^T``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
import numba

from .errors import ValidationError

# Mahalanobis cutoff used when rasterizing a scene onto a voxel grid.
VOLUME_CUTOFF_SIGMA = 6.0
MAX_GRID_VOXELS = 2**31


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for quaternions ``(..., 4)`` in (w, x, y, z) order.

    Quaternions are normalized first, so any non-zero input is accepted.
    """
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def default_s_min(bounds: np.ndarray) -> float:
    """Scale floor: 1e-4 of the scene extent (largest box side)."""
    return 1e-4 * float(np.max(bounds[1] - bounds[0]))


@dataclass(frozen=True)
class RadiativeGaussian:
    """One activated Gaussian kernel, as seen from outside the optimizer."""

    density: float
    position: np.ndarray
    quaternion: np.ndarray
    scale: np.ndarray

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_rotmat(self.quaternion)

    @property
    def covariance(self) -> np.ndarray:
        R = self.rotation
        return R @ np.diag(self.scale**2) @ R.T


@dataclass
class GaussianScene:
    """Struct-of-arrays container for ``M`` radiative Gaussians.

    ``bounds`` is a ``(2, 3)`` array holding the lower and upper corner of the
    axis-aligned scene box.
    """

    raw_density: np.ndarray
    position: np.ndarray
    quaternion: np.ndarray
    raw_scale: np.ndarray
    bounds: np.ndarray
    s_min: float = field(default=-1.0)

    def __post_init__(self):
        self.raw_density = np.ascontiguousarray(self.raw_density, dtype=np.float64).reshape(-1)
        m = self.raw_density.shape[0]
        self.position = np.ascontiguousarray(self.position, dtype=np.float64).reshape(m, 3)
        self.quaternion = np.ascontiguousarray(self.quaternion, dtype=np.float64).reshape(m, 4)
        self.raw_scale = np.ascontiguousarray(self.raw_scale, dtype=np.float64).reshape(m, 3)
        self.bounds = np.asarray(self.bounds, dtype=np.float64).reshape(2, 3)
        if np.any(self.bounds[1] <= self.bounds[0]):
            raise ValidationError(f"scene bounds must have positive extent, got {self.bounds.tolist()}")
        if self.s_min < 0:
            self.s_min = default_s_min(self.bounds)

    @classmethod
    def from_activated(cls, density, position, scale, bounds, quaternion=None, s_min=None) -> "GaussianScene":
        """Build a scene from activated values (positive densities and scales)."""
        density = np.asarray(density, dtype=np.float64).reshape(-1)
        m = density.shape[0]
        if quaternion is None:
            quaternion = np.tile([1.0, 0.0, 0.0, 0.0], (m, 1))
        scale = np.broadcast_to(np.asarray(scale, dtype=np.float64), (m, 3))
        if np.any(density <= 0) or np.any(scale <= 0):
            raise ValidationError("densities and scales must be positive")
        return cls(
            raw_density=np.log(density),
            position=position,
            quaternion=quaternion,
            raw_scale=np.log(scale),
            bounds=bounds,
            s_min=-1.0 if s_min is None else s_min,
        )

    def __len__(self) -> int:
        return self.raw_density.shape[0]

    @property
    def count(self) -> int:
        return len(self)

    def __getitem__(self, i: int) -> RadiativeGaussian:
        return RadiativeGaussian(
            density=float(self.density[i]),
            position=self.position[i].copy(),
            quaternion=self.quaternion[i] / np.linalg.norm(self.quaternion[i]),
            scale=self.scale[i].copy(),
        )

    def __iter__(self) -> Iterator[RadiativeGaussian]:
        for i in range(len(self)):
            yield self[i]

    @property
    def extent(self) -> float:
        return float(np.max(self.bounds[1] - self.bounds[0]))

    @property
    def density(self) -> np.ndarray:
        return np.exp(self.raw_density)

    @property
    def scale(self) -> np.ndarray:
        return np.maximum(np.exp(self.raw_scale), self.s_min)

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_rotmat(self.quaternion)

    @property
    def covariance(self) -> np.ndarray:
        R = self.rotation
        s2 = self.scale**2
        return (R * s2[:, None, :]) @ np.swapaxes(R, -1, -2)

    def copy(self) -> "GaussianScene":
        return GaussianScene(
            self.raw_density.copy(),
            self.position.copy(),
            self.quaternion.copy(),
            self.raw_scale.copy(),
            self.bounds.copy(),
            self.s_min,
        )

    def subset(self, index) -> "GaussianScene":
        return GaussianScene(
            self.raw_density[index],
            self.position[index],
            self.quaternion[index],
            self.raw_scale[index],
            self.bounds.copy(),
            self.s_min,
        )

    @staticmethod
    def concatenate(scenes: list["GaussianScene"]) -> "GaussianScene":
        first = scenes[0]
        return GaussianScene(
            np.concatenate([s.raw_density for s in scenes]),
            np.concatenate([s.position for s in scenes]),
            np.concatenate([s.quaternion for s in scenes]),
            np.concatenate([s.raw_scale for s in scenes]),
            first.bounds.copy(),
            first.s_min,
        )


@dataclass(frozen=True)
class GridSpec:
    """Voxel grid: ``dims`` is (nx, ny, nz); voxel (0, 0, 0) is centered at ``origin``."""

    dims: tuple[int, int, int]
    voxel_size: float
    origin: tuple[float, float, float]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) <= 0:
            raise ValidationError(f"grid dims must be three positive integers, got {self.dims}")
        if not self.voxel_size > 0:
            raise ValidationError(f"voxel_size must be positive, got {self.voxel_size}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @classmethod
    def centered(cls, dims, extent: float = 2.0) -> "GridSpec":
        """Cubic-voxel grid covering ``[-extent/2, extent/2]`` along its longest axis."""
        dims = tuple(int(d) for d in np.broadcast_to(dims, 3))
        vs = extent / max(dims)
        origin = tuple(-0.5 * n * vs + 0.5 * vs for n in dims)
        return cls(dims, vs, origin)

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape in (z, y, x) order."""
        nx, ny, nz = self.dims
        return (nz, ny, nx)

    @property
    def bounds(self) -> np.ndarray:
        """Outer box of the grid (voxel faces, not centers)."""
        o = np.asarray(self.origin)
        lo = o - 0.5 * self.voxel_size
        hi = lo + np.asarray(self.dims) * self.voxel_size
        return np.stack([lo, hi])

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + np.arange(self.dims[axis]) * self.voxel_size

    def world_to_index(self, x: np.ndarray) -> np.ndarray:
        """Continuous (x, y, z) voxel index of world points."""
        return (np.asarray(x) - np.asarray(self.origin)) / self.voxel_size


@dataclass
class Volume:
    """Dense scalar grid stored as a ``(nz, ny, nx)`` float array (x fastest)."""

    data: np.ndarray
    voxel_size: float
    origin: tuple[float, float, float]

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValidationError(f"volume data must be 3D, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("volume contains non-finite values")
        self.origin = tuple(float(o) for o in self.origin)

    @classmethod
    def zeros(cls, grid: GridSpec, dtype=np.float64) -> "Volume":
        return cls(np.zeros(grid.shape, dtype=dtype), grid.voxel_size, grid.origin)

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.dims, self.voxel_size, self.origin)


@dataclass
class ProjectionStack:
    """Log-domain line-integral images, ``images[view, v, u]``, with per-view angles."""

    images: np.ndarray
    angles: np.ndarray
    pixel_size: float

    def __post_init__(self):
        self.images = np.asarray(self.images)
        self.angles = np.asarray(self.angles, dtype=np.float64).reshape(-1)
        if self.images.ndim != 3:
            raise ValidationError(f"projection images must be (views, nv, nu), got {self.images.shape}")
        if self.images.shape[0] != self.angles.shape[0]:
            raise ValidationError(
                f"{self.images.shape[0]} images but {self.angles.shape[0]} angles"
            )
        if not np.all(np.isfinite(self.images)):
            raise ValidationError("projection stack contains non-finite values")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def detector(self) -> tuple[int, int]:
        return (self.images.shape[2], self.images.shape[1])

    def select(self, index) -> "ProjectionStack":
        return ProjectionStack(self.images[index], self.angles[index], self.pixel_size)


def scene_density_at(scene: GaussianScene, x) -> float | np.ndarray:
    """Density field of the scene at world point(s) ``x`` of shape ``(3,)`` or ``(N, 3)``."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x.reshape(-1, 3)
    R = scene.rotation
    inv_s = 1.0 / scene.scale
    rho = scene.density
    out = np.zeros(pts.shape[0])
    for i in range(len(scene)):
        # Mahalanobis distance through the local frame avoids inverting Sigma.
        local = (pts - scene.position[i]) @ R[i] * inv_s[i]
        out += rho[i] * np.exp(-0.5 * np.einsum("nk,nk->n", local, local))
    return float(out[0]) if single else out


@numba.njit(cache=True)
def _splat_volume(out, origin, vs, pos, inv_cov, half, rho, cutoff2):
    nz, ny, nx = out.shape
    for g in range(pos.shape[0]):
        lo = np.empty(3, np.int64)
        hi = np.empty(3, np.int64)
        dims = (nx, ny, nz)
        for a in range(3):
            c = (pos[g, a] - origin[a]) / vs
            lo[a] = max(0, int(np.ceil(c - half[g, a] / vs)))
            hi[a] = min(dims[a] - 1, int(np.floor(c + half[g, a] / vs)))
        A = inv_cov[g]
        for k in range(lo[2], hi[2] + 1):
            dz = origin[2] + k * vs - pos[g, 2]
            for j in range(lo[1], hi[1] + 1):
                dy = origin[1] + j * vs - pos[g, 1]
                for i in range(lo[0], hi[0] + 1):
                    dx = origin[0] + i * vs - pos[g, 0]
                    q = (A[0, 0] * dx * dx + A[1, 1] * dy * dy + A[2, 2] * dz * dz
                         + 2.0 * (A[0, 1] * dx * dy + A[0, 2] * dx * dz + A[1, 2] * dy * dz))
                    if q <= cutoff2:
                        out[k, j, i] += rho[g] * np.exp(-0.5 * q)


def rasterize_scene_to_volume(scene: GaussianScene, grid: GridSpec) -> Volume:
    """Sample the density field at every voxel center.

    Each kernel is evaluated out to a Mahalanobis radius of
    ``VOLUME_CUTOFF_SIGMA``; beyond that its contribution is below
    ``rho * exp(-18)`` and is dropped.
    """
    if int(np.prod(grid.dims, dtype=np.int64)) > MAX_GRID_VOXELS:
        raise ValidationError(f"grid {grid.dims} exceeds {MAX_GRID_VOXELS} voxels")
    out = np.zeros(grid.shape)
    if len(scene):
        R = scene.rotation
        inv_s2 = 1.0 / scene.scale**2
        inv_cov = np.ascontiguousarray((R * inv_s2[:, None, :]) @ np.swapaxes(R, -1, -2))
        cov_diag = np.einsum("nij,nj,nij->ni", R, scene.scale**2, R)
        half = VOLUME_CUTOFF_SIGMA * np.sqrt(cov_diag)
        _splat_volume(
            out,
            np.asarray(grid.origin, dtype=np.float64),
            float(grid.voxel_size),
            scene.position,
            inv_cov,
            np.ascontiguousarray(half),
            scene.density,
            VOLUME_CUTOFF_SIGMA**2,
        )
    return Volume(out, grid.voxel_size, grid.origin)
