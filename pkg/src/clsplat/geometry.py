"""Tilted-axis laminography geometry.

The object rotates by ``theta`` about the world ``z`` axis. The source orbits
on a cone at elevation ``tilt`` above the ``xy`` plane, so ``tilt = 0`` is
ordinary circular cone-beam CT and ``tilt = pi/2`` looks straight down the
rotation axis.

World-to-camera rotation for view ``theta`` (rows are the camera axes)::

    W = [[-sin t,        cos t,         0     ],
         [ cos t sin a,  sin t sin a,  -cos a ],
         [-cos t cos a, -sin t cos a,  -sin a ]]

Camera ``z`` (third row) points from the source toward the rotation center,
camera ``x`` is the detector ``u`` direction and camera ``y`` the detector
``v`` direction. ``det(W) = +1`` for every view. The camera-space translation
is ``(0, 0, d_so)`` so the rotation center sits on the optical axis at depth
``d_so``; the source position in world coordinates is
``d_so * (cos t cos a, sin t cos a, sin a)``.

Detector convention: ``u`` along camera ``x``, ``v`` along camera ``y``,
origin at the detector center and pixel ``(0, 0)`` at the ``(-u, -v)``
corner, so the continuous pixel coordinate of the detector center is
``((nu - 1) / 2, (nv - 1) / 2)``. Images are indexed ``image[v, u]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveDepth, ValidationError


@dataclass(frozen=True)
class LaminographyGeometry:
    tilt: float
    d_so: float
    d_sd: float
    nu: int
    nv: int
    pixel_size: float

    def __post_init__(self):
        if not (0.0 <= self.tilt <= math.pi / 2 + 1e-12):
            raise ValidationError(
                f"tilt must lie in [0, pi/2] rad (0-90 deg), got {math.degrees(self.tilt):.4g} deg"
            )
        if not self.d_so > 0:
            raise ValidationError(f"d_so must be positive, got {self.d_so}")
        if not self.d_sd >= self.d_so:
            raise ValidationError(f"d_sd ({self.d_sd}) must be >= d_so ({self.d_so})")
        if int(self.nu) < 1 or int(self.nv) < 1:
            raise ValidationError(f"detector must have positive size, got {self.nu}x{self.nv}")
        if not self.pixel_size > 0:
            raise ValidationError(f"pixel_size must be positive, got {self.pixel_size}")
        object.__setattr__(self, "nu", int(self.nu))
        object.__setattr__(self, "nv", int(self.nv))

    @classmethod
    def desk(cls, tilt: float, extent: float = 2.0, n_det: int = 64) -> "LaminographyGeometry":
        """Desk-scale defaults for a cubic volume of side ``extent``.

        ``d_so`` and ``d_sd`` are 4x and 8x the volume diagonal. The detector
        is ``n_det`` square pixels spanning 1.1x the magnified volume side.
        """
        diag = extent * math.sqrt(3.0)
        d_so, d_sd = 4.0 * diag, 8.0 * diag
        pixel = (d_sd / d_so) * extent * 1.1 / n_det
        return cls(tilt, d_so, d_sd, n_det, n_det, pixel)

    @property
    def magnification(self) -> float:
        return self.d_sd / self.d_so

    @property
    def eps_z(self) -> float:
        return 1e-6 * self.d_so

    @property
    def detector_center(self) -> tuple[float, float]:
        return (0.5 * (self.nu - 1), 0.5 * (self.nv - 1))

    @property
    def focal_px(self) -> float:
        """Source-to-detector distance in pixel units."""
        return self.d_sd / self.pixel_size


@dataclass(frozen=True)
class ViewTransform:
    W: np.ndarray
    t: np.ndarray
    theta: float

    @property
    def source(self) -> np.ndarray:
        """Source position in world coordinates."""
        return -self.W.T @ self.t

    def to_camera(self, p: np.ndarray) -> np.ndarray:
        return np.asarray(p, dtype=np.float64) @ self.W.T + self.t


def view_rotation(theta: float, tilt: float) -> np.ndarray:
    st, ct = math.sin(theta), math.cos(theta)
    sa, ca = math.sin(tilt), math.cos(tilt)
    return np.array(
        [
            [-st, ct, 0.0],
            [ct * sa, st * sa, -ca],
            [-ct * ca, -st * ca, -sa],
        ]
    )


def build_view(geom: LaminographyGeometry, theta: float) -> ViewTransform:
    W = view_rotation(theta, geom.tilt)
    t = np.array([0.0, 0.0, geom.d_so])
    return ViewTransform(W, t, float(theta))


def reference_translation(geom: LaminographyGeometry, theta: float) -> np.ndarray:
    """``d_so * (-cos t sin a, -sin t sin a, cos a)``, the translation written next to W.

    It has length ``d_so`` and equals ``build_view``'s translation at zero
    tilt. For a tilted orbit it is ``-d_so`` times W's third row, which would
    put the world origin off the detector, so views use ``(0, 0, d_so)``.
    """
    st, ct = math.sin(theta), math.cos(theta)
    sa, ca = math.sin(geom.tilt), math.cos(geom.tilt)
    return geom.d_so * np.array([-ct * sa, -st * sa, ca])


def _check_depth(z, geom: LaminographyGeometry):
    if np.any(np.asarray(z) <= geom.eps_z):
        raise NonPositiveDepth(f"camera depth {np.min(z):.6g} <= eps_z {geom.eps_z:.3g}")


def perspective(p_cam: np.ndarray, geom: LaminographyGeometry) -> np.ndarray:
    """Ray-space coordinates ``(u, v, l)`` of camera points.

    ``u, v`` are detector-plane coordinates in world units and ``l`` the
    distance from the source, so moving along a ray changes only ``l``.
    """
    p_cam = np.asarray(p_cam, dtype=np.float64)
    x, y, z = p_cam[..., 0], p_cam[..., 1], p_cam[..., 2]
    _check_depth(z, geom)
    return np.stack(
        [geom.d_sd * x / z, geom.d_sd * y / z, np.linalg.norm(p_cam, axis=-1)], axis=-1
    )


def detector_to_pixel(uv: np.ndarray, geom: LaminographyGeometry) -> np.ndarray:
    uv = np.asarray(uv, dtype=np.float64)
    cu, cv = geom.detector_center
    return np.stack([uv[..., 0] / geom.pixel_size + cu, uv[..., 1] / geom.pixel_size + cv], axis=-1)


def project_point(view: ViewTransform, geom: LaminographyGeometry, p):
    """Project world point(s) through the view.

    Returns ``(p_ray, pix)``: ray-space ``(u, v, l)`` and continuous pixel
    coordinates ``(u_px, v_px)``. Raises :class:`NonPositiveDepth` for points
    at or behind the source.
    """
    p_ray = perspective(view.to_camera(p), geom)
    return p_ray, detector_to_pixel(p_ray[..., :2], geom)


def projection_jacobian(p_cam: np.ndarray, geom: LaminographyGeometry) -> np.ndarray:
    """Jacobian of :func:`perspective` at camera point(s) ``p_cam``."""
    p_cam = np.asarray(p_cam, dtype=np.float64)
    x, y, z = p_cam[..., 0], p_cam[..., 1], p_cam[..., 2]
    _check_depth(z, geom)
    f = geom.d_sd
    l = np.linalg.norm(p_cam, axis=-1)
    J = np.zeros(p_cam.shape[:-1] + (3, 3))
    J[..., 0, 0] = f / z
    J[..., 0, 2] = -f * x / z**2
    J[..., 1, 1] = f / z
    J[..., 1, 2] = -f * y / z**2
    J[..., 2, :] = p_cam / l[..., None]
    return J


def transform_covariance(view: ViewTransform, J: np.ndarray, cov_world: np.ndarray) -> np.ndarray:
    """Ray-space covariance ``J W Sigma W^T J^T``."""
    T = J @ view.W
    return T @ cov_world @ np.swapaxes(T, -1, -2)
