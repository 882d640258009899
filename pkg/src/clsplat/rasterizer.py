"""Differentiable X-ray splatting of radiative Gaussians onto the detector.

Each Gaussian is pushed to ray space with the local-affine (EWA) projection,
its covariance marginalized onto the detector plane, and its amplitude scaled
by ``mu = sqrt(2 pi |Sigma_ray| / |Sigma_2d|)`` so the 2D splat carries the
line integral of the 3D kernel. Splats are summed with no compositing.

All detector-plane quantities here are in pixel units. ``mu`` is invariant to
that choice because both determinants pick up the same factor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from numba import prange

from .geometry import LaminographyGeometry, ViewTransform
from .types import GaussianScene, RadiativeGaussian, quat_to_rotmat

TILE = 16
CUTOFF_SIGMA = 3.0
# Low-pass dilation added to the 2D covariance diagonal, in px^2.
AA_FLOOR = 0.3**2
# Minimum pre-dilation 2D determinant (px^4) before a splat is culled.
DET_FLOOR = 1e-12


class _Culled:
    def __repr__(self):
        return "Culled"


Culled = _Culled()


@dataclass(frozen=True)
class Splat2D:
    center: np.ndarray
    covariance: np.ndarray
    amplitude: float
    mu: float
    cov_ray: np.ndarray
    source_index: int = 0


@dataclass
class Gradients:
    """Per-Gaussian loss gradients w.r.t. the stored raw parameters."""

    raw_density: np.ndarray
    position: np.ndarray
    quaternion: np.ndarray
    raw_scale: np.ndarray
    screen: np.ndarray  # |dL/d(center)| in normalized device units
    visible: np.ndarray

    @classmethod
    def zeros(cls, m: int) -> "Gradients":
        return cls(np.zeros(m), np.zeros((m, 3)), np.zeros((m, 4)), np.zeros((m, 3)),
                   np.zeros(m), np.zeros(m, dtype=bool))


@dataclass
class _Projected:
    """Per-Gaussian splat parameters plus intermediates reused by the backward pass."""

    visible: np.ndarray
    center: np.ndarray
    cov2: np.ndarray
    conic: np.ndarray
    amp: np.ndarray
    mu: np.ndarray
    bbox: np.ndarray
    rho: np.ndarray
    scale: np.ndarray
    R: np.ndarray
    qn: np.ndarray
    q_norm: np.ndarray
    cov3: np.ndarray
    cov_ray: np.ndarray
    p_cam: np.ndarray
    J: np.ndarray
    T: np.ndarray
    scale_active: np.ndarray


@dataclass
class RenderOutput:
    image: np.ndarray
    visible: np.ndarray
    _splats: "_Splats | None" = field(default=None, repr=False)


def ewa_project(scene: GaussianScene, view: ViewTransform, geom: LaminographyGeometry) -> _Projected:
    """Vectorized EWA projection keeping every intermediate (3D/ray covariances, J).

    Reference path for inspection and tests; rendering uses the compiled kernel.
    """
    W, t = view.W, view.t
    f = geom.focal_px
    cu, cv = geom.detector_center
    m = len(scene)

    raw_s = np.exp(scene.raw_scale)
    scale = np.maximum(raw_s, scene.s_min)
    q_norm = np.linalg.norm(scene.quaternion, axis=1)
    qn = scene.quaternion / q_norm[:, None]
    R = quat_to_rotmat(qn)
    rho = np.exp(scene.raw_density)
    cov3 = (R * (scale**2)[:, None, :]) @ np.swapaxes(R, 1, 2)

    p_cam = scene.position @ W.T + t
    z_raw = p_cam[:, 2]
    visible = z_raw > geom.eps_z
    # Keep culled rows numerically harmless; they are masked out below.
    p_cam = np.where(visible[:, None], p_cam, np.array([0.0, 0.0, geom.d_so]))
    x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]
    l = np.linalg.norm(p_cam, axis=1)

    J = np.zeros((m, 3, 3))
    J[:, 0, 0] = f / z
    J[:, 0, 2] = -f * x / z**2
    J[:, 1, 1] = f / z
    J[:, 1, 2] = -f * y / z**2
    J[:, 2, :] = p_cam / l[:, None]
    T = J @ W
    cov_ray = T @ cov3 @ np.swapaxes(T, 1, 2)
    cov2 = cov_ray[:, :2, :2].copy()

    det2 = cov2[:, 0, 0] * cov2[:, 1, 1] - cov2[:, 0, 1] ** 2
    visible &= det2 > DET_FLOOR
    det2 = np.where(visible, det2, 1.0)
    # |Sigma_ray| = |J|^2 |Sigma| with |J| = f^2 l / z^3 (pixel units).
    det_j = f * f * l / z**3
    mu = math.sqrt(2.0 * math.pi) * det_j * np.prod(scale, axis=1) / np.sqrt(det2)

    a = cov2[:, 0, 0] + AA_FLOOR
    b = cov2[:, 0, 1]
    c = cov2[:, 1, 1] + AA_FLOOR
    detf = a * c - b * b
    conic = np.stack([c / detf, -b / detf, a / detf], axis=1)

    center = np.stack([f * x / z + cu, f * y / z + cv], axis=1)
    hu = CUTOFF_SIGMA * np.sqrt(a)
    hv = CUTOFF_SIGMA * np.sqrt(c)
    with np.errstate(invalid="ignore"):
        u0 = np.maximum(np.ceil(center[:, 0] - hu), 0)
        u1 = np.minimum(np.floor(center[:, 0] + hu), geom.nu - 1)
        v0 = np.maximum(np.ceil(center[:, 1] - hv), 0)
        v1 = np.minimum(np.floor(center[:, 1] + hv), geom.nv - 1)
    visible &= np.isfinite(center).all(axis=1) & (u0 <= u1) & (v0 <= v1)
    bbox = np.zeros((m, 4), dtype=np.int64)
    bbox[visible] = np.stack([u0, u1, v0, v1], axis=1)[visible].astype(np.int64)
    amp = np.where(visible, rho * mu, 0.0)

    return _Projected(
        visible=visible, center=np.ascontiguousarray(center), cov2=cov2,
        conic=np.ascontiguousarray(conic), amp=amp, mu=mu, bbox=bbox, rho=rho,
        scale=scale, R=R, qn=qn, q_norm=q_norm, cov3=cov3, cov_ray=cov_ray,
        p_cam=p_cam, J=J, T=T, scale_active=raw_s > scene.s_min,
    )


@numba.njit(cache=True)
def _bin_tiles(bbox, visible, n_tx, n_ty, tile):
    n_tiles = n_tx * n_ty
    counts = np.zeros(n_tiles + 1, np.int64)
    m = bbox.shape[0]
    for g in range(m):
        if not visible[g]:
            continue
        for ty in range(bbox[g, 2] // tile, bbox[g, 3] // tile + 1):
            for tx in range(bbox[g, 0] // tile, bbox[g, 1] // tile + 1):
                counts[ty * n_tx + tx + 1] += 1
    offsets = np.cumsum(counts)
    fill = offsets[:-1].copy()
    index = np.empty(offsets[-1], np.int64)
    for g in range(m):
        if not visible[g]:
            continue
        for ty in range(bbox[g, 2] // tile, bbox[g, 3] // tile + 1):
            for tx in range(bbox[g, 0] // tile, bbox[g, 1] // tile + 1):
                k = ty * n_tx + tx
                index[fill[k]] = g
                fill[k] += 1
    return offsets, index


@numba.njit(parallel=True, cache=True)
def _forward_tiles(offsets, index, bbox, center, conic, amp, nu, nv, n_tx, tile, cutoff2, out):
    n_tiles = offsets.shape[0] - 1
    for k in prange(n_tiles):
        ty = k // n_tx
        tx = k - ty * n_tx
        u_lo, v_lo = tx * tile, ty * tile
        u_hi = min(u_lo + tile, nu) - 1
        v_hi = min(v_lo + tile, nv) - 1
        acc = np.zeros((tile, tile))
        # Splats in ascending index order, so each pixel sums in a fixed order.
        for s in range(offsets[k], offsets[k + 1]):
            g = index[s]
            a, b, c = conic[g, 0], conic[g, 1], conic[g, 2]
            for v in range(max(v_lo, bbox[g, 2]), min(v_hi, bbox[g, 3]) + 1):
                dy = v - center[g, 1]
                for u in range(max(u_lo, bbox[g, 0]), min(u_hi, bbox[g, 1]) + 1):
                    dx = u - center[g, 0]
                    q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
                    if q <= cutoff2:
                        acc[v - v_lo, u - u_lo] += amp[g] * np.exp(-0.5 * q)
        for v in range(v_lo, v_hi + 1):
            for u in range(u_lo, u_hi + 1):
                out[v, u] = acc[v - v_lo, u - u_lo]


@numba.njit(parallel=True, cache=True)
def _backward_splats(grad_img, visible, bbox, center, conic, amp, cutoff2,
                     d_amp, d_center, d_conic):
    m = center.shape[0]
    for g in prange(m):
        if not visible[g]:
            continue
        ca, cb, cc = conic[g, 0], conic[g, 1], conic[g, 2]
        s_amp = 0.0
        s_cu = 0.0
        s_cv = 0.0
        s_a = 0.0
        s_b = 0.0
        s_c = 0.0
        for v in range(bbox[g, 2], bbox[g, 3] + 1):
            dy = v - center[g, 1]
            for u in range(bbox[g, 0], bbox[g, 1] + 1):
                dx = u - center[g, 0]
                q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
                if q > cutoff2:
                    continue
                w = np.exp(-0.5 * q)
                gw = grad_img[v, u] * w
                s_amp += gw
                gwa = gw * amp[g]
                s_cu += gwa * (ca * dx + cb * dy)
                s_cv += gwa * (cb * dx + cc * dy)
                s_a += gwa * dx * dx
                s_b += gwa * dx * dy
                s_c += gwa * dy * dy
        d_amp[g] = s_amp
        d_center[g, 0] = s_cu
        d_center[g, 1] = s_cv
        # Gradient w.r.t. the conic entries; the off-diagonal entry appears twice.
        d_conic[g, 0] = -0.5 * s_a
        d_conic[g, 1] = -s_b
        d_conic[g, 2] = -0.5 * s_c


@numba.njit(inline="always")
def _quat_rot(qw, qx, qy, qz, R):
    R[0, 0] = 1 - 2 * (qy * qy + qz * qz)
    R[0, 1] = 2 * (qx * qy - qw * qz)
    R[0, 2] = 2 * (qx * qz + qw * qy)
    R[1, 0] = 2 * (qx * qy + qw * qz)
    R[1, 1] = 1 - 2 * (qx * qx + qz * qz)
    R[1, 2] = 2 * (qy * qz - qw * qx)
    R[2, 0] = 2 * (qx * qz - qw * qy)
    R[2, 1] = 2 * (qy * qz + qw * qx)
    R[2, 2] = 1 - 2 * (qx * qx + qy * qy)


@numba.njit(inline="always")
def _gaussian_setup(g, raw_density, position, quaternion, raw_scale, s_min, W, t, f, R, s, cov, T):
    """Fill R, s, cov (world) and T = J W (first two rows); return camera point and rho."""
    q0, q1, q2, q3 = quaternion[g, 0], quaternion[g, 1], quaternion[g, 2], quaternion[g, 3]
    qn = math.sqrt(q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3)
    _quat_rot(q0 / qn, q1 / qn, q2 / qn, q3 / qn, R)
    for k in range(3):
        s[k] = max(math.exp(raw_scale[g, k]), s_min)
    for i in range(3):
        for j in range(3):
            acc = 0.0
            for k in range(3):
                acc += R[i, k] * s[k] * s[k] * R[j, k]
            cov[i, j] = acc
    px, py, pz = position[g, 0], position[g, 1], position[g, 2]
    x = W[0, 0] * px + W[0, 1] * py + W[0, 2] * pz + t[0]
    y = W[1, 0] * px + W[1, 1] * py + W[1, 2] * pz + t[1]
    z = W[2, 0] * px + W[2, 1] * py + W[2, 2] * pz + t[2]
    for b in range(3):
        T[0, b] = f / z * W[0, b] - f * x / (z * z) * W[2, b]
        T[1, b] = f / z * W[1, b] - f * y / (z * z) * W[2, b]
    return x, y, z, math.exp(raw_density[g]), qn


@numba.njit(parallel=True, cache=True)
def _project_kernel(raw_density, position, quaternion, raw_scale, s_min, W, t, f, cu, cv,
                    nu, nv, eps_z, aa, det_floor, cutoff,
                    visible, center, conic, cov2, amp, mu, bbox):
    m = raw_density.shape[0]
    for g in prange(m):
        R = np.empty((3, 3))
        s = np.empty(3)
        cov = np.empty((3, 3))
        T = np.empty((2, 3))
        x, y, z, rho, qn = _gaussian_setup(g, raw_density, position, quaternion, raw_scale,
                                           s_min, W, t, f, R, s, cov, T)
        visible[g] = False
        amp[g] = 0.0
        if not z > eps_z:
            continue
        # 2D covariance = rows 0-1 of T cov T^T
        TC = np.empty((2, 3))
        for i in range(2):
            for b in range(3):
                TC[i, b] = T[i, 0] * cov[0, b] + T[i, 1] * cov[1, b] + T[i, 2] * cov[2, b]
        c00 = TC[0, 0] * T[0, 0] + TC[0, 1] * T[0, 1] + TC[0, 2] * T[0, 2]
        c01 = TC[0, 0] * T[1, 0] + TC[0, 1] * T[1, 1] + TC[0, 2] * T[1, 2]
        c11 = TC[1, 0] * T[1, 0] + TC[1, 1] * T[1, 1] + TC[1, 2] * T[1, 2]
        det2 = c00 * c11 - c01 * c01
        if not det2 > det_floor:
            continue
        l = math.sqrt(x * x + y * y + z * z)
        mu_g = math.sqrt(2.0 * math.pi) * (f * f * l / (z * z * z)) * s[0] * s[1] * s[2] / math.sqrt(det2)
        a = c00 + aa
        c = c11 + aa
        detf = a * c - c01 * c01
        uc = f * x / z + cu
        vc = f * y / z + cv
        hu = cutoff * math.sqrt(a)
        hv = cutoff * math.sqrt(c)
        u0 = max(math.ceil(uc - hu), 0.0)
        u1 = min(math.floor(uc + hu), nu - 1.0)
        v0 = max(math.ceil(vc - hv), 0.0)
        v1 = min(math.floor(vc + hv), nv - 1.0)
        if not (u0 <= u1 and v0 <= v1):
            continue
        visible[g] = True
        center[g, 0] = uc
        center[g, 1] = vc
        conic[g, 0] = c / detf
        conic[g, 1] = -c01 / detf
        conic[g, 2] = a / detf
        cov2[g, 0] = c00
        cov2[g, 1] = c01
        cov2[g, 2] = c11
        mu[g] = mu_g
        amp[g] = rho * mu_g
        bbox[g, 0] = int(u0)
        bbox[g, 1] = int(u1)
        bbox[g, 2] = int(v0)
        bbox[g, 3] = int(v1)


@numba.njit(parallel=True, cache=True)
def _chain_kernel(raw_density, position, quaternion, raw_scale, s_min, W, t, f, nu, nv,
                  visible, conic, cov2, amp, d_amp, d_center, d_conic,
                  g_rho, g_pos, g_quat, g_scale, screen):
    m = raw_density.shape[0]
    for g in prange(m):
        if not visible[g]:
            continue
        R = np.empty((3, 3))
        s = np.empty(3)
        cov = np.empty((3, 3))
        T = np.empty((2, 3))
        x, y, z, rho, qn = _gaussian_setup(g, raw_density, position, quaternion, raw_scale,
                                           s_min, W, t, f, R, s, cov, T)
        g_log = d_amp[g] * amp[g]  # d/d log(rho) and d/d log(mu)
        g_rho[g] = g_log

        # conic = inverse(cov2 + floor): dL/dcov2 = -C G C, G symmetric.
        ca, cb, cc = conic[g, 0], conic[g, 1], conic[g, 2]
        ga, gb, gc = d_conic[g, 0], 0.5 * d_conic[g, 1], d_conic[g, 2]
        # CG
        m00 = ca * ga + cb * gb
        m01 = ca * gb + cb * gc
        m10 = cb * ga + cc * gb
        m11 = cb * gb + cc * gc
        G2 = np.empty((2, 2))
        G2[0, 0] = -(m00 * ca + m01 * cb)
        G2[0, 1] = -(m00 * cb + m01 * cc)
        G2[1, 0] = -(m10 * ca + m11 * cb)
        G2[1, 1] = -(m10 * cb + m11 * cc)
        # mu carries -0.5 log|cov2|
        s00, s01, s11 = cov2[g, 0], cov2[g, 1], cov2[g, 2]
        det2 = s00 * s11 - s01 * s01
        G2[0, 0] -= 0.5 * g_log * s11 / det2
        G2[1, 1] -= 0.5 * g_log * s00 / det2
        G2[0, 1] += 0.5 * g_log * s01 / det2
        G2[1, 0] += 0.5 * g_log * s01 / det2

        # world covariance gradient: T^T G2 T
        Gc = np.empty((3, 3))
        for a_ in range(3):
            for b_ in range(3):
                acc = 0.0
                for i in range(2):
                    for j in range(2):
                        acc += T[i, a_] * G2[i, j] * T[j, b_]
                Gc[a_, b_] = acc
        # dL/dT = 2 G2 T cov  (rows 0-1)
        TC = np.empty((2, 3))
        for i in range(2):
            for b_ in range(3):
                TC[i, b_] = T[i, 0] * cov[0, b_] + T[i, 1] * cov[1, b_] + T[i, 2] * cov[2, b_]
        gT = np.empty((2, 3))
        for i in range(2):
            for b_ in range(3):
                gT[i, b_] = 2.0 * (G2[i, 0] * TC[0, b_] + G2[i, 1] * TC[1, b_])
        # dL/dJ = gT W^T, only the entries J00, J02, J11, J12 depend on p_cam
        gJ00 = gT[0, 0] * W[0, 0] + gT[0, 1] * W[0, 1] + gT[0, 2] * W[0, 2]
        gJ02 = gT[0, 0] * W[2, 0] + gT[0, 1] * W[2, 1] + gT[0, 2] * W[2, 2]
        gJ11 = gT[1, 0] * W[1, 0] + gT[1, 1] * W[1, 1] + gT[1, 2] * W[1, 2]
        gJ12 = gT[1, 0] * W[2, 0] + gT[1, 1] * W[2, 1] + gT[1, 2] * W[2, 2]
        z2 = z * z
        z3 = z2 * z
        gx = -gJ02 * f / z2
        gy = -gJ12 * f / z2
        gz = -(gJ00 + gJ11) * f / z2 + gJ02 * 2 * f * x / z3 + gJ12 * 2 * f * y / z3
        du, dv = d_center[g, 0], d_center[g, 1]
        gx += du * f / z
        gy += dv * f / z
        gz -= (du * x + dv * y) * f / z2
        # log|J| = log l - 3 log z + const
        l2 = x * x + y * y + z2
        gx += g_log * x / l2
        gy += g_log * y / l2
        gz += g_log * z / l2 - 3.0 * g_log / z
        for k in range(3):
            g_pos[g, k] = W[0, k] * gx + W[1, k] * gy + W[2, k] * gz

        # cov = R diag(s^2) R^T
        GR = np.empty((3, 3))
        for i in range(3):
            for k in range(3):
                GR[i, k] = 2.0 * (Gc[i, 0] * R[0, k] + Gc[i, 1] * R[1, k] + Gc[i, 2] * R[2, k]) * s[k] * s[k]
        for k in range(3):
            rgr = 0.0
            for i in range(3):
                for j in range(3):
                    rgr += R[i, k] * Gc[i, j] * R[j, k]
            gs = 2.0 * s[k] * rgr + g_log / s[k]
            g_scale[g, k] = gs * s[k] if math.exp(raw_scale[g, k]) > s_min else 0.0

        w, qx, qy, qz = quaternion[g, 0] / qn, quaternion[g, 1] / qn, quaternion[g, 2] / qn, quaternion[g, 3] / qn
        gw = 2 * (-qz * GR[0, 1] + qy * GR[0, 2] + qz * GR[1, 0] - qx * GR[1, 2] - qy * GR[2, 0] + qx * GR[2, 1])
        gqx = 2 * (qy * GR[0, 1] + qz * GR[0, 2] + qy * GR[1, 0] - 2 * qx * GR[1, 1] - w * GR[1, 2]
                   + qz * GR[2, 0] + w * GR[2, 1] - 2 * qx * GR[2, 2])
        gqy = 2 * (-2 * qy * GR[0, 0] + qx * GR[0, 1] + w * GR[0, 2] + qx * GR[1, 0] + qz * GR[1, 2]
                   - w * GR[2, 0] + qz * GR[2, 1] - 2 * qy * GR[2, 2])
        gqz = 2 * (-2 * qz * GR[0, 0] - w * GR[0, 1] + qx * GR[0, 2] + w * GR[1, 0] - 2 * qz * GR[1, 1]
                   + qy * GR[1, 2] + qx * GR[2, 0] + qy * GR[2, 1])
        dot = w * gw + qx * gqx + qy * gqy + qz * gqz
        g_quat[g, 0] = (gw - w * dot) / qn
        g_quat[g, 1] = (gqx - qx * dot) / qn
        g_quat[g, 2] = (gqy - qy * dot) / qn
        g_quat[g, 3] = (gqz - qz * dot) / qn

        screen[g] = math.hypot(du * 0.5 * nu, dv * 0.5 * nv)


@dataclass
class _Splats:
    visible: np.ndarray
    center: np.ndarray
    conic: np.ndarray
    cov2: np.ndarray
    amp: np.ndarray
    mu: np.ndarray
    bbox: np.ndarray


def _splat_all(scene: GaussianScene, view: ViewTransform, geom: LaminographyGeometry) -> _Splats:
    m = len(scene)
    sp = _Splats(
        visible=np.zeros(m, dtype=np.bool_), center=np.zeros((m, 2)), conic=np.zeros((m, 3)),
        cov2=np.zeros((m, 3)), amp=np.zeros(m), mu=np.zeros(m), bbox=np.zeros((m, 4), dtype=np.int64),
    )
    cu, cv = geom.detector_center
    _project_kernel(scene.raw_density, scene.position, scene.quaternion, scene.raw_scale,
                    float(scene.s_min), view.W, view.t, geom.focal_px, cu, cv, geom.nu, geom.nv,
                    geom.eps_z, AA_FLOOR, DET_FLOOR, CUTOFF_SIGMA,
                    sp.visible, sp.center, sp.conic, sp.cov2, sp.amp, sp.mu, sp.bbox)
    return sp


def _rasterize(sp: _Splats, geom: LaminographyGeometry) -> np.ndarray:
    n_tx = -(-geom.nu // TILE)
    n_ty = -(-geom.nv // TILE)
    offsets, index = _bin_tiles(sp.bbox, sp.visible, n_tx, n_ty, TILE)
    image = np.zeros((geom.nv, geom.nu))
    _forward_tiles(offsets, index, sp.bbox, sp.center, sp.conic, sp.amp,
                   geom.nu, geom.nv, n_tx, TILE, CUTOFF_SIGMA**2, image)
    return image


def render(scene: GaussianScene, view: ViewTransform, geom: LaminographyGeometry) -> RenderOutput:
    """Render the line-integral image ``image[v, u]`` of a scene for one view."""
    sp = _splat_all(scene, view, geom)
    return RenderOutput(image=_rasterize(sp, geom), visible=sp.visible, _splats=sp)


def render_backward(scene: GaussianScene, view: ViewTransform, geom: LaminographyGeometry,
                    grad_image: np.ndarray, forward: RenderOutput | None = None) -> Gradients:
    """Analytic gradients of ``sum(grad_image * image)`` w.r.t. all raw parameters.

    ``screen`` holds the norm of the gradient w.r.t. the splat center in
    normalized device units (half the detector maps to 1).
    """
    sp = forward._splats if forward is not None and forward._splats is not None else _splat_all(scene, view, geom)
    m = len(scene)
    grad_image = np.ascontiguousarray(grad_image, dtype=np.float64)
    d_amp = np.zeros(m)
    d_center = np.zeros((m, 2))
    d_conic = np.zeros((m, 3))
    _backward_splats(grad_image, sp.visible, sp.bbox, sp.center, sp.conic, sp.amp,
                     CUTOFF_SIGMA**2, d_amp, d_center, d_conic)
    out = Gradients.zeros(m)
    _chain_kernel(scene.raw_density, scene.position, scene.quaternion, scene.raw_scale,
                  float(scene.s_min), view.W, view.t, geom.focal_px, geom.nu, geom.nv,
                  sp.visible, sp.conic, sp.cov2, sp.amp, d_amp, d_center, d_conic,
                  out.raw_density, out.position, out.quaternion, out.raw_scale, out.screen)
    out.visible[:] = sp.visible
    return out


def splat_gaussian(g: RadiativeGaussian, view: ViewTransform, geom: LaminographyGeometry,
                   s_min: float = 0.0):
    """Project a single Gaussian; returns :class:`Splat2D` or ``Culled``."""
    scene = GaussianScene(
        raw_density=[math.log(g.density)],
        position=[g.position],
        quaternion=[g.quaternion],
        raw_scale=[np.log(g.scale)],
        bounds=[np.asarray(g.position) - 1.0, np.asarray(g.position) + 1.0],
        s_min=s_min,
    )
    proj = ewa_project(scene, view, geom)
    if not proj.visible[0]:
        return Culled
    return Splat2D(
        center=proj.center[0].copy(),
        covariance=proj.cov2[0].copy(),
        amplitude=float(proj.amp[0]),
        mu=float(proj.mu[0]),
        cov_ray=proj.cov_ray[0].copy(),
    )
