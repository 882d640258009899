"""Independent numpy renderers used as test oracles."""
import math

import numpy as np

from clsplat.rasterizer import AA_FLOOR, CUTOFF_SIGMA, ewa_project


def frozen_support(scene, view, geom):
    """Per-Gaussian boolean pixel masks of the 3-sigma ellipses at the current parameters."""
    pr = ewa_project(scene, view, geom)
    v, u = np.mgrid[0:geom.nv, 0:geom.nu]
    masks = []
    for g in range(len(scene)):
        if not pr.visible[g]:
            masks.append(np.zeros((geom.nv, geom.nu), bool))
            continue
        a, b, c = pr.conic[g]
        dx, dy = u - pr.center[g, 0], v - pr.center[g, 1]
        masks.append(a * dx * dx + 2 * b * dx * dy + c * dy * dy <= CUTOFF_SIGMA**2)
    return masks


def render_numpy(scene, view, geom, masks=None):
    """Sum of 2D splats evaluated with numpy over all pixels (optionally on fixed supports)."""
    pr = ewa_project(scene, view, geom)
    v, u = np.mgrid[0:geom.nv, 0:geom.nu]
    out = np.zeros((geom.nv, geom.nu))
    for g in range(len(scene)):
        if masks is None and not pr.visible[g]:
            continue
        a, b, c = pr.conic[g]
        dx, dy = u - pr.center[g, 0], v - pr.center[g, 1]
        q = a * dx * dx + 2 * b * dx * dy + c * dy * dy
        m = (q <= CUTOFF_SIGMA**2) if masks is None else masks[g]
        amp = pr.rho[g] * pr.mu[g]
        out += np.where(m, amp * np.exp(-0.5 * q), 0.0)
    return out


def ct_splat_render(scene, theta, geom):
    """Circular cone-beam CT splat renderer written without the laminography transform.

    Source on the xy circle at angle theta, detector u along the orbit
    tangent and v along -z, amplitudes from the closed-form line integral of
    the marginal Gaussian.
    """
    f = geom.d_sd / geom.pixel_size
    cu, cv = geom.detector_center
    src = geom.d_so * np.array([math.cos(theta), math.sin(theta), 0.0])
    e_u = np.array([-math.sin(theta), math.cos(theta), 0.0])
    e_v = np.array([0.0, 0.0, -1.0])
    e_w = -src / geom.d_so
    B = np.stack([e_u, e_v, e_w])
    v, u = np.mgrid[0:geom.nv, 0:geom.nu]
    out = np.zeros((geom.nv, geom.nu))
    for g in scene:
        pc = B @ (g.position - src)
        x, y, z = pc
        l = np.linalg.norm(pc)
        J = np.array([[f / z, 0, -f * x / z**2], [0, f / z, -f * y / z**2], pc / l])
        S = J @ B @ g.covariance @ B.T @ J.T
        S2 = S[:2, :2]
        mu = math.sqrt(2 * math.pi * np.linalg.det(S) / np.linalg.det(S2))
        F = S2 + AA_FLOOR * np.eye(2)
        Fi = np.linalg.inv(F)
        dx, dy = u - (f * x / z + cu), v - (f * y / z + cv)
        q = Fi[0, 0] * dx * dx + 2 * Fi[0, 1] * dx * dy + Fi[1, 1] * dy * dy
        out += np.where(q <= CUTOFF_SIGMA**2, g.density * mu * np.exp(-0.5 * q), 0.0)
    return out


def ssim_map_reference(x, y, data_range):
    """Per-pixel SSIM from explicit zero-padded 11x11 window sums (sigma 1.5)."""
    t = np.arange(11) - 5.0
    w1 = np.exp(-0.5 * (t / 1.5) ** 2)
    w = np.outer(w1, w1) / w1.sum() ** 2
    c1, c2 = (0.01 * data_range) ** 2, (0.03 * data_range) ** 2
    xp, yp = np.pad(x, 5), np.pad(y, 5)
    out = np.empty(x.shape)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            a, b = xp[i:i + 11, j:j + 11], yp[i:i + 11, j:j + 11]
            mx, my = np.sum(w * a), np.sum(w * b)
            vx = np.sum(w * a * a) - mx * mx
            vy = np.sum(w * b * b) - my * my
            cxy = np.sum(w * a * b) - mx * my
            out[i, j] = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    return out
