"""FDK-style filtered backprojection for the tilted-axis geometry.

Projections are cosine weighted, ramp filtered along detector rows (``u``)
and backprojected voxel by voxel with the ``(d_so / z)^2`` distance weight.
For tilted-axis scans each Fourier sample is covered with density
``|w_u| cos(tilt)``, so the reconstruction is scaled by ``cos(tilt)``; at
``tilt = 0`` this reduces to ordinary circular FDK. Laminographic FDK is
approximate by nature and is only used here as an initializer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from numba import prange

from .errors import ValidationError
from .geometry import LaminographyGeometry, build_view
from .types import GridSpec, ProjectionStack, Volume

FILTERS = ("ramp", "ramp-hann")


@dataclass(frozen=True)
class FdkConfig:
    filter: str = "ramp-hann"
    padding_factor: int = 2

    def __post_init__(self):
        if self.filter not in FILTERS:
            raise ValidationError(f"filter must be one of {FILTERS}, got {self.filter!r}")
        pf = int(self.padding_factor)
        if pf < 2 or pf & (pf - 1):
            raise ValidationError(f"padding_factor must be a power of two >= 2, got {self.padding_factor}")


def ramlak_kernel(n: int, spacing: float) -> np.ndarray:
    """Discrete Ram-Lak taps ``h[k]`` for ``k = -n..n``."""
    k = np.arange(-n, n + 1)
    h = np.zeros(k.shape)
    h[k == 0] = 0.25
    odd = k % 2 == 1
    h[odd] = -1.0 / (math.pi * k[odd]) ** 2
    return h / spacing**2


def filter_response(n_pad: int, spacing: float, kind: str) -> np.ndarray:
    """Real-FFT frequency response of the (windowed) discrete ramp, times ``spacing``."""
    h = np.zeros(n_pad)
    taps = ramlak_kernel(n_pad // 2, spacing)
    # Wrap taps k = -n_pad/2 .. n_pad/2 - 1 into circular order.
    k = np.arange(-(n_pad // 2), n_pad // 2)
    h[k % n_pad] = taps[:-1]
    H = np.fft.rfft(h).real * spacing
    if kind == "ramp-hann":
        w = np.arange(H.shape[0]) / (n_pad // 2)
        H *= 0.5 * (1.0 + np.cos(math.pi * w))
    return H


def ramp_filter_rows(rows: np.ndarray, spacing: float, kind: str = "ramp",
                     padding_factor: int = 2) -> np.ndarray:
    """Convolve every row (last axis) with the discrete ramp via zero-padded real FFT."""
    rows = np.asarray(rows, dtype=np.float64)
    nu = rows.shape[-1]
    n_pad = padding_factor * (1 << max(0, (nu - 1).bit_length()))
    H = filter_response(n_pad, spacing, kind)
    spec = np.fft.rfft(rows, n=n_pad, axis=-1)
    return np.fft.irfft(spec * H, n=n_pad, axis=-1)[..., :nu]


def filter_projections(stack: ProjectionStack, geom: LaminographyGeometry,
                       cfg: FdkConfig = FdkConfig()) -> ProjectionStack:
    nu, nv = stack.detector
    if nu < 4:
        raise ValidationError(f"need nu >= 4 for filtering, got {nu}")
    cu, cv = geom.detector_center
    u = (np.arange(nu) - cu) * geom.pixel_size
    v = (np.arange(nv) - cv) * geom.pixel_size
    uu, vv = np.meshgrid(u, v)
    cosw = geom.d_sd / np.sqrt(geom.d_sd**2 + uu**2 + vv**2)
    # Filter in object-plane units so the ramp scale matches the voxel grid.
    spacing = geom.pixel_size / geom.magnification
    filtered = ramp_filter_rows(stack.images * cosw, spacing, cfg.filter, cfg.padding_factor)
    return ProjectionStack(filtered, stack.angles.copy(), stack.pixel_size)


@numba.njit(parallel=True, cache=True)
def _backproject_view(out, img, W, t, origin, vs, f_px, cu, cv, d_so, weight):
    nz, ny, nx = out.shape
    nv, nu = img.shape
    for k in prange(nz):
        wz = origin[2] + k * vs
        for j in range(ny):
            wy = origin[1] + j * vs
            for i in range(nx):
                wx = origin[0] + i * vs
                x = W[0, 0] * wx + W[0, 1] * wy + W[0, 2] * wz + t[0]
                y = W[1, 0] * wx + W[1, 1] * wy + W[1, 2] * wz + t[1]
                z = W[2, 0] * wx + W[2, 1] * wy + W[2, 2] * wz + t[2]
                if z <= 1e-6 * d_so:
                    continue
                pu = f_px * x / z + cu
                pv = f_px * y / z + cv
                if pu < 0.0 or pv < 0.0 or pu > nu - 1 or pv > nv - 1:
                    continue
                iu = min(int(pu), nu - 2) if nu > 1 else 0
                iv = min(int(pv), nv - 2) if nv > 1 else 0
                fu = pu - iu
                fv = pv - iv
                val = (1 - fv) * ((1 - fu) * img[iv, iu] + fu * img[iv, iu + 1]) \
                    + fv * ((1 - fu) * img[iv + 1, iu] + fu * img[iv + 1, iu + 1])
                r = d_so / z
                out[k, j, i] += weight * r * r * val


def backproject(filtered: ProjectionStack, geom: LaminographyGeometry, grid: GridSpec) -> Volume:
    """Voxel-driven weighted backprojection of already-filtered projections."""
    if len(filtered) < 1:
        raise ValidationError("backprojection needs at least one view")
    out = np.zeros(grid.shape)
    # Full-orbit FDK: 1/2 * sum over views * dtheta, with the tilt coverage factor.
    weight = 0.5 * (2.0 * math.pi / len(filtered)) * math.cos(geom.tilt)
    origin = np.asarray(grid.origin, dtype=np.float64)
    cu, cv = geom.detector_center
    for img, theta in zip(filtered.images, filtered.angles):
        view = build_view(geom, theta)
        _backproject_view(out, np.ascontiguousarray(img, dtype=np.float64), view.W, view.t,
                          origin, float(grid.voxel_size), geom.focal_px, cu, cv, geom.d_so, weight)
    return Volume(out, grid.voxel_size, grid.origin)


def fdk(stack: ProjectionStack, geom: LaminographyGeometry, grid: GridSpec,
        cfg: FdkConfig = FdkConfig()) -> Volume:
    return backproject(filter_projections(stack, geom, cfg), geom, grid)
