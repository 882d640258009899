"""SSIM with an 11x11 Gaussian window (sigma 1.5) and its analytic gradient.

Windows are applied with zero padding so the map has the image's shape; the
filter is symmetric, so the adjoint needed for the gradient is the same
filter.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

WINDOW = 11
SIGMA = 1.5
K1, K2 = 0.01, 0.03


def _window() -> np.ndarray:
    x = np.arange(WINDOW) - (WINDOW - 1) / 2
    k = np.exp(-0.5 * (x / SIGMA) ** 2)
    return k / k.sum()


_KERNEL = _window()


def blur(img: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(img, _KERNEL, axis=-1, mode="constant", cval=0.0)
    return ndimage.correlate1d(out, _KERNEL, axis=-2, mode="constant", cval=0.0)


def _stats(x: np.ndarray, y: np.ndarray, data_range: float):
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    mx, my = blur(x), blur(y)
    sxx = blur(x * x) - mx * mx
    syy = blur(y * y) - my * my
    sxy = blur(x * y) - mx * my
    a1 = 2 * mx * my + c1
    a2 = 2 * sxy + c2
    b1 = mx * mx + my * my + c1
    b2 = sxx + syy + c2
    return mx, my, a1, a2, b1, b2


def ssim(x: np.ndarray, y: np.ndarray, data_range: float) -> float:
    """Mean SSIM of two same-shape 2D images (or a stack of them)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _, _, a1, a2, b1, b2 = _stats(x, y, data_range)
    return float(np.mean((a1 * a2) / (b1 * b2)))


def ssim_and_grad(x: np.ndarray, y: np.ndarray, data_range: float) -> tuple[float, np.ndarray]:
    """Mean SSIM and its gradient w.r.t. ``x``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mx, my, a1, a2, b1, b2 = _stats(x, y, data_range)
    den = b1 * b2
    s = (a1 * a2) / den
    n = x.size
    d_mx = (2 * my * (a2 - a1) / den - 2 * mx * s / b1 + 2 * mx * s / b2) / n
    d_exx = -s / b2 / n
    d_exy = 2 * a1 / den / n
    grad = blur(d_mx) + 2 * x * blur(d_exx) + y * blur(d_exy)
    return float(np.mean(s)), grad
