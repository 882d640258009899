"""Volume PSNR and slice-averaged SSIM."""
from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError
from .ssim import ssim
from .types import Volume

PSNR_CAP = 99.0
_AXES = {"z": 0, "y": 1, "x": 2}


def _data(v):
    return np.asarray(v.data if isinstance(v, Volume) else v, dtype=np.float64)


def psnr_volume(a, b, peak: float | None = None) -> float:
    """PSNR of ``a`` against reference ``b``; ``peak`` defaults to ``max(b)``.

    Identical inputs return ``inf``; use :func:`report_psnr` for the capped value.
    """
    a, b = _data(a), _data(b)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    if peak is None:
        peak = float(b.max())
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def report_psnr(value: float) -> float:
    return min(value, PSNR_CAP)


def ssim_slices(a, b, axis: str = "z", data_range: float | None = None) -> float:
    """Mean 2D SSIM over slices taken perpendicular to ``axis``.

    The SSIM constants use the joint dynamic range of both volumes unless
    ``data_range`` is given.
    """
    a, b = _data(a), _data(b)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    if axis not in _AXES:
        raise ValidationError(f"axis must be x, y or z, got {axis!r}")
    if data_range is None:
        data_range = max(a.max(), b.max()) - min(a.min(), b.min())
        if data_range == 0:
            data_range = 1.0
    ax = _AXES[axis]
    a, b = np.moveaxis(a, ax, 0), np.moveaxis(b, ax, 0)
    return float(np.mean([ssim(sa, sb, data_range) for sa, sb in zip(a, b)]))


def energy_above_support(vol, reference) -> float:
    """Sum of squared values of ``vol`` in z-slices above the reference's support.

    The support top is the highest z-slice holding a non-zero voxel of
    ``reference``; for a plate phantom this measures how much signal leaks
    off the plate, which is where laminographic streaks pile up.
    """
    v, r = _data(vol), _data(reference)
    if v.shape != r.shape:
        raise ValidationError(f"shape mismatch {v.shape} vs {r.shape}")
    nz = np.flatnonzero(np.any(r != 0, axis=(1, 2)))
    if nz.size == 0:
        raise ValidationError("reference volume is empty")
    return float(np.sum(v[nz[-1] + 1:] ** 2))
