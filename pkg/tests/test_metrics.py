import math

import numpy as np
import pytest

from clsplat.errors import ValidationError
from clsplat.metrics import PSNR_CAP, energy_above_support, psnr_volume, report_psnr, ssim_slices
from clsplat.types import Volume

from helpers import ssim_map_reference


def _v(data):
    return Volume(np.asarray(data, float), 0.1, (0.0, 0.0, 0.0))


def test_psnr_identical_is_sentinel():
    a = _v(np.random.default_rng(0).uniform(size=(4, 5, 6)))
    assert psnr_volume(a, a) == math.inf
    assert report_psnr(psnr_volume(a, a)) == PSNR_CAP


def test_psnr_single_voxel_closed_form():
    b = np.zeros((8, 8, 8))
    b[3, 4, 5] = 1.0
    assert psnr_volume(_v(np.zeros_like(b)), _v(b)) == pytest.approx(10 * math.log10(b.size), abs=1e-12)


def test_psnr_matches_reference():
    rng = np.random.default_rng(1)
    for _ in range(10):
        a, b = rng.normal(size=(2, 9, 7, 5))
        mse = sum((x - y) ** 2 for x, y in zip(a.ravel().tolist(), b.ravel().tolist())) / a.size
        ref = 10 * math.log10(max(b.ravel().tolist()) ** 2 / mse)
        assert abs(psnr_volume(a, b) - ref) < 1e-9


def test_psnr_shift_detecting():
    rng = np.random.default_rng(2)
    b = rng.uniform(size=(6, 6, 6))
    e = rng.normal(0, 0.01, b.shape)
    a = b + (e - e.mean())  # a biased error could be cancelled by the shift
    for c in (-0.1, -1e-3, 1e-3, 0.1):
        assert psnr_volume(b + c, b) < psnr_volume(b, b)
        assert psnr_volume(a + c, b) < psnr_volume(a, b)


def test_psnr_shape_mismatch():
    with pytest.raises(ValidationError):
        psnr_volume(np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))


def test_ssim_identical_is_one():
    a = np.random.default_rng(3).uniform(size=(5, 16, 16))
    assert ssim_slices(a, a) == 1.0


def test_ssim_symmetric():
    rng = np.random.default_rng(4)
    a, b = rng.uniform(size=(2, 6, 20, 20))
    for axis in "xyz":
        assert abs(ssim_slices(a, b, axis) - ssim_slices(b, a, axis)) < 1e-12


def test_ssim_monotone_in_noise():
    rng = np.random.default_rng(5)
    b = np.full((4, 24, 24), 0.5)
    noise = rng.uniform(-1, 1, b.shape)
    vals = [ssim_slices(b + amp * noise, b, data_range=1.0) for amp in (0.01, 0.05, 0.2)]
    assert vals[0] < 1.0
    assert vals[0] > vals[1] > vals[2]


def test_ssim_matches_window_reference():
    rng = np.random.default_rng(6)
    a, b = rng.uniform(size=(2, 3, 14, 12))
    ref = np.mean([ssim_map_reference(x, y, 1.0).mean() for x, y in zip(a, b)])
    assert ssim_slices(a, b, "z", data_range=1.0) == pytest.approx(ref, abs=1e-12)


def test_ssim_axis_selects_slices():
    rng = np.random.default_rng(7)
    a, b = rng.uniform(size=(2, 5, 14, 13))
    ref = np.mean([ssim_map_reference(a[:, :, i], b[:, :, i], 1.0).mean() for i in range(13)])
    assert ssim_slices(a, b, "x", data_range=1.0) == pytest.approx(ref, abs=1e-12)
    with pytest.raises(ValidationError):
        ssim_slices(a, b, "w")


def test_ssim_bounded():
    rng = np.random.default_rng(8)
    for _ in range(20):
        a, b = rng.normal(size=(2, 3, 16, 16)) * rng.uniform(0.1, 10)
        assert -1.0 <= ssim_slices(a, -b) <= 1.0
        assert -1.0 <= ssim_slices(a, b) <= 1.0


def test_energy_above_support():
    ref = np.zeros((6, 3, 3))
    ref[1:3] = 1.0
    vol = np.zeros_like(ref)
    vol[2] = 5.0  # inside, ignored
    vol[4, 0, 0] = 2.0
    vol[5, 1, 1] = -1.0
    assert energy_above_support(vol, ref) == 5.0
    with pytest.raises(ValidationError):
        energy_above_support(vol, np.zeros_like(ref))
