import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clsplat.errors import NonPositiveDepth, ValidationError
from clsplat.geometry import (
    LaminographyGeometry,
    build_view,
    perspective,
    project_point,
    projection_jacobian,
    reference_translation,
    transform_covariance,
    view_rotation,
)


def ct_project(p, theta, geom):
    """Plain circular cone-beam CT projector: source orbits the z axis in the xy plane."""
    src = geom.d_so * np.array([math.cos(theta), math.sin(theta), 0.0])
    e_u = np.array([-math.sin(theta), math.cos(theta), 0.0])
    e_v = np.array([0.0, 0.0, -1.0])
    e_w = -src / geom.d_so
    d = np.asarray(p) - src
    depth = d @ e_w
    u = geom.d_sd * (d @ e_u) / depth
    v = geom.d_sd * (d @ e_v) / depth
    cu, cv = geom.detector_center
    return np.array([u / geom.pixel_size + cu, v / geom.pixel_size + cv])


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class TestLaminographyGeometry:
    def test_tilt_range(self):
        with pytest.raises(ValidationError, match="tilt"):
            LaminographyGeometry.desk(math.radians(91))
        LaminographyGeometry.desk(math.pi / 2)
        LaminographyGeometry.desk(0.0)

    def test_distances(self):
        with pytest.raises(ValidationError):
            LaminographyGeometry(0.5, 10.0, 5.0, 64, 64, 0.1)
        with pytest.raises(ValidationError):
            LaminographyGeometry(0.5, 0.0, 5.0, 64, 64, 0.1)

    def test_desk_defaults(self):
        g = LaminographyGeometry.desk(math.pi / 6)
        diag = 2 * math.sqrt(3)
        assert g.d_so == pytest.approx(4 * diag)
        assert g.d_sd == pytest.approx(8 * diag)
        assert (g.nu, g.nv) == (64, 64)
        assert g.eps_z == pytest.approx(1e-6 * g.d_so)


class TestBuildView:
    def test_theta0_alpha0(self, geom0):
        v = build_view(geom0, 0.0)
        np.testing.assert_allclose(v.W, [[0, 1, 0], [0, 0, -1], [-1, 0, 0]], atol=1e-15)
        np.testing.assert_allclose(v.t, [0, 0, geom0.d_so], atol=1e-15)
        np.testing.assert_allclose(reference_translation(geom0, 0.0), v.t, atol=1e-15)

    def test_quarter_turn_tilted(self, geom30):
        v = build_view(geom30, math.pi / 2)
        r3 = math.sqrt(3) / 2
        np.testing.assert_allclose(v.W, [[-1, 0, 0], [0, 0.5, -r3], [0, -r3, -0.5]], atol=1e-15)
        np.testing.assert_allclose(reference_translation(geom30, math.pi / 2),
                                   geom30.d_so * np.array([0, -0.5, r3]), atol=1e-14)

    def test_orthonormal(self):
        W = view_rotation(0.7, 0.52)
        assert np.abs(W @ W.T - np.eye(3)).max() < 1e-12

    def test_grid_identities(self):
        for th in np.linspace(0, 2 * math.pi, 32, endpoint=False):
            for a in np.linspace(0, math.pi / 2, 32):
                g = LaminographyGeometry.desk(a)
                v = build_view(g, th)
                assert np.abs(v.W.T @ v.W - np.eye(3)).max() < 1e-12
                assert np.linalg.det(v.W) == pytest.approx(1.0, abs=1e-12)
                assert abs(np.linalg.norm(v.t) - g.d_so) < 1e-12
                assert abs(np.linalg.norm(reference_translation(g, th)) - g.d_so) < 1e-12

    def test_continuous_in_tilt(self):
        W0 = view_rotation(1.1, 0.0)
        assert np.abs(view_rotation(1.1, 1e-9) - W0).max() < 1e-8

    def test_source_position(self, geom30):
        th = 0.9
        v = build_view(geom30, th)
        a = geom30.tilt
        expect = geom30.d_so * np.array([math.cos(th) * math.cos(a), math.sin(th) * math.cos(a), math.sin(a)])
        np.testing.assert_allclose(v.source, expect, atol=1e-12)


class TestProjectPoint:
    @pytest.mark.parametrize("theta", [0.0, 0.4, 2.5, 5.9])
    def test_origin_hits_center(self, geom30, theta):
        v = build_view(geom30, theta)
        ray, pix = project_point(v, geom30, np.zeros(3))
        np.testing.assert_allclose(pix, geom30.detector_center, atol=1e-12)
        assert v.to_camera(np.zeros(3))[2] == pytest.approx(geom30.d_so)
        assert ray[2] == pytest.approx(geom30.d_so)

    def test_along_central_ray(self, geom30):
        v = build_view(geom30, 1.3)
        towards_src = v.source / np.linalg.norm(v.source)
        ray, pix = project_point(v, geom30, 0.4 * towards_src)
        np.testing.assert_allclose(pix, geom30.detector_center, atol=1e-12)
        assert ray[2] == pytest.approx(geom30.d_so - 0.4, rel=1e-12)

    def test_matches_ct_projector(self, geom0, rng):
        for _ in range(50):
            th = rng.uniform(0, 2 * math.pi)
            p = rng.uniform(-1, 1, 3)
            _, pix = project_point(build_view(geom0, th), geom0, p)
            np.testing.assert_allclose(pix, ct_project(p, th, geom0), atol=1e-9)

    def test_rotation_consistency(self, geom30, rng):
        for _ in range(50):
            th = rng.uniform(0, 2 * math.pi)
            p = rng.uniform(-1, 1, 3)
            _, a = project_point(build_view(geom30, th), geom30, p)
            _, b = project_point(build_view(geom30, 0.0), geom30, rot_z(-th) @ p)
            np.testing.assert_allclose(a, b, atol=1e-9)

    def test_behind_source(self, geom30):
        v = build_view(geom30, 0.0)
        with pytest.raises(NonPositiveDepth):
            project_point(v, geom30, 2.0 * v.source)


class TestJacobian:
    def test_on_axis(self, geom30):
        J = projection_jacobian(np.array([0.0, 0.0, 7.0]), geom30)
        np.testing.assert_allclose(J[:2, :2], geom30.d_sd / 7.0 * np.eye(2), atol=1e-15)
        assert J[0, 2] == 0 and J[1, 2] == 0
        np.testing.assert_allclose(J[2], [0, 0, 1])

    @settings(max_examples=40, deadline=None)
    @given(x=st.floats(-2, 2), y=st.floats(-2, 2), z=st.floats(3, 20))
    def test_finite_difference(self, x, y, z):
        geom = LaminographyGeometry.desk(math.pi / 6)
        p = np.array([x, y, z])
        J = projection_jacobian(p, geom)
        d = 1e-4 * z
        for i in range(3):
            e = np.zeros(3)
            e[i] = d
            fd = (perspective(p + e, geom) - perspective(p - e, geom)) / (2 * d)
            np.testing.assert_allclose(J[:, i], fd, rtol=1e-5, atol=1e-7 * np.abs(J).max())

    def test_depth_scaling(self, geom30):
        a = projection_jacobian(np.array([0.3, -0.2, 5.0]), geom30)
        b = projection_jacobian(np.array([0.3, -0.2, 10.0]), geom30)
        np.testing.assert_allclose(b[:2, :2], 0.5 * a[:2, :2], rtol=1e-14)

    def test_third_row_unit(self, geom30, rng):
        p = rng.uniform(-1, 1, (20, 3)) + [0, 0, 8]
        np.testing.assert_allclose(np.linalg.norm(projection_jacobian(p, geom30)[:, 2], axis=1), 1.0)

    def test_rejects_nonpositive_depth(self, geom30):
        with pytest.raises(NonPositiveDepth):
            projection_jacobian(np.array([0.0, 0.0, 0.0]), geom30)


class TestTransformCovariance:
    def test_isotropic_orthographic(self, geom30):
        v = build_view(geom30, 0.8)
        out = transform_covariance(v, np.eye(3), 0.04 * np.eye(3))
        np.testing.assert_allclose(out, 0.04 * np.eye(3), atol=1e-15)

    def test_random_spd(self, geom30, rng):
        v = build_view(geom30, 2.1)
        for _ in range(20):
            A = rng.normal(size=(3, 3))
            cov = A @ A.T + 1e-3 * np.eye(3)
            p = rng.uniform(-1, 1, 3)
            out = transform_covariance(v, projection_jacobian(v.to_camera(p), geom30), cov)
            assert np.abs(out - out.T).max() < 1e-12 * np.abs(out).max()
            assert np.linalg.eigvalsh(out).min() > -1e-12 * np.abs(out).max()

    def test_ct_case(self, geom0, rng):
        v = build_view(geom0, 0.0)
        A = rng.normal(size=(3, 3))
        cov = A @ A.T
        p = rng.uniform(-1, 1, 3)
        # Plain CT camera: source on +x, detector u along +y, v along -z.
        W = np.array([[0.0, 1, 0], [0, 0, -1], [-1, 0, 0]])
        pc = W @ p + [0, 0, geom0.d_so]
        f, (x, y, z) = geom0.d_sd, pc
        J = np.array([[f / z, 0, -f * x / z**2], [0, f / z, -f * y / z**2], pc / np.linalg.norm(pc)])
        ref = J @ W @ cov @ W.T @ J.T
        got = transform_covariance(v, projection_jacobian(v.to_camera(p), geom0), cov)
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)
