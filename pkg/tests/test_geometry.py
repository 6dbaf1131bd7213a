import math

import numpy as np
import pytest

from calibtok.core import FisheyeCalibration, PinholeIntrinsics, \
                          PixelCoord, SamplingTemplate
from calibtok.exceptions import IllegalConfig, NonMonotone, OutOfRange, \
                                SamplingExhausted
from calibtok.geometry import check_monotone, fisheye_to_perspective, \
                              fisheye_to_perspective_array, \
                              perspective_to_fisheye, \
                              perspective_to_fisheye_array, radial_forward, \
                              radial_inverse, radial_inverse_array, \
                              radial_inverse_bisect, \
                              sample_random_calibration

PINHOLE = PinholeIntrinsics.centered(64, 64, 12.0)
TEMPLATE = SamplingTemplate(64, 64)


def test_radial_forward():
    assert radial_forward(0.0, (1.0, -0.2, 0.01, -0.001)) == 0.0
    assert radial_forward(0.5, (1.0, 0.0, 0.0, 0.0)) == 0.5
    expected = 0.5 + 2 * 0.5 ** 3 + 3 * 0.5 ** 5 + 4 * 0.5 ** 7
    assert radial_forward(0.5, (1.0, 2.0, 3.0, 4.0)) == pytest.approx(expected)


def test_check_monotone():
    # r'(theta) = 1 - 3 theta^2 vanishes at theta = 1 / sqrt(3)
    k = (1.0, -1.0, 0.0, 0.0)
    assert check_monotone(k, 0.5)
    assert not check_monotone(k, 1.0)
    assert check_monotone((1.0, 0.0, 0.0, 0.0), 3.0)


def test_radial_inverse_identity():
    k = (1.0, 0.0, 0.0, 0.0)
    assert radial_inverse(0.0, k, 1.0) == 0.0
    assert radial_inverse(0.3, k, 1.0) == pytest.approx(0.3, abs=1e-15)
    assert radial_inverse(1.0, k, 1.0) == pytest.approx(1.0, abs=1e-15)


def test_radial_inverse_errors():
    with pytest.raises(NonMonotone):
        radial_inverse(0.2, (1.0, -1.0, 0.0, 0.0), 1.0)
    with pytest.raises(OutOfRange):
        radial_inverse(1.5, (1.0, 0.0, 0.0, 0.0), 1.0)
    with pytest.raises(OutOfRange):
        radial_inverse(-0.1, (1.0, 0.0, 0.0, 0.0), 1.0)


def test_radial_inverse_residual():
    rng = np.random.default_rng(7)
    for seed in range(20):
        fe = sample_random_calibration(seed, TEMPLATE)
        r_max = radial_forward(fe.theta_max, fe.k)
        r = rng.uniform(0.0, r_max, size=500)
        theta = radial_inverse_array(r, fe.k, fe.theta_max)
        assert np.all(theta >= 0.0) and np.all(theta <= fe.theta_max)
        assert np.max(np.abs(radial_forward(theta, fe.k) - r)) < 1e-10


def test_radial_inverse_matches_bisection():
    rng = np.random.default_rng(3)
    for seed in range(10):
        fe = sample_random_calibration(100 + seed, TEMPLATE)
        r_max = radial_forward(fe.theta_max, fe.k)
        r = rng.uniform(0.0, r_max, size=1000)
        newton = radial_inverse_array(r, fe.k, fe.theta_max)
        bisect = radial_inverse_bisect(r, fe.k, fe.theta_max)
        assert np.max(np.abs(newton - bisect)) < 1e-9


def test_principal_points_correspond():
    fe = sample_random_calibration(0, TEMPLATE)
    centre, valid = perspective_to_fisheye(PixelCoord(31.5, 31.5),
                                           PINHOLE, fe)
    assert valid
    assert centre.x == pytest.approx(fe.cx_f)
    assert centre.y == pytest.approx(fe.cy_f)

    back, valid = fisheye_to_perspective(centre, fe, PINHOLE)
    assert valid
    assert back.x == pytest.approx(31.5)
    assert back.y == pytest.approx(31.5)


def test_round_trip():
    rng = np.random.default_rng(11)
    for seed in range(100):
        fe = sample_random_calibration(seed, TEMPLATE)
        x = rng.uniform(0.0, 63.0, size=10000)
        y = rng.uniform(0.0, 63.0, size=10000)
        xf, yf, valid = perspective_to_fisheye_array(x, y, PINHOLE, fe)
        assert valid.any()
        xb, yb, _ = fisheye_to_perspective_array(xf[valid], yf[valid],
                                                 fe, PINHOLE)
        error = np.maximum(np.abs(xb - x[valid]), np.abs(yb - y[valid]))
        assert error.max() < 1e-6


def test_fisheye_radius_depends_only_on_ray_angle():
    rng = np.random.default_rng(5)
    rho = rng.uniform(0.0, 3.5, size=200)
    for seed in range(10):
        fe = sample_random_calibration(seed, TEMPLATE)
        expected = fe.scale * radial_forward(np.arctan(rho), fe.k)
        for phi in rng.uniform(-math.pi, math.pi, size=8):
            x = PINHOLE.cx + PINHOLE.fx * rho * math.cos(phi)
            y = PINHOLE.cy + PINHOLE.fy * rho * math.sin(phi)
            xf, yf, _ = perspective_to_fisheye_array(x, y, PINHOLE, fe)
            radius = np.hypot(xf - fe.cx_f, yf - fe.cy_f)
            assert np.max(np.abs(radius - expected)) < 1e-9


def test_outside_image_circle_is_undefined():
    fe = sample_random_calibration(5, TEMPLATE)
    p, valid = fisheye_to_perspective(PixelCoord(0.0, 0.0), fe, PINHOLE)
    assert not valid
    assert (p.x, p.y) == (-1.0, -1.0)


def test_non_monotone_calibration_cannot_be_inverted():
    fe = FisheyeCalibration((1.0, -1.0, 0.0, 0.0), 31.5, 31.5, 20.0, 1.2,
                            64, 64)
    with pytest.raises(NonMonotone):
        fisheye_to_perspective(PixelCoord(31.5, 31.5), fe, PINHOLE)


def test_sample_random_calibration():
    a = sample_random_calibration(42, TEMPLATE)
    b = sample_random_calibration(42, TEMPLATE)
    c = sample_random_calibration(43, TEMPLATE)
    assert a == b
    assert a != c

    for seed in range(1000):
        fe = sample_random_calibration(seed, TEMPLATE)
        assert fe.k[0] == 1.0
        assert TEMPLATE.theta_max_range[0] <= fe.theta_max <= TEMPLATE.theta_max_range[1]  # noqa: pycodestyle
        assert check_monotone(fe.k, fe.theta_max)
        # the image circle inscribes the frame
        r_max = radial_forward(fe.theta_max, fe.k)
        assert abs(fe.scale * r_max - 32.0) < 1e-9


def test_sampling_exhausted():
    template = SamplingTemplate(64, 64,
                                theta_max_range=(1.5, 1.6),
                                k2_range=(-5.0, -4.0),
                                max_attempts=5)
    with pytest.raises(SamplingExhausted):
        sample_random_calibration(0, template)


def test_calibration_validation():
    with pytest.raises(IllegalConfig):
        FisheyeCalibration((1.0, 0.0, 0.0), 31.5, 31.5, 20.0, 1.2, 64, 64)
    with pytest.raises(IllegalConfig):
        FisheyeCalibration((1.0, 0.0, 0.0, 0.0), 31.5, 31.5, 20.0,
                           math.pi, 64, 64)
    with pytest.raises(IllegalConfig):
        PinholeIntrinsics(0.0, 12.0, 31.5, 31.5, 64, 64)
    with pytest.raises(IllegalConfig):
        SamplingTemplate(64, 64, k2_range=(0.5, -0.5))


def test_calibration_to_and_from_dict():
    fe = sample_random_calibration(9, TEMPLATE)
    assert FisheyeCalibration.from_dict(fe.to_dict()) == fe
    assert PinholeIntrinsics.from_dict(PINHOLE.to_dict()) == PINHOLE
