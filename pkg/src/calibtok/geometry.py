"""
Kannala-Brandt fisheye geometry: the radial polynomial, its inverse, and the
per-pixel transforms between a perspective frame and a fisheye frame.

All angle math is carried out in double precision. Coordinates follow the
pixel-centre convention, i.e., integer coordinates denote pixel centres.
"""
__all__ = ['radial_forward', 'radial_derivative', 'radial_inverse',
           'radial_inverse_array', 'radial_inverse_bisect', 'check_monotone',
           'perspective_to_fisheye', 'fisheye_to_perspective',
           'perspective_to_fisheye_array', 'fisheye_to_perspective_array',
           'sample_random_calibration', 'OUT_OF_DOMAIN']

from typing import Any, Sequence, Tuple, Union
import logging
import math

import numpy as np

from .core import FisheyeCalibration, PinholeIntrinsics, PixelCoord, \
                  SamplingTemplate
from .exceptions import NonMonotone, OutOfRange, SamplingExhausted

logger = logging.getLogger(__name__)  # type: logging.Logger

Coefficients = Sequence[float]
ArrayLike = Union[float, np.ndarray]

MONOTONE_SAMPLES = 4096
NEWTON_ITERATIONS = 50
BISECTION_ITERATIONS = 200
RANGE_SLACK = 1e-9
HORIZON_MARGIN = 1e-6

# coordinate reported for points whose inverse transform is undefined
OUT_OF_DOMAIN = -1.0


def radial_forward(theta: ArrayLike, k: Coefficients) -> ArrayLike:
    """
    Evaluates r(theta) = k1 theta + k2 theta^3 + k3 theta^5 + k4 theta^7 in
    Horner form in theta^2.
    """
    k1, k2, k3, k4 = k
    t2 = theta * theta
    return theta * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4)))


def radial_derivative(theta: ArrayLike, k: Coefficients) -> ArrayLike:
    """
    Evaluates r'(theta) = k1 + 3 k2 theta^2 + 5 k3 theta^4 + 7 k4 theta^6.
    """
    k1, k2, k3, k4 = k
    t2 = theta * theta
    return k1 + t2 * (3.0 * k2 + t2 * (5.0 * k3 + t2 * 7.0 * k4))


def check_monotone(k: Coefficients,
                   theta_max: float,
                   samples: int = MONOTONE_SAMPLES
                   ) -> bool:
    """
    Determines whether r is strictly increasing on [0, theta_max] by checking
    the sign of r' on a dense grid that includes theta_max itself.
    """
    grid = np.linspace(0.0, theta_max, max(samples, 2))
    if not np.all(radial_derivative(grid, k) > 0.0):
        return False
    return bool(radial_derivative(float(theta_max), k) > 0.0)


def _solve(r: np.ndarray, k: Coefficients, theta_max: float) -> np.ndarray:
    """
    Safeguarded Newton iteration for r(theta) = r on [0, theta_max]. Any
    Newton step leaving the current bracket is replaced by a bisection step;
    values still unconverged after the Newton iterations are finished by pure
    bisection. Assumes monotonicity and 0 <= r <= r(theta_max).
    """
    lo = np.zeros_like(r)
    hi = np.full_like(r, theta_max)
    theta = np.clip(r / k[0], 0.0, theta_max)
    converged = np.zeros(r.shape, dtype=bool)

    with np.errstate(divide='ignore', invalid='ignore'):
        for _ in range(NEWTON_ITERATIONS):
            f = radial_forward(theta, k) - r
            lo = np.where(f < 0.0, theta, lo)
            hi = np.where(f > 0.0, theta, hi)
            newton = theta - f / radial_derivative(theta, k)
            inside = (newton >= lo) & (newton <= hi)
            step = np.where(inside, newton, 0.5 * (lo + hi))
            converged = (f == 0.0) | \
                (np.abs(step - theta) <= 1e-15 * np.maximum(theta, 1.0))
            theta = np.where(f == 0.0, theta, step)
            if converged.all():
                return theta

    pending = ~converged
    logger.debug("finishing %d radial inversions by bisection",
                 int(np.count_nonzero(pending)))
    for _ in range(BISECTION_ITERATIONS):
        if not pending.any():
            break
        mid = 0.5 * (lo + hi)
        f = radial_forward(mid, k) - r
        lo = np.where(pending & (f < 0.0), mid, lo)
        hi = np.where(pending & (f >= 0.0), mid, hi)
        theta = np.where(pending, 0.5 * (lo + hi), theta)
        pending &= (hi - lo) > 1e-16
    return theta


def radial_inverse_array(r: np.ndarray,
                         k: Coefficients,
                         theta_max: float
                         ) -> np.ndarray:
    """
    Vectorised form of `radial_inverse`.

    Raises:
        NonMonotone: if r is not strictly increasing on [0, theta_max].
        OutOfRange: if any radius lies outside [0, r(theta_max)].
    """
    if not check_monotone(k, theta_max):
        logger.error("cannot invert non-monotone distortion: %s", k)
        raise NonMonotone(k, theta_max)
    r = np.asarray(r, dtype=np.float64)
    r_max = radial_forward(float(theta_max), k)
    slack = RANGE_SLACK * max(1.0, r_max)
    if r.size and (r.min() < -slack or r.max() > r_max + slack):
        bad = r.max() if r.max() > r_max + slack else r.min()
        raise OutOfRange(bad, r_max)
    return _solve(np.clip(r, 0.0, r_max), k, theta_max)


def radial_inverse(r: float, k: Coefficients, theta_max: float) -> float:
    """
    Computes the incidence angle theta in [0, theta_max] at which
    r(theta) = r.

    Raises:
        NonMonotone: if r is not strictly increasing on [0, theta_max].
        OutOfRange: if r exceeds r(theta_max) beyond tolerance.
    """
    return float(radial_inverse_array(np.array([r], dtype=np.float64),
                                      k, theta_max)[0])


def radial_inverse_bisect(r: ArrayLike,
                          k: Coefficients,
                          theta_max: float,
                          resolution: float = 1e-12
                          ) -> ArrayLike:
    """
    Inverts r by pure bisection on [0, theta_max] until the bracket is no
    wider than `resolution`. Slow but independent of the Newton solver.
    """
    r = np.asarray(r, dtype=np.float64)
    lo = np.zeros_like(r)
    hi = np.full_like(r, theta_max)
    steps = int(math.ceil(math.log2(theta_max / resolution))) + 1
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        below = radial_forward(mid, k) < r
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    theta = 0.5 * (lo + hi)
    return float(theta) if theta.ndim == 0 else theta


def perspective_to_fisheye_array(x: np.ndarray,
                                 y: np.ndarray,
                                 pin: PinholeIntrinsics,
                                 fe: FisheyeCalibration
                                 ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:  # noqa: pycodestyle
    """
    Applies T to arrays of perspective coordinates.

    Returns:
        the fisheye x and y coordinates, and a validity mask that is set
        where the incidence angle lies within theta_max and the result lies
        inside the fisheye frame.
    """
    u = (np.asarray(x, dtype=np.float64) - pin.cx) / pin.fx
    v = (np.asarray(y, dtype=np.float64) - pin.cy) / pin.fy
    theta = np.arctan(np.hypot(u, v))
    phi = np.arctan2(v, u)
    radius = fe.scale * radial_forward(theta, fe.k)
    xf = fe.cx_f + radius * np.cos(phi)
    yf = fe.cy_f + radius * np.sin(phi)
    valid = (theta <= fe.theta_max) & fe.contains(xf, yf)
    return xf, yf, valid


def fisheye_to_perspective_array(xf: np.ndarray,
                                 yf: np.ndarray,
                                 fe: FisheyeCalibration,
                                 pin: PinholeIntrinsics
                                 ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:  # noqa: pycodestyle
    """
    Applies the inverse transform to arrays of fisheye coordinates. Points
    outside the image circle, at or beyond the perspective horizon, or
    landing outside the perspective frame are flagged invalid; the former
    two receive the coordinate `OUT_OF_DOMAIN`.

    Raises:
        NonMonotone: if the calibration cannot be inverted.
    """
    if not check_monotone(fe.k, fe.theta_max):
        logger.error("cannot invert non-monotone calibration: %s", fe)
        raise NonMonotone(fe.k, fe.theta_max)
    dx = np.asarray(xf, dtype=np.float64) - fe.cx_f
    dy = np.asarray(yf, dtype=np.float64) - fe.cy_f
    r = np.hypot(dx, dy) / fe.scale
    r_max = radial_forward(fe.theta_max, fe.k)
    inside = r <= r_max

    theta = np.zeros_like(r)
    theta[inside] = _solve(r[inside], fe.k, fe.theta_max)
    defined = inside & (theta < 0.5 * math.pi - HORIZON_MARGIN)

    phi = np.arctan2(dy, dx)
    t = np.tan(np.where(defined, theta, 0.0))
    x = np.where(defined, pin.cx + pin.fx * t * np.cos(phi), OUT_OF_DOMAIN)
    y = np.where(defined, pin.cy + pin.fy * t * np.sin(phi), OUT_OF_DOMAIN)
    valid = defined & pin.contains(x, y)
    return x, y, valid


def perspective_to_fisheye(p: PixelCoord,
                           pin: PinholeIntrinsics,
                           fe: FisheyeCalibration
                           ) -> Tuple[PixelCoord, bool]:
    """
    Maps a perspective pixel to the fisheye frame.
    """
    xf, yf, valid = perspective_to_fisheye_array(np.array([p.x]),
                                                 np.array([p.y]),
                                                 pin, fe)
    return PixelCoord(xf[0], yf[0]), bool(valid[0])


def fisheye_to_perspective(p: PixelCoord,
                           fe: FisheyeCalibration,
                           pin: PinholeIntrinsics
                           ) -> Tuple[PixelCoord, bool]:
    """
    Maps a fisheye pixel back to the perspective frame.

    Raises:
        NonMonotone: if the calibration cannot be inverted.
    """
    x, y, valid = fisheye_to_perspective_array(np.array([p.x]),
                                               np.array([p.y]),
                                               fe, pin)
    return PixelCoord(x[0], y[0]), bool(valid[0])


def sample_random_calibration(rng_seed: Any,
                              template: SamplingTemplate
                              ) -> FisheyeCalibration:
    """
    Draws a random monotone fisheye calibration whose image circle
    inscribes the output frame. k1 is fixed to 1; k2..k4 and theta_max are
    redrawn together until the polynomial is monotone on [0, theta_max].

    Raises:
        SamplingExhausted: if no monotone sample is found within the
            template's attempt limit.
    """
    rng = np.random.default_rng(rng_seed)
    for attempt in range(1, template.max_attempts + 1):
        k = (1.0,
             rng.uniform(*template.k2_range),
             rng.uniform(*template.k3_range),
             rng.uniform(*template.k4_range))
        theta_max = rng.uniform(*template.theta_max_range)
        if not check_monotone(k, theta_max):
            continue
        r_max = radial_forward(theta_max, k)
        scale = min(template.width, template.height) / 2.0 / r_max
        calibration = FisheyeCalibration(k,
                                         (template.width - 1) / 2.0,
                                         (template.height - 1) / 2.0,
                                         scale,
                                         theta_max,
                                         template.width,
                                         template.height)
        logger.debug("sampled calibration after %d attempts: %s",
                     attempt, calibration)
        return calibration
    logger.error("failed to sample a monotone calibration (seed %s)",
                 rng_seed)
    raise SamplingExhausted(template.max_attempts)
