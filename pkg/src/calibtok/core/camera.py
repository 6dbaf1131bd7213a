__all__ = ['PixelCoord', 'PinholeIntrinsics', 'FisheyeCalibration',
           'SamplingTemplate']

from typing import Any, Dict, Tuple
import math

import attr
import numpy as np

from ..exceptions import BadFormat, IllegalConfig


def _require(d: Dict[str, Any], *keys: str) -> None:
    if not isinstance(d, dict):
        raise BadFormat("expected a JSON object.")
    for key in keys:
        if key not in d:
            raise BadFormat("expected '{}' property.".format(key))


def _in_frame(width: int, height: int, x: Any, y: Any) -> Any:
    # pixel-centre convention: samples exist on [0, W-1] x [0, H-1]
    return (x >= 0.0) & (x <= width - 1.0) & (y >= 0.0) & (y <= height - 1.0)


@attr.s(frozen=True, repr=False)
class PixelCoord(object):
    """
    A continuous pixel coordinate; integer values denote pixel centres.
    """
    x = attr.ib(type=float, converter=float)
    y = attr.ib(type=float, converter=float)

    def __attrs_post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise IllegalConfig("pixel coordinates must be finite.")

    def __iter__(self):
        yield self.x
        yield self.y

    def __repr__(self) -> str:
        return "PixelCoord({}, {})".format(self.x, self.y)


@attr.s(frozen=True)
class PinholeIntrinsics(object):
    """
    Describes an ideal perspective camera.
    """
    fx = attr.ib(type=float, converter=float)
    fy = attr.ib(type=float, converter=float)
    cx = attr.ib(type=float, converter=float)
    cy = attr.ib(type=float, converter=float)
    width = attr.ib(type=int, converter=int)
    height = attr.ib(type=int, converter=int)

    @staticmethod
    def from_dict(d: Dict[str, Any]) -> 'PinholeIntrinsics':
        _require(d, 'fx', 'fy', 'cx', 'cy', 'width', 'height')
        return PinholeIntrinsics(d['fx'], d['fy'], d['cx'], d['cy'],
                                 d['width'], d['height'])

    @staticmethod
    def centered(width: int,
                 height: int,
                 focal: float
                 ) -> 'PinholeIntrinsics':
        """
        Constructs a camera with square pixels whose principal point lies at
        the centre of the frame.
        """
        return PinholeIntrinsics(focal, focal,
                                 (width - 1) / 2.0, (height - 1) / 2.0,
                                 width, height)

    def __attrs_post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise IllegalConfig("focal lengths must be positive.")
        if self.width <= 1 or self.height <= 1:
            raise IllegalConfig("image must be at least 2x2 pixels.")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise IllegalConfig("principal point must lie inside the image.")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    def contains(self, x: Any, y: Any) -> Any:
        """
        Determines whether continuous coordinates lie inside the image.
        Works elementwise on arrays.
        """
        return _in_frame(self.width, self.height, x, y)

    def to_dict(self) -> Dict[str, Any]:
        return {'fx': self.fx, 'fy': self.fy,
                'cx': self.cx, 'cy': self.cy,
                'width': self.width, 'height': self.height}


@attr.s(frozen=True)
class FisheyeCalibration(object):
    """
    A Kannala-Brandt fisheye camera: the incidence angle theta of a ray is
    mapped to the image radius scale * r(theta), where
    r(theta) = k1 theta + k2 theta^3 + k3 theta^5 + k4 theta^7.

    Monotonicity of r is not enforced here; operations that need to invert
    r check it and raise NonMonotone.
    """
    k = attr.ib(type=Tuple[float, float, float, float],
                converter=lambda k: tuple(float(c) for c in k))
    cx_f = attr.ib(type=float, converter=float)
    cy_f = attr.ib(type=float, converter=float)
    scale = attr.ib(type=float, converter=float)
    theta_max = attr.ib(type=float, converter=float)
    width = attr.ib(type=int, converter=int)
    height = attr.ib(type=int, converter=int)

    @staticmethod
    def from_dict(d: Dict[str, Any]) -> 'FisheyeCalibration':
        _require(d, 'k', 'cx', 'cy', 'scale', 'theta_max', 'width', 'height')
        return FisheyeCalibration(d['k'], d['cx'], d['cy'], d['scale'],
                                  d['theta_max'], d['width'], d['height'])

    def __attrs_post_init__(self) -> None:
        if len(self.k) != 4:
            raise IllegalConfig("expected exactly four distortion coefficients.")  # noqa: pycodestyle
        if not all(math.isfinite(c) for c in self.k):
            raise IllegalConfig("distortion coefficients must be finite.")
        if self.scale <= 0:
            raise IllegalConfig("scale must be positive.")
        # sampled fields of view may exceed 180 degrees
        if not 0.0 < self.theta_max < math.pi:
            raise IllegalConfig("theta_max must lie in (0, pi).")
        if self.width <= 1 or self.height <= 1:
            raise IllegalConfig("image must be at least 2x2 pixels.")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array(self.k, dtype=np.float64)

    def contains(self, x: Any, y: Any) -> Any:
        return _in_frame(self.width, self.height, x, y)

    def to_dict(self) -> Dict[str, Any]:
        return {'k': list(self.k),
                'cx': self.cx_f, 'cy': self.cy_f,
                'scale': self.scale,
                'theta_max': self.theta_max,
                'width': self.width, 'height': self.height}


def _range(value: Any) -> Tuple[float, float]:
    lo, hi = (float(v) for v in value)
    return (lo, hi)


@attr.s(frozen=True)
class SamplingTemplate(object):
    """
    Describes the distribution from which synthetic fisheye calibrations are
    drawn. k1 is fixed to 1; the higher-order coefficients are drawn from
    negative ranges whose magnitude shrinks with the order.
    """
    width = attr.ib(type=int, converter=int)
    height = attr.ib(type=int, converter=int)
    theta_max_range = attr.ib(type=Tuple[float, float],
                              converter=_range,
                              default=(1.05, 1.66))
    k2_range = attr.ib(type=Tuple[float, float], converter=_range,
                       default=(-1.0, -0.01))
    k3_range = attr.ib(type=Tuple[float, float], converter=_range,
                       default=(-0.1, -0.001))
    k4_range = attr.ib(type=Tuple[float, float], converter=_range,
                       default=(-0.01, -0.0001))
    max_attempts = attr.ib(type=int, converter=int, default=1000)

    @staticmethod
    def from_dict(d: Dict[str, Any]) -> 'SamplingTemplate':
        _require(d, 'width', 'height')
        kwargs = {key: d[key] for key in ('theta_max_range', 'k2_range',
                                          'k3_range', 'k4_range',
                                          'max_attempts')
                  if key in d}
        return SamplingTemplate(d['width'], d['height'], **kwargs)

    def __attrs_post_init__(self) -> None:
        for name in ('theta_max_range', 'k2_range', 'k3_range', 'k4_range'):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                msg = "illegal sampling range for {}: [{}, {}]"
                raise IllegalConfig(msg.format(name, lo, hi))
        lo, hi = self.theta_max_range
        if lo <= 0 or hi >= math.pi:
            raise IllegalConfig("theta_max range must lie inside (0, pi).")
        if self.max_attempts < 1:
            raise IllegalConfig("max_attempts must be positive.")

    def to_dict(self) -> Dict[str, Any]:
        return {'width': self.width, 'height': self.height,
                'theta_max_range': list(self.theta_max_range),
                'k2_range': list(self.k2_range),
                'k3_range': list(self.k3_range),
                'k4_range': list(self.k4_range),
                'max_attempts': self.max_attempts}
