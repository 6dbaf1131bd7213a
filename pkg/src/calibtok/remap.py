"""
Dense warp fields realising T and its inverse, and their application to
images and depth maps by inverse mapping.
"""
__all__ = ['WarpDirection', 'WarpField', 'build_warp_field', 'apply_warp',
           'apply_warp_depth', 'scatter_adjoint', 'coverage_loss']

from typing import Tuple
import enum
import logging

import attr
import numpy as np

from .core import DepthMap, FisheyeCalibration, ImageBuffer, \
                  PinholeIntrinsics
from .exceptions import DimensionMismatch, IllegalConfig, NonMonotone
from .geometry import check_monotone, fisheye_to_perspective_array, \
                      perspective_to_fisheye_array

logger = logging.getLogger(__name__)  # type: logging.Logger


class WarpDirection(enum.Enum):
    TO_FISHEYE = 'to_fisheye'
    TO_PERSPECTIVE = 'to_perspective'


class Interpolation(enum.Enum):
    BILINEAR = 'bilinear'
    NEAREST = 'nearest'


@attr.s(frozen=True, eq=False)
class WarpField(object):
    """
    For every output pixel, the continuous source coordinate that it should
    be resampled from, and whether that source exists.
    """
    direction = attr.ib(type=WarpDirection)
    src_x = attr.ib(type=np.ndarray)
    src_y = attr.ib(type=np.ndarray)
    mask = attr.ib(type=np.ndarray)
    src_width = attr.ib(type=int)
    src_height = attr.ib(type=int)

    @staticmethod
    def identity(width: int,
                 height: int,
                 direction: WarpDirection = WarpDirection.TO_PERSPECTIVE
                 ) -> 'WarpField':
        ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
        return WarpField(direction, xs, ys,
                         np.ones((height, width), dtype=bool),
                         width, height)

    def __attrs_post_init__(self) -> None:
        shape = self.mask.shape
        if self.src_x.shape != shape or self.src_y.shape != shape:
            raise IllegalConfig("warp field arrays must share one shape.")

    @property
    def out_height(self) -> int:
        return self.mask.shape[0]

    @property
    def out_width(self) -> int:
        return self.mask.shape[1]

    @property
    def src_shape(self) -> Tuple[int, int]:
        return (self.src_height, self.src_width)

    def resolvable(self) -> np.ndarray:
        """
        The output pixels whose source coordinate is valid and lies inside
        the source frame.
        """
        x, y = self.src_x, self.src_y
        return self.mask & (x >= 0.0) & (x <= self.src_width - 1.0) \
            & (y >= 0.0) & (y <= self.src_height - 1.0)

    def nearest_indices(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Computes the flat index of the source pixel nearest to each output
        pixel, together with the resolvable mask. Indices of unresolvable
        pixels are zero.
        """
        ok = self.resolvable()
        x = np.where(ok, self.src_x, 0.0)
        y = np.where(ok, self.src_y, 0.0)
        xi = np.clip(np.floor(x + 0.5), 0, self.src_width - 1).astype(np.intp)
        yi = np.clip(np.floor(y + 0.5), 0, self.src_height - 1).astype(np.intp)  # noqa: pycodestyle
        return yi * self.src_width + xi, ok


def build_warp_field(direction: WarpDirection,
                     pin: PinholeIntrinsics,
                     fe: FisheyeCalibration
                     ) -> WarpField:
    """
    Builds the inverse map used to resample into the output frame of the
    given direction: the fisheye frame for TO_FISHEYE (sources are
    perspective pixels) or the perspective frame for TO_PERSPECTIVE
    (sources are fisheye pixels).

    Raises:
        NonMonotone: if the calibration is not invertible.
    """
    if not check_monotone(fe.k, fe.theta_max):
        logger.error("refusing to build warp for non-monotone calibration")
        raise NonMonotone(fe.k, fe.theta_max)
    if direction is WarpDirection.TO_FISHEYE:
        ys, xs = np.mgrid[0:fe.height, 0:fe.width].astype(np.float64)
        sx, sy, valid = fisheye_to_perspective_array(xs, ys, fe, pin)
        field = WarpField(direction, sx, sy, valid, pin.width, pin.height)
    else:
        ys, xs = np.mgrid[0:pin.height, 0:pin.width].astype(np.float64)
        sx, sy, valid = perspective_to_fisheye_array(xs, ys, pin, fe)
        field = WarpField(direction, sx, sy, valid, fe.width, fe.height)
    logger.debug("built %s warp field (coverage loss %.4f)",
                 direction.value, coverage_loss(field))
    return field


def _check_source(name: str, shape: Tuple[int, int], w: WarpField) -> None:
    if tuple(shape) != w.src_shape:
        raise DimensionMismatch(name, w.src_shape, tuple(shape))


def apply_warp(img: ImageBuffer,
               w: WarpField,
               interp: str = 'bilinear'
               ) -> Tuple[ImageBuffer, np.ndarray]:
    """
    Resamples an image through a warp field. An output pixel is valid only
    if its source coordinate resolves and every source pixel that it reads
    with non-zero weight is masked in by `img.mask`. Invalid output pixels
    are set to zero, and the returned mask is also carried by the returned
    image.

    Raises:
        DimensionMismatch: if the image does not have the source dimensions
            of the warp field.
    """
    _check_source('image', img.shape, w)
    method = Interpolation(interp)
    src_ok = img.mask
    data = np.where(src_ok[..., None], img.data.astype(np.float64), 0.0)
    ok = w.resolvable()
    h, wd = w.src_shape

    if method is Interpolation.NEAREST:
        idx, _ = w.nearest_indices()
        ok &= src_ok.ravel()[idx]
        out = data.reshape(h * wd, -1)[idx]
    else:
        x = np.where(ok, w.src_x, 0.0)
        y = np.where(ok, w.src_y, 0.0)
        # right/bottom border samples use the last cell with weight one
        x0 = np.minimum(np.floor(x), wd - 2).astype(np.intp)
        y0 = np.minimum(np.floor(y), h - 2).astype(np.intp)
        ax = x - x0
        ay = y - y0
        for dy, wy in ((0, 1.0 - ay), (1, ay)):
            for dx, wx in ((0, 1.0 - ax), (1, ax)):
                ok &= src_ok[y0 + dy, x0 + dx] | (wy * wx == 0.0)
        ax = ax[..., None]
        ay = ay[..., None]
        top = (1.0 - ax) * data[y0, x0] + ax * data[y0, x0 + 1]
        bottom = (1.0 - ax) * data[y0 + 1, x0] + ax * data[y0 + 1, x0 + 1]
        out = (1.0 - ay) * top + ay * bottom

    out = np.where(ok[..., None], out, 0.0).astype(img.data.dtype)
    logger.debug("resampled image: %d of %d output pixels valid",
                 int(np.count_nonzero(ok)), ok.size)
    return ImageBuffer(out, ok), ok


def apply_warp_depth(d: DepthMap, w: WarpField) -> DepthMap:
    """
    Resamples a depth map through a warp field by nearest neighbour, so that
    every output value is a copy of one source value.

    Raises:
        DimensionMismatch: if the depth map does not have the source
            dimensions of the warp field.
    """
    _check_source('depth', d.shape, w)
    idx, ok = w.nearest_indices()
    mask = ok & d.mask.ravel()[idx]
    depth = np.where(mask, d.depth.ravel()[idx], 0.0)
    return DepthMap(depth, mask)


def scatter_adjoint(adjoint: np.ndarray, w: WarpField) -> np.ndarray:
    """
    Routes a per-pixel gradient on the output of `apply_warp_depth` back to
    the source frame: every output pixel adds its gradient to the source
    pixel it copied from.
    """
    idx, ok = w.nearest_indices()
    grad = np.zeros(w.src_height * w.src_width, dtype=np.float64)
    np.add.at(grad, idx[ok], np.asarray(adjoint, dtype=np.float64)[ok])
    return grad.reshape(w.src_shape)


def coverage_loss(w: WarpField) -> float:
    """
    The fraction of output pixels that have no valid source.
    """
    return 1.0 - float(np.count_nonzero(w.mask)) / float(w.mask.size)
