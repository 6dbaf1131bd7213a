__all__ = ['ImageBuffer', 'DepthMap', 'joint_mask']

from typing import Optional, Tuple
import logging

import attr
import numpy as np

from ..exceptions import EmptyMask, IllegalConfig, NonPositiveDepth, \
                         ShapeMismatch

logger = logging.getLogger(__name__)  # type: logging.Logger

# rounding of convex interpolation weights may overshoot the unit range
INTENSITY_SLACK = 1e-6


def _as_image_array(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    return arr


@attr.s(frozen=True, eq=False)
class ImageBuffer(object):
    """
    A row-major image with one or three channels and intensities in [0, 1],
    stored as an array of shape (height, width, channels), together with a
    per-pixel validity mask. As for depth maps, only masked-in pixels are
    validated and read by resampling.
    """
    data = attr.ib(type=np.ndarray, converter=_as_image_array)
    mask = attr.ib(type=Optional[np.ndarray], default=None)

    def __attrs_post_init__(self) -> None:
        if self.data.ndim != 3 or self.data.shape[2] not in (1, 3):
            raise ShapeMismatch('image', ('H', 'W', '1|3'), self.data.shape)
        if self.mask is None:
            object.__setattr__(self, 'mask',
                               np.ones(self.data.shape[:2], dtype=bool))
        else:
            object.__setattr__(self, 'mask',
                               np.asarray(self.mask, dtype=bool))
        if self.mask.shape != self.data.shape[:2]:
            raise ShapeMismatch('mask', self.data.shape[:2], self.mask.shape)
        valid = self.data[self.mask]
        if not np.all(np.isfinite(valid)):
            raise IllegalConfig("image intensities must be finite.")
        if np.any(valid < -INTENSITY_SLACK) \
                or np.any(valid > 1.0 + INTENSITY_SLACK):
            raise IllegalConfig("image intensities must lie in [0, 1].")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)


def _as_depth_array(depth) -> np.ndarray:
    return np.asarray(depth, dtype=np.float64)


@attr.s(frozen=True, eq=False)
class DepthMap(object):
    """
    A dense depth map (meters) together with a per-pixel validity mask.
    Only masked-in values carry meaning; everything else is ignored by every
    reduction in the package.
    """
    depth = attr.ib(type=np.ndarray, converter=_as_depth_array)
    mask = attr.ib(type=Optional[np.ndarray], default=None)

    def __attrs_post_init__(self) -> None:
        if self.depth.ndim != 2:
            raise ShapeMismatch('depth', ('H', 'W'), self.depth.shape)
        if self.mask is None:
            object.__setattr__(self, 'mask',
                               np.ones(self.depth.shape, dtype=bool))
        else:
            object.__setattr__(self, 'mask',
                               np.asarray(self.mask, dtype=bool))
        if self.mask.shape != self.depth.shape:
            raise ShapeMismatch('mask', self.depth.shape, self.mask.shape)
        valid = self.depth[self.mask]
        if not np.all(np.isfinite(valid)):
            raise IllegalConfig("masked-in depths must be finite.")
        if np.any(valid <= 0.0):
            raise NonPositiveDepth()

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.depth.shape

    @property
    def valid_count(self) -> int:
        return int(np.count_nonzero(self.mask))

    def with_mask(self, mask: np.ndarray) -> 'DepthMap':
        """
        Returns a copy of this depth map restricted to a further mask.
        """
        return DepthMap(self.depth, self.mask & np.asarray(mask, dtype=bool))


def joint_mask(a: DepthMap, b: DepthMap) -> np.ndarray:
    """
    The pixels that are valid in both depth maps.

    Raises:
        ShapeMismatch: if the depth maps have different dimensions.
        EmptyMask: if no pixel is valid in both.
    """
    if a.shape != b.shape:
        raise ShapeMismatch('depth', a.shape, b.shape)
    mask = a.mask & b.mask
    if not mask.any():
        logger.error("no jointly valid pixels")
        raise EmptyMask()
    return mask
