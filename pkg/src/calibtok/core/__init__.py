from .camera import PixelCoord, PinholeIntrinsics, FisheyeCalibration, \
                    SamplingTemplate
from .buffers import ImageBuffer, DepthMap, joint_mask

__all__ = ['PixelCoord', 'PinholeIntrinsics', 'FisheyeCalibration',
           'SamplingTemplate', 'ImageBuffer', 'DepthMap', 'joint_mask']
