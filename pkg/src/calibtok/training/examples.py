__all__ = ['TrainingExample', 'make_training_example']

from typing import Dict, Optional
import logging

import attr
import numpy as np

from ..core import DepthMap, FisheyeCalibration, ImageBuffer, \
                   PinholeIntrinsics, SamplingTemplate
from ..datagen import Scene
from ..geometry import sample_random_calibration
from ..model import ModelWeights, forward
from ..remap import WarpDirection, WarpField, apply_warp, build_warp_field
from .losses import Supervision

logger = logging.getLogger(__name__)  # type: logging.Logger


@attr.s(frozen=True, eq=False)
class TrainingExample(object):
    """
    A synthetic fisheye view of a perspective scene, the depth target in
    the perspective frame, and the warp fields between both frames.
    """
    calibration = attr.ib(type=FisheyeCalibration)
    fisheye_image = attr.ib(type=ImageBuffer)
    fisheye_mask = attr.ib(type=np.ndarray)
    target = attr.ib(type=DepthMap)
    to_fisheye = attr.ib(type=WarpField)
    to_perspective = attr.ib(type=WarpField)


def make_training_example(scene: Scene,
                          model: ModelWeights,
                          fe_seed: int,
                          pinhole: PinholeIntrinsics,
                          supervision: Supervision = Supervision.PSEUDO,
                          template: Optional[SamplingTemplate] = None,
                          pseudo_targets: Optional[Dict[int, DepthMap]] = None  # noqa: pycodestyle
                          ) -> TrainingExample:
    """
    Synthesises a fisheye training example from a perspective scene using a
    randomly sampled calibration.

    Parameters:
        pseudo_targets: an optional cache of token-free predictions of the
            model, indexed by scene index.
    """
    if template is None:
        template = SamplingTemplate(pinhole.width, pinhole.height)
    fe = sample_random_calibration(fe_seed, template)
    to_fisheye = build_warp_field(WarpDirection.TO_FISHEYE, pinhole, fe)
    to_perspective = build_warp_field(WarpDirection.TO_PERSPECTIVE, pinhole, fe)  # noqa: pycodestyle
    image, mask = apply_warp(scene.image, to_fisheye, 'bilinear')

    if Supervision(supervision) is Supervision.GROUND_TRUTH:
        target = scene.depth
    elif pseudo_targets is not None and scene.index in pseudo_targets:
        target = pseudo_targets[scene.index]
    else:
        target = forward(model, scene.image)
        if pseudo_targets is not None:
            pseudo_targets[scene.index] = target
    logger.debug("built training example for scene %d (calibration seed %d)",
                 scene.index, fe_seed)
    return TrainingExample(fe, image, mask, target, to_fisheye, to_perspective)
