"""
Depth accuracy metrics and the evaluation of a model, with or without
calibration tokens, on perspective or synthetic fisheye views of a dataset.
"""
__all__ = ['rmse', 'delta1', 'ImageScore', 'EvalReport', 'ScoreFrame',
           'evaluate', 'embedding_alignment', 'held_out_seeds',
           'EVAL_SEED_BASE']

from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple
import enum
import logging
import math

import attr
import numpy as np

from .core import DepthMap, FisheyeCalibration, ImageBuffer, \
                  PinholeIntrinsics, SamplingTemplate, joint_mask
from .exceptions import IllegalConfig, NonPositiveDepth
from .formats import write_csv, write_json
from .geometry import sample_random_calibration
from .model import ModelWeights, TokenSet, export_embeddings, forward
from .remap import WarpDirection, WarpField, apply_warp, apply_warp_depth, \
                   build_warp_field

logger = logging.getLogger(__name__)  # type: logging.Logger

DELTA1_THRESHOLD = 1.25

# distortion seeds used for evaluation start here, far from training draws
EVAL_SEED_BASE = 1000000


class ScoreFrame(enum.Enum):
    PERSPECTIVE = 'perspective'
    FISHEYE = 'fisheye'


def _ratios(pred: DepthMap, gt: DepthMap) -> np.ndarray:
    mask = joint_mask(pred, gt)
    p, g = pred.depth[mask], gt.depth[mask]
    if np.any(p <= 0.0) or np.any(g <= 0.0):
        raise NonPositiveDepth()
    return np.maximum(p / g, g / p)


def rmse(pred: DepthMap, gt: DepthMap) -> float:
    """
    The root mean squared error over jointly valid pixels.

    Raises:
        EmptyMask: if no pixel is valid in both maps.
    """
    mask = joint_mask(pred, gt)
    diff = pred.depth[mask] - gt.depth[mask]
    return math.sqrt(float(np.mean(diff * diff)))


def delta1(pred: DepthMap, gt: DepthMap) -> float:
    """
    The fraction of jointly valid pixels whose ratio between prediction and
    truth, in whichever order exceeds one, is below 1.25.

    Raises:
        EmptyMask: if no pixel is valid in both maps.
        NonPositiveDepth: if a jointly valid depth is not positive.
    """
    ratios = _ratios(pred, gt)
    return float(np.count_nonzero(ratios < DELTA1_THRESHOLD)) / ratios.size


@attr.s(frozen=True, eq=False)
class ImageScore(object):
    """
    The accuracy of the prediction for a single scene.
    """
    index = attr.ib(type=int)
    n_pixels = attr.ib(type=int)
    squared_error = attr.ib(type=float)
    n_within = attr.ib(type=int)
    error_map = attr.ib(type=np.ndarray)

    @staticmethod
    def compute(index: int, pred: DepthMap, gt: DepthMap) -> 'ImageScore':
        mask = joint_mask(pred, gt)
        diff = pred.depth[mask] - gt.depth[mask]
        ratios = _ratios(pred, gt)
        error_map = np.zeros(gt.shape)
        error_map[mask] = np.abs(diff)
        return ImageScore(index,
                          int(mask.sum()),
                          float(np.sum(diff * diff)),
                          int(np.count_nonzero(ratios < DELTA1_THRESHOLD)),
                          error_map)

    @property
    def rmse(self) -> float:
        return math.sqrt(self.squared_error / self.n_pixels)

    @property
    def delta1(self) -> float:
        return self.n_within / float(self.n_pixels)

    @property
    def max_error(self) -> float:
        return float(self.error_map.max())

    def to_dict(self) -> Dict[str, Any]:
        return {'index': self.index,
                'rmse': self.rmse,
                'delta1': self.delta1,
                'n_pixels': self.n_pixels,
                'max_error': self.max_error}


@attr.s(frozen=True, eq=False)
class EvalReport(object):
    """
    Accuracy pooled over every scored pixel of a dataset, together with the
    per-image breakdown.
    """
    mode = attr.ib(type=str)
    score_frame = attr.ib(type=ScoreFrame, converter=ScoreFrame)
    per_image = attr.ib(type=tuple, converter=tuple)

    @property
    def n_pixels(self) -> int:
        return sum(s.n_pixels for s in self.per_image)

    @property
    def rmse(self) -> float:
        total = sum(s.squared_error for s in self.per_image)
        return math.sqrt(total / self.n_pixels)

    @property
    def delta1(self) -> float:
        return sum(s.n_within for s in self.per_image) / float(self.n_pixels)

    def to_dict(self) -> Dict[str, Any]:
        return {'mode': self.mode,
                'score_frame': self.score_frame.value,
                'rmse': self.rmse,
                'delta1': self.delta1,
                'n_pixels': self.n_pixels,
                'per_image': [s.to_dict() for s in self.per_image]}

    def save(self, path) -> None:
        write_json(path, self.to_dict())

    def save_csv(self, path) -> None:
        header = ('index', 'rmse', 'delta1', 'n_pixels', 'max_error')
        write_csv(path, header,
                  ([s.index, s.rmse, s.delta1, s.n_pixels, s.max_error]
                   for s in self.per_image))


def held_out_seeds(count: int, base: int = EVAL_SEED_BASE) -> List[int]:
    """
    The distortion seeds of a held-out evaluation set of a given size.
    """
    return list(range(base, base + count))


def _calibrations(dataset: Sequence[Any],
                  seeds: Optional[Sequence[int]],
                  calibrations: Optional[Sequence[FisheyeCalibration]],
                  template: SamplingTemplate
                  ) -> Optional[List[FisheyeCalibration]]:
    if calibrations is not None and seeds is not None:
        raise IllegalConfig("give either distortion seeds or calibrations.")
    if calibrations is None and seeds is None:
        return None
    if calibrations is None:
        calibrations = [sample_random_calibration(s, template) for s in seeds]
    if len(calibrations) != len(dataset):
        raise IllegalConfig("expected one calibration per scene.")
    return list(calibrations)


def _fisheye_view(image: ImageBuffer,
                  pin: PinholeIntrinsics,
                  fe: FisheyeCalibration
                  ) -> Tuple[ImageBuffer, WarpField, WarpField]:
    to_fisheye = build_warp_field(WarpDirection.TO_FISHEYE, pin, fe)
    to_perspective = build_warp_field(WarpDirection.TO_PERSPECTIVE, pin, fe)
    fisheye, _ = apply_warp(image, to_fisheye, 'bilinear')
    return fisheye, to_fisheye, to_perspective


def evaluate(model: ModelWeights,
             tokens: Optional[TokenSet],
             dataset: Sequence[Any],
             seeds: Optional[Sequence[int]] = None,
             score_frame: str = 'perspective',
             calibrations: Optional[Sequence[FisheyeCalibration]] = None,
             template: Optional[SamplingTemplate] = None
             ) -> EvalReport:
    """
    Scores the predictions of a model on every scene of a dataset.

    Without distortion seeds or calibrations, each perspective image is
    scored directly. Otherwise each scene is warped into the fisheye frame
    of its calibration and predicted; by default the prediction is undone
    into the perspective frame and scored against the ground truth there,
    while `score_frame='fisheye'` scores against the ground truth warped
    into the fisheye frame instead.
    """
    frame = ScoreFrame(score_frame)
    pin = dataset.pinhole  # type: ignore
    if template is None:
        template = SamplingTemplate(pin.width, pin.height)
    fes = _calibrations(dataset, seeds, calibrations, template)
    mode = 'perspective' if fes is None else 'fisheye'

    scores = []  # type: List[ImageScore]
    for position, scene in enumerate(dataset):
        if fes is None:
            pred, gt = forward(model, scene.image, tokens), scene.depth
        else:
            image, to_fisheye, to_perspective = \
                _fisheye_view(scene.image, pin, fes[position])
            pred = forward(model, image, tokens).with_mask(image.mask)
            if frame is ScoreFrame.PERSPECTIVE:
                pred = apply_warp_depth(pred, to_perspective)
                gt = scene.depth
            else:
                gt = apply_warp_depth(scene.depth, to_fisheye)
        scores.append(ImageScore.compute(scene.index, pred, gt))
    report = EvalReport(mode, frame, scores)
    logger.info("evaluated %d %s scenes: rmse=%.4f delta1=%.4f",
                len(scores), mode, report.rmse, report.delta1)
    return report


def embedding_alignment(model: ModelWeights,
                        tokens: Optional[TokenSet],
                        dataset: Sequence[Any],
                        seeds: Iterable[int],
                        template: Optional[SamplingTemplate] = None
                        ) -> float:
    """
    The mean Euclidean distance between the final-layer patch embeddings of
    each fisheye view, computed with the given tokens, and those of the
    same scene's perspective image, computed without tokens.
    """
    pin = dataset.pinhole  # type: ignore
    if template is None:
        template = SamplingTemplate(pin.width, pin.height)
    distances = []  # type: List[float]
    for scene, seed in zip(dataset, seeds):
        fe = sample_random_calibration(seed, template)
        image, _, _ = _fisheye_view(scene.image, pin, fe)
        reference = export_embeddings(model, scene.image)
        embedded = export_embeddings(model, image, tokens)
        distances.append(float(np.linalg.norm(embedded - reference, axis=1).mean()))  # noqa: pycodestyle
    return float(np.mean(distances))
