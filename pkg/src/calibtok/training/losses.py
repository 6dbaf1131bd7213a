__all__ = ['LossKind', 'LossFrame', 'Supervision', 'LossConfig',
           'logl1_loss', 'l1_loss', 'loss_function']

from typing import Any, Callable, Dict, Tuple
import enum
import logging

import attr
import numpy as np

from ..core import DepthMap, joint_mask
from ..exceptions import IllegalConfig

logger = logging.getLogger(__name__)  # type: logging.Logger

LossFunction = Callable[[DepthMap, DepthMap], Tuple[float, np.ndarray]]


class LossKind(enum.Enum):
    LOGL1 = 'logl1'
    L1 = 'l1'


class LossFrame(enum.Enum):
    PERSPECTIVE = 'perspective'
    FISHEYE = 'fisheye'


class Supervision(enum.Enum):
    PSEUDO = 'pseudo'
    GROUND_TRUTH = 'ground_truth'


@attr.s(frozen=True)
class LossConfig(object):
    """
    Selects the token-training objective: the per-pixel penalty, the frame
    in which prediction and target are compared, and the source of the
    target depth.
    """
    kind = attr.ib(type=LossKind, default=LossKind.LOGL1, converter=LossKind)
    frame = attr.ib(type=LossFrame, default=LossFrame.PERSPECTIVE,
                    converter=LossFrame)
    supervision = attr.ib(type=Supervision, default=Supervision.PSEUDO,
                          converter=Supervision)

    @staticmethod
    def from_dict(d: Dict[str, Any]) -> 'LossConfig':
        """
        Raises:
            IllegalConfig: if a setting names an unknown option.
        """
        try:
            return LossConfig(d.get('loss', 'logl1'),
                              d.get('frame', 'perspective'),
                              d.get('supervision', 'pseudo'))
        except ValueError as err:
            raise IllegalConfig(str(err))

    def to_dict(self) -> Dict[str, Any]:
        return {'loss': self.kind.value,
                'frame': self.frame.value,
                'supervision': self.supervision.value}


def logl1_loss(a: DepthMap, b: DepthMap) -> Tuple[float, np.ndarray]:
    """
    The mean of log(|a - b| + 1) over jointly valid pixels, together with
    its per-pixel gradient with respect to `a` (zero outside the joint mask
    and at a == b).
    """
    mask = joint_mask(a, b)
    count = int(np.count_nonzero(mask))
    diff = a.depth[mask] - b.depth[mask]
    absdiff = np.abs(diff)
    adjoint = np.zeros(a.shape)
    adjoint[mask] = np.sign(diff) / ((absdiff + 1.0) * count)
    return float(np.log1p(absdiff).sum() / count), adjoint


def l1_loss(a: DepthMap, b: DepthMap) -> Tuple[float, np.ndarray]:
    """
    The mean absolute difference over jointly valid pixels, together with
    its per-pixel gradient with respect to `a`.
    """
    mask = joint_mask(a, b)
    count = int(np.count_nonzero(mask))
    diff = a.depth[mask] - b.depth[mask]
    adjoint = np.zeros(a.shape)
    adjoint[mask] = np.sign(diff) / count
    return float(np.abs(diff).sum() / count), adjoint


def loss_function(kind: LossKind) -> LossFunction:
    return {LossKind.LOGL1: logl1_loss, LossKind.L1: l1_loss}[LossKind(kind)]
