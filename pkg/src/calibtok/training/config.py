__all__ = ['TrainingConfig', 'TokenInit']

from typing import Any, Dict, Optional
import enum
import logging
import warnings

import attr

from .losses import LossConfig
from ..core import SamplingTemplate
from ..exceptions import BadFormat, IllegalConfig
from ..model import ModelConfig, TokenMode
from ..warnings import UnknownConfigKeyWarning

logger = logging.getLogger(__name__)  # type: logging.Logger


class TokenInit(enum.Enum):
    NORMAL = 'normal'
    ZEROS = 'zeros'


def _as_model(value: Any) -> ModelConfig:
    if isinstance(value, ModelConfig):
        return value
    return ModelConfig.from_dict(value)


def _as_loss(value: Any) -> LossConfig:
    if isinstance(value, LossConfig):
        return value
    return LossConfig.from_dict(value)


@attr.s(frozen=True)
class TrainingConfig(object):
    """
    The settings of a training run. Every source of randomness in the run
    is derived from `seed`.
    """
    seed = attr.ib(type=int, default=0, converter=int)
    iterations = attr.ib(type=int, default=2000, converter=int)
    lr = attr.ib(type=float, default=1e-4, converter=float)
    batch_size = attr.ib(type=int, default=4, converter=int)
    loss = attr.ib(type=LossConfig, factory=LossConfig, converter=_as_loss)
    mode = attr.ib(type=TokenMode, default=TokenMode.LAYERWISE,
                   converter=TokenMode)
    tokens_per_layer = attr.ib(type=int, default=8, converter=int)
    token_init = attr.ib(type=TokenInit, default=TokenInit.NORMAL,
                         converter=TokenInit)
    eval_every = attr.ib(type=int, default=0, converter=int)
    eval_scenes = attr.ib(type=int, default=16, converter=int)
    model = attr.ib(type=ModelConfig, factory=ModelConfig,
                    converter=_as_model)
    dataset = attr.ib(type=Optional[str], default=None)
    sampling = attr.ib(type=dict, factory=dict)

    @staticmethod
    def from_dict(d: Dict[str, Any],
                  base: Optional['TrainingConfig'] = None
                  ) -> 'TrainingConfig':
        """
        Reads a flat training configuration, using the values of an optional
        base configuration for every key that is not given.

        Raises:
            BadFormat: if the description is not a dictionary.
        """
        if not isinstance(d, dict):
            raise BadFormat("training config must be an object")
        known = {a.name for a in attr.fields(TrainingConfig)}
        known |= {'frame', 'supervision'}
        for key in sorted(set(d) - known):
            msg = "ignoring unknown training config key: {}".format(key)
            warnings.warn(msg, UnknownConfigKeyWarning)

        base = base if base else TrainingConfig()
        jsn = base.to_dict()
        jsn.update({k: v for k, v in d.items() if k in known})
        # partial model and sampling sections refine those of the base
        if isinstance(d.get('model'), dict):
            jsn['model'] = dict(base.model.to_dict(), **d['model'])
        if isinstance(d.get('sampling'), dict):
            jsn['sampling'] = dict(base.sampling, **d['sampling'])
        loss = {'loss': jsn.pop('loss'),
                'frame': jsn.pop('frame'),
                'supervision': jsn.pop('supervision')}
        try:
            return TrainingConfig(loss=loss, **jsn)
        except (TypeError, ValueError) as err:
            logger.error("illegal training config: %s", err)
            raise IllegalConfig(str(err))

    def __attrs_post_init__(self) -> None:
        if self.iterations < 0:
            raise IllegalConfig("iterations must be non-negative.")
        if self.lr < 0:
            raise IllegalConfig("learning rate must be non-negative.")
        if self.batch_size < 1:
            raise IllegalConfig("batch size must be positive.")
        if self.tokens_per_layer < 1:
            raise IllegalConfig("tokens per layer must be positive.")
        if self.eval_every < 0 or self.eval_scenes < 1:
            raise IllegalConfig("illegal periodic evaluation settings.")

    def template(self, width: int, height: int) -> SamplingTemplate:
        """
        The distribution of fisheye calibrations for frames of a given size.
        """
        d = dict(self.sampling)
        d['width'], d['height'] = width, height
        return SamplingTemplate.from_dict(d)

    def to_dict(self) -> Dict[str, Any]:
        jsn = {'seed': self.seed,
               'iterations': self.iterations,
               'lr': self.lr,
               'batch_size': self.batch_size,
               'mode': self.mode.value,
               'tokens_per_layer': self.tokens_per_layer,
               'token_init': self.token_init.value,
               'eval_every': self.eval_every,
               'eval_scenes': self.eval_scenes,
               'model': self.model.to_dict(),
               'dataset': self.dataset,
               'sampling': dict(self.sampling)}
        jsn.update(self.loss.to_dict())
        return jsn
