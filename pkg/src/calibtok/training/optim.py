__all__ = ['OptimState', 'adam_update']

from typing import Dict, Mapping
import logging

import attr
import numpy as np

from ..exceptions import IllegalConfig, ShapeMismatch

logger = logging.getLogger(__name__)  # type: logging.Logger


@attr.s
class OptimState(object):
    """
    The mutable state of an Adam optimiser. The state is owned by a single
    training loop.
    """
    lr = attr.ib(type=float, default=1e-4, converter=float)
    beta1 = attr.ib(type=float, default=0.9, converter=float)
    beta2 = attr.ib(type=float, default=0.999, converter=float)
    eps = attr.ib(type=float, default=1e-8, converter=float)
    step = attr.ib(type=int, default=0)
    first = attr.ib(type=dict, factory=dict)
    second = attr.ib(type=dict, factory=dict)

    def __attrs_post_init__(self) -> None:
        if self.lr < 0:
            raise IllegalConfig("learning rate must be non-negative.")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise IllegalConfig("Adam decay rates must lie in [0, 1).")
        if self.eps <= 0:
            raise IllegalConfig("Adam epsilon must be positive.")


def adam_update(params: Mapping[str, np.ndarray],
                grads: Mapping[str, np.ndarray],
                opt: OptimState
                ) -> Dict[str, np.ndarray]:
    """
    Applies one bias-corrected Adam step and returns the updated parameters.
    The given parameters are left untouched; moments are updated in `opt`.

    Raises:
        ShapeMismatch: if a gradient does not match its parameter.
    """
    for name, value in params.items():
        grad = grads[name]
        if np.shape(grad) != np.shape(value):
            raise ShapeMismatch(name, np.shape(value), np.shape(grad))

    opt.step += 1
    correction1 = 1.0 - opt.beta1 ** opt.step
    correction2 = 1.0 - opt.beta2 ** opt.step
    updated = {}  # type: Dict[str, np.ndarray]
    for name, value in params.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        m = opt.first.get(name, np.zeros_like(grad))
        v = opt.second.get(name, np.zeros_like(grad))
        m = opt.beta1 * m + (1.0 - opt.beta1) * grad
        v = opt.beta2 * v + (1.0 - opt.beta2) * grad * grad
        opt.first[name], opt.second[name] = m, v
        step = opt.lr * (m / correction1) / (np.sqrt(v / correction2) + opt.eps)  # noqa: pycodestyle
        updated[name] = np.asarray(value, dtype=np.float64) - step
    logger.debug("applied Adam step %d to %d tensors", opt.step, len(updated))
    return updated
