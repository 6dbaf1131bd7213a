"""
Training loops: supervised pretraining of the depth estimator on perspective
scenes, self-supervised calibration-token adaptation, and full fine-tuning
of the estimator as a baseline to token adaptation.
"""
__all__ = ['TrainingLog', 'token_gradient', 'token_training_step',
           'train_tokens', 'pretrain_fmde', 'finetune_fmde']

from typing import Any, Dict, Optional, Sequence, Tuple
import logging

import attr
import numpy as np

from .config import TokenInit, TrainingConfig
from .examples import TrainingExample, make_training_example
from .losses import LossConfig, LossFrame, logl1_loss, loss_function
from .optim import OptimState, adam_update
from ..core import DepthMap
from ..formats import write_csv
from ..metrics import EvalReport, evaluate, held_out_seeds
from ..model import ModelWeights, TokenSet, init_model, linearize
from ..remap import apply_warp_depth, scatter_adjoint

logger = logging.getLogger(__name__)  # type: logging.Logger


@attr.s
class TrainingLog(object):
    """
    The loss of every iteration of a training run, optionally interleaved
    with periodic evaluations, and the validation report of its result.
    """
    steps = attr.ib(type=list, factory=list)
    losses = attr.ib(type=list, factory=list)
    rmse_eval = attr.ib(type=list, factory=list)
    report = attr.ib(type=Optional[EvalReport], default=None)

    def append(self,
               step: int,
               loss: float,
               rmse: Optional[float] = None
               ) -> None:
        self.steps.append(step)
        self.losses.append(loss)
        self.rmse_eval.append(rmse)

    def __len__(self) -> int:
        return len(self.steps)

    def save(self, path) -> None:
        """
        Writes the log as CSV with the columns step, loss and rmse_eval.
        """
        write_csv(path, ('step', 'loss', 'rmse_eval'),
                  zip(self.steps, self.losses, self.rmse_eval))


def _undo_warp_loss(prediction: DepthMap,
                    example: TrainingExample,
                    cfg: LossConfig
                    ) -> Tuple[float, np.ndarray]:
    """
    Computes the objective for a fisheye prediction and its gradient with
    respect to that prediction. Predicted pixels without a valid fisheye
    input never enter the objective.
    """
    objective = loss_function(cfg.kind)
    prediction = prediction.with_mask(example.fisheye_mask)
    if cfg.frame is LossFrame.PERSPECTIVE:
        undone = apply_warp_depth(prediction, example.to_perspective)
        loss, adjoint = objective(undone, example.target)
        return loss, scatter_adjoint(adjoint, example.to_perspective)
    target = apply_warp_depth(example.target, example.to_fisheye)
    return objective(prediction, target)


def token_gradient(model: ModelWeights,
                   tokens: TokenSet,
                   example: TrainingExample,
                   cfg: LossConfig
                   ) -> Tuple[float, np.ndarray]:
    """
    Computes the objective of a training example and its gradient with
    respect to the calibration tokens.
    """
    prediction, backprop = linearize(model, example.fisheye_image, tokens)
    loss, adjoint = _undo_warp_loss(prediction, example, cfg)
    return loss, backprop.tokens(adjoint)


def _apply(tokens: TokenSet,
           grad: np.ndarray,
           opt: OptimState
           ) -> TokenSet:
    updated = adam_update({'tokens': tokens.tokens}, {'tokens': grad}, opt)
    return tokens.replace(updated['tokens'])


def token_training_step(model: ModelWeights,
                        tokens: TokenSet,
                        example: TrainingExample,
                        cfg: LossConfig,
                        opt: OptimState
                        ) -> Tuple[TokenSet, float]:
    """
    Performs a single Adam update of the tokens on one example. The model
    weights are never modified.
    """
    loss, grad = token_gradient(model, tokens, example, cfg)
    return _apply(tokens, grad, opt), loss


class _Sampler(object):
    """
    Draws (scene, calibration seed) pairs in a fixed order for a given seed
    and caches the token-free predictions used as pseudo targets.
    """
    def __init__(self,
                 model: ModelWeights,
                 dataset: Sequence[Any],
                 cfg: TrainingConfig,
                 seed: int
                 ) -> None:
        pin = dataset.pinhole  # type: ignore
        self.__model = model
        self.__dataset = dataset
        self.__cfg = cfg
        self.__pinhole = pin
        self.__template = cfg.template(pin.width, pin.height)
        self.__rng = np.random.default_rng(seed)
        self.__targets = {}  # type: Dict[int, DepthMap]

    def draw(self) -> TrainingExample:
        position = int(self.__rng.integers(len(self.__dataset)))
        fe_seed = int(self.__rng.integers(2 ** 31))
        return make_training_example(self.__dataset[position],
                                     self.__model,
                                     fe_seed,
                                     self.__pinhole,
                                     self.__cfg.loss.supervision,
                                     self.__template,
                                     self.__targets)


def _evaluate(model: ModelWeights,
              tokens: Optional[TokenSet],
              scenes: Sequence[Any],
              cfg: TrainingConfig,
              fisheye: bool
              ) -> EvalReport:
    pin = scenes.pinhole  # type: ignore
    seeds = held_out_seeds(len(scenes)) if fisheye else None
    return evaluate(model, tokens, scenes, seeds,
                    template=cfg.template(pin.width, pin.height))


def _periodic_rmse(model: ModelWeights,
                   tokens: Optional[TokenSet],
                   validation: Optional[Any],
                   cfg: TrainingConfig,
                   step: int,
                   fisheye: bool = True
                   ) -> Optional[float]:
    if validation is None or cfg.eval_every == 0 or step % cfg.eval_every:
        return None
    subset = validation.take(cfg.eval_scenes)
    return _evaluate(model, tokens, subset, cfg, fisheye).rmse


def _initial_tokens(model: ModelWeights,
                    cfg: TrainingConfig,
                    seed: int
                    ) -> TokenSet:
    if cfg.token_init is TokenInit.ZEROS:
        return TokenSet.zeros(model.config, cfg.tokens_per_layer, cfg.mode)
    return TokenSet.initialize(model.config, cfg.tokens_per_layer,
                               cfg.mode, seed)


def train_tokens(model: ModelWeights,
                 dataset: Sequence[Any],
                 cfg: TrainingConfig,
                 seed: int,
                 validation: Optional[Sequence[Any]] = None,
                 tokens: Optional[TokenSet] = None
                 ) -> Tuple[TokenSet, TrainingLog]:
    """
    Adapts calibration tokens to synthetic fisheye views of a dataset while
    the model stays frozen. Each iteration averages the token gradients of
    `cfg.batch_size` freshly drawn examples before one Adam update.

    Returns:
        the trained tokens, rounded to single precision, and the loss log.
    """
    if tokens is None:
        tokens = _initial_tokens(model, cfg, seed)
    tokens.check(model.config)
    sampler = _Sampler(model, dataset, cfg, seed)
    opt = OptimState(lr=cfg.lr)
    log = TrainingLog()
    logger.info("training %s tokens for %d iterations",
                tokens.mode.value, cfg.iterations)
    for step in range(1, cfg.iterations + 1):
        total = np.zeros(tokens.tokens.shape)
        losses = []
        for _ in range(cfg.batch_size):
            loss, grad = token_gradient(model, tokens, sampler.draw(),
                                        cfg.loss)
            total += grad
            losses.append(loss)
        tokens = _apply(tokens, total / cfg.batch_size, opt)
        mean_loss = float(np.mean(losses))
        log.append(step, mean_loss,
                   _periodic_rmse(model, tokens, validation, cfg, step))
        logger.debug("token step %d: loss=%.6f", step, mean_loss)
    tokens = tokens.quantized()
    if validation is not None:
        log.report = _evaluate(model, tokens, validation, cfg, True)
    return tokens, log


def _update_weights(model: ModelWeights,
                    grads: Dict[str, np.ndarray],
                    opt: OptimState
                    ) -> ModelWeights:
    params = {name: tensor for name, tensor in model.items()}
    return model.replace(adam_update(params, grads, opt))


def pretrain_fmde(dataset: Sequence[Any],
                  cfg: TrainingConfig,
                  seed: int,
                  validation: Optional[Sequence[Any]] = None
                  ) -> Tuple[ModelWeights, TrainingLog]:
    """
    Trains every weight of a freshly initialised model on perspective scenes
    against their ground-truth depth with the LogL1 loss.

    Returns:
        the trained weights, rounded to single precision, and the training
        log; if a validation set is given, the log also records the
        perspective evaluation of the returned weights.
    """
    model = init_model(cfg.model, seed)
    rng = np.random.default_rng(seed)
    opt = OptimState(lr=cfg.lr)
    log = TrainingLog()
    logger.info("pretraining model for %d iterations", cfg.iterations)
    for step in range(1, cfg.iterations + 1):
        totals = {}  # type: Dict[str, np.ndarray]
        losses = []
        for _ in range(cfg.batch_size):
            scene = dataset[int(rng.integers(len(dataset)))]
            prediction, backprop = linearize(model, scene.image)
            loss, adjoint = logl1_loss(prediction, scene.depth)
            for name, grad in backprop.weights(adjoint).items():
                totals[name] = totals.get(name, 0.0) + grad
            losses.append(loss)
        grads = {name: g / cfg.batch_size for name, g in totals.items()}
        model = _update_weights(model, grads, opt)
        mean_loss = float(np.mean(losses))
        log.append(step, mean_loss,
                   _periodic_rmse(model, None, validation, cfg, step,
                                  fisheye=False))
        logger.debug("pretraining step %d: loss=%.6f", step, mean_loss)
    model = model.quantized()
    if validation is not None:
        log.report = _evaluate(model, None, validation, cfg, False)
    return model, log


def finetune_fmde(model: ModelWeights,
                  dataset: Sequence[Any],
                  cfg: TrainingConfig,
                  seed: int,
                  validation: Optional[Sequence[Any]] = None
                  ) -> Tuple[ModelWeights, TrainingLog]:
    """
    Fine-tunes every weight of a model on synthetic fisheye views with the
    same undo-warp objective as token adaptation. Pseudo targets are the
    predictions of the original model.
    """
    frozen = model
    sampler = _Sampler(frozen, dataset, cfg, seed)
    opt = OptimState(lr=cfg.lr)
    log = TrainingLog()
    logger.info("fine-tuning model for %d iterations", cfg.iterations)
    for step in range(1, cfg.iterations + 1):
        totals = {}  # type: Dict[str, np.ndarray]
        losses = []
        for _ in range(cfg.batch_size):
            example = sampler.draw()
            prediction, backprop = linearize(model, example.fisheye_image)
            loss, adjoint = _undo_warp_loss(prediction, example, cfg.loss)
            for name, grad in backprop.weights(adjoint).items():
                totals[name] = totals.get(name, 0.0) + grad
            losses.append(loss)
        grads = {name: g / cfg.batch_size for name, g in totals.items()}
        model = _update_weights(model, grads, opt)
        mean_loss = float(np.mean(losses))
        log.append(step, mean_loss,
                   _periodic_rmse(model, None, validation, cfg, step))
        logger.debug("fine-tuning step %d: loss=%.6f", step, mean_loss)
    model = model.quantized()
    if validation is not None:
        log.report = _evaluate(model, None, validation, cfg, True)
    return model, log
