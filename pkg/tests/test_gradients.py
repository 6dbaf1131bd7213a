"""
Checks the hand-written reverse mode of the depth estimator against central
finite differences in double precision.
"""
from typing import Callable, List, Tuple

import numpy as np
import pytest

from calibtok.core import DepthMap, ImageBuffer, PinholeIntrinsics, \
                          SamplingTemplate
from calibtok.datagen import Scene
from calibtok.model import ModelConfig, ModelWeights, TokenMode, TokenSet, \
                           forward, forward_backward_full, \
                           forward_backward_tokens, init_model, linearize
from calibtok.training import LossConfig, Supervision, logl1_loss, \
                              make_training_example
from calibtok.training.trainer import token_gradient

CFG = ModelConfig(image_size=16, patch_size=4, layers=2, embed_dim=8,
                  heads=2, mlp_ratio=2)
STEP = 1e-4
SAMPLED_ENTRIES = 64
TOLERANCE = 1e-4
# token perturbation used at the default model size
TOKEN_STEP = 1e-3


def random_model(cfg: ModelConfig, seed: int, std: float = 0.3) -> ModelWeights:  # noqa: pycodestyle
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, tensor in init_model(cfg, seed).items():
        noise = rng.standard_normal(tensor.shape)
        if name.endswith('.gain'):
            tensors[name] = 1.0 + 0.1 * noise
        else:
            tensors[name] = std * noise
    return ModelWeights(cfg, tensors)


def random_image(seed: int) -> ImageBuffer:
    rng = np.random.default_rng(seed)
    return ImageBuffer(rng.uniform(0.0, 1.0, size=(16, 16, 3)))


def max_relative_error(pairs: List[Tuple[float, float]], scale: float) -> float:  # noqa: pycodestyle
    worst = 0.0
    for analytic, numeric in pairs:
        denom = max(abs(analytic), abs(numeric), 1e-2 * scale)
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def central_difference(f: Callable[[np.ndarray], float],
                       x: np.ndarray,
                       index: Tuple[int, ...],
                       step: float = STEP
                       ) -> float:
    plus, minus = x.copy(), x.copy()
    plus[index] += step
    minus[index] -= step
    return (f(plus) - f(minus)) / (2.0 * step)


def sample_indices(shape: Tuple[int, ...],
                  rng: np.random.Generator,
                  count: int
                  ) -> List[Tuple[int, ...]]:
    flat = rng.choice(int(np.prod(shape)), size=count, replace=False)
    return [tuple(int(i) for i in np.unravel_index(f, shape)) for f in flat]


@pytest.mark.parametrize('mode', list(TokenMode))
def test_token_gradient(mode):
    model = random_model(CFG, 0)
    img = random_image(1)
    tokens = TokenSet.initialize(CFG, 4, mode, 2, std=1.0)
    adjoint = np.random.default_rng(3).standard_normal((16, 16))

    def loss(values: np.ndarray) -> float:
        depth = forward(model, img, tokens.replace(values)).depth
        return float(np.sum(adjoint * depth))

    grad = forward_backward_tokens(model, img, tokens, adjoint)
    assert grad.shape == tokens.tokens.shape
    values = np.array(tokens.tokens)
    rng = np.random.default_rng(4)
    pairs = [(grad[i], central_difference(loss, values, i))
             for i in sample_indices(values.shape, rng, SAMPLED_ENTRIES)]
    assert max_relative_error(pairs, np.abs(grad).max()) < TOLERANCE


@pytest.mark.parametrize('mode', list(TokenMode))
def test_token_gradient_of_default_model(mode):
    cfg = ModelConfig()
    model = init_model(cfg, 20)
    rng = np.random.default_rng(21)
    img = ImageBuffer(rng.uniform(0.0, 1.0, size=(64, 64, 3)))
    tokens = TokenSet.initialize(cfg, 8, mode, 22, std=1.0)
    adjoint = rng.standard_normal((64, 64))

    def loss(values: np.ndarray) -> float:
        depth = forward(model, img, tokens.replace(values)).depth
        return float(np.sum(adjoint * depth))

    grad = forward_backward_tokens(model, img, tokens, adjoint)
    values = np.array(tokens.tokens)
    worst = 0.0
    for i in sample_indices(values.shape, rng, SAMPLED_ENTRIES):
        numeric = central_difference(loss, values, i, TOKEN_STEP)
        denom = max(abs(grad[i]), abs(numeric), 1e-12)
        worst = max(worst, abs(grad[i] - numeric) / denom)
    assert worst < TOLERANCE


def test_unused_tokens_receive_no_gradient():
    model = random_model(CFG, 0)
    img = random_image(1)
    adjoint = np.ones((16, 16))
    for mode in (TokenMode.SINGLE, TokenMode.SHARED):
        tokens = TokenSet.initialize(CFG, 4, mode, 2, std=1.0)
        grad = forward_backward_tokens(model, img, tokens, adjoint)
        assert np.all(grad[1:] == 0.0)
        assert np.any(grad[0] != 0.0)


@pytest.mark.parametrize('mode', [None] + list(TokenMode))
def test_weight_gradient(mode):
    model = random_model(CFG, 5)
    img = random_image(6)
    tokens = None
    if mode is not None:
        tokens = TokenSet.initialize(CFG, 3, mode, 7, std=1.0)
    adjoint = np.random.default_rng(8).standard_normal((16, 16))

    _, backprop = linearize(model, img, tokens)
    grads = backprop.weights(adjoint)
    assert list(grads) == model.names
    for name, grad in grads.items():
        assert grad.shape == model[name].shape

    rng = np.random.default_rng(9)
    names = model.names
    pairs = []
    for _ in range(SAMPLED_ENTRIES):
        name = names[int(rng.integers(len(names)))]
        index = sample_indices(model[name].shape, rng, 1)[0]

        def loss(values: np.ndarray) -> float:
            depth = forward(model.replace({name: values}), img, tokens).depth
            return float(np.sum(adjoint * depth))

        numeric = central_difference(loss, np.array(model[name]), index)
        pairs.append((grads[name][index], numeric))
    scale = max(np.abs(g).max() for g in grads.values())
    assert max_relative_error(pairs, scale) < TOLERANCE


def test_full_gradient_of_logl1():
    model = random_model(CFG, 10)
    img = random_image(11)
    # targets far above every prediction keep clear of the kink of |x|
    target = DepthMap(np.random.default_rng(12).uniform(20.0, 30.0, (16, 16)))

    loss, grads = forward_backward_full(model, img, target, logl1_loss)
    prediction = forward(model, img)
    assert loss == pytest.approx(logl1_loss(prediction, target)[0])

    rng = np.random.default_rng(13)
    pairs = []
    for name in ('head.weight', 'blocks.1.attn.qkv.weight', 'pos_embed'):
        for index in sample_indices(model[name].shape, rng, 8):
            def objective(values: np.ndarray) -> float:
                pred = forward(model.replace({name: values}), img)
                return logl1_loss(pred, target)[0]
            numeric = central_difference(objective, np.array(model[name]),
                                         index)
            pairs.append((grads[name][index], numeric))
    scale = max(np.abs(g).max() for g in grads.values())
    assert max_relative_error(pairs, scale) < TOLERANCE


@pytest.mark.parametrize('frame', ['perspective', 'fisheye'])
def test_undo_warp_token_gradient(frame):
    model = random_model(CFG, 14)
    pinhole = PinholeIntrinsics.centered(16, 16, 4.0)
    rng = np.random.default_rng(15)
    scene = Scene(0, random_image(16),
                  DepthMap(rng.uniform(20.0, 30.0, size=(16, 16))))
    example = make_training_example(scene, model, 17, pinhole,
                                    Supervision.GROUND_TRUTH,
                                    SamplingTemplate(16, 16))
    cfg = LossConfig(frame=frame)
    tokens = TokenSet.initialize(CFG, 2, TokenMode.LAYERWISE, 18, std=1.0)

    _, grad = token_gradient(model, tokens, example, cfg)

    def loss(values: np.ndarray) -> float:
        return token_gradient(model, tokens.replace(values), example, cfg)[0]

    values = np.array(tokens.tokens)
    pairs = [(grad[i], central_difference(loss, values, i))
             for i in sample_indices(values.shape, rng, 16)]
    assert max_relative_error(pairs, np.abs(grad).max()) < TOLERANCE
