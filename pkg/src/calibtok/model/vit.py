"""
The forward pass of the tiny vision-transformer depth estimator, including
calibration-token injection, and its exact reverse-mode gradients with
respect to the tokens and to the model weights.
"""
__all__ = ['AttentionRecord', 'Backprop', 'forward', 'linearize',
           'forward_backward_tokens', 'forward_backward_full',
           'export_embeddings', 'parameter_overhead', 'patchify',
           'upsample_matrix']

from collections import OrderedDict
from typing import Any, Callable, Dict, List, Optional, Tuple
import functools
import logging

import attr
import numpy as np

from .config import ModelConfig
from .layers import attention_backward, attention_forward, gelu_backward, \
                    gelu_forward, layer_norm_backward, layer_norm_forward, \
                    linear_backward, linear_forward, sigmoid, softplus
from .tokens import TokenMode, TokenSet
from .weights import ModelWeights
from ..core import DepthMap, ImageBuffer
from ..exceptions import ShapeMismatch

logger = logging.getLogger(__name__)  # type: logging.Logger

# keeps predictions strictly positive where softplus underflows
MIN_DEPTH = 1e-6

Objective = Callable[[DepthMap, DepthMap], Tuple[float, np.ndarray]]


@attr.s(frozen=True, eq=False)
class AttentionRecord(object):
    """
    Per-layer attention statistics on the patch grid.

    Attributes:
        token_to_patch: (L, g, g) mean attention mass that token queries
            place on each patch.
        patch_to_token: (L, g, g) total attention mass that each patch query
            places on token keys, averaged over heads.
        row_sums: (L, H, S) sum of every attention row.
    """
    token_to_patch = attr.ib(type=np.ndarray)
    patch_to_token = attr.ib(type=np.ndarray)
    row_sums = attr.ib(type=np.ndarray)

    @property
    def layers(self) -> int:
        return self.token_to_patch.shape[0]


def patchify(data: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """
    Cuts an (S, S, C) image into row-major (N, p * p * C) patches.
    """
    g, p = cfg.grid, cfg.patch_size
    return data.reshape(g, p, g, p, cfg.channels) \
        .transpose(0, 2, 1, 3, 4).reshape(g * g, p * p * cfg.channels)


@functools.lru_cache(maxsize=16)
def upsample_matrix(size: int, grid: int) -> np.ndarray:
    """
    The (size, grid) matrix of one-dimensional bilinear upsampling weights
    under the half-pixel convention, with clamping at the borders.
    """
    u = np.zeros((size, grid))
    src = np.clip((np.arange(size) + 0.5) * grid / size - 0.5, 0.0, grid - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, grid - 1)
    a = src - i0
    rows = np.arange(size)
    np.add.at(u, (rows, i0), 1.0 - a)
    np.add.at(u, (rows, i1), a)
    u.setflags(write=False)
    return u


def _subset(model: ModelWeights, prefix: str) -> Dict[str, np.ndarray]:
    return {name[len(prefix):]: t for name, t in model.items()
            if name.startswith(prefix)}


def _block_forward(seq: np.ndarray,
                   params: Dict[str, np.ndarray],
                   heads: int,
                   key_mask: Optional[np.ndarray]
                   ) -> Tuple[np.ndarray, Dict[str, Any]]:
    h, norm1 = layer_norm_forward(seq, params['norm1.gain'], params['norm1.bias'])  # noqa: pycodestyle
    attn_params = {k[5:]: v for k, v in params.items() if k.startswith('attn.')}  # noqa: pycodestyle
    a, attn = attention_forward(h, attn_params, heads, key_mask)
    mid = seq + a
    h2, norm2 = layer_norm_forward(mid, params['norm2.gain'], params['norm2.bias'])  # noqa: pycodestyle
    u, fc1 = linear_forward(h2, params['mlp.fc1.weight'], params['mlp.fc1.bias'])  # noqa: pycodestyle
    g, act = gelu_forward(u)
    m, fc2 = linear_forward(g, params['mlp.fc2.weight'], params['mlp.fc2.bias'])  # noqa: pycodestyle
    cache = {'norm1': norm1, 'attn': attn, 'norm2': norm2,
             'fc1': fc1, 'act': act, 'fc2': fc2}
    return mid + m, cache


def _block_backward(dout: np.ndarray,
                    cache: Dict[str, Any]
                    ) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    grads = {}  # type: Dict[str, np.ndarray]
    dg, grads['mlp.fc2.weight'], grads['mlp.fc2.bias'] = \
        linear_backward(dout, cache['fc2'])
    du = gelu_backward(dg, cache['act'])
    dh2, grads['mlp.fc1.weight'], grads['mlp.fc1.bias'] = \
        linear_backward(du, cache['fc1'])
    dmid, grads['norm2.gain'], grads['norm2.bias'] = \
        layer_norm_backward(dh2, cache['norm2'])
    dmid = dmid + dout
    dh, attn_grads = attention_backward(dmid, cache['attn'])
    for name, grad in attn_grads.items():
        grads['attn.' + name] = grad
    dseq, grads['norm1.gain'], grads['norm1.bias'] = \
        layer_norm_backward(dh, cache['norm1'])
    return dseq + dmid, grads


def _check_image(cfg: ModelConfig, img: ImageBuffer) -> None:
    expected = (cfg.image_size, cfg.image_size, cfg.channels)
    if img.data.shape != expected:
        logger.error("image does not match model input size")
        raise ShapeMismatch('image', expected, img.data.shape)


class _Trace(object):
    """
    Everything recorded by a forward pass that reverse mode needs.
    """
    def __init__(self) -> None:
        self.patches = None  # type: Optional[np.ndarray]
        self.blocks = []  # type: List[Dict[str, Any]]
        self.attention = []  # type: List[np.ndarray]
        self.encoded = None  # type: Optional[np.ndarray]
        self.norm = None  # type: Any
        self.head = None  # type: Any
        self.scores = None  # type: Optional[np.ndarray]
        self.depth = None  # type: Optional[np.ndarray]


def _run(model: ModelWeights,
         img: ImageBuffer,
         tokens: Optional[TokenSet],
         disabled_tokens: Optional[np.ndarray] = None,
         decode: bool = True
         ) -> _Trace:
    cfg = model.config
    _check_image(cfg, img)
    n = cfg.num_patches
    key_mask = None  # type: Optional[np.ndarray]
    if tokens is not None:
        tokens.check(cfg)
        if disabled_tokens is not None:
            disabled = np.asarray(disabled_tokens, dtype=bool)
            if disabled.shape != (tokens.per_layer,):
                raise ShapeMismatch('disabled_tokens',
                                    (tokens.per_layer,), disabled.shape)
            key_mask = np.concatenate([np.zeros(n, dtype=bool), disabled])

    trace = _Trace()
    trace.patches = patchify(img.data.astype(np.float64), cfg)
    x = trace.patches @ model['patch_embed.weight'] \
        + model['patch_embed.bias'] + model['pos_embed']

    seq = x
    if tokens is not None and tokens.mode is TokenMode.SINGLE:
        seq = np.concatenate([x, tokens.layer(0)])
    for i in range(cfg.layers):
        if tokens is not None and tokens.mode is not TokenMode.SINGLE:
            seq = np.concatenate([seq[:n], tokens.layer(i)])
        seq, cache = _block_forward(seq, _subset(model, 'blocks.{}.'.format(i)),  # noqa: pycodestyle
                                    cfg.heads, key_mask)
        trace.blocks.append(cache)
    trace.encoded = seq[:n]
    if not decode:
        return trace

    z, trace.norm = layer_norm_forward(trace.encoded, model['norm.gain'],
                                       model['norm.bias'])
    trace.scores, trace.head = linear_forward(z, model['head.weight'],
                                              model['head.bias'])
    coarse = softplus(trace.scores).reshape(cfg.grid, cfg.grid) + MIN_DEPTH
    up = upsample_matrix(cfg.image_size, cfg.grid)
    trace.depth = up @ coarse @ up.T
    return trace


class Backprop(object):
    """
    Pulls per-pixel gradients on the output depth of a recorded forward pass
    back to the calibration tokens or to the model weights.
    """
    def __init__(self,
                 model: ModelWeights,
                 tokens: Optional[TokenSet],
                 trace: _Trace
                 ) -> None:
        self.__model = model
        self.__tokens = tokens
        self.__trace = trace

    def _encoded_adjoint(self,
                         adjoint: np.ndarray,
                         grads: Dict[str, np.ndarray]
                         ) -> np.ndarray:
        cfg = self.__model.config
        trace = self.__trace
        adjoint = np.asarray(adjoint, dtype=np.float64)
        expected = (cfg.image_size, cfg.image_size)
        if adjoint.shape != expected:
            raise ShapeMismatch('adjoint', expected, adjoint.shape)
        up = upsample_matrix(cfg.image_size, cfg.grid)
        dcoarse = up.T @ adjoint @ up
        dscores = dcoarse.reshape(-1, 1) * sigmoid(trace.scores)
        dz, grads['head.weight'], grads['head.bias'] = \
            linear_backward(dscores, trace.head)
        dx, grads['norm.gain'], grads['norm.bias'] = \
            layer_norm_backward(dz, trace.norm)
        return dx

    def _backward(self,
                  adjoint: np.ndarray
                  ) -> Tuple[Dict[str, np.ndarray], Optional[np.ndarray]]:
        cfg = self.__model.config
        tokens = self.__tokens
        trace = self.__trace
        n = cfg.num_patches
        grads = {}  # type: Dict[str, np.ndarray]
        dx = self._encoded_adjoint(adjoint, grads)

        dtokens = None  # type: Optional[np.ndarray]
        if tokens is None:
            dseq = dx
        else:
            dtokens = np.zeros(tokens.tokens.shape)
            dseq = np.concatenate([dx, np.zeros((tokens.per_layer, cfg.embed_dim))])  # noqa: pycodestyle
        for i in reversed(range(cfg.layers)):
            dseq, block_grads = _block_backward(dseq, trace.blocks[i])
            for name, grad in block_grads.items():
                grads['blocks.{}.{}'.format(i, name)] = grad
            if tokens is not None and tokens.mode is not TokenMode.SINGLE:
                slot = i if tokens.mode is TokenMode.LAYERWISE else 0
                dtokens[slot] += dseq[n:]
                # token outputs of the previous layer were dropped
                dseq = np.concatenate([dseq[:n], np.zeros_like(dseq[n:])])
        if tokens is not None and tokens.mode is TokenMode.SINGLE:
            dtokens[0] += dseq[n:]
        dx = dseq[:n]

        grads['patch_embed.weight'] = trace.patches.T @ dx
        grads['patch_embed.bias'] = dx.sum(axis=0)
        grads['pos_embed'] = dx.copy()
        return grads, dtokens

    def tokens(self, adjoint: np.ndarray) -> np.ndarray:
        """
        The gradient with respect to every token entry, shaped like the
        tokens.
        """
        assert self.__tokens is not None
        _, dtokens = self._backward(adjoint)
        return dtokens

    def weights(self, adjoint: np.ndarray) -> 'OrderedDict[str, np.ndarray]':
        """
        The gradient with respect to every weight tensor, in checkpoint
        order.
        """
        grads, _ = self._backward(adjoint)
        return OrderedDict((name, grads[name]) for name in self.__model)


def linearize(model: ModelWeights,
              img: ImageBuffer,
              tokens: Optional[TokenSet] = None,
              disabled_tokens: Optional[np.ndarray] = None
              ) -> Tuple[DepthMap, Backprop]:
    """
    Runs a forward pass and returns its prediction together with a `Backprop`
    that computes gradients of any scalar loss of that prediction.
    """
    trace = _run(model, img, tokens, disabled_tokens)
    return DepthMap(trace.depth), Backprop(model, tokens, trace)


def _attention_record(cfg: ModelConfig,
                      trace: _Trace,
                      with_tokens: bool
                      ) -> AttentionRecord:
    n, g = cfg.num_patches, cfg.grid
    to_patch = np.zeros((cfg.layers, g, g))
    to_token = np.zeros((cfg.layers, g, g))
    sums = []
    for i, cache in enumerate(trace.blocks):
        weights = cache['attn']['weights']
        sums.append(weights.sum(axis=-1))
        if with_tokens:
            to_patch[i] = weights[:, n:, :n].mean(axis=(0, 1)).reshape(g, g)
            to_token[i] = weights[:, :n, n:].sum(axis=-1).mean(axis=0) \
                .reshape(g, g)
    return AttentionRecord(to_patch, to_token, np.stack(sums))


def forward(model: ModelWeights,
            img: ImageBuffer,
            tokens: Optional[TokenSet] = None,
            record_attention: bool = False,
            disabled_tokens: Optional[np.ndarray] = None
            ) -> Any:
    """
    Predicts a strictly positive depth map for an image. Without tokens,
    this is the unmodified perspective path of the model.

    Parameters:
        disabled_tokens: an optional boolean vector over the tokens of a
            layer; disabled tokens are never attended to.

    Returns:
        the predicted depth map or, if `record_attention` is set, a tuple
        of the predicted depth map and an `AttentionRecord`.

    Raises:
        ShapeMismatch: if the image or tokens do not fit the model.
    """
    trace = _run(model, img, tokens, disabled_tokens)
    depth = DepthMap(trace.depth)
    if not record_attention:
        return depth
    return depth, _attention_record(model.config, trace, tokens is not None)


def forward_backward_tokens(model: ModelWeights,
                            img: ImageBuffer,
                            tokens: TokenSet,
                            loss_adjoint: np.ndarray
                            ) -> np.ndarray:
    """
    Computes the gradient of a scalar loss with respect to the calibration
    tokens, given the gradient of that loss with respect to the predicted
    depth. The model weights are held fixed.
    """
    _, backprop = linearize(model, img, tokens)
    return backprop.tokens(loss_adjoint)


def forward_backward_full(model: ModelWeights,
                          img: ImageBuffer,
                          target: DepthMap,
                          objective: Objective
                          ) -> Tuple[float, 'OrderedDict[str, np.ndarray]']:
    """
    Computes an objective between the token-free prediction for an image and
    a target, together with its gradient with respect to every weight.
    """
    prediction, backprop = linearize(model, img)
    loss, adjoint = objective(prediction, target)
    return loss, backprop.weights(adjoint)


def export_embeddings(model: ModelWeights,
                      img: ImageBuffer,
                      tokens: Optional[TokenSet] = None
                      ) -> np.ndarray:
    """
    Returns the final-layer patch embeddings, one row per patch in row-major
    order, with all token positions removed.
    """
    return _run(model, img, tokens, decode=False).encoded.copy()


def parameter_overhead(weights: ModelWeights, tokens: TokenSet) -> float:
    """
    The ratio between the number of token parameters and the number of
    backbone parameters.
    """
    return tokens.parameter_count / float(weights.parameter_count)
