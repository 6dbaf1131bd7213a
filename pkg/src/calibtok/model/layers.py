"""
Forward and reverse-mode primitives of the transformer. Every `*_forward`
function returns its output together with a cache that the matching
`*_backward` function consumes.
"""
__all__ = ['layer_norm_forward', 'layer_norm_backward',
           'linear_forward', 'linear_backward',
           'gelu_forward', 'gelu_backward',
           'softplus', 'sigmoid',
           'attention_forward', 'attention_backward']

from typing import Any, Dict, Optional, Tuple
import math

import numpy as np

LN_EPS = 1e-5
GELU_C = math.sqrt(2.0 / math.pi)

Cache = Dict[str, Any]


def layer_norm_forward(x: np.ndarray,
                       gain: np.ndarray,
                       bias: np.ndarray
                       ) -> Tuple[np.ndarray, Cache]:
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True)
                            + LN_EPS)
    xhat = centered * inv_std
    return xhat * gain + bias, {'xhat': xhat, 'inv_std': inv_std, 'gain': gain}


def layer_norm_backward(dy: np.ndarray,
                        cache: Cache
                        ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Returns the gradients with respect to the input, gain and bias.
    """
    xhat = cache['xhat']
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * cache['gain']
    dx = cache['inv_std'] * (dxhat
                             - dxhat.mean(axis=-1, keepdims=True)
                             - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))  # noqa: pycodestyle
    return dx, dgain, dbias


def linear_forward(x: np.ndarray,
                   weight: np.ndarray,
                   bias: np.ndarray
                   ) -> Tuple[np.ndarray, Cache]:
    return x @ weight + bias, {'x': x, 'weight': weight}


def linear_backward(dy: np.ndarray,
                    cache: Cache
                    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Returns the gradients with respect to the input, weight and bias.
    """
    return dy @ cache['weight'].T, cache['x'].T @ dy, dy.sum(axis=0)


def gelu_forward(x: np.ndarray) -> Tuple[np.ndarray, Cache]:
    """
    The tanh approximation of the Gaussian error linear unit.
    """
    t = np.tanh(GELU_C * (x + 0.044715 * x ** 3))
    return 0.5 * x * (1.0 + t), {'x': x, 't': t}


def gelu_backward(dy: np.ndarray, cache: Cache) -> np.ndarray:
    x, t = cache['x'], cache['t']
    inner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * inner)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """
    The derivative of `softplus`.
    """
    return np.exp(-np.logaddexp(0.0, -x))


def attention_forward(x: np.ndarray,
                      params: Dict[str, np.ndarray],
                      heads: int,
                      key_mask: Optional[np.ndarray] = None
                      ) -> Tuple[np.ndarray, Cache]:
    """
    Multi-head self-attention over a sequence of shape (S, F).

    Parameters:
        params: the 'qkv.weight', 'qkv.bias', 'proj.weight' and 'proj.bias'
            tensors of the layer.
        key_mask: an optional boolean vector of length S; keys at masked
            positions receive a logit of minus infinity.
    """
    seq, width = x.shape
    dim = width // heads
    qkv, qkv_cache = linear_forward(x, params['qkv.weight'],
                                    params['qkv.bias'])
    # (3, H, S, D)
    qkv = qkv.reshape(seq, 3, heads, dim).transpose(1, 2, 0, 3)
    q, k, v = qkv[0], qkv[1], qkv[2]
    scale = 1.0 / math.sqrt(dim)
    logits = (q @ k.transpose(0, 2, 1)) * scale
    if key_mask is not None:
        logits = np.where(key_mask[None, None, :], -np.inf, logits)
    logits = logits - logits.max(axis=-1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=-1, keepdims=True)
    mixed = (weights @ v).transpose(1, 0, 2).reshape(seq, width)
    out, proj_cache = linear_forward(mixed, params['proj.weight'],
                                     params['proj.bias'])
    cache = {'q': q, 'k': k, 'v': v, 'weights': weights, 'scale': scale,
             'qkv': qkv_cache, 'proj': proj_cache}
    return out, cache


def attention_backward(dy: np.ndarray,
                       cache: Cache
                       ) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """
    Returns the gradient with respect to the input sequence together with
    the gradients of the attention parameters.
    """
    q, k, v = cache['q'], cache['k'], cache['v']
    weights, scale = cache['weights'], cache['scale']
    heads, seq, dim = q.shape
    grads = {}  # type: Dict[str, np.ndarray]

    dmixed, grads['proj.weight'], grads['proj.bias'] = \
        linear_backward(dy, cache['proj'])
    dmixed = dmixed.reshape(seq, heads, dim).transpose(1, 0, 2)
    dweights = dmixed @ v.transpose(0, 2, 1)
    dv = weights.transpose(0, 2, 1) @ dmixed
    dlogits = weights * (dweights
                         - (dweights * weights).sum(axis=-1, keepdims=True))
    dq = (dlogits @ k) * scale
    dk = (dlogits.transpose(0, 2, 1) @ q) * scale
    dqkv = np.stack([dq, dk, dv]).transpose(2, 0, 1, 3).reshape(seq, 3 * heads * dim)  # noqa: pycodestyle
    dx, grads['qkv.weight'], grads['qkv.bias'] = \
        linear_backward(dqkv, cache['qkv'])
    return dx, grads
