"""
Named parameter tensors of the depth estimator, their deterministic
initialisation, and their persistence in CTOK containers.
"""
__all__ = ['ModelWeights', 'init_model', 'truncated_normal', 'tensor_shapes']

from collections import OrderedDict
from typing import Any, Dict, Iterator, List, Mapping, Tuple
import hashlib
import logging

import numpy as np

from .config import ModelConfig
from ..exceptions import BadFormat, IllegalConfig, ShapeMismatch
from ..formats.checkpoint import encode_container, read_container, \
                                 write_container

logger = logging.getLogger(__name__)  # type: logging.Logger

INIT_STD = 0.02


def tensor_shapes(cfg: ModelConfig) -> 'OrderedDict[str, Tuple[int, ...]]':
    """
    The name and shape of every parameter tensor, in checkpoint order.
    """
    f, hidden = cfg.embed_dim, cfg.hidden_dim
    shapes = OrderedDict()  # type: OrderedDict[str, Tuple[int, ...]]
    shapes['patch_embed.weight'] = (cfg.patch_dim, f)
    shapes['patch_embed.bias'] = (f,)
    shapes['pos_embed'] = (cfg.num_patches, f)
    for i in range(cfg.layers):
        prefix = 'blocks.{}.'.format(i)
        shapes[prefix + 'norm1.gain'] = (f,)
        shapes[prefix + 'norm1.bias'] = (f,)
        shapes[prefix + 'attn.qkv.weight'] = (f, 3 * f)
        shapes[prefix + 'attn.qkv.bias'] = (3 * f,)
        shapes[prefix + 'attn.proj.weight'] = (f, f)
        shapes[prefix + 'attn.proj.bias'] = (f,)
        shapes[prefix + 'norm2.gain'] = (f,)
        shapes[prefix + 'norm2.bias'] = (f,)
        shapes[prefix + 'mlp.fc1.weight'] = (f, hidden)
        shapes[prefix + 'mlp.fc1.bias'] = (hidden,)
        shapes[prefix + 'mlp.fc2.weight'] = (hidden, f)
        shapes[prefix + 'mlp.fc2.bias'] = (f,)
    shapes['norm.gain'] = (f,)
    shapes['norm.bias'] = (f,)
    shapes['head.weight'] = (f, 1)
    shapes['head.bias'] = (1,)
    return shapes


def truncated_normal(rng: np.random.Generator,
                     shape: Tuple[int, ...],
                     std: float = INIT_STD
                     ) -> np.ndarray:
    """
    Draws from a zero-mean normal distribution truncated at two standard
    deviations; values beyond the cut-off are redrawn.
    """
    values = rng.standard_normal(shape)
    outside = np.abs(values) > 2.0
    while outside.any():
        values[outside] = rng.standard_normal(int(outside.sum()))
        outside = np.abs(values) > 2.0
    return values * std


class ModelWeights(object):
    """
    An immutable, ordered collection of the named parameter tensors (encoder
    weights and decoder head) of a depth estimator.
    """
    @staticmethod
    def load(path) -> 'ModelWeights':
        """
        Loads model weights from a CTOK checkpoint.

        Raises:
            IOFailure: if the checkpoint cannot be read.
            BadFormat: if the file is not a model checkpoint.
        """
        manifest, tensors = read_container(path)
        if manifest.get('kind') != 'model':
            raise BadFormat("expected a model checkpoint: {}".format(path))
        cfg = ModelConfig.from_dict(manifest['config'])
        logger.info("loaded model weights (%d parameters) from %s",
                    sum(t.size for t in tensors.values()), path)
        return ModelWeights(cfg, tensors)

    def __init__(self,
                 config: ModelConfig,
                 tensors: Mapping[str, np.ndarray]
                 ) -> None:
        shapes = tensor_shapes(config)
        if set(tensors) != set(shapes):
            missing = sorted(set(shapes) - set(tensors))
            extra = sorted(set(tensors) - set(shapes))
            logger.error("tensor names do not match model config")
            raise BadFormat("tensor mismatch (missing: {}; unexpected: {})"
                            .format(missing, extra))
        self.__config = config
        self.__tensors = OrderedDict()  # type: OrderedDict[str, np.ndarray]
        for name, shape in shapes.items():
            arr = np.array(tensors[name], dtype=np.float64)
            if arr.shape != shape:
                raise ShapeMismatch(name, shape, arr.shape)
            if not np.all(np.isfinite(arr)):
                raise IllegalConfig("non-finite values in {}".format(name))
            arr.setflags(write=False)
            self.__tensors[name] = arr

    @property
    def config(self) -> ModelConfig:
        return self.__config

    def __getitem__(self, name: str) -> np.ndarray:
        return self.__tensors[name]

    def __iter__(self) -> Iterator[str]:
        yield from self.__tensors

    def __len__(self) -> int:
        return len(self.__tensors)

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        yield from self.__tensors.items()

    @property
    def names(self) -> List[str]:
        return list(self.__tensors)

    @property
    def parameter_count(self) -> int:
        return sum(t.size for t in self.__tensors.values())

    def replace(self, updates: Mapping[str, np.ndarray]) -> 'ModelWeights':
        """
        Returns a copy of these weights with some tensors replaced.
        """
        tensors = OrderedDict(self.__tensors)
        tensors.update(updates)
        return ModelWeights(self.__config, tensors)

    def quantized(self) -> 'ModelWeights':
        """
        Rounds every tensor to single precision, i.e., to exactly the values
        stored by a checkpoint.
        """
        return ModelWeights(self.__config,
                            {n: t.astype(np.float32).astype(np.float64)
                             for n, t in self.__tensors.items()})

    def manifest(self) -> Dict[str, Any]:
        return {'kind': 'model', 'config': self.__config.to_dict()}

    def checksum(self) -> str:
        """
        The SHA-256 digest of the serialised checkpoint.
        """
        payload = encode_container(self.manifest(), self.__tensors)
        return hashlib.sha256(payload).hexdigest()

    def save(self, path) -> None:
        logger.info("saving model weights to %s", path)
        write_container(path, self.manifest(), self.__tensors)


def init_model(cfg: ModelConfig, seed: int) -> ModelWeights:
    """
    Deterministically initialises the weights of a model: truncated-normal
    projections and positional embeddings, zero biases and unit
    normalisation gains.
    """
    rng = np.random.default_rng(seed)
    tensors = OrderedDict()  # type: OrderedDict[str, np.ndarray]
    for name, shape in tensor_shapes(cfg).items():
        if name.endswith('.gain'):
            tensors[name] = np.ones(shape)
        elif name.endswith('.bias'):
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = truncated_normal(rng, shape)
    logger.debug("initialised model with seed %d", seed)
    return ModelWeights(cfg, tensors)
