__all__ = ['TokenMode', 'TokenSet']

from typing import Any, Dict
import enum
import logging

import attr
import numpy as np

from .config import ModelConfig
from .weights import INIT_STD, truncated_normal
from ..exceptions import BadFormat, IllegalConfig, ShapeMismatch
from ..formats.checkpoint import read_container, write_container

logger = logging.getLogger(__name__)  # type: logging.Logger


class TokenMode(enum.Enum):
    """
    Determines how calibration tokens are injected into the encoder.

    LAYERWISE: a fresh set of tokens is appended before every layer, and the
        outputs at token positions are dropped after that layer.
    SINGLE: the first set of tokens is appended once before the first layer
        and carried through the whole encoder.
    SHARED: the first set of tokens is appended before every layer and
        dropped after it.
    """
    LAYERWISE = 'layerwise'
    SINGLE = 'single'
    SHARED = 'shared'


def _as_tokens(tokens) -> np.ndarray:
    arr = np.array(tokens, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@attr.s(frozen=True, eq=False)
class TokenSet(object):
    """
    Trainable calibration tokens of shape (layers, tokens per layer, width).
    In SINGLE and SHARED mode only the first slice is used.
    """
    tokens = attr.ib(type=np.ndarray, converter=_as_tokens)
    mode = attr.ib(type=TokenMode, converter=TokenMode)

    @staticmethod
    def initialize(cfg: ModelConfig,
                   per_layer: int,
                   mode: TokenMode,
                   seed: int,
                   std: float = INIT_STD
                   ) -> 'TokenSet':
        rng = np.random.default_rng(seed)
        shape = (cfg.layers, per_layer, cfg.embed_dim)
        return TokenSet(truncated_normal(rng, shape, std), mode)

    @staticmethod
    def zeros(cfg: ModelConfig, per_layer: int, mode: TokenMode) -> 'TokenSet':
        return TokenSet(np.zeros((cfg.layers, per_layer, cfg.embed_dim)), mode)

    @staticmethod
    def load(path) -> 'TokenSet':
        """
        Loads a token set from a CTOK checkpoint.

        Raises:
            IOFailure: if the checkpoint cannot be read.
            BadFormat: if the file is not a token checkpoint.
        """
        manifest, tensors = read_container(path)
        if manifest.get('kind') != 'tokens' or 'tokens' not in tensors:
            raise BadFormat("expected a token checkpoint: {}".format(path))
        try:
            mode = TokenMode(manifest.get('mode'))
        except ValueError:
            raise BadFormat("unknown token mode: {}".format(manifest.get('mode')))  # noqa: pycodestyle
        logger.info("loaded %s tokens from %s", mode.value, path)
        return TokenSet(tensors['tokens'], mode)

    def __attrs_post_init__(self) -> None:
        if self.tokens.ndim != 3:
            raise ShapeMismatch('tokens', ('L', 'M', 'F'), self.tokens.shape)
        if not np.all(np.isfinite(self.tokens)):
            raise IllegalConfig("calibration tokens must be finite.")

    @property
    def layers(self) -> int:
        return self.tokens.shape[0]

    @property
    def per_layer(self) -> int:
        return self.tokens.shape[1]

    @property
    def width(self) -> int:
        return self.tokens.shape[2]

    @property
    def parameter_count(self) -> int:
        """
        The number of stored token parameters, L * M * F.
        """
        return int(self.tokens.size)

    def check(self, cfg: ModelConfig) -> None:
        """
        Ensures that these tokens can be used with a given model.

        Raises:
            ShapeMismatch: if the layer count or width do not match.
        """
        expected = (cfg.layers, self.per_layer, cfg.embed_dim)
        if self.tokens.shape != expected:
            raise ShapeMismatch('tokens', expected, self.tokens.shape)

    def layer(self, index: int) -> np.ndarray:
        """
        The tokens appended before a given encoder layer.
        """
        if self.mode is TokenMode.LAYERWISE:
            return self.tokens[index]
        return self.tokens[0]

    def replace(self, tokens: np.ndarray) -> 'TokenSet':
        return TokenSet(tokens, self.mode)

    def quantized(self) -> 'TokenSet':
        return self.replace(self.tokens.astype(np.float32).astype(np.float64))

    def manifest(self) -> Dict[str, Any]:
        return {'kind': 'tokens', 'mode': self.mode.value}

    def save(self, path) -> None:
        logger.info("saving %s tokens to %s", self.mode.value, path)
        write_container(path, self.manifest(), {'tokens': self.tokens})
