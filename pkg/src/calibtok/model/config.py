__all__ = ['ModelConfig']

from typing import Any, Dict

import attr

from ..exceptions import BadFormat, InvalidConfig


@attr.s(frozen=True)
class ModelConfig(object):
    """
    Describes the shape of a tiny vision-transformer depth estimator: square
    inputs of `image_size` pixels cut into `patch_size` patches, `layers`
    pre-norm encoder blocks of width `embed_dim` with `heads` attention
    heads, and a per-patch linear decoder head.
    """
    image_size = attr.ib(type=int, default=64, converter=int)
    patch_size = attr.ib(type=int, default=8, converter=int)
    layers = attr.ib(type=int, default=4, converter=int)
    embed_dim = attr.ib(type=int, default=64, converter=int)
    heads = attr.ib(type=int, default=4, converter=int)
    mlp_ratio = attr.ib(type=int, default=4, converter=int)
    channels = attr.ib(type=int, default=3, converter=int)

    @staticmethod
    def from_dict(d: Dict[str, Any]) -> 'ModelConfig':
        known = {a.name for a in attr.fields(ModelConfig)}
        unknown = set(d) - known - {'decoder'}
        if unknown:
            raise BadFormat("unknown model config keys: {}".format(
                ', '.join(sorted(unknown))))
        if d.get('decoder', 'linear') != 'linear':
            raise InvalidConfig("only the 'linear' decoder is supported.")
        return ModelConfig(**{k: v for k, v in d.items() if k in known})

    def __attrs_post_init__(self) -> None:
        if min(self.image_size, self.patch_size, self.embed_dim,
               self.heads, self.mlp_ratio) < 1:
            raise InvalidConfig("model dimensions must be positive.")
        if self.image_size % self.patch_size != 0:
            msg = "image size ({}) is not divisible by patch size ({})."
            raise InvalidConfig(msg.format(self.image_size, self.patch_size))
        if self.embed_dim % self.heads != 0:
            msg = "embedding width ({}) is not divisible by head count ({})."
            raise InvalidConfig(msg.format(self.embed_dim, self.heads))
        if self.layers < 1:
            raise InvalidConfig("model must have at least one layer.")
        if self.channels not in (1, 3):
            raise InvalidConfig("model inputs must have 1 or 3 channels.")

    @property
    def grid(self) -> int:
        """
        The number of patches along each side of the input.
        """
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid * self.grid

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @property
    def hidden_dim(self) -> int:
        return self.embed_dim * self.mlp_ratio

    def to_dict(self) -> Dict[str, Any]:
        d = attr.asdict(self)
        d['decoder'] = 'linear'
        return d
