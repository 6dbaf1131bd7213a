"""
Procedural perspective scenes: textured spheres and tilted planes in front
of a background plane, raycast through a pinhole camera to produce an RGB
image and an exact z-depth map.
"""
__all__ = ['SceneSpec', 'Scene', 'generate_scene', 'generate_split',
           'split_indices', 'ProceduralDataset', 'SceneDataset', 'SPLITS']

from collections import OrderedDict
from typing import Any, Dict, Iterator, List, Sequence, Tuple
import logging
import os

import attr
import numpy as np

from .core import DepthMap, ImageBuffer, PinholeIntrinsics
from .exceptions import BadFormat, IllegalConfig
from .formats import quantize, read_image, read_json, read_pfm, \
                     write_image, write_json, write_pfm

logger = logging.getLogger(__name__)  # type: logging.Logger

SPLITS = ('train', 'val', 'test')

# direction from every surface point towards the light
LIGHT = np.array([-0.4, -0.6, -0.7]) / np.linalg.norm([-0.4, -0.6, -0.7])
AMBIENT = 0.25


def _int_range(value: Any) -> Tuple[int, int]:
    lo, hi = (int(v) for v in value)
    return (lo, hi)


def _float_range(value: Any) -> Tuple[float, float]:
    lo, hi = (float(v) for v in value)
    return (lo, hi)


def _default_pinhole() -> PinholeIntrinsics:
    return PinholeIntrinsics.centered(64, 64, 12.0)


def _as_pinhole(value: Any) -> PinholeIntrinsics:
    if isinstance(value, PinholeIntrinsics):
        return value
    return PinholeIntrinsics.from_dict(value)


@attr.s(frozen=True)
class SceneSpec(object):
    """
    Describes a family of procedurally generated scenes.
    """
    seed = attr.ib(type=int, default=0, converter=int)
    objects = attr.ib(type=Tuple[int, int], default=(3, 8),
                      converter=_int_range)
    planes = attr.ib(type=Tuple[int, int], default=(1, 2),
                     converter=_int_range)
    depth_range = attr.ib(type=Tuple[float, float], default=(1.0, 10.0),
                          converter=_float_range)
    frequency_range = attr.ib(type=Tuple[float, float], default=(1.0, 6.0),
                              converter=_float_range)
    pinhole = attr.ib(type=PinholeIntrinsics, factory=_default_pinhole,
                      converter=_as_pinhole)

    @staticmethod
    def from_dict(d: Dict[str, Any]) -> 'SceneSpec':
        keys = ('seed', 'objects', 'planes', 'depth_range',
                'frequency_range', 'pinhole')
        try:
            return SceneSpec(**{k: d[k] for k in keys if k in d})
        except (TypeError, ValueError) as err:
            raise IllegalConfig("illegal scene spec: {}".format(err))

    def __attrs_post_init__(self) -> None:
        lo, hi = self.depth_range
        if not 0.0 < lo < hi:
            raise IllegalConfig("depth range must be positive with min < max.")  # noqa: pycodestyle
        for name in ('objects', 'planes', 'frequency_range'):
            lo, hi = getattr(self, name)
            if lo < 0 or lo > hi:
                msg = "illegal range for {}: [{}, {}]".format(name, lo, hi)
                raise IllegalConfig(msg)

    def to_dict(self) -> Dict[str, Any]:
        return {'seed': self.seed,
                'objects': list(self.objects),
                'planes': list(self.planes),
                'depth_range': list(self.depth_range),
                'frequency_range': list(self.frequency_range),
                'pinhole': self.pinhole.to_dict()}


@attr.s(frozen=True, eq=False)
class Scene(object):
    """
    A perspective image together with its ground-truth depth.
    """
    index = attr.ib(type=int)
    image = attr.ib(type=ImageBuffer)
    depth = attr.ib(type=DepthMap)


class _Surface(object):
    """
    The nearest hit found so far along every ray.
    """
    def __init__(self, shape: Tuple[int, int], far: float) -> None:
        self.t = np.full(shape, far)
        self.normal = np.zeros(shape + (3,))
        self.normal[..., 2] = -1.0
        self.owner = np.zeros(shape, dtype=np.intp)

    def offer(self,
              t: np.ndarray,
              normal: np.ndarray,
              owner: int
              ) -> None:
        closer = np.isfinite(t) & (t > 0.0) & (t < self.t)
        self.t = np.where(closer, t, self.t)
        self.normal = np.where(closer[..., None], normal, self.normal)
        self.owner = np.where(closer, owner, self.owner)


def _texture(rng: np.random.Generator,
             spec: SceneSpec
             ) -> Dict[str, np.ndarray]:
    axis = rng.normal(size=3)
    return {'color': rng.uniform(0.2, 1.0, size=3),
            'axis': axis / np.linalg.norm(axis),
            'frequency': np.array(rng.uniform(*spec.frequency_range)),
            'phase': np.array(rng.uniform(0.0, 2.0 * np.pi))}


def generate_scene(spec: SceneSpec, index: int) -> Tuple[ImageBuffer, DepthMap]:  # noqa: pycodestyle
    """
    Raycasts the scene with a given index. The result depends only on the
    seed of the spec and the index.
    """
    rng = np.random.default_rng([spec.seed, index])
    pin = spec.pinhole
    near, far = spec.depth_range
    ys, xs = np.mgrid[0:pin.height, 0:pin.width].astype(np.float64)
    # rays with unit z component, so that ray parameters are z-depths
    rays = np.stack([(xs - pin.cx) / pin.fx,
                     (ys - pin.cy) / pin.fy,
                     np.ones_like(xs)], axis=-1)
    half_x = 0.8 * max(pin.cx, pin.width - 1 - pin.cx) / pin.fx
    half_y = 0.8 * max(pin.cy, pin.height - 1 - pin.cy) / pin.fy

    surface = _Surface(xs.shape, far)
    textures = [_texture(rng, spec)]

    for _ in range(int(rng.integers(spec.planes[0], spec.planes[1] + 1))):
        z0 = rng.uniform(near + 0.5 * (far - near), near + 0.9 * (far - near))  # noqa: pycodestyle
        normal = np.array([rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), -1.0])  # noqa: pycodestyle
        normal /= np.linalg.norm(normal)
        with np.errstate(divide='ignore', invalid='ignore'):
            t = (normal[2] * z0) / (rays @ normal)
        surface.offer(t, np.broadcast_to(normal, rays.shape), len(textures))
        textures.append(_texture(rng, spec))

    for _ in range(int(rng.integers(spec.objects[0], spec.objects[1] + 1))):
        z = rng.uniform(near + 0.1 * (far - near), near + 0.6 * (far - near))
        centre = np.array([z * rng.uniform(-half_x, half_x),
                           z * rng.uniform(-half_y, half_y),
                           z])
        radius = z * rng.uniform(0.08, 0.3)
        a = (rays * rays).sum(axis=-1)
        b = -2.0 * (rays @ centre)
        c = centre @ centre - radius * radius
        disc = b * b - 4.0 * a * c
        hit = disc >= 0.0
        t = np.where(hit, (-b - np.sqrt(np.where(hit, disc, 0.0))) / (2.0 * a), np.inf)  # noqa: pycodestyle
        points = rays * np.where(hit, t, 0.0)[..., None]
        normals = (points - centre) / radius
        surface.offer(t, np.where(hit[..., None], normals, 0.0), len(textures))  # noqa: pycodestyle
        textures.append(_texture(rng, spec))

    # single precision, so that scenes survive a PFM round trip unchanged
    depth = np.clip(surface.t, near, far).astype(np.float32).astype(np.float64)
    points = rays * depth[..., None]
    normals = surface.normal
    # planes are lit from whichever side faces the camera
    facing = (normals * rays).sum(axis=-1) > 0.0
    normals = np.where(facing[..., None], -normals, normals)
    shading = AMBIENT + (1.0 - AMBIENT) * np.clip(normals @ LIGHT, 0.0, 1.0)

    rgb = np.zeros(xs.shape + (3,))
    for owner, tex in enumerate(textures):
        region = surface.owner == owner
        if not region.any():
            continue
        wave = np.sin(tex['frequency'] * (points[region] @ tex['axis'])
                      + tex['phase'])
        pattern = 0.6 + 0.4 * (0.5 + 0.5 * wave)
        rgb[region] = tex['color'] * pattern[:, None]
    rgb *= shading[..., None]
    logger.debug("generated scene %d (seed %d)", index, spec.seed)
    return ImageBuffer(quantize(rgb)), DepthMap(depth)


def split_indices(n_train: int,
                  n_val: int,
                  n_test: int
                  ) -> 'OrderedDict[str, range]':
    """
    Assigns consecutive, disjoint scene indices to the train, validation and
    test splits.
    """
    counts = (n_train, n_val, n_test)
    if min(counts) < 1:
        raise IllegalConfig("every split must hold at least one scene.")
    ranges = OrderedDict()  # type: OrderedDict[str, range]
    start = 0
    for name, count in zip(SPLITS, counts):
        ranges[name] = range(start, start + count)
        start += count
    return ranges


def generate_split(spec: SceneSpec,
                   n_train: int,
                   n_val: int,
                   n_test: int,
                   root: str
                   ) -> Dict[str, Any]:
    """
    Writes a dataset of scenes below a given directory, laid out as
    `scenes/{split}/{index:06}.ppm` and `.pfm`, together with a
    `manifest.json` at its root.

    Returns:
        the manifest.

    Raises:
        IOFailure: if a file cannot be written.
    """
    splits = OrderedDict()  # type: Dict[str, List[Dict[str, Any]]]
    for split, indices in split_indices(n_train, n_val, n_test).items():
        entries = []
        for index in indices:
            image, depth = generate_scene(spec, index)
            stem = 'scenes/{}/{:06d}'.format(split, index)
            write_image(os.path.join(root, stem + '.ppm'), image)
            write_pfm(os.path.join(root, stem + '.pfm'), depth)
            entries.append({'index': index,
                            'image': stem + '.ppm',
                            'depth': stem + '.pfm'})
        splits[split] = entries
        logger.info("generated %d %s scenes", len(entries), split)
    manifest = {'version': 1,
                'spec': spec.to_dict(),
                'intrinsics': spec.pinhole.to_dict(),
                'splits': splits}
    write_json(os.path.join(root, 'manifest.json'), manifest)
    return manifest


class ProceduralDataset(object):
    """
    An in-memory collection of scenes generated on demand.
    """
    @staticmethod
    def split(spec: SceneSpec,
              name: str,
              n_train: int,
              n_val: int,
              n_test: int
              ) -> 'ProceduralDataset':
        return ProceduralDataset(spec,
                                 split_indices(n_train, n_val, n_test)[name])

    def __init__(self, spec: SceneSpec, indices: Sequence[int]) -> None:
        self.__spec = spec
        self.__indices = list(indices)
        self.__cache = {}  # type: Dict[int, Scene]

    @property
    def pinhole(self) -> PinholeIntrinsics:
        return self.__spec.pinhole

    @property
    def indices(self) -> List[int]:
        return list(self.__indices)

    def take(self, count: int) -> 'ProceduralDataset':
        """
        The first `count` scenes of this dataset.
        """
        return ProceduralDataset(self.__spec, self.__indices[:count])

    def __len__(self) -> int:
        return len(self.__indices)

    def __getitem__(self, position: int) -> Scene:
        index = self.__indices[position]
        if index not in self.__cache:
            image, depth = generate_scene(self.__spec, index)
            self.__cache[index] = Scene(index, image, depth)
        return self.__cache[index]

    def __iter__(self) -> Iterator[Scene]:
        for position in range(len(self)):
            yield self[position]


class SceneDataset(object):
    """
    One split of a dataset written by `generate_split`.
    """
    @staticmethod
    def load(root: str, split: str) -> 'SceneDataset':
        """
        Raises:
            IOFailure: if the manifest cannot be read.
            BadFormat: if the manifest lacks the split.
        """
        manifest = read_json(os.path.join(root, 'manifest.json'))
        if not isinstance(manifest, dict) or 'splits' not in manifest:
            raise BadFormat("dataset manifest lacks 'splits'")
        if split not in manifest['splits']:
            raise BadFormat("dataset has no '{}' split".format(split))
        pin = PinholeIntrinsics.from_dict(manifest['intrinsics'])
        logger.info("loaded %s split of dataset at %s", split, root)
        return SceneDataset(root, pin, manifest['splits'][split])

    def __init__(self,
                 root: str,
                 pinhole: PinholeIntrinsics,
                 entries: List[Dict[str, Any]]
                 ) -> None:
        self.__root = root
        self.__pinhole = pinhole
        self.__entries = list(entries)
        self.__cache = {}  # type: Dict[int, Scene]

    @property
    def pinhole(self) -> PinholeIntrinsics:
        return self.__pinhole

    @property
    def indices(self) -> List[int]:
        return [int(e['index']) for e in self.__entries]

    def take(self, count: int) -> 'SceneDataset':
        return SceneDataset(self.__root, self.__pinhole,
                            self.__entries[:count])

    def __len__(self) -> int:
        return len(self.__entries)

    def __getitem__(self, position: int) -> Scene:
        if position not in self.__cache:
            entry = self.__entries[position]
            image = read_image(os.path.join(self.__root, entry['image']))
            depth = read_pfm(os.path.join(self.__root, entry['depth']))
            self.__cache[position] = Scene(int(entry['index']), image, depth)
        return self.__cache[position]

    def __iter__(self) -> Iterator[Scene]:
        for position in range(len(self)):
            yield self[position]
