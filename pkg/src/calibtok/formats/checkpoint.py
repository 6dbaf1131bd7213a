"""
The CTOK tensor container: the magic bytes b"CTOK", a little-endian u16
format version, a u32 length-prefixed JSON manifest listing named tensors
and their shapes, then the raw little-endian float32 data of each tensor in
manifest order.
"""
__all__ = ['write_container', 'read_container', 'FORMAT_VERSION']

from collections import OrderedDict
from typing import Any, Dict, Mapping, Tuple
import json
import logging
import struct

import numpy as np

from .netpbm import _read_bytes, _write_bytes
from ..exceptions import BadFormat

logger = logging.getLogger(__name__)  # type: logging.Logger

MAGIC = b'CTOK'
FORMAT_VERSION = 1


def encode_container(manifest: Dict[str, Any],
                     tensors: Mapping[str, np.ndarray]
                     ) -> bytes:
    manifest = dict(manifest)
    manifest['tensors'] = [{'name': name, 'shape': list(arr.shape)}
                           for name, arr in tensors.items()]
    blob = json.dumps(manifest, sort_keys=True).encode('utf-8')
    parts = [MAGIC,
             struct.pack('<H', FORMAT_VERSION),
             struct.pack('<I', len(blob)),
             blob]
    for arr in tensors.values():
        parts.append(np.ascontiguousarray(arr, dtype='<f4').tobytes())
    return b''.join(parts)


def write_container(path,
                    manifest: Dict[str, Any],
                    tensors: Mapping[str, np.ndarray]
                    ) -> None:
    """
    Writes a set of named tensors, in iteration order, to a CTOK file.
    """
    logger.debug("writing %d tensors to checkpoint: %s", len(tensors), path)
    _write_bytes(path, encode_container(manifest, tensors))


def read_container(path
                   ) -> Tuple[Dict[str, Any], 'OrderedDict[str, np.ndarray]']:
    """
    Reads a CTOK file.

    Returns:
        the manifest and an ordered mapping from tensor names to float64
        arrays.

    Raises:
        IOFailure: if the file cannot be read.
        BadFormat: if the file is not a valid CTOK container.
    """
    raw = _read_bytes(path)
    if raw[:4] != MAGIC:
        raise BadFormat("missing CTOK magic bytes")
    if len(raw) < 10:
        raise BadFormat("truncated CTOK header")
    version, = struct.unpack('<H', raw[4:6])
    if version != FORMAT_VERSION:
        raise BadFormat("unsupported CTOK version: {}".format(version))
    length, = struct.unpack('<I', raw[6:10])
    try:
        manifest = json.loads(raw[10:10 + length].decode('utf-8'))
    except ValueError:
        raise BadFormat("CTOK manifest is not valid JSON")

    tensors = OrderedDict()  # type: OrderedDict[str, np.ndarray]
    offset = 10 + length
    for entry in manifest.get('tensors', []):
        shape = tuple(int(n) for n in entry['shape'])
        count = int(np.prod(shape, dtype=np.int64))
        payload = raw[offset:offset + 4 * count]
        if len(payload) != 4 * count:
            raise BadFormat("tensor data truncated: {}".format(entry['name']))
        tensors[entry['name']] = np.frombuffer(payload, dtype='<f4') \
            .reshape(shape).astype(np.float64)
        offset += 4 * count
    if offset != len(raw):
        raise BadFormat("trailing bytes after tensor data")
    logger.debug("read %d tensors from checkpoint: %s", len(tensors), path)
    return manifest, tensors
