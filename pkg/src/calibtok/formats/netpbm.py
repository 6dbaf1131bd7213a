"""
Readers and writers for binary PPM (P6), PGM (P5) and PFM (Pf) files.
"""
__all__ = ['quantize', 'read_image', 'write_image', 'read_mask',
           'write_mask', 'read_pfm', 'write_pfm', 'mask_path']

from typing import List, Optional, Tuple
import logging
import os
import pathlib

import numpy as np

from ..core import DepthMap, ImageBuffer
from ..exceptions import BadFormat, IOFailure

logger = logging.getLogger(__name__)  # type: logging.Logger

MAXVAL = 255


def quantize(data: np.ndarray) -> np.ndarray:
    """
    Rounds unit-range intensities to the nearest 8-bit level, so that they
    survive a round trip through a PPM/PGM file unchanged.
    """
    levels = np.round(np.clip(data, 0.0, 1.0) * MAXVAL)
    return (levels / float(MAXVAL)).astype(np.float32)


def mask_path(path) -> pathlib.Path:
    """
    The sibling PGM that stores the validity mask of a depth map.
    """
    path = pathlib.Path(path)
    return path.with_name(path.stem + '.mask.pgm')


def _read_bytes(path) -> bytes:
    try:
        with open(path, 'rb') as f:
            return f.read()
    except OSError as err:
        logger.error("failed to read file: %s", path)
        raise IOFailure(str(path), err.strerror or str(err))


def _write_bytes(path, payload: bytes) -> None:
    try:
        directory = os.path.dirname(str(path))
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'wb') as f:
            f.write(payload)
    except OSError as err:
        logger.error("failed to write file: %s", path)
        raise IOFailure(str(path), err.strerror or str(err))


def _header(raw: bytes, count: int) -> Tuple[List[bytes], int]:
    """
    Reads `count` whitespace-separated header fields, skipping comments, and
    returns them with the offset of the first raster byte.
    """
    fields = []  # type: List[bytes]
    pos = 0
    while len(fields) < count:
        if pos >= len(raw):
            raise BadFormat("truncated header")
        c = raw[pos:pos + 1]
        if c == b'#':
            while pos < len(raw) and raw[pos:pos + 1] not in (b'\n', b'\r'):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(raw) and not raw[pos:pos + 1].isspace():
                pos += 1
            fields.append(raw[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return fields, pos + 1


def _decode_pnm(raw: bytes) -> np.ndarray:
    fields, offset = _header(raw, 4)
    magic = fields[0]
    if magic not in (b'P5', b'P6'):
        raise BadFormat("unsupported netpbm magic: {!r}".format(magic))
    try:
        width, height, maxval = (int(v) for v in fields[1:])
    except ValueError:
        raise BadFormat("non-integer netpbm header field")
    if not 0 < maxval < 65536:
        raise BadFormat("illegal maxval: {}".format(maxval))
    channels = 3 if magic == b'P6' else 1
    dtype = np.dtype('u1') if maxval < 256 else np.dtype('>u2')
    expected = width * height * channels * dtype.itemsize
    payload = raw[offset:offset + expected]
    if len(payload) != expected:
        raise BadFormat("raster holds {} bytes; expected {}".format(
            len(payload), expected))
    raster = np.frombuffer(payload, dtype=dtype)
    return raster.reshape(height, width, channels).astype(np.float64) \
        / float(maxval)


def read_image(path) -> ImageBuffer:
    """
    Reads a binary PPM (three channels) or PGM (one channel) file.

    Raises:
        IOFailure: if the file cannot be read.
        BadFormat: if the file is not a binary PPM/PGM.
    """
    logger.debug("reading image: %s", path)
    data = _decode_pnm(_read_bytes(path))
    return ImageBuffer(data.astype(np.float32))


def _encode_pnm(data: np.ndarray) -> bytes:
    height, width, channels = data.shape
    magic = b'P6' if channels == 3 else b'P5'
    levels = np.round(np.clip(data, 0.0, 1.0) * MAXVAL).astype(np.uint8)
    header = b'%s\n%d %d\n%d\n' % (magic, width, height, MAXVAL)
    return header + levels.tobytes()


def write_image(path, img: ImageBuffer) -> None:
    """
    Writes an image as binary PPM (three channels) or PGM (one channel).
    """
    logger.debug("writing image: %s", path)
    _write_bytes(path, _encode_pnm(img.data))


def write_mask(path, mask: np.ndarray) -> None:
    """
    Writes a validity mask as PGM, where 255 denotes a valid pixel.
    """
    data = np.asarray(mask, dtype=np.float64)[:, :, None]
    _write_bytes(path, _encode_pnm(data))


def read_mask(path) -> np.ndarray:
    data = _decode_pnm(_read_bytes(path))
    if data.shape[2] != 1:
        raise BadFormat("mask must be a single-channel PGM")
    return data[:, :, 0] >= 0.5


def read_pfm(path, mask: Optional[np.ndarray] = None) -> DepthMap:
    """
    Reads a single-channel PFM file. The validity mask is taken from the
    sibling mask PGM if present, otherwise from the given mask, otherwise
    every positive finite value is considered valid.

    Raises:
        IOFailure: if the file cannot be read.
        BadFormat: if the file is not a single-channel PFM.
    """
    logger.debug("reading depth map: %s", path)
    raw = _read_bytes(path)
    fields, offset = _header(raw, 4)
    if fields[0] != b'Pf':
        raise BadFormat("expected a single-channel PFM ('Pf')")
    try:
        width, height = int(fields[1]), int(fields[2])
        scale = float(fields[3])
    except ValueError:
        raise BadFormat("malformed PFM header")
    dtype = np.dtype('<f4') if scale < 0 else np.dtype('>f4')
    expected = width * height * 4
    payload = raw[offset:offset + expected]
    if len(payload) != expected:
        raise BadFormat("PFM raster is truncated")
    # rows are stored bottom-up
    depth = np.flipud(np.frombuffer(payload, dtype=dtype)
                      .reshape(height, width)).astype(np.float64)

    sibling = mask_path(path)
    if sibling.is_file():
        mask = read_mask(sibling)
    elif mask is None:
        mask = np.isfinite(depth) & (depth > 0.0)
    return DepthMap(np.where(mask, depth, 0.0), mask)


def write_pfm(path, d: DepthMap, *, with_mask: bool = True) -> None:
    """
    Writes a depth map as little-endian PFM, plus its validity mask as a
    sibling PGM.
    """
    logger.debug("writing depth map: %s", path)
    header = b'Pf\n%d %d\n-1.0\n' % (d.width, d.height)
    raster = np.flipud(np.where(d.mask, d.depth, 0.0)).astype('<f4')
    _write_bytes(path, header + raster.tobytes())
    if with_mask:
        write_mask(mask_path(path), d.mask)
