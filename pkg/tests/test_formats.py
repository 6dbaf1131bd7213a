import numpy as np
import pytest

from calibtok.core import DepthMap, ImageBuffer
from calibtok.exceptions import BadConfigFile, BadFormat, IOFailure
from calibtok.formats import mask_path, quantize, read_container, \
                             read_image, read_json, read_mask, read_pfm, \
                             write_container, write_csv, write_image, \
                             write_json, write_mask, write_pfm


def test_image_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    rgb = ImageBuffer(quantize(rng.uniform(size=(5, 7, 3))))
    gray = ImageBuffer(quantize(rng.uniform(size=(5, 7, 1))))

    write_image(tmp_path / 'rgb.ppm', rgb)
    write_image(tmp_path / 'gray.pgm', gray)
    assert (tmp_path / 'rgb.ppm').read_bytes().startswith(b'P6\n7 5\n255\n')
    assert (tmp_path / 'gray.pgm').read_bytes().startswith(b'P5\n7 5\n255\n')
    assert np.array_equal(read_image(tmp_path / 'rgb.ppm').data, rgb.data)
    assert np.array_equal(read_image(tmp_path / 'gray.pgm').data, gray.data)


def test_image_header_with_comment(tmp_path):
    path = tmp_path / 'comment.pgm'
    path.write_bytes(b'P5\n# written by hand\n2 1\n255\n\x00\xff')
    img = read_image(path)
    assert img.shape == (1, 2)
    assert img.data[0, :, 0].tolist() == [0.0, 1.0]


def test_bad_images(tmp_path):
    with pytest.raises(IOFailure):
        read_image(tmp_path / 'missing.ppm')

    path = tmp_path / 'bad.ppm'
    path.write_bytes(b'P3\n1 1\n255\n0 0 0\n')
    with pytest.raises(BadFormat):
        read_image(path)

    path.write_bytes(b'P6\n4 4\n255\n\x00\x00')
    with pytest.raises(BadFormat):
        read_image(path)


def test_depth_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    values = rng.uniform(1.0, 10.0, size=(6, 4)).astype(np.float32)
    mask = rng.uniform(size=(6, 4)) > 0.3
    depth = DepthMap(np.where(mask, values, 0.0), mask)

    path = tmp_path / 'depth.pfm'
    write_pfm(path, depth)
    assert mask_path(path).name == 'depth.mask.pgm'
    assert mask_path(path).is_file()
    assert np.array_equal(read_mask(mask_path(path)), mask)

    loaded = read_pfm(path)
    assert np.array_equal(loaded.mask, mask)
    assert np.array_equal(loaded.depth, depth.depth)


def test_depth_without_mask_file(tmp_path):
    depth = DepthMap(np.array([[1.0, 2.0], [3.0, 4.0]]),
                     np.array([[True, False], [True, True]]))
    path = tmp_path / 'depth.pfm'
    write_pfm(path, depth, with_mask=False)
    assert not mask_path(path).exists()
    # zeros are not positive, so they are treated as invalid
    loaded = read_pfm(path)
    assert loaded.mask.tolist() == [[True, False], [True, True]]


def test_pfm_rows_are_stored_bottom_up(tmp_path):
    depth = DepthMap(np.array([[1.0], [2.0]]))
    path = tmp_path / 'rows.pfm'
    write_pfm(path, depth, with_mask=False)
    raster = np.frombuffer(path.read_bytes()[-8:], dtype='<f4')
    assert raster.tolist() == [2.0, 1.0]


def test_container_round_trip(tmp_path):
    tensors = {'b': np.arange(6.0).reshape(2, 3),
               'a': np.array([0.1, 0.2])}
    path = tmp_path / 'x.ctok'
    write_container(path, {'kind': 'test'}, tensors)
    assert path.read_bytes()[:4] == b'CTOK'

    manifest, loaded = read_container(path)
    assert manifest['kind'] == 'test'
    assert list(loaded) == ['b', 'a']
    assert manifest['tensors'] == [{'name': 'b', 'shape': [2, 3]},
                                   {'name': 'a', 'shape': [2]}]
    assert loaded['b'].dtype == np.float64
    assert np.array_equal(loaded['b'], tensors['b'])
    assert np.array_equal(loaded['a'],
                          tensors['a'].astype(np.float32).astype(np.float64))


def test_bad_containers(tmp_path):
    path = tmp_path / 'x.ctok'
    write_container(path, {'kind': 'test'}, {'t': np.ones(4)})
    raw = path.read_bytes()

    bad = tmp_path / 'bad.ctok'
    bad.write_bytes(b'NOPE' + raw[4:])
    with pytest.raises(BadFormat):
        read_container(bad)

    bad.write_bytes(raw[:-2])
    with pytest.raises(BadFormat):
        read_container(bad)

    bad.write_bytes(raw + b'\x00')
    with pytest.raises(BadFormat):
        read_container(bad)

    bad.write_bytes(raw[:4] + b'\x02\x00' + raw[6:])
    with pytest.raises(BadFormat):
        read_container(bad)

    with pytest.raises(IOFailure):
        read_container(tmp_path / 'missing.ctok')


def test_write_csv(tmp_path):
    path = tmp_path / 'log.csv'
    write_csv(path, ('step', 'loss', 'rmse_eval'),
              [(1, 0.5, None), (2, 0.25, 1.5)])
    assert path.read_text() == 'step,loss,rmse_eval\n1,0.5,\n2,0.25,1.5\n'


def test_json(tmp_path):
    path = tmp_path / 'sub' / 'report.json'
    write_json(path, {'b': 1, 'a': [1, 2]})
    assert read_json(path) == {'a': [1, 2], 'b': 1}

    path.write_text('{not json')
    with pytest.raises(BadConfigFile):
        read_json(path)
    with pytest.raises(IOFailure):
        read_json(tmp_path / 'missing.json')


def test_write_mask(tmp_path):
    path = tmp_path / 'mask.pgm'
    mask = np.array([[True, False, True]])
    write_mask(path, mask)
    assert path.read_bytes().endswith(b'\xff\x00\xff')
    assert np.array_equal(read_mask(path), mask)
