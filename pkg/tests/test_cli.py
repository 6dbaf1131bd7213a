import hashlib
import json
import os

import numpy as np
import pytest

from calibtok.cli import main
from calibtok.core import FisheyeCalibration, ImageBuffer, PinholeIntrinsics
from calibtok.datagen import SceneSpec, generate_scene
from calibtok.exceptions import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC
from calibtok.formats import read_image, read_mask, read_pfm, write_image, \
                             write_pfm
from calibtok.model import ModelWeights, TokenMode, TokenSet
from calibtok.warnings import TokenModeWarning

SCENES = """\
seed: 2
objects: [1, 3]
pinhole: {fx: 4.0, fy: 4.0, cx: 7.5, cy: 7.5, width: 16, height: 16}
n_train: 3
n_val: 1
n_test: 2
"""

SETTINGS = """\
version: '1.0'
model: {image_size: 16, patch_size: 4, layers: 2, embed_dim: 8, heads: 2,
        mlp_ratio: 2}
pretraining: {iterations: 2, batch_size: 1}
adaptation: {iterations: 2, batch_size: 1, tokens_per_layer: 2,
             lr: 0.001}
finetuning: {iterations: 1, batch_size: 1}
evaluation: {scenes: 2}
"""

PINHOLE = PinholeIntrinsics.centered(16, 16, 4.0)


def run(capsys, *argv) -> dict:
    assert main(['--log-level', 'none'] + [str(a) for a in argv]) == 0
    out = capsys.readouterr().out
    return dict(line.split('=', 1) for line in out.splitlines())


@pytest.fixture
def workspace(tmp_path, capsys):
    (tmp_path / 'scenes.yml').write_text(SCENES)
    (tmp_path / 'settings.yml').write_text(SETTINGS)
    run(capsys, '--settings', tmp_path / 'settings.yml',
        'synth', '--spec', tmp_path / 'scenes.yml', '--out', tmp_path / 'data')
    return tmp_path


@pytest.fixture
def cameras(tmp_path):
    fe = FisheyeCalibration((1.0, -0.1, 0.0, 0.0), 7.5, 7.5, 6.0, 1.4,
                            16, 16)
    (tmp_path / 'pin.json').write_text(json.dumps(PINHOLE.to_dict()))
    (tmp_path / 'fe.json').write_text(json.dumps(fe.to_dict()))
    image, depth = generate_scene(SceneSpec(pinhole=PINHOLE), 0)
    write_image(tmp_path / 'rgb.ppm', image)
    write_pfm(tmp_path / 'depth.pfm', depth)
    return tmp_path


def test_version():
    with pytest.raises(SystemExit) as info:
        main(['--version'])
    assert info.value.code == 0


def test_bad_arguments():
    with pytest.raises(SystemExit) as info:
        main(['--log-level', 'verbose', 'synth'])
    assert info.value.code == 2


def test_synth(tmp_path, capsys):
    (tmp_path / 'scenes.yml').write_text(SCENES)
    values = run(capsys, 'synth', '--spec', tmp_path / 'scenes.yml',
                 '--out', tmp_path / 'data')
    assert values['scenes'] == '6'
    assert values['manifest'] == str(tmp_path / 'data' / 'manifest.json')
    manifest = json.loads((tmp_path / 'data' / 'manifest.json').read_text())
    assert manifest['intrinsics'] == PINHOLE.to_dict()


def test_synth_missing_spec(tmp_path):
    code = main(['--log-level', 'none', 'synth',
                 '--spec', str(tmp_path / 'missing.yml'),
                 '--out', str(tmp_path / 'data')])
    assert code == EXIT_CONFIG


def test_distort_and_undistort(cameras, capsys):
    values = run(capsys, 'distort', '--image', cameras / 'rgb.ppm',
                 '--pin', cameras / 'pin.json', '--fe', cameras / 'fe.json',
                 '--depth', cameras / 'depth.pfm',
                 '--out', cameras / 'fe.ppm')
    assert 0.0 <= float(values['coverage_loss']) < 1.0
    assert read_image(cameras / 'fe.ppm').shape == (16, 16)
    assert read_mask(cameras / 'fe.valid.pgm').any()
    assert read_pfm(cameras / 'fe.pfm').shape == (16, 16)

    values = run(capsys, 'undistort', '--image', cameras / 'fe.ppm',
                 '--pin', cameras / 'pin.json', '--fe', cameras / 'fe.json',
                 '--interpolation', 'nearest',
                 '--out', cameras / 'back.ppm')
    assert 'coverage_loss' in values
    assert (cameras / 'back.valid.pgm').is_file()
    assert not (cameras / 'back.pfm').exists()


def test_warp_errors(cameras, capsys):
    args = ['--log-level', 'none', 'distort',
            '--pin', str(cameras / 'pin.json'),
            '--out', str(cameras / 'fe.ppm')]
    missing = main(args + ['--image', str(cameras / 'missing.ppm'),
                           '--fe', str(cameras / 'fe.json')])
    assert missing == EXIT_IO

    bad = FisheyeCalibration((1.0, -1.0, 0.0, 0.0), 7.5, 7.5, 6.0, 1.2,
                             16, 16)
    (cameras / 'bad.json').write_text(json.dumps(bad.to_dict()))
    code = main(args + ['--image', str(cameras / 'rgb.ppm'),
                        '--fe', str(cameras / 'bad.json')])
    assert code == EXIT_NUMERIC
    assert capsys.readouterr().out == ''


def test_near_pinhole_distortion_covers_the_frame(cameras, capsys):
    pin = PinholeIntrinsics.centered(16, 16, 100.0)
    fe = FisheyeCalibration((1.0, 0.0, 0.0, 0.0), 7.5, 7.5, 101.0, 1.0,
                            16, 16)
    (cameras / 'narrow_pin.json').write_text(json.dumps(pin.to_dict()))
    (cameras / 'narrow_fe.json').write_text(json.dumps(fe.to_dict()))
    values = run(capsys, 'distort', '--image', cameras / 'rgb.ppm',
                 '--pin', cameras / 'narrow_pin.json',
                 '--fe', cameras / 'narrow_fe.json',
                 '--out', cameras / 'narrow.ppm')
    assert float(values['coverage_loss']) < 0.01


def test_undistort_ignores_pixels_outside_the_mask(cameras, capsys):
    cams = ['--pin', cameras / 'pin.json', '--fe', cameras / 'fe.json']
    run(capsys, 'distort', '--image', cameras / 'rgb.ppm', *cams,
        '--out', cameras / 'fe.ppm')
    mask = read_mask(cameras / 'fe.valid.pgm')
    assert not mask.all()
    fisheye = read_image(cameras / 'fe.ppm')
    poisoned = np.where(mask[..., None], fisheye.data, 1.0)
    write_image(cameras / 'poisoned.ppm', ImageBuffer(poisoned))

    run(capsys, 'undistort', '--image', cameras / 'fe.ppm', *cams,
        '--out', cameras / 'clean_back.ppm')
    run(capsys, 'undistort', '--image', cameras / 'poisoned.ppm', *cams,
        '--mask', cameras / 'fe.valid.pgm',
        '--out', cameras / 'poisoned_back.ppm')
    for suffix in ('back.ppm', 'back.valid.pgm'):
        clean = (cameras / ('clean_' + suffix)).read_bytes()
        assert (cameras / ('poisoned_' + suffix)).read_bytes() == clean


def test_training_pipeline(workspace, capsys):
    settings = ['--settings', workspace / 'settings.yml']
    data = workspace / 'data'

    values = run(capsys, *settings, 'pretrain', '--data', data,
                 '--out', workspace / 'model.ctok')
    model = ModelWeights.load(workspace / 'model.ctok')
    assert values['checksum'] == model.checksum()
    assert float(values['val_rmse']) > 0.0
    assert (workspace / 'model.loss.csv').is_file()
    assert (workspace / 'model.val.json').is_file()

    (workspace / 'adapt.json').write_text('{"mode": "single", "seed": 4}')
    values = run(capsys, *settings, 'adapt',
                 '--model', workspace / 'model.ctok', '--data', data,
                 '--config', workspace / 'adapt.json',
                 '--out', workspace / 'tokens.ctok')
    assert values['backbone_checksum'] == model.checksum()
    tokens = TokenSet.load(workspace / 'tokens.ctok')
    assert tokens.mode is TokenMode.SINGLE
    assert tokens.tokens.shape == (2, 2, 8)

    values = run(capsys, *settings, 'finetune',
                 '--model', workspace / 'model.ctok', '--data', data,
                 '--out', workspace / 'tuned.ctok')
    assert values['checksum'] != model.checksum()

    values = run(capsys, *settings, 'eval',
                 '--model', workspace / 'model.ctok',
                 '--tokens', workspace / 'tokens.ctok', '--data', data,
                 '--mode', 'fisheye', '--out', workspace / 'report.json')
    report = json.loads((workspace / 'report.json').read_text())
    assert report['mode'] == 'fisheye'
    assert len(report['per_image']) == 2
    assert int(values['n_pixels']) == report['n_pixels']
    assert (workspace / 'report.csv').is_file()
    assert len(os.listdir(str(workspace / 'report_errors'))) == 2

    with pytest.warns(TokenModeWarning):
        values = run(capsys, *settings, 'eval',
                     '--model', workspace / 'model.ctok',
                     '--tokens', workspace / 'tokens.ctok', '--data', data,
                     '--scenes', 1, '--out', workspace / 'plain.json')
    assert values['n_pixels'] == str(16 * 16)

    code = main(['--log-level', 'none', '--settings',
                 str(workspace / 'settings.yml'), 'eval',
                 '--model', str(workspace / 'model.ctok'),
                 '--data', str(data), '--scenes', '0',
                 '--out', str(workspace / 'empty.json')])
    assert code == EXIT_CONFIG


def test_exports(workspace, capsys):
    settings = ['--settings', workspace / 'settings.yml']
    run(capsys, *settings, 'pretrain', '--data', workspace / 'data',
        '--out', workspace / 'model.ctok')
    run(capsys, *settings, 'adapt', '--model', workspace / 'model.ctok',
        '--data', workspace / 'data', '--out', workspace / 'tokens.ctok')
    image = workspace / 'data' / 'scenes' / 'test' / '000004.ppm'

    values = run(capsys, 'export-attn', '--model', workspace / 'model.ctok',
                 '--tokens', workspace / 'tokens.ctok', '--image', image,
                 '--out', workspace / 'attn')
    assert values['layers'] == '2'
    sidecar = json.loads((workspace / 'attn' / 'attention.json').read_text())
    assert sidecar['mode'] == 'layerwise'
    assert [entry['layer'] for entry in sidecar['layers']] == [0, 1]
    assert (workspace / 'attn' / 'layer_01.pgm').is_file()

    (workspace / 'adapt.json').write_text('{"mode": "single"}')
    run(capsys, *settings, 'adapt', '--model', workspace / 'model.ctok',
        '--data', workspace / 'data', '--config', workspace / 'adapt.json',
        '--out', workspace / 'single.ctok')
    run(capsys, 'export-attn', '--model', workspace / 'model.ctok',
        '--tokens', workspace / 'single.ctok', '--image', image,
        '--out', workspace / 'single_attn')
    # past the first layer single-mode tokens carry the encoder state
    digests = {hashlib.sha256((workspace / d / 'layer_01.pgm').read_bytes())
               .hexdigest() for d in ('attn', 'single_attn')}
    assert len(digests) == 2

    values = run(capsys, 'export-embeddings',
                 '--model', workspace / 'model.ctok', '--image', image,
                 '--out', workspace / 'embeddings.csv')
    assert values['rows'] == '16'
    lines = (workspace / 'embeddings.csv').read_text().splitlines()
    assert lines[0].split(',')[:3] == ['patch', 'e0', 'e1']
    assert len(lines) == 17


def test_missing_checkpoint(workspace):
    code = main(['--log-level', 'none', 'eval',
                 '--model', str(workspace / 'missing.ctok'),
                 '--data', str(workspace / 'data'),
                 '--out', str(workspace / 'report.json')])
    assert code == EXIT_IO
