import pytest

from calibtok.config import Configuration
from calibtok.datagen import SceneSpec
from calibtok.exceptions import BadConfigFile, BadFormat, IllegalConfig
from calibtok.model import ModelConfig, TokenMode
from calibtok.training import LossFrame, Supervision
from calibtok.warnings import UnknownConfigKeyWarning


def test_system_configuration():
    config = Configuration.system()
    assert set(config.sections) >= {'model', 'sampling', 'scenes',
                                     'pretraining', 'adaptation',
                                     'finetuning', 'evaluation'}

    adaptation = config.training('adaptation')
    assert adaptation.lr == 1e-4
    assert adaptation.iterations == 2000
    assert adaptation.batch_size == 4
    assert adaptation.mode is TokenMode.LAYERWISE
    assert adaptation.tokens_per_layer == 8
    assert adaptation.loss.frame is LossFrame.PERSPECTIVE
    assert adaptation.loss.supervision is Supervision.PSEUDO
    assert adaptation.model == ModelConfig()

    assert config.training('finetuning').lr == 1e-6
    assert config.training('pretraining').lr == 1e-3

    spec, counts = config.scenes()
    assert spec == SceneSpec()
    assert counts == {'n_train': 512, 'n_val': 64, 'n_test': 64}

    template = config.template(64, 64)
    assert template.theta_max_range == (1.05, 1.66)
    assert config.evaluation()['seed_base'] == 1000000


def test_user_configuration_overlays_sections(tmp_path):
    path = tmp_path / 'user.yml'
    path.write_text("version: '1.0'\n"
                    "adaptation:\n"
                    "  mode: single\n"
                    "  iterations: 10\n"
                    "model:\n"
                    "  layers: 2\n")
    config = Configuration.from_file(str(path))
    adaptation = config.training('adaptation')
    assert adaptation.mode is TokenMode.SINGLE
    assert adaptation.iterations == 10
    assert adaptation.lr == 1e-4
    assert adaptation.model.layers == 2
    assert adaptation.model.embed_dim == 64


def test_unknown_sections_warn(tmp_path):
    path = tmp_path / 'user.yml'
    path.write_text("plots:\n  dpi: 300\n")
    with pytest.warns(UnknownConfigKeyWarning):
        Configuration.from_file(str(path))


def test_bad_configuration_files(tmp_path):
    with pytest.raises(BadConfigFile):
        Configuration.from_file(str(tmp_path / 'missing.yml'))

    path = tmp_path / 'bad.yml'
    path.write_text("version: '2.0'\n")
    with pytest.raises(BadConfigFile):
        Configuration.from_file(str(path))

    path.write_text("adaptation: [1, 2]\n")
    with pytest.raises(BadConfigFile):
        Configuration.from_file(str(path))

    path.write_text("adaptation: {mode: [\n")
    with pytest.raises(BadConfigFile):
        Configuration.from_file(str(path))

    path.write_text("- a list\n")
    with pytest.raises(BadConfigFile):
        Configuration.from_file(str(path))


def test_flat_training_config(tmp_path):
    path = tmp_path / 'train.json'
    path.write_text('{"seed": 3, "iterations": 5, "lr": 0.01, '
                    '"loss": "l1", "frame": "fisheye", '
                    '"model": {"layers": 2}}')
    cfg = Configuration.system().load_training(str(path), 'adaptation')
    assert cfg.seed == 3
    assert cfg.iterations == 5
    assert cfg.lr == 0.01
    assert cfg.loss.frame is LossFrame.FISHEYE
    assert cfg.model.layers == 2
    assert cfg.tokens_per_layer == 8


def test_illegal_training_values(tmp_path):
    path = tmp_path / 'train.json'
    path.write_text('{"mode": "sideways"}')
    with pytest.raises(IllegalConfig):
        Configuration.system().load_training(str(path), 'adaptation')

    path.write_text('{"model": {"depth": 3}}')
    with pytest.raises(BadFormat):
        Configuration.system().load_training(str(path), 'adaptation')


def test_scene_spec_file(tmp_path):
    path = tmp_path / 'scenes.yml'
    path.write_text("seed: 7\nn_train: 4\nn_val: 2\nn_test: 2\n"
                    "colour: red\n")
    with pytest.warns(UnknownConfigKeyWarning):
        spec, counts = Configuration.system().load_scenes(str(path))
    assert spec.seed == 7
    assert spec.depth_range == (1.0, 10.0)
    assert counts == {'n_train': 4, 'n_val': 2, 'n_test': 2}

    path.write_text("depth_range: [3, 1]\n")
    with pytest.raises(IllegalConfig):
        Configuration.system().load_scenes(str(path))
