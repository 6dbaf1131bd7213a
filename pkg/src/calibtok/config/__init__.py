from typing import Any, Dict, Optional, Tuple
import logging
import os
import warnings

import yaml

from ..core import SamplingTemplate
from ..datagen import SceneSpec
from ..exceptions import BadConfigFile, IllegalConfig
from ..training import TrainingConfig
from ..warnings import UnknownConfigKeyWarning

logger = logging.getLogger(__name__)

__all__ = ['Configuration', 'SYSTEM_CONFIG_PATH']

SYSTEM_CONFIG_PATH = os.path.join(os.path.dirname(__file__),
                                  'sys.calibtok.yml')

SECTIONS = ('model', 'sampling', 'scenes', 'pretraining', 'adaptation',
            'finetuning', 'evaluation')


def _read_yaml(filename: str) -> Any:
    logger.debug("Attempting to read contents of config file: %s", filename)
    try:
        with open(filename, 'r') as f:
            yml = yaml.safe_load(f)
    except OSError as err:
        logger.error("Failed to read config file: %s", filename)
        raise BadConfigFile("cannot read {}: {}".format(
            filename, err.strerror or err))
    except yaml.YAMLError as err:
        logger.error("Failed to parse config file: %s", filename)
        raise BadConfigFile("failed to parse {}: {}".format(filename, err))
    logger.debug("Read YAML contents of config file: %s", filename)
    return yml if yml is not None else {}


class Configuration(object):
    """
    Default settings for every pipeline, organised in sections. Each
    section is a dictionary; a user file overlays the sections of its
    parent key by key.
    """
    @staticmethod
    def system() -> 'Configuration':
        """
        Loads the configuration that ships with the package.
        """
        return Configuration.from_file(SYSTEM_CONFIG_PATH,
                                       Configuration({s: {} for s in SECTIONS}))  # noqa: pycodestyle

    @staticmethod
    def from_file(filename: str,
                  parent: Optional['Configuration'] = None
                  ) -> 'Configuration':
        """
        Loads a configuration file (YAML or JSON) on top of a given parent
        configuration, or on top of the system configuration if no parent
        is given.

        Raises:
            BadConfigFile: if the file cannot be read or is not a
                well-formed configuration.
        """
        logger.debug("Loading configuration from file: %s", filename)
        config = parent if parent else Configuration.system()
        logger.debug("Using parent configuration: %s", config)
        yml = _read_yaml(filename)
        if not isinstance(yml, dict):
            logger.error("Bad configuration file: expected a mapping.")
            raise BadConfigFile("expected a mapping at the top level of {}".format(filename))  # noqa: pycodestyle
        if 'version' in yml and yml['version'] != '1.0':
            logger.error("Bad configuration file: unsupported version.")
            raise BadConfigFile("unexpected 'version' property; only '1.0' is currently supported.")  # noqa: pycodestyle

        sections = config.sections
        for name, values in yml.items():
            if name == 'version':
                continue
            if name not in SECTIONS:
                msg = "ignoring unknown configuration section: {}".format(name)
                warnings.warn(msg, UnknownConfigKeyWarning)
                continue
            if not isinstance(values, dict):
                raise BadConfigFile("section '{}' must be a mapping".format(name))  # noqa: pycodestyle
            merged = dict(sections.get(name, {}))
            merged.update(values)
            sections[name] = merged
        logger.debug("Loaded configuration from file: %s", filename)
        return Configuration(sections)

    def __init__(self, sections: Optional[Dict[str, Dict[str, Any]]] = None) -> None:  # noqa: pycodestyle
        self.__sections = {name: dict(values)
                           for name, values in (sections or {}).items()}

    def __repr__(self) -> str:
        return "Configuration({})".format(sorted(self.__sections))

    @property
    def sections(self) -> Dict[str, Dict[str, Any]]:
        """
        A copy of the raw sections of this configuration.
        """
        return {name: dict(values) for name, values in self.__sections.items()}  # noqa: pycodestyle

    def section(self, name: str) -> Dict[str, Any]:
        return dict(self.__sections.get(name, {}))

    def training(self, name: str) -> TrainingConfig:
        """
        The training settings of a given pipeline ('pretraining',
        'adaptation' or 'finetuning'), completed by the model and sampling
        sections.
        """
        d = self.section(name)
        d.setdefault('model', self.section('model'))
        d.setdefault('sampling', self.section('sampling'))
        return TrainingConfig.from_dict(d)

    def load_training(self, filename: str, name: str) -> TrainingConfig:
        """
        Reads a flat training config file on top of the settings of a given
        pipeline.

        Raises:
            BadConfigFile: if the file cannot be read or is not a mapping.
        """
        d = _read_yaml(filename)
        if not isinstance(d, dict):
            raise BadConfigFile("expected a mapping in {}".format(filename))
        return TrainingConfig.from_dict(d, self.training(name))

    def scenes(self) -> Tuple[SceneSpec, Dict[str, int]]:
        """
        The scene spec and split sizes of dataset generation.
        """
        d = self.section('scenes')
        counts = {key: int(d.pop(key, 1))
                  for key in ('n_train', 'n_val', 'n_test')}
        return SceneSpec.from_dict(d), counts

    def load_scenes(self, filename: str) -> Tuple[SceneSpec, Dict[str, int]]:
        """
        Reads a dataset spec file on top of the scenes section.
        """
        d = _read_yaml(filename)
        if not isinstance(d, dict):
            raise BadConfigFile("expected a mapping in {}".format(filename))
        defaults = self.section('scenes')
        known = set(SceneSpec().to_dict()) | {'n_train', 'n_val', 'n_test'}  # noqa: pycodestyle
        for key in sorted(set(d) - known):
            msg = "ignoring unknown scene spec key: {}".format(key)
            warnings.warn(msg, UnknownConfigKeyWarning)
        defaults.update({k: v for k, v in d.items() if k in known})
        return Configuration({'scenes': defaults}).scenes()

    def template(self, width: int, height: int) -> SamplingTemplate:
        d = self.section('sampling')
        d['width'], d['height'] = width, height
        return SamplingTemplate.from_dict(d)

    def evaluation(self) -> Dict[str, Any]:
        d = self.section('evaluation')
        if int(d.get('scenes', 1)) < 1:
            raise IllegalConfig("evaluation must cover at least one scene.")
        return d
