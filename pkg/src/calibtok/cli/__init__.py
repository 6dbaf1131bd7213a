"""
The `calibtok` command-line interface. Human-readable progress is logged to
standard error; standard output carries only `key=value` lines.
"""
from typing import Any, Callable, List, Optional, Sequence
from functools import wraps
import argparse
import logging
import logging.handlers
import os
import pathlib
import sys
import warnings

import numpy as np

from ..config import Configuration
from ..core import FisheyeCalibration, ImageBuffer, PinholeIntrinsics
from ..datagen import SceneDataset, generate_split
from ..exceptions import CalibTokException, IllegalConfig, EXIT_UNEXPECTED
from ..formats import read_image, read_json, read_mask, read_pfm, \
                      write_csv, write_image, write_json, write_mask, \
                      write_pfm
from ..metrics import held_out_seeds, evaluate
from ..model import ModelWeights, TokenSet, export_embeddings, forward
from ..remap import WarpDirection, apply_warp, apply_warp_depth, \
                    build_warp_field, coverage_loss
from ..training import finetune_fmde, pretrain_fmde, train_tokens
from ..version import __version__
from ..warnings import TokenModeWarning

__all__ = ['main']

logger = logging.getLogger(__name__)  # type: logging.Logger

LOG_LEVELS = {
    'none': logging.NOTSET,
    'error': logging.ERROR,
    'warning': logging.WARNING,
    'debug': logging.DEBUG,
    'info': logging.INFO,
    'critical': logging.CRITICAL
}

_handlers = []  # type: List[logging.Handler]


def _emit(**values: Any) -> None:
    for key, value in values.items():
        print("{}={}".format(key, value), file=sys.stdout)


def _sibling(path: str, suffix: str) -> str:
    p = pathlib.Path(path)
    return str(p.with_name(p.stem + suffix))


def throws_errors(func: Callable[..., None]) -> Callable[..., int]:
    """
    Wraps the implementation of a subcommand such that any errors that are
    thrown are logged and transformed into the matching exit code.
    """
    @wraps(func)
    def wrapper(*args, **kwargs) -> int:
        try:
            func(*args, **kwargs)
        except CalibTokException as err:
            logger.error("%s: %s", err.__class__.__name__, err.message)
            return err.exit_code
        except Exception as err:
            logger.exception("encountered an unexpected error: %s", err)
            return EXIT_UNEXPECTED
        return 0
    return wrapper


def _configure_logging(level: str, filename: Optional[str]) -> None:
    log_main = logging.getLogger('calibtok')  # type: logging.Logger
    for handler in _handlers:
        log_main.removeHandler(handler)
        handler.close()
    del _handlers[:]
    if level == 'none':
        return

    log_formatter = \
        logging.Formatter('%(asctime)s:%(name)s:%(levelname)s: %(message)s',
                          '%Y-%m-%d %H:%M:%S')
    level_num = LOG_LEVELS[level]
    log_to_stderr = logging.StreamHandler(sys.stderr)
    log_to_stderr.setLevel(level_num)
    log_to_stderr.setFormatter(log_formatter)
    _handlers.append(log_to_stderr)
    if filename:
        log_to_file = logging.handlers.WatchedFileHandler(filename, mode='w')
        log_to_file.setLevel(level_num)
        log_to_file.setFormatter(log_formatter)
        _handlers.append(log_to_file)
    log_main.setLevel(level_num)
    for handler in _handlers:
        log_main.addHandler(handler)


def _configuration(args: argparse.Namespace) -> Configuration:
    if args.settings:
        return Configuration.from_file(args.settings)
    return Configuration.system()


def _cameras(args: argparse.Namespace):
    pin = PinholeIntrinsics.from_dict(read_json(args.pin))
    fe = FisheyeCalibration.from_dict(read_json(args.fe))
    return pin, fe


def _source_image(args: argparse.Namespace) -> ImageBuffer:
    image = read_image(args.image)
    path = args.mask or _sibling(args.image, '.valid.pgm')
    if args.mask or os.path.isfile(path):
        logger.debug("reading validity mask: %s", path)
        image = ImageBuffer(image.data, read_mask(path))
    return image


def _warp_files(args: argparse.Namespace, direction: WarpDirection) -> None:
    pin, fe = _cameras(args)
    field = build_warp_field(direction, pin, fe)
    image, ok = apply_warp(_source_image(args), field, args.interpolation)
    write_image(args.out, image)
    write_mask(_sibling(args.out, '.valid.pgm'), ok)
    if args.depth:
        depth = apply_warp_depth(read_pfm(args.depth), field)
        write_pfm(args.depth_out or _sibling(args.out, '.pfm'), depth)
    logger.info("wrote %s image: %s", direction.value, args.out)
    _emit(coverage_loss=repr(coverage_loss(field)))


@throws_errors
def cmd_synth(args: argparse.Namespace) -> None:
    spec, counts = _configuration(args).load_scenes(args.spec)
    manifest = generate_split(spec, counts['n_train'], counts['n_val'],
                              counts['n_test'], args.out)
    _emit(scenes=sum(len(v) for v in manifest['splits'].values()),
          manifest=os.path.join(args.out, 'manifest.json'))


@throws_errors
def cmd_distort(args: argparse.Namespace) -> None:
    _warp_files(args, WarpDirection.TO_FISHEYE)


@throws_errors
def cmd_undistort(args: argparse.Namespace) -> None:
    _warp_files(args, WarpDirection.TO_PERSPECTIVE)


def _training_config(args: argparse.Namespace, section: str):
    config = _configuration(args)
    if args.config:
        return config.load_training(args.config, section)
    return config.training(section)


@throws_errors
def cmd_pretrain(args: argparse.Namespace) -> None:
    cfg = _training_config(args, 'pretraining')
    train = SceneDataset.load(args.data, 'train')
    validation = SceneDataset.load(args.data, 'val')
    model, log = pretrain_fmde(train, cfg, cfg.seed, validation)
    model.save(args.out)
    log.save(_sibling(args.out, '.loss.csv'))
    log.report.save(_sibling(args.out, '.val.json'))
    _emit(checksum=model.checksum(),
          final_loss=repr(log.losses[-1]) if log.losses else 'nan',
          val_rmse=repr(log.report.rmse))


@throws_errors
def cmd_adapt(args: argparse.Namespace) -> None:
    cfg = _training_config(args, 'adaptation')
    model = ModelWeights.load(args.model)
    train = SceneDataset.load(args.data, 'train')
    validation = SceneDataset.load(args.data, 'val')
    tokens, log = train_tokens(model, train, cfg, cfg.seed, validation)
    tokens.save(args.out)
    log.save(_sibling(args.out, '.loss.csv'))
    log.report.save(_sibling(args.out, '.val.json'))
    _emit(backbone_checksum=model.checksum(),
          final_loss=repr(log.losses[-1]) if log.losses else 'nan',
          val_rmse=repr(log.report.rmse))


@throws_errors
def cmd_finetune(args: argparse.Namespace) -> None:
    cfg = _training_config(args, 'finetuning')
    model = ModelWeights.load(args.model)
    train = SceneDataset.load(args.data, 'train')
    validation = SceneDataset.load(args.data, 'val')
    tuned, log = finetune_fmde(model, train, cfg, cfg.seed, validation)
    tuned.save(args.out)
    log.save(_sibling(args.out, '.loss.csv'))
    log.report.save(_sibling(args.out, '.val.json'))
    _emit(checksum=tuned.checksum(),
          final_loss=repr(log.losses[-1]) if log.losses else 'nan',
          val_rmse=repr(log.report.rmse))


def _normalised(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


@throws_errors
def cmd_eval(args: argparse.Namespace) -> None:
    config = _configuration(args)
    settings = config.evaluation()
    model = ModelWeights.load(args.model)
    tokens = TokenSet.load(args.tokens) if args.tokens else None
    dataset = SceneDataset.load(args.data, args.split)
    if args.scenes is None:
        count = int(settings.get('scenes', len(dataset)))
    else:
        count = args.scenes
    if count < 1:
        raise IllegalConfig("evaluation must cover at least one scene.")
    dataset = dataset.take(count)

    seeds = None
    if args.mode == 'fisheye':
        seeds = held_out_seeds(len(dataset),
                               int(settings.get('seed_base', 1000000)))
    elif tokens is not None:
        warnings.warn("perspective evaluation ignores calibration tokens",
                      TokenModeWarning)
        tokens = None
    score_frame = args.score_frame or settings.get('score_frame', 'perspective')  # noqa: pycodestyle
    pin = dataset.pinhole
    report = evaluate(model, tokens, dataset, seeds, score_frame,
                      template=config.template(pin.width, pin.height))
    report.save(args.out)
    report.save_csv(_sibling(args.out, '.csv'))
    error_dir = _sibling(args.out, '_errors')
    for score in report.per_image:
        path = os.path.join(error_dir, '{:06d}.pgm'.format(score.index))
        write_mask(path, _normalised(score.error_map))
    _emit(rmse=repr(report.rmse),
          delta1=repr(report.delta1),
          n_pixels=report.n_pixels)


@throws_errors
def cmd_export_attn(args: argparse.Namespace) -> None:
    model = ModelWeights.load(args.model)
    tokens = TokenSet.load(args.tokens)
    _, record = forward(model, read_image(args.image), tokens,
                        record_attention=True)
    ranges = []
    for layer in range(record.layers):
        values = record.token_to_patch[layer]
        write_mask(os.path.join(args.out, 'layer_{:02d}.pgm'.format(layer)),
                   _normalised(values))
        ranges.append({'layer': layer,
                       'min': float(values.min()),
                       'max': float(values.max())})
    write_json(os.path.join(args.out, 'attention.json'),
               {'mode': tokens.mode.value, 'layers': ranges})
    _emit(layers=record.layers)


@throws_errors
def cmd_export_embeddings(args: argparse.Namespace) -> None:
    model = ModelWeights.load(args.model)
    tokens = TokenSet.load(args.tokens) if args.tokens else None
    embeddings = export_embeddings(model, read_image(args.image), tokens)
    header = ['patch'] + ['e{}'.format(i) for i in range(embeddings.shape[1])]
    write_csv(args.out, header,
              ([i] + [float(v) for v in row]
               for i, row in enumerate(embeddings)))
    _emit(rows=embeddings.shape[0])


def _warp_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--image', required=True,
                        help='the input image (PPM or PGM).')
    parser.add_argument('--pin', required=True,
                        help='the pinhole intrinsics (JSON).')
    parser.add_argument('--fe', required=True,
                        help='the fisheye calibration (JSON).')
    parser.add_argument('--mask',
                        help='the validity mask of the input image (PGM) '
                             '[default: <image>.valid.pgm if it exists].')
    parser.add_argument('--out', required=True,
                        help='the output image.')
    parser.add_argument('--depth',
                        help='an optional depth map (PFM) to warp as well.')
    parser.add_argument('--depth-out',
                        help='the output depth map [default: next to --out].')  # noqa: pycodestyle
    parser.add_argument('--interpolation',
                        choices=['bilinear', 'nearest'],
                        default='bilinear')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='calibtok',
                                     description='calibration tokens for fisheye depth estimation')  # noqa: pycodestyle
    parser.add_argument('--version', action='version', version=__version__)
    parser.add_argument('--log-level',
                        type=str,
                        choices=['none',
                                 'info',
                                 'error',
                                 'warning',
                                 'debug',
                                 'critical'],
                        default='info')
    parser.add_argument('--log-file',
                        type=str,
                        help='the path to the file where logs should be written.')  # noqa: pycodestyle
    parser.add_argument('--settings',
                        type=str,
                        help='a user configuration file overlaid on the defaults.')  # noqa: pycodestyle
    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True

    p = subparsers.add_parser('synth', help='generate a dataset of scenes.')
    p.add_argument('--spec', required=True)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_synth)

    p = subparsers.add_parser('distort',
                              help='warp a perspective image to a fisheye frame.')  # noqa: pycodestyle
    _warp_arguments(p)
    p.set_defaults(func=cmd_distort)

    p = subparsers.add_parser('undistort',
                              help='warp a fisheye image to a perspective frame.')  # noqa: pycodestyle
    _warp_arguments(p)
    p.set_defaults(func=cmd_undistort)

    p = subparsers.add_parser('pretrain', help='pretrain the depth estimator.')
    p.add_argument('--data', required=True)
    p.add_argument('--config')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_pretrain)

    for name, func, desc in (('adapt', cmd_adapt, 'train calibration tokens.'),
                             ('finetune', cmd_finetune,
                              'fine-tune the depth estimator on fisheye views.')):  # noqa: pycodestyle
        p = subparsers.add_parser(name, help=desc)
        p.add_argument('--model', required=True)
        p.add_argument('--data', required=True)
        p.add_argument('--config')
        p.add_argument('--out', required=True)
        p.set_defaults(func=func)

    p = subparsers.add_parser('eval', help='evaluate depth accuracy.')
    p.add_argument('--model', required=True)
    p.add_argument('--tokens')
    p.add_argument('--data', required=True)
    p.add_argument('--split', default='test', choices=['train', 'val', 'test'])  # noqa: pycodestyle
    p.add_argument('--mode', default='perspective',
                   choices=['perspective', 'fisheye'])
    p.add_argument('--score-frame', choices=['perspective', 'fisheye'])
    p.add_argument('--scenes', type=int)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_eval)

    p = subparsers.add_parser('export-attn',
                              help='export token attention maps.')
    p.add_argument('--model', required=True)
    p.add_argument('--tokens', required=True)
    p.add_argument('--image', required=True)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_export_attn)

    p = subparsers.add_parser('export-embeddings',
                              help='export final-layer patch embeddings.')
    p.add_argument('--model', required=True)
    p.add_argument('--tokens')
    p.add_argument('--image', required=True)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_export_embeddings)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.log_level, args.log_file)
    logger.info("calibtok version: %s", __version__)
    return args.func(args)
