"""
``wnet-dsm`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 1 internal failure, 2 usage or input error.
"""

import argparse
import csv
import sys
import time

from dataclasses import dataclass, field, asdict
from typing import Dict, List, NamedTuple

import logbook

from logbook import Logger, DEBUG, INFO
from path import Path
from pyqtgraph.parametertree import Parameter

from . import preferences
from .errors import USAGE_ERRORS, ParameterError
from .experiment import compare
from .log import ConsoleHandler
from .metrics import ProfileLine, evaluate, extract_profile, format_table
from .mixins import MainMixin, ComponentMixin
from .preview import write_preview
from .raster_core import load_raster, write_raster
from .synthgen import SceneSpec, DegradationSpec, build_dataset
from .trainer import TRAIN_LOG, TrainConfig, train, resume, infer
from .utils import atomic_write_json, describe_version, parse_floats

NAME = 'wnet-dsm'
RUN_MANIFEST = 'run.json'

logger = Logger(NAME)


@dataclass
class RunManifest:

    command: str
    argv: List[str]
    config: Dict = field(default_factory=dict)
    seed: int = 0
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    version: str = ''
    duration_s: float = 0.0

    def write(self, path):

        return atomic_write_json(path, asdict(self))


# pipeline operations


def cmd_synth(out_dir, count, scene_spec: SceneSpec, degradation: DegradationSpec,
              rendering=None, seed=0, previews=False):

    if count < 0:
        raise ParameterError(f'count must be non-negative, got {count}')

    out_dir = Path(out_dir)

    def write_previews(scene_id, scene, rasters):

        for name in ('gt', 'stereo'):
            write_preview(rasters[name], out_dir / 'scenes' / scene_id / f'{name}.png')

    return build_dataset(out_dir, count, scene_spec, degradation, seed=seed,
                         on_scene=write_previews if previews else None,
                         **(rendering or {}))


def cmd_train(config: TrainConfig, dataset, out_dir, resume_from=None):

    if not Path(dataset).exists():
        raise FileNotFoundError(f'Dataset {dataset} not found')

    state = resume(resume_from, config) if resume_from else None

    return train(config, dataset, out_dir, state)


def cmd_infer(checkpoint, dsm_path, pan_path, out_path, preview=True):

    dsm = load_raster(dsm_path, kind='dsm')
    pan = load_raster(pan_path, kind='pan')

    result = infer(Path(checkpoint), dsm, pan)

    out_path = Path(out_path)
    outputs = {'refined': write_raster(result.refined, out_path),
               'validity': write_raster(result.validity, out_path.stripext() + '_validity')}
    if preview:
        outputs['preview'] = write_preview(result.refined, out_path.stripext() + '.png')

    return outputs


def cmd_eval(pred_path, gt_path, mask_path, dilation=3, json_out=None):

    report = evaluate(load_raster(pred_path, kind='dsm'),
                      load_raster(gt_path, kind='dsm'),
                      load_raster(mask_path, kind='mask'),
                      dilation)

    if json_out:
        atomic_write_json(json_out, report.to_dict())

    return report, format_table({Path(pred_path).stem: report})


def cmd_profile(raster_paths, line: ProfileLine, out_dir):

    out_dir = Path(out_dir)
    out_dir.makedirs_p()

    written = []
    for i, path in enumerate(raster_paths):
        profile = extract_profile(load_raster(path), line)

        target = out_dir / f'profile_{i:02d}_{Path(path).stem}.csv'
        with open(target, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(('distance_m', 'height_m'))
            writer.writerows((repr(float(d)), repr(float(h))) for d, h in profile)

        written.append(target)

    return written


# command components


class Outcome(NamedTuple):

    config: Dict
    inputs: Dict
    outputs: Dict
    run_dir: Path
    seed: int = 0


class Command(ComponentMixin):

    name = 'command'
    help = ''
    schemas = ()

    def __init__(self):

        self.preferences = Parameter.create(name=self.name, type='group',
                                            children=[preferences.create(s) for s in self.schemas])

        super(Command, self).__init__()

    def updatePreferences(self, param, changes):

        for p, change, data in changes:
            if change == 'value':
                self._logger.debug(f'{p.name()} = {data}')

    def tree(self, name):

        return self.preferences.child(name)

    def configure(self, parser):

        parser.add_argument('--config', default=None,
                            help='JSON or YAML config file, command line flags take precedence')

    def resolve(self, args):
        """Defaults, then the config file, then flags."""

        for tree in self.preferences.children():
            preferences.reset(tree)

        if getattr(args, 'config', None):
            preferences.load_config(args.config, *self.preferences.children())

        for tree in self.preferences.children():
            preferences.apply_overrides(tree, args)

        return preferences.to_dict(self.preferences)

    def execute(self, args) -> Outcome:

        raise NotImplementedError


class SynthCommand(Command):

    name = 'synth'
    help = 'Synthesize a paired stereo DSM / PAN / ground truth dataset'
    schemas = ('Scene', 'Degradation', 'Rendering')

    def configure(self, parser):

        super(SynthCommand, self).configure(parser)

        parser.add_argument('out_dir')
        parser.add_argument('--count', type=int, default=10)
        parser.add_argument('--previews', action='store_true',
                            help='also write color-shaded PNGs of every scene')
        for s in self.schemas:
            preferences.add_arguments(parser, self.tree(s))

    def execute(self, args):

        snapshot = self.resolve(args)
        seed = args.seed or 0

        manifest = cmd_synth(args.out_dir, args.count,
                             SceneSpec.from_parameters(self.tree('Scene'), seed),
                             DegradationSpec.from_parameters(self.tree('Degradation'), seed),
                             rendering=snapshot['Rendering'],
                             seed=seed,
                             previews=args.previews)

        print(f'{len(manifest["scenes"])} scenes written to {args.out_dir}')

        return Outcome(snapshot, {}, {'dataset': Path(args.out_dir) / 'dataset.json'},
                       Path(args.out_dir), seed)


class TrainCommand(Command):

    name = 'train'
    help = 'Train a generator on a synthesized dataset'
    schemas = ('Training',)

    def configure(self, parser):

        super(TrainCommand, self).configure(parser)

        parser.add_argument('dataset', help='dataset directory or its dataset.json')
        parser.add_argument('out_dir')
        parser.add_argument('--resume', default=None, metavar='CHECKPOINT',
                            help='continue from a checkpoint directory')
        # --seed and --deterministic are global flags
        preferences.add_arguments(parser, self.tree('Training'), skip=('seed', 'deterministic'))

    def execute(self, args):

        snapshot = self.resolve(args)

        config = TrainConfig.from_parameters(self.tree('Training'))
        state = cmd_train(config, args.dataset, args.out_dir, args.resume)

        print(f'trained to epoch {state.epoch}, checkpoint {state.checkpoint}')

        inputs = {'dataset': args.dataset}
        if args.resume:
            inputs['resume'] = args.resume

        return Outcome(snapshot, inputs,
                       {'checkpoint': state.checkpoint, 'log': Path(args.out_dir) / TRAIN_LOG},
                       Path(args.out_dir), config.seed)


class InferCommand(Command):

    name = 'infer'
    help = 'Refine a stereo DSM with a trained generator'

    def configure(self, parser):

        parser.add_argument('checkpoint')
        parser.add_argument('dsm')
        parser.add_argument('pan')
        parser.add_argument('out', help='refined DSM (.r32)')
        parser.add_argument('--no-preview', dest='preview', action='store_false')

    def execute(self, args):

        outputs = cmd_infer(args.checkpoint, args.dsm, args.pan, args.out, args.preview)

        return Outcome({'preview': args.preview},
                       {'checkpoint': args.checkpoint, 'dsm': args.dsm, 'pan': args.pan},
                       outputs, Path(args.out).abspath().dirname())


class EvalCommand(Command):

    name = 'eval'
    help = 'Masked MAE / RMSE / NMAD / NCC of a DSM against ground truth'

    def configure(self, parser):

        parser.add_argument('pred')
        parser.add_argument('gt')
        parser.add_argument('mask', help='building footprint mask')
        parser.add_argument('--dilation', type=int, default=3, help='mask buffer in pixels')
        parser.add_argument('--json', dest='json_out', default=None,
                            help='report path, defaults to <pred>_metrics.json')

    def execute(self, args):

        json_out = Path(args.json_out or Path(args.pred).stripext() + '_metrics.json')
        report, table = cmd_eval(args.pred, args.gt, args.mask, args.dilation, json_out)

        print(table)

        return Outcome({'dilation': args.dilation},
                       {'pred': args.pred, 'gt': args.gt, 'mask': args.mask},
                       {'report': json_out}, json_out.abspath().dirname())


class ProfileCommand(Command):

    name = 'profile'
    help = 'Height profiles of several rasters along one line'

    def configure(self, parser):

        parser.add_argument('rasters', nargs='+')
        parser.add_argument('--line', required=True, metavar='X0,Y0,X1,Y1',
                            help='pixel coordinates, x along columns')
        parser.add_argument('--samples', type=int, default=100)
        parser.add_argument('--out-dir', default='.')

    def execute(self, args):

        x0, y0, x1, y1 = parse_floats(args.line, 4, '--line')
        line = ProfileLine((x0, y0), (x1, y1), args.samples)

        written = cmd_profile(args.rasters, line, args.out_dir)

        return Outcome({'line': [x0, y0, x1, y1], 'samples': args.samples},
                       {f'raster_{i}': r for i, r in enumerate(args.rasters)},
                       {f'profile_{i}': p for i, p in enumerate(written)},
                       Path(args.out_dir))


class CompareCommand(Command):

    name = 'compare'
    help = 'Stereo DSM vs cGAN vs WNet-cGAN on synthetic data over several seeds'
    schemas = ('Training', 'Scene', 'Degradation', 'Rendering')

    def configure(self, parser):

        super(CompareCommand, self).configure(parser)

        parser.add_argument('out_dir')
        parser.add_argument('--seeds', type=int, nargs='+', default=None,
                            help='default: the training seed and the two following seeds')
        parser.add_argument('--count', type=int, default=20, help='scenes per seed')
        parser.add_argument('--epochs', type=int, default=None)

    def execute(self, args):

        snapshot = self.resolve(args)

        config = TrainConfig.from_parameters(self.tree('Training'))
        seeds = args.seeds or [config.seed, config.seed + 1, config.seed + 2]

        result = compare(args.out_dir, seeds, args.count,
                         SceneSpec.from_parameters(self.tree('Scene')),
                         DegradationSpec.from_parameters(self.tree('Degradation')),
                         config,
                         rendering=snapshot['Rendering'])

        print(result.report())

        return Outcome({**snapshot, 'seeds': seeds, 'count': args.count}, {},
                       {'comparison': Path(args.out_dir) / 'comparison.json'},
                       Path(args.out_dir), seeds[0])


COMMANDS = (SynthCommand, TrainCommand, InferCommand, EvalCommand, ProfileCommand, CompareCommand)


class Application(MainMixin):

    name = NAME

    def __init__(self):

        super(Application, self).__init__()

        for cls in COMMANDS:
            command = cls()
            self.registerComponent(command.name, command)

    def parser(self):

        parser = argparse.ArgumentParser(prog=NAME, description=__doc__.strip().splitlines()[0])
        parser.add_argument('--seed', type=int, default=None, help='default: 0')
        parser.add_argument('--deterministic', action='store_true', default=None,
                            help='deterministic kernels, single thread, no loader workers')
        parser.add_argument('-v', '--verbose', action='store_true')

        sub = parser.add_subparsers(dest='command', required=True)
        for name, command in self.components.items():
            command.configure(sub.add_parser(name, help=command.help))

        return parser

    def run(self, argv=None):

        argv = list(sys.argv[1:] if argv is None else argv)

        try:
            args = self.parser().parse_args(argv)
        except SystemExit as e:
            return e.code

        setup = logbook.NestedSetup([logbook.NullHandler(),
                                     ConsoleHandler(level=DEBUG if args.verbose else INFO)])

        with setup.applicationbound():
            start = time.monotonic()
            try:
                outcome = self.components[args.command].execute(args)
            except USAGE_ERRORS as e:
                logger.error(str(e))
                return 2
            except Exception:
                logger.exception(f'{args.command} failed')
                return 1

            RunManifest(command=args.command,
                        argv=argv,
                        config=outcome.config,
                        seed=outcome.seed,
                        inputs={k: str(v) for k, v in outcome.inputs.items()},
                        outputs={k: str(v) for k, v in outcome.outputs.items()},
                        version=describe_version(),
                        duration_s=time.monotonic() - start).write(outcome.run_dir / RUN_MANIFEST)

        return 0


def setup_logging():
    """Route stdlib logging into logbook and log uncaught exceptions."""

    from logbook.compat import redirect_logging

    redirect_logging()

    def handle_exception(exc_type, exc_value, exc_traceback):

        if issubclass(exc_type, KeyboardInterrupt):
            sys.__excepthook__(exc_type, exc_value, exc_traceback)
            return

        logger.error('Uncaught exception occurred',
                     exc_info=(exc_type, exc_value, exc_traceback))

    sys.excepthook = handle_exception


def main(argv=None):

    setup_logging()

    return Application().run(argv)
