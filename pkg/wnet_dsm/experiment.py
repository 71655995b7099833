"""
Directional comparison of the stereo DSM, the DSM-only cGAN and the fused
WNet-cGAN on synthetic data.

Each seed synthesizes its own dataset, trains both generators with identical
settings and evaluates all three surfaces on the test split. The expected
ordering (WNet better than the baseline, the baseline better than the stereo
input) is checked per seed on MAE and NCC and decided by majority vote.
"""

from dataclasses import dataclass, replace, field
from typing import Dict

from logbook import Logger
from path import Path

from .errors import ParameterError
from .metrics import MetricsReport, evaluate_scenes, format_table
from .raster_core import load_raster
from .synthgen import build_dataset, SceneSpec, DegradationSpec
from .trainer import TrainConfig, train, infer
from .utils import atomic_write_json

SURFACES = ('Stereo DSM', 'cGAN', 'Fused-cGAN')
ARCHITECTURES = {'cGAN': 'unet', 'Fused-cGAN': 'wnet'}

logger = Logger('experiment')


@dataclass
class ComparisonResult:

    tables: Dict[int, Dict[str, MetricsReport]] = field(default_factory=dict)
    verdicts: Dict[int, Dict[str, bool]] = field(default_factory=dict)

    @property
    def majority(self):

        n = len(self.verdicts)

        return {metric: sum(v[metric] for v in self.verdicts.values()) * 2 > n
                for metric in ('mae', 'ncc')}

    def to_dict(self):

        return {'tables': {str(seed): {name: r.to_dict() for name, r in table.items()}
                           for seed, table in self.tables.items()},
                'verdicts': {str(seed): v for seed, v in self.verdicts.items()},
                'majority': self.majority}

    def report(self):

        blocks = [f'seed {seed}\n{format_table(table)}' for seed, table in self.tables.items()]
        blocks.append('ordering holds by majority: ' +
                      ', '.join(f'{k.upper()} {"yes" if v else "no"}'
                                for k, v in self.majority.items()))

        return '\n\n'.join(blocks)


def ordering_verdict(table: Dict[str, MetricsReport]):

    stereo, base, fused = (table[name] for name in SURFACES)

    return {'mae': stereo.mae_m > base.mae_m > fused.mae_m,
            'ncc': stereo.ncc < base.ncc < fused.ncc}


def run_seed(seed, out_dir, count, scene_spec: SceneSpec, degradation: DegradationSpec,
             config: TrainConfig, rendering=None, dilation_px=3):

    out_dir = Path(out_dir)
    manifest = build_dataset(out_dir / 'data', count, scene_spec, degradation,
                             seed=seed, **(rendering or {}))

    test = [manifest['scenes'][sid] for sid in manifest['splits']['test']]
    if not test or not manifest['splits']['val']:
        raise ParameterError(f'{count} scenes leave no validation or test scenes')
    root = out_dir / 'data'
    gts = [load_raster(root / e['gt']) for e in test]
    stereos = [load_raster(root / e['stereo']) for e in test]
    pans = [load_raster(root / e['pan']) for e in test]
    masks = [load_raster(root / e['mask']) for e in test]

    table = {'Stereo DSM': evaluate_scenes(zip(stereos, gts, masks), dilation_px)}

    for name, architecture in ARCHITECTURES.items():
        run_config = replace(config, architecture=architecture, seed=seed)
        logger.info(f'seed {seed}: training {name} ({architecture})')
        state = train(run_config, root, out_dir / architecture)

        preds = [infer(state, dsm, pan).refined for dsm, pan in zip(stereos, pans)]
        table[name] = evaluate_scenes(zip(preds, gts, masks), dilation_px)

    return table


def compare(out_dir, seeds, count, scene_spec: SceneSpec, degradation: DegradationSpec,
            config: TrainConfig, rendering=None, dilation_px=3) -> ComparisonResult:

    out_dir = Path(out_dir)
    result = ComparisonResult()

    for seed in seeds:
        table = run_seed(seed, out_dir / f'seed_{seed}', count, scene_spec, degradation,
                         config, rendering, dilation_px)
        result.tables[seed] = table
        result.verdicts[seed] = ordering_verdict(table)
        logger.info(f'seed {seed}: {result.verdicts[seed]}')

    atomic_write_json(out_dir / 'comparison.json', result.to_dict())

    return result
