"""
Minibatch adversarial training, checkpointing and full-raster inference.

Each minibatch performs one discriminator update on detached generator
output followed by one generator update on the full objective. Crops, flips
and epoch order are drawn from RNGs keyed on (seed, epoch, index), so a run
is reproducible independently of the number of loader workers.
"""

import json

from dataclasses import dataclass, asdict, field
from typing import NamedTuple, Optional

import numpy as np
import torch

from logbook import Logger
from path import Path
from torch.utils.data import Dataset, DataLoader

from .errors import (ParameterError, InputError, CompatibilityError,
                     NonFiniteLossError, FormatError)
from .log import TRAINING_CHANNEL, JsonLinesHandler, read_log
from .mixins import ComponentMixin
from .nets import (GeneratorSpec, DiscriminatorSpec, GENERATORS,
                   build_discriminator)
from .objective import LossWeights, Objective, l1_loss, is_finite
from .raster_core import (RasterGrid, NormSpec, load_raster, normalize,
                          denormalize, tile, untile, as_mask)
from .synthgen import read_manifest, manifest_norm_specs
from . import preferences
from .utils import atomic_write_json

CHECKPOINT_MANIFEST = 'checkpoint.json'
CHECKPOINT_WEIGHTS = 'weights.pt'
TRAIN_LOG = 'train_log.jsonl'


@dataclass(frozen=True)
class TrainConfig:

    epochs: int = 200
    batch_size: int = 5
    lr_alpha: float = 0.0002
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    lambda_l1: float = 100.0
    seed: int = 0
    checkpoint_every: int = 10
    patch_size: int = 256
    architecture: str = 'wnet'
    base_width: int = 64
    n_levels: int = 8
    fusion_width: int = 64
    dropout_rate: float = 0.5
    crops_per_scene: int = 1
    augment: bool = True
    num_workers: int = 0
    deterministic: bool = False
    device: str = 'cpu'

    def __post_init__(self):

        for name in ('epochs', 'batch_size', 'checkpoint_every', 'patch_size', 'crops_per_scene'):
            if getattr(self, name) < 1:
                raise ParameterError(f'{name} must be positive')
        if not self.lr_alpha > 0:
            raise ParameterError('lr_alpha must be positive')
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ParameterError('ADAM betas must lie in (0, 1)')
        if self.architecture not in GENERATORS:
            raise ParameterError(f'Unknown architecture {self.architecture!r}')
        if self.num_workers < 0:
            raise ParameterError('num_workers must be non-negative')

        self.generator_spec()
        self.loss_weights()

    def generator_spec(self):

        return GeneratorSpec(in_size=self.patch_size,
                             base_width=self.base_width,
                             n_levels=self.n_levels,
                             fusion_width=self.fusion_width,
                             dropout_rate=self.dropout_rate)

    def loss_weights(self):

        return LossWeights(lambda_l1=self.lambda_l1)

    def to_dict(self):

        return asdict(self)

    @classmethod
    def from_parameters(cls, params):

        return cls(**preferences.to_dict(params))


@dataclass
class TrainState:

    config: TrainConfig
    generator: torch.nn.Module
    discriminator: torch.nn.Module
    g_opt: torch.optim.Optimizer
    d_opt: torch.optim.Optimizer
    height_spec: NormSpec
    intensity_spec: NormSpec
    epoch: int = 0
    global_step: int = 0
    rng_state: Optional[torch.Tensor] = None
    checkpoint: Optional[Path] = field(default=None, repr=False)


class Inference(NamedTuple):

    refined: RasterGrid
    validity: RasterGrid


class PatchDataset(Dataset):
    """Aligned, normalized (stereo DSM, PAN, GT, validity) crops of one split."""

    def __init__(self, manifest, split, patch_size, crops_per_scene=1,
                 augment=True, random_crops=True, seed=0):

        self.height_spec, self.intensity_spec = manifest_norm_specs(manifest)
        self.patch_size = patch_size
        self.crops_per_scene = crops_per_scene
        self.augment = augment
        self.random_crops = random_crops
        self.seed = seed
        self.epoch = 0

        self.scenes = [self._load(manifest['scenes'][sid])
                       for sid in manifest['splits'][split]]

    def _load(self, entry):

        stereo = load_raster(entry['stereo'])
        pan = load_raster(entry['pan'])
        gt = load_raster(entry['gt'])

        if not (stereo.same_grid(pan) and stereo.same_grid(gt)):
            raise InputError(f'Rasters of {entry["stereo"]} are not co-registered')
        if min(stereo.shape) < self.patch_size:
            raise InputError(f'Scene {stereo.shape} smaller than patch size {self.patch_size}')

        return np.stack([normalize(stereo, self.height_spec).height,
                         normalize(pan, self.intensity_spec).height,
                         normalize(gt, self.height_spec).height,
                         (stereo.valid & gt.valid).astype(np.float32)])

    def __len__(self):

        return len(self.scenes) * self.crops_per_scene

    def __getitem__(self, index):

        stack = self.scenes[index // self.crops_per_scene]
        rng = np.random.default_rng([self.seed, self.epoch, index])

        rows, cols = stack.shape[1:]
        p = self.patch_size
        if self.random_crops:
            r, c = rng.integers(0, rows - p + 1), rng.integers(0, cols - p + 1)
        else:
            r, c = (rows - p) // 2, (cols - p) // 2

        crop = stack[:, r:r + p, c:c + p]
        if self.augment and rng.random() < 0.5:
            crop = crop[:, :, ::-1]

        t = torch.from_numpy(np.ascontiguousarray(crop))

        return {'dsm': t[0:1], 'pan': t[1:2], 'gt': t[2:3], 'valid': t[3:4]}


def epoch_batches(n, batch_size, seed, epoch):
    """Seeded permutation of ``range(n)`` cut into minibatches."""

    order = np.random.default_rng([seed, epoch]).permutation(n)

    return [order[i:i + batch_size].tolist() for i in range(0, n, batch_size)]


def configure_determinism(config):

    if config.deterministic:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)
        torch.backends.cudnn.benchmark = False


def adam(params, config: TrainConfig):

    return torch.optim.Adam(params, lr=config.lr_alpha,
                            betas=(config.adam_beta1, config.adam_beta2))


def new_state(config: TrainConfig, height_spec, intensity_spec) -> TrainState:

    torch.manual_seed(config.seed)

    device = torch.device(config.device)
    g = GENERATORS[config.architecture](config.generator_spec()).to(device)
    d = build_discriminator(DiscriminatorSpec()).to(device)

    return TrainState(config=config,
                      generator=g,
                      discriminator=d,
                      g_opt=adam(g.parameters(), config),
                      d_opt=adam(d.parameters(), config),
                      height_spec=height_spec,
                      intensity_spec=intensity_spec)


def save_checkpoint(state: TrainState, directory):

    directory = Path(directory)
    directory.makedirs_p()

    torch.save({'generator': state.generator.state_dict(),
                'discriminator': state.discriminator.state_dict(),
                'g_opt': state.g_opt.state_dict(),
                'd_opt': state.d_opt.state_dict(),
                'rng_state': state.rng_state},
               directory / CHECKPOINT_WEIGHTS)

    atomic_write_json(directory / CHECKPOINT_MANIFEST,
                      {'architecture': state.config.architecture,
                       'generator_spec': state.config.generator_spec().to_dict(),
                       'discriminator_spec': state.discriminator.spec.to_dict(),
                       'epoch': state.epoch,
                       'global_step': state.global_step,
                       'optimizer_state': CHECKPOINT_WEIGHTS,
                       'norm_spec': {'height': state.height_spec.to_dict(),
                                     'intensity': state.intensity_spec.to_dict()},
                       'train_config': state.config.to_dict()})

    state.checkpoint = directory

    return directory


def read_checkpoint_manifest(directory):

    path = Path(directory) / CHECKPOINT_MANIFEST
    if not path.exists():
        raise FileNotFoundError(f'Checkpoint manifest {path} not found')

    try:
        return json.loads(path.read_text())
    except ValueError as e:
        raise FormatError(f'Malformed checkpoint manifest {path}: {e}')


def resume(checkpoint, config: Optional[TrainConfig] = None) -> TrainState:
    """Rebuild the full training state stored in a checkpoint directory."""

    directory = Path(checkpoint)
    meta = read_checkpoint_manifest(directory)

    stored = TrainConfig(**meta['train_config'])
    config = config or stored

    if GeneratorSpec(**meta['generator_spec']) != config.generator_spec() \
       or meta['architecture'] != config.architecture:
        raise CompatibilityError(f'Checkpoint {directory} was trained with '
                                 f'{meta["architecture"]} {meta["generator_spec"]}, '
                                 f'configured {config.architecture} {config.generator_spec().to_dict()}')
    if DiscriminatorSpec.from_dict(meta['discriminator_spec']) != DiscriminatorSpec():
        raise CompatibilityError(f'Checkpoint {directory} has an incompatible discriminator')

    state = new_state(config,
                      NormSpec.from_dict(meta['norm_spec']['height']),
                      NormSpec.from_dict(meta['norm_spec']['intensity']))

    weights = torch.load(directory / meta['optimizer_state'],
                         map_location=torch.device(config.device),
                         weights_only=True)

    state.generator.load_state_dict(weights['generator'])
    state.discriminator.load_state_dict(weights['discriminator'])
    state.g_opt.load_state_dict(weights['g_opt'])
    state.d_opt.load_state_dict(weights['d_opt'])

    state.rng_state = weights['rng_state']
    state.epoch = meta['epoch']
    state.global_step = meta['global_step']
    state.checkpoint = directory

    return state


class Trainer(ComponentMixin):

    name = 'Trainer'

    def __init__(self, config: TrainConfig, out_dir):

        super(Trainer, self).__init__()

        self.config = config
        self.out_dir = Path(out_dir)
        self.objective = Objective(config.loss_weights())
        self.training_log = Logger(TRAINING_CHANNEL)

    def loader(self, dataset, epoch):

        dataset.epoch = epoch
        batches = epoch_batches(len(dataset), self.config.batch_size, self.config.seed, epoch)

        workers = 0 if self.config.deterministic else self.config.num_workers

        return DataLoader(dataset,
                          batch_sampler=batches,
                          num_workers=workers,
                          prefetch_factor=2 if workers else None)

    def discriminator_step(self, state: TrainState, dsm, gt, fake, batch=None):
        """One D update; ``fake`` is detached so no gradient reaches G."""

        d = state.discriminator

        state.d_opt.zero_grad(set_to_none=True)
        loss = self.objective.discriminator(d(dsm, gt), d(dsm, fake.detach()))
        self._check_finite(state, batch, loss)
        loss.backward()
        state.d_opt.step()

        return loss

    def generator_step(self, state: TrainState, dsm, gt, fake, valid, batch=None):

        state.g_opt.zero_grad(set_to_none=True)
        adv, l1, total = self.objective.generator(state.discriminator(dsm, fake), fake, gt, valid)
        self._check_finite(state, batch, adv, l1, total)
        total.backward()
        state.g_opt.step()

        return adv, l1, total

    def step(self, state: TrainState, batch):

        device = torch.device(self.config.device)
        dsm, pan, gt, valid = (batch[k].to(device) for k in ('dsm', 'pan', 'gt', 'valid'))

        fake = state.generator(dsm, pan)

        loss_d = self.discriminator_step(state, dsm, gt, fake, batch)
        adv, l1, total = self.generator_step(state, dsm, gt, fake, valid, batch)

        state.global_step += 1

        record = {'kind': 'step',
                  'step': state.global_step,
                  'epoch': state.epoch + 1,
                  'd_loss': loss_d.item(),
                  'g_adv': adv.item(),
                  'g_l1': l1.item(),
                  'g_total': total.item()}
        self.training_log.info('step', extra=record)

        return record

    def _check_finite(self, state, batch, *losses):

        if is_finite(*losses):
            return

        snapshot = self.out_dir / f'nonfinite_step_{state.global_step + 1:06d}.pt'
        self.out_dir.makedirs_p()
        torch.save({'epoch': state.epoch + 1, 'step': state.global_step + 1, **(batch or {})}, snapshot)

        self._logger.error(f'non-finite loss at step {state.global_step + 1}, batch saved to {snapshot}')

        raise NonFiniteLossError(f'Non-finite loss at step {state.global_step + 1}', snapshot)

    def validate(self, state: TrainState, dataset):
        """Masked L1 (normalized units) of the generator on ``dataset``."""

        if len(dataset) == 0:
            return None

        g = state.generator
        device = torch.device(self.config.device)
        g.eval()

        total = 0.0
        with torch.no_grad():
            for i in range(len(dataset)):
                item = dataset[i]
                fake = g(item['dsm'][None].to(device), item['pan'][None].to(device))
                total += l1_loss(fake, item['gt'][None].to(device), item['valid'][None].to(device)).item()

        g.train()

        return total / len(dataset)

    def _log_validation(self, state, dataset):

        val_l1 = self.validate(state, dataset)
        if val_l1 is not None:
            self.training_log.info('validation', extra={'kind': 'val',
                                                        'epoch': state.epoch,
                                                        'val_l1': val_l1})
        return val_l1

    def _log_resume(self, state):

        path = self.out_dir / TRAIN_LOG
        vals = [r for r in read_log(path) if r.get('kind') == 'val'] if path.exists() else []
        last = f'{vals[-1]["val_l1"]:.4f}' if vals else 'n/a'

        self._logger.info(f'resuming at epoch {state.epoch} step {state.global_step}, last val_l1 {last}')

    def run(self, manifest, state: Optional[TrainState] = None) -> TrainState:

        config = self.config
        configure_determinism(config)

        if not isinstance(manifest, dict):
            manifest = read_manifest(manifest)

        if not manifest['splits']['train']:
            raise InputError('Dataset has no training scenes')

        if state is None:
            state = new_state(config, *manifest_norm_specs(manifest))
        elif state.rng_state is not None:
            torch.set_rng_state(state.rng_state)

        if state.epoch >= config.epochs:
            self._logger.info(f'checkpoint already at epoch {state.epoch}, nothing to do')
            return state

        if state.epoch > 0:
            self._log_resume(state)

        train_ds = PatchDataset(manifest, 'train', config.patch_size,
                                crops_per_scene=config.crops_per_scene,
                                augment=config.augment, seed=config.seed)
        val_ds = PatchDataset(manifest, 'val', config.patch_size,
                              augment=False, random_crops=False, seed=config.seed)

        self.out_dir.makedirs_p()
        handler = JsonLinesHandler(self.out_dir / TRAIN_LOG)

        try:
            with handler.applicationbound():
                if state.epoch == 0:
                    self._log_validation(state, val_ds)

                state.generator.train()
                state.discriminator.train()

                for epoch in range(state.epoch, config.epochs):
                    for batch in self.loader(train_ds, epoch):
                        record = self.step(state, batch)

                    state.epoch = epoch + 1
                    val_l1 = self._log_validation(state, val_ds)

                    self._logger.info(f'epoch {state.epoch}/{config.epochs} '
                                      f'step {state.global_step} '
                                      f'g_total {record["g_total"]:.4f} d_loss {record["d_loss"]:.4f} '
                                      f'val_l1 {val_l1}')

                    state.rng_state = torch.get_rng_state()
                    if state.epoch % config.checkpoint_every == 0 or state.epoch == config.epochs:
                        save_checkpoint(state, self.out_dir / 'checkpoints' / f'epoch_{state.epoch:04d}')
        finally:
            handler.close()

        return state


def train(config: TrainConfig, dataset, out_dir, state: Optional[TrainState] = None) -> TrainState:

    return Trainer(config, out_dir).run(dataset, state)


def _generator_from(checkpoint):

    if isinstance(checkpoint, TrainState):
        return checkpoint.generator, checkpoint.height_spec, \
            checkpoint.intensity_spec, checkpoint.config

    meta = read_checkpoint_manifest(checkpoint)
    config = TrainConfig(**{**meta['train_config'], 'device': 'cpu'})

    g = GENERATORS[meta['architecture']](GeneratorSpec(**meta['generator_spec']))
    weights = torch.load(Path(checkpoint) / meta['optimizer_state'],
                         map_location='cpu', weights_only=True)
    g.load_state_dict(weights['generator'])

    return g, NormSpec.from_dict(meta['norm_spec']['height']), \
        NormSpec.from_dict(meta['norm_spec']['intensity']), config


def infer(checkpoint, dsm: RasterGrid, pan: RasterGrid, batch_size=None) -> Inference:
    """Refine a full raster: normalize, tile, run the generator, untile, denormalize."""

    if not dsm.same_grid(pan):
        raise InputError(f'DSM {dsm.shape}@{dsm.gsd_m} and PAN {pan.shape}@{pan.gsd_m} are not co-registered')

    g, height_spec, intensity_spec, config = _generator_from(checkpoint)
    size = config.patch_size
    batch_size = batch_size or config.batch_size

    dsm_patches, layout = tile(normalize(dsm, height_spec), size, size)
    pan_patches, _ = tile(normalize(pan, intensity_spec), size, size)

    device = next(g.parameters()).device
    was_training = g.training
    g.eval()

    outputs = []
    with torch.no_grad():
        for i in range(0, len(dsm_patches), batch_size):
            x = torch.from_numpy(np.stack(dsm_patches[i:i + batch_size]))[:, None].to(device)
            y = torch.from_numpy(np.stack(pan_patches[i:i + batch_size]))[:, None].to(device)
            outputs.extend(g(x, y)[:, 0].cpu().numpy())

    g.train(was_training)

    refined = denormalize(untile(outputs, layout), height_spec)

    return Inference(refined=refined, validity=as_mask(dsm.valid, dsm))
