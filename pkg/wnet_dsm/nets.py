"""
WNet generator, its single-stream baseline and the five layer conditional
discriminator.

Each UNet stream encodes with 4x4 stride 2 convolutions and decodes with 4x4
stride 2 transposed convolutions plus same-stream skip connections. The
streams stop one level short of the input resolution; their features are
concatenated, fused by a 1x1 convolution and brought to full size by one
shared transposed convolution with a tanh head.
"""

from dataclasses import dataclass, asdict
from typing import Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ParameterError, InputError

LEAKY_SLOPE = 0.2
INIT_STD = 0.02


@dataclass(frozen=True)
class GeneratorSpec:

    in_size: int = 256
    base_width: int = 64
    n_levels: int = 8
    fusion_width: int = 64
    dropout_rate: float = 0.5
    dropout_levels: int = 3

    def __post_init__(self):

        if self.base_width < 1 or self.fusion_width < 1 or self.n_levels < 2:
            raise ParameterError('Generator widths must be positive and n_levels >= 2')
        if self.in_size % (2 ** self.n_levels):
            raise ParameterError(f'in_size {self.in_size} not divisible by 2^{self.n_levels}')
        if not 0 <= self.dropout_rate < 1:
            raise ParameterError('dropout_rate must lie in [0, 1)')

    def widths(self):
        """Encoder output channels per level, capped at 8x the base width."""

        return [self.base_width * min(2 ** i, 8) for i in range(self.n_levels)]

    def to_dict(self):

        return asdict(self)


@dataclass(frozen=True)
class DiscriminatorSpec:

    n_layers: int = 5
    widths: Tuple[int, ...] = (64, 128, 256, 512, 1)
    strides: Tuple[int, ...] = (2, 2, 2, 1, 1)
    leaky_slope: float = LEAKY_SLOPE
    in_channels: int = 2

    def __post_init__(self):

        if self.n_layers != 5 or len(self.widths) != 5 or len(self.strides) != 5:
            raise ParameterError('The discriminator has exactly five convolutional layers')
        if self.widths[-1] != 1:
            raise ParameterError('The last discriminator layer must emit one channel')

    def to_dict(self):

        return asdict(self)

    @classmethod
    def from_dict(cls, d):

        return cls(**{**d, 'widths': tuple(d['widths']), 'strides': tuple(d['strides'])})


@dataclass(frozen=True)
class TensorShape:

    batch: int
    channels: int
    rows: int
    cols: int

    def __post_init__(self):

        if min(self.batch, self.channels, self.rows, self.cols) < 1:
            raise ParameterError(f'Invalid tensor shape {self}')

    @classmethod
    def of(cls, tensor):

        if tensor.dim() != 4:
            raise InputError(f'Expected a (batch, channels, rows, cols) tensor, got {tuple(tensor.shape)}')

        return cls(*tensor.shape)


def _elementwise(fn, z):

    if torch.is_tensor(z):
        return fn(z)

    return fn(torch.tensor(z, dtype=torch.float64)).item()


def leaky_relu(z, slope=LEAKY_SLOPE):

    return _elementwise(lambda t: F.leaky_relu(t, slope), z)


def sigmoid(z):

    return _elementwise(torch.sigmoid, z)


def tanh_head(z):

    return _elementwise(torch.tanh, z)


def init_weights(module):

    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
        nn.init.normal_(module.weight, 0.0, INIT_STD)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.BatchNorm2d):
        nn.init.normal_(module.weight, 1.0, INIT_STD)
        nn.init.zeros_(module.bias)


class Down(nn.Sequential):

    def __init__(self, c_in, c_out, outermost=False, innermost=False):

        layers = [] if outermost else [nn.LeakyReLU(LEAKY_SLOPE)]
        layers.append(nn.Conv2d(c_in, c_out, 4, stride=2, padding=1,
                                bias=outermost or innermost))
        if not (outermost or innermost):
            layers.append(nn.BatchNorm2d(c_out))

        super(Down, self).__init__(*layers)


class Up(nn.Sequential):

    def __init__(self, c_in, c_out, dropout=0.0):

        layers = [nn.ReLU(),
                  nn.ConvTranspose2d(c_in, c_out, 4, stride=2, padding=1, bias=False),
                  nn.BatchNorm2d(c_out)]
        if dropout > 0:
            layers.append(nn.Dropout(dropout))

        super(Up, self).__init__(*layers)


class UNetStream(nn.Module):
    """One encoder-decoder stream, returning features at half the input size."""

    def __init__(self, spec: GeneratorSpec, in_channels=1):

        super(UNetStream, self).__init__()

        w = spec.widths()
        last = spec.n_levels - 1

        self.down = nn.ModuleList(
            Down(in_channels if i == 0 else w[i - 1], w[i],
                 outermost=i == 0, innermost=i == last)
            for i in range(spec.n_levels))

        # decoder blocks, innermost first; each emits the width of the level it rejoins
        self.up = nn.ModuleList(
            Up(w[i + 1] if i + 1 == last else 2 * w[i + 1], w[i],
               dropout=spec.dropout_rate if last - 1 - i < spec.dropout_levels else 0.0)
            for i in reversed(range(last)))

        self.out_channels = 2 * w[0]

    def forward(self, x):

        skips = []
        for block in self.down:
            x = block(x)
            skips.append(x)

        x = skips.pop()
        for block in self.up:
            x = torch.cat([block(x), skips.pop()], dim=1)

        return x


def _head(c_in):

    return nn.Sequential(nn.ReLU(),
                         nn.ConvTranspose2d(c_in, 1, 4, stride=2, padding=1),
                         nn.Tanh())


def _check_pair(a, b, what):

    sa, sb = TensorShape.of(a), TensorShape.of(b)
    if sa != sb:
        raise InputError(f'{what} shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}')

    return sa


class WNetGenerator(nn.Module):

    architecture = 'wnet'

    def __init__(self, spec: GeneratorSpec):

        super(WNetGenerator, self).__init__()

        self.spec = spec
        self.dsm_stream = UNetStream(spec)
        self.pan_stream = UNetStream(spec)
        self.fusion = nn.Conv2d(self.dsm_stream.out_channels + self.pan_stream.out_channels,
                                spec.fusion_width, kernel_size=1)
        self.head = _head(spec.fusion_width)

    def forward(self, dsm, pan):

        shape = _check_pair(dsm, pan, 'DSM and PAN')
        if shape.channels != 1 or shape.rows != self.spec.in_size or shape.cols != self.spec.in_size:
            raise InputError(f'Expected (batch, 1, {self.spec.in_size}, {self.spec.in_size}) inputs, '
                             f'got {tuple(dsm.shape)}')

        features = torch.cat([self.dsm_stream(dsm), self.pan_stream(pan)], dim=1)

        return self.head(self.fusion(features))


class UNetGenerator(nn.Module):
    """DSM-only baseline; accepts and ignores a PAN input for interface parity."""

    architecture = 'unet'

    def __init__(self, spec: GeneratorSpec):

        super(UNetGenerator, self).__init__()

        self.spec = spec
        self.dsm_stream = UNetStream(spec)
        self.head = _head(self.dsm_stream.out_channels)

    def forward(self, dsm, pan=None):

        shape = TensorShape.of(dsm)
        if shape.channels != 1 or shape.rows != self.spec.in_size or shape.cols != self.spec.in_size:
            raise InputError(f'Expected (batch, 1, {self.spec.in_size}, {self.spec.in_size}) input, '
                             f'got {tuple(dsm.shape)}')

        return self.head(self.dsm_stream(dsm))


class PatchDiscriminator(nn.Module):

    def __init__(self, spec: DiscriminatorSpec):

        super(PatchDiscriminator, self).__init__()

        self.spec = spec

        layers = []
        c_in = spec.in_channels
        for i, (c_out, stride) in enumerate(zip(spec.widths, spec.strides)):
            hidden = i < spec.n_layers - 1
            norm = hidden and i > 0
            layers.append(nn.Conv2d(c_in, c_out, 4, stride=stride, padding=1, bias=not norm))
            if norm:
                layers.append(nn.BatchNorm2d(c_out))
            layers.append(nn.LeakyReLU(spec.leaky_slope) if hidden else nn.Sigmoid())
            c_in = c_out

        self.model = nn.Sequential(*layers)

    def forward(self, dsm, candidate):

        _check_pair(dsm, candidate, 'Conditioning DSM and candidate')

        return self.model(torch.cat([dsm, candidate], dim=1))


def build_generator(spec: GeneratorSpec) -> WNetGenerator:

    g = WNetGenerator(spec)
    g.apply(init_weights)

    return g


def build_baseline(spec: GeneratorSpec) -> UNetGenerator:

    g = UNetGenerator(spec)
    g.apply(init_weights)

    return g


def build_discriminator(spec: DiscriminatorSpec = DiscriminatorSpec()) -> PatchDiscriminator:

    d = PatchDiscriminator(spec)
    d.apply(init_weights)

    return d


GENERATORS = {'wnet': build_generator,
              'unet': build_baseline}


def generator_forward(g, dsm_patch, pan_patch):

    return g(dsm_patch, pan_patch)


def discriminator_forward(d, dsm_patch, candidate):

    return d(dsm_patch, candidate)
