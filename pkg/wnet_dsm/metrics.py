"""
Height accuracy measured inside the dilated building footprints.

MAE, RMSE, NMAD and NCC are reduced in float64 over the valid masked pixels,
i.e. pixels inside the mask where neither raster holds nodata.
"""

import json

from dataclasses import dataclass, asdict
from typing import Tuple

import numpy as np

from scipy import ndimage

from .errors import EvaluationError, InputError, ParameterError, ValidationError
from .raster_core import RasterGrid, dilate_mask

NMAD_SCALE = 1.4826
COLUMNS = ('MAE, m', 'RMSE, m', 'NMAD, m', 'NCC')

#: published accuracies on real satellite stereo data (stereo input, cGAN, fused cGAN)
REFERENCE_ACCURACY = {'Stereo DSM': (3.00, 5.97, 1.48, 0.90),
                      'cGAN': (2.01, 4.78, 0.86, 0.92),
                      'Fused-cGAN': (1.79, 4.36, 0.67, 0.94)}


@dataclass(frozen=True)
class MetricsReport:

    mae_m: float
    rmse_m: float
    nmad_m: float
    ncc: float
    n_pixels: int
    mask_dilation_px: int
    excluded_nodata: int = 0

    def __post_init__(self):

        if self.n_pixels < 1:
            raise EvaluationError('Report over an empty pixel set')
        if self.mae_m > self.rmse_m * (1 + 1e-12) + 1e-12:
            raise EvaluationError(f'MAE {self.mae_m} exceeds RMSE {self.rmse_m}')
        if not -1.0 <= self.ncc <= 1.0:
            raise EvaluationError(f'NCC {self.ncc} outside [-1, 1]')

    def row(self):

        return self.mae_m, self.rmse_m, self.nmad_m, self.ncc

    def to_dict(self):

        return asdict(self)

    def to_json(self):

        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class ProfileLine:
    """Straight line between two (x, y) pixel positions, x along columns."""

    start: Tuple[float, float]
    end: Tuple[float, float]
    samples: int = 100

    def __post_init__(self):

        if self.samples < 2:
            raise ParameterError(f'A profile needs at least 2 samples, got {self.samples}')

    @property
    def length_px(self):

        return float(np.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]))


def _differences(pred: RasterGrid, gt: RasterGrid, mask: RasterGrid):

    if pred.shape != gt.shape or pred.shape != mask.shape:
        raise InputError(f'Shapes differ: pred {pred.shape}, gt {gt.shape}, mask {mask.shape}')

    m = mask.height
    if not np.isin(m, (0.0, 1.0)).all():
        raise ValidationError('Evaluation mask must be binary')

    selected = (m == 1.0) & pred.valid & gt.valid
    if not selected.any():
        raise EvaluationError('No valid pixels inside the evaluation mask')

    p = pred.height[selected].astype(np.float64)
    g = gt.height[selected].astype(np.float64)

    return p, g


def mae(pred, gt, mask):

    p, g = _differences(pred, gt, mask)

    return float(np.mean(np.abs(p - g)))


def rmse(pred, gt, mask):

    p, g = _differences(pred, gt, mask)

    return float(np.sqrt(np.mean((p - g) ** 2)))


def _nmad(delta):

    return float(NMAD_SCALE * np.median(np.abs(delta - np.median(delta))))


def nmad(pred, gt, mask):

    p, g = _differences(pred, gt, mask)

    return _nmad(p - g)


def _pearson(p, g):

    dp, dg = p - p.mean(), g - g.mean()
    sp, sg = np.sum(dp * dp), np.sum(dg * dg)

    if sp == 0 or sg == 0:
        raise EvaluationError('NCC undefined: constant heights inside the mask')

    return float(np.clip(np.sum(dp * dg) / np.sqrt(sp * sg), -1.0, 1.0))


def ncc(pred, gt, mask):

    p, g = _differences(pred, gt, mask)

    return _pearson(p, g)


def evaluate(pred: RasterGrid, gt: RasterGrid, footprints: RasterGrid, dilation_px=3) -> MetricsReport:
    """All four metrics over ``footprints`` grown by ``dilation_px``."""

    return evaluate_scenes([(pred, gt, footprints)], dilation_px)


def evaluate_scenes(scenes, dilation_px=3) -> MetricsReport:
    """Like :func:`evaluate`, pooling the masked pixels of several (pred, gt, footprints) scenes."""

    ps, gs = [], []
    excluded = 0

    for pred, gt, footprints in scenes:
        mask = dilate_mask(footprints, dilation_px)
        try:
            p, g = _differences(pred, gt, mask)
        except EvaluationError:
            p = g = np.empty(0)
        ps.append(p)
        gs.append(g)
        excluded += int(np.count_nonzero((mask.height == 1.0) & ~(pred.valid & gt.valid)))

    p, g = np.concatenate(ps or [np.empty(0)]), np.concatenate(gs or [np.empty(0)])
    if p.size == 0:
        raise EvaluationError('No valid pixels inside the evaluation mask')

    delta = p - g

    return MetricsReport(mae_m=float(np.mean(np.abs(delta))),
                         rmse_m=float(np.sqrt(np.mean(delta ** 2))),
                         nmad_m=_nmad(delta),
                         ncc=_pearson(p, g),
                         n_pixels=int(delta.size),
                         mask_dilation_px=int(dilation_px),
                         excluded_nodata=excluded)


def extract_profile(raster: RasterGrid, line: ProfileLine) -> np.ndarray:
    """
    Bilinearly sample ``raster`` along ``line``; returns a ``(samples, 2)``
    array of (distance_m, height_m) pairs. Samples that draw any weight
    from a nodata pixel are NaN.
    """

    for x, y in (line.start, line.end):
        if not (0 <= x <= raster.cols - 1 and 0 <= y <= raster.rows - 1):
            raise InputError(f'Profile endpoint ({x}, {y}) outside a {raster.shape} raster')

    t = np.linspace(0.0, 1.0, line.samples)
    xs = line.start[0] + t * (line.end[0] - line.start[0])
    ys = line.start[1] + t * (line.end[1] - line.start[1])

    valid = raster.valid
    values = np.where(valid, raster.height.astype(np.float64), 0.0)

    heights = ndimage.map_coordinates(values, [ys, xs], order=1, mode='nearest')
    # any weight on a nodata pixel voids the sample
    tainted = ndimage.map_coordinates((~valid).astype(np.float64), [ys, xs], order=1, mode='nearest')
    heights[tainted > 0] = np.nan

    return np.column_stack([t * line.length_px * raster.gsd_m, heights])


def format_table(rows) -> str:
    """
    Align reports (or plain 4-tuples) in MAE / RMSE / NMAD / NCC order.

    >>> print(format_table(REFERENCE_ACCURACY))
    Model        MAE, m  RMSE, m  NMAD, m      NCC
    Stereo DSM     3.00     5.97     1.48     0.90
    cGAN           2.01     4.78     0.86     0.92
    Fused-cGAN     1.79     4.36     0.67     0.94
    """

    width = max([len('Model')] + [len(name) for name in rows])

    lines = [f'{"Model":<{width}}' + ''.join(f'{c:>9}' for c in COLUMNS)]
    for name, values in rows.items():
        if isinstance(values, MetricsReport):
            values = values.row()
        lines.append(f'{name:<{width}}' + ''.join(f'{v:>9.2f}' for v in values))

    return '\n'.join(lines)
