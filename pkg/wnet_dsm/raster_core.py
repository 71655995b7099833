"""
Raster representation shared by every stage of the pipeline.

DSMs, PAN images and building masks are all single band float32 grids
(:class:`RasterGrid`). The canonical on-disk form is a raw little-endian
``.r32`` payload plus a ``.json`` sidecar with the grid metadata.
"""

import json
import math

from dataclasses import dataclass, replace, asdict
from typing import List, Optional, Tuple

import numpy as np

from logbook import Logger
from path import Path
from scipy import ndimage

from .errors import (FormatError, CorruptionError, ParameterError,
                     ValidationError)

KINDS = ('dsm', 'pan', 'mask')
SIDECAR_FIELDS = ('rows', 'cols', 'gsd_m', 'origin_x', 'origin_y', 'nodata', 'kind')
PAYLOAD_DTYPE = np.dtype('<f4')
GEOTIFF_EXTENSIONS = ('.tif', '.tiff')

logger = Logger('raster_core')


@dataclass(frozen=True, eq=False)
class RasterGrid:

    height: np.ndarray
    gsd_m: float = 0.5
    origin: Tuple[float, float] = (0.0, 0.0)
    nodata: Optional[float] = None
    kind: str = 'dsm'

    def __post_init__(self):

        arr = np.array(self.height, dtype=np.float32)

        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ParameterError(f'Raster must be a non-empty 2D grid, got shape {arr.shape}')
        if not self.gsd_m > 0:
            raise ParameterError(f'GSD must be positive, got {self.gsd_m}')
        if self.kind not in KINDS:
            raise ParameterError(f'Unknown raster kind {self.kind!r}')

        if self.kind == 'mask':
            if self.nodata is not None:
                raise ValidationError('Masks cannot carry a nodata value')
            if not np.isin(arr, (0.0, 1.0)).all():
                raise ValidationError('Mask rasters may only contain 0 and 1')

        invalid = ~np.isfinite(arr)
        if self.nodata is not None:
            invalid &= ~self._nodata_pixels(arr)
        if invalid.any():
            raise ValidationError(f'{int(invalid.sum())} non-finite values outside nodata')

        arr.setflags(write=False)
        object.__setattr__(self, 'height', arr)
        object.__setattr__(self, 'gsd_m', float(self.gsd_m))
        object.__setattr__(self, 'origin', (float(self.origin[0]), float(self.origin[1])))

    def _nodata_pixels(self, arr):

        if self.nodata is None:
            return np.zeros(arr.shape, dtype=bool)
        elif math.isnan(self.nodata):
            return np.isnan(arr)
        else:
            return arr == np.float32(self.nodata)

    @property
    def rows(self):

        return self.height.shape[0]

    @property
    def cols(self):

        return self.height.shape[1]

    @property
    def shape(self):

        return self.height.shape

    @property
    def valid(self):
        """Boolean grid, False where the pixel holds the nodata sentinel."""

        return ~self._nodata_pixels(self.height)

    def with_values(self, values, **changes):

        return replace(self, height=values, **changes)

    def same_grid(self, other):

        return self.shape == other.shape and self.gsd_m == other.gsd_m


@dataclass(frozen=True)
class NormSpec:

    h_min: float
    h_max: float
    kind: str = 'height'

    def __post_init__(self):

        if self.kind not in ('height', 'intensity'):
            raise ParameterError(f'Unknown normalization kind {self.kind!r}')
        if not self.h_max > self.h_min:
            raise ParameterError(f'Degenerate normalization range [{self.h_min}, {self.h_max}]')

    @property
    def span(self):

        return self.h_max - self.h_min

    def to_dict(self):

        return asdict(self)

    @classmethod
    def from_dict(cls, d):

        return cls(float(d['h_min']), float(d['h_max']), d.get('kind', 'height'))


@dataclass(frozen=True)
class TileLayout:

    tile_size: int
    stride: int
    pad_rows: int
    pad_cols: int
    grid: Tuple[int, int]
    rows: int
    cols: int
    gsd_m: float = 0.5
    origin: Tuple[float, float] = (0.0, 0.0)
    nodata: Optional[float] = None
    kind: str = 'dsm'

    @property
    def count(self):

        return self.grid[0] * self.grid[1]

    def offsets(self):

        for i in range(self.grid[0]):
            for j in range(self.grid[1]):
                yield i * self.stride, j * self.stride


def _sidecar(path):

    return Path(path).stripext() + '.json'


def load_raster(path, kind=None) -> RasterGrid:
    """Read a canonical ``.r32`` raster or a single band GeoTIFF."""

    path = Path(path)

    if not path.exists():
        raise FileNotFoundError(f'Raster {path} not found')

    if path.ext.lower() in GEOTIFF_EXTENSIONS:
        return _load_geotiff(path, kind or 'dsm')

    sidecar = _sidecar(path)
    if not sidecar.exists():
        raise FormatError(f'Missing sidecar {sidecar} for {path}')

    try:
        meta = json.loads(sidecar.read_text())
    except ValueError as e:
        raise FormatError(f'Malformed sidecar {sidecar}: {e}')

    missing = [f for f in SIDECAR_FIELDS if f not in meta]
    if missing:
        raise FormatError(f'Sidecar {sidecar} lacks fields {missing}')

    try:
        rows, cols = int(meta['rows']), int(meta['cols'])
    except (TypeError, ValueError):
        raise FormatError(f'Sidecar {sidecar} has non-integer dimensions')

    payload = np.fromfile(path, dtype=PAYLOAD_DTYPE)
    if payload.size != rows * cols or rows < 1 or cols < 1:
        raise CorruptionError(f'{path}: {payload.size} values for a {rows}x{cols} grid')

    return RasterGrid(payload.reshape(rows, cols),
                      gsd_m=meta['gsd_m'],
                      origin=(meta['origin_x'], meta['origin_y']),
                      nodata=meta['nodata'],
                      kind=kind or meta['kind'])


def _load_geotiff(path, kind):

    import rasterio

    with rasterio.open(path) as dataset:
        if dataset.count != 1:
            raise FormatError(f'{path} has {dataset.count} bands, expected 1')

        arr = dataset.read(1).astype(np.float32)
        transform = dataset.transform
        nodata = dataset.nodata

    if not np.isclose(abs(transform.a), abs(transform.e)):
        logger.warn(f'{path} has non-square pixels, using the column spacing as GSD')

    return RasterGrid(arr,
                      gsd_m=abs(transform.a),
                      origin=(transform.c, transform.f),
                      nodata=nodata,
                      kind=kind)


def write_raster(raster: RasterGrid, path):
    """Write ``raster`` as ``<path>.r32`` + ``<path>.json``; returns the payload path."""

    path = Path(path)
    if path.ext != '.r32':
        path = path.stripext() + '.r32'

    path.parent.makedirs_p()

    raster.height.astype(PAYLOAD_DTYPE).tofile(path)

    meta = {'rows': raster.rows,
            'cols': raster.cols,
            'gsd_m': raster.gsd_m,
            'origin_x': raster.origin[0],
            'origin_y': raster.origin[1],
            'nodata': raster.nodata,
            'kind': raster.kind}
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True))

    return path


def normalize(raster: RasterGrid, spec: NormSpec) -> RasterGrid:

    values = raster.height.astype(np.float64)
    out = 2.0 * (values - spec.h_min) / spec.span - 1.0
    out = np.clip(out, -1.0, 1.0)
    out[~raster.valid] = -1.0

    return raster.with_values(out, nodata=None)


def denormalize(raster: RasterGrid, spec: NormSpec) -> RasterGrid:

    values = raster.height.astype(np.float64)

    clamped = int(np.count_nonzero(np.abs(values) > 1.0))
    if clamped:
        logger.warn(f'denormalize clamped {clamped} values outside [-1, 1]')
        values = np.clip(values, -1.0, 1.0)

    return raster.with_values(spec.h_min + (values + 1.0) / 2.0 * spec.span,
                              nodata=None)


def _axis_tiles(n, tile_size, stride):

    count = math.ceil((n - tile_size) / stride) + 1

    return count, (count - 1) * stride + tile_size - n


def tile(raster: RasterGrid, tile_size=256, stride=None) -> Tuple[List[np.ndarray], TileLayout]:
    """
    Cut ``raster`` into ``tile_size`` squares, row-major, reflect padding the
    bottom and right edges up to the stride grid. A raster smaller than a
    tile becomes a single padded patch.
    """

    stride = tile_size if stride is None else stride

    if tile_size < 1 or stride < 1:
        raise ParameterError('Tile size and stride must be positive')
    if stride > tile_size:
        raise ParameterError(f'Stride {stride} exceeds tile size {tile_size}')

    n_rows, pad_rows = _axis_tiles(raster.rows, tile_size, stride)
    n_cols, pad_cols = _axis_tiles(raster.cols, tile_size, stride)

    padded = np.pad(raster.height, ((0, pad_rows), (0, pad_cols)), mode='reflect')

    layout = TileLayout(tile_size=tile_size,
                        stride=stride,
                        pad_rows=pad_rows,
                        pad_cols=pad_cols,
                        grid=(n_rows, n_cols),
                        rows=raster.rows,
                        cols=raster.cols,
                        gsd_m=raster.gsd_m,
                        origin=raster.origin,
                        nodata=raster.nodata,
                        kind=raster.kind)

    patches = [np.ascontiguousarray(padded[r:r + tile_size, c:c + tile_size])
               for r, c in layout.offsets()]

    return patches, layout


def untile(patches, layout: TileLayout) -> RasterGrid:
    """Reassemble patches emitted by :func:`tile`; overlaps are averaged."""

    if len(patches) != layout.count:
        raise ParameterError(f'Got {len(patches)} patches for a {layout.grid} layout')

    size = layout.tile_size
    acc = np.zeros((layout.rows + layout.pad_rows, layout.cols + layout.pad_cols))
    weight = np.zeros_like(acc)

    for patch, (r, c) in zip(patches, layout.offsets()):
        patch = np.asarray(patch, dtype=np.float32)
        if patch.size != size * size:
            raise ParameterError(f'Patch shape {patch.shape} does not match tile size {size}')
        acc[r:r + size, c:c + size] += patch.reshape(size, size)
        weight[r:r + size, c:c + size] += 1.0

    out = (acc / weight)[:layout.rows, :layout.cols]

    return RasterGrid(out,
                      gsd_m=layout.gsd_m,
                      origin=layout.origin,
                      nodata=layout.nodata,
                      kind=layout.kind)


def dilate_mask(mask: RasterGrid, radius: int) -> RasterGrid:
    """Grow a 0/1 mask by ``radius`` pixels with a square structuring element."""

    if radius < 0:
        raise ParameterError(f'Dilation radius must be non-negative, got {radius}')

    values = mask.height
    if not np.isin(values, (0.0, 1.0)).all():
        raise ValidationError('dilate_mask expects a binary raster')

    if radius == 0:
        return mask.with_values(values, kind='mask', nodata=None)

    grown = ndimage.maximum_filter(values, size=2 * radius + 1, mode='constant', cval=0.0)

    return mask.with_values(grown, kind='mask', nodata=None)


def as_mask(values, like: RasterGrid) -> RasterGrid:

    return like.with_values(np.asarray(values, dtype=np.float32), kind='mask', nodata=None)
