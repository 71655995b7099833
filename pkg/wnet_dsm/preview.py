"""
Color-shaded 8-bit PNG previews of DSMs: a height color ramp modulated by a
hillshade.
"""

import numpy as np
import pyqtgraph as pg

from path import Path

from .raster_core import RasterGrid
from .synthgen import hillshade

#: low to high: blue ground, green, yellow, red roofs
RAMP_POSITIONS = [0.0, 0.35, 0.7, 1.0]
RAMP_COLORS = [(40, 70, 160), (60, 170, 90), (240, 220, 90), (200, 50, 40)]
SHADE_WEIGHT = 0.6


def height_colormap():

    return pg.ColorMap(RAMP_POSITIONS, RAMP_COLORS)


def color_shade(raster: RasterGrid, h_range=None) -> np.ndarray:
    """(rows, cols, 4) RGBA uint8 array; nodata pixels are black."""

    valid = raster.valid
    values = np.where(valid, raster.height, np.nan).astype(np.float64)

    if h_range is None:
        h_range = (np.nanmin(values), np.nanmax(values)) if valid.any() else (0.0, 1.0)
    lo, hi = h_range
    scaled = np.clip((values - lo) / max(hi - lo, 1e-6), 0.0, 1.0)
    scaled[~valid] = 0.0

    rgba = height_colormap().map(scaled.ravel(), mode='float').reshape(raster.rows, raster.cols, 4)

    filled = raster.with_values(np.where(valid, raster.height, lo), nodata=None, kind='dsm')
    shade = (1 - SHADE_WEIGHT) + SHADE_WEIGHT * hillshade(filled)

    rgb = rgba[..., :3] * shade[..., None]
    rgb[~valid] = 0.0

    out = np.empty((raster.rows, raster.cols, 4), dtype=np.uint8)
    out[..., :3] = np.round(np.clip(rgb, 0.0, 1.0) * 255)
    out[..., 3] = 255

    return out


def write_preview(raster: RasterGrid, path, h_range=None):
    """Write ``color_shade(raster)`` as a PNG with the raster's dimensions."""

    path = Path(path)
    path.parent.makedirs_p()

    rgba = color_shade(raster, h_range)
    # QImage ARGB32 stores pixels as BGRA bytes
    bgra = np.ascontiguousarray(rgba[..., [2, 1, 0, 3]])

    image = pg.makeQImage(bgra, alpha=True, copy=True, transpose=False)
    if not image.save(str(path), 'PNG'):
        raise OSError(f'Cannot write preview {path}')

    return path
