import json

import numpy as np
import pytest

from logbook import TestHandler
from path import Path

from wnet_dsm.errors import (FormatError, CorruptionError, ParameterError,
                             ValidationError)
from wnet_dsm.raster_core import (RasterGrid, NormSpec, load_raster, write_raster,
                                  normalize, denormalize, tile, untile, dilate_mask)


def grid(values, **kwargs):

    return RasterGrid(np.asarray(values, dtype=np.float32), **kwargs)


def brute_force_dilation(mask, r):

    rows, cols = mask.shape
    out = np.zeros_like(mask)
    for i in range(rows):
        for j in range(cols):
            window = mask[max(i - r, 0):i + r + 1, max(j - r, 0):j + r + 1]
            out[i, j] = window.max()

    return out


def test_raster_invariants():

    with pytest.raises(ParameterError):
        RasterGrid(np.zeros(4))

    with pytest.raises(ParameterError):
        grid(np.zeros((2, 2)), gsd_m=0)

    with pytest.raises(ValidationError):
        grid([[0, 2]], kind='mask')

    with pytest.raises(ValidationError):
        grid([[0, 1]], kind='mask', nodata=-9999.0)

    with pytest.raises(ValidationError):
        grid([[np.nan, 1]])

    r = grid([[np.nan, 1]], nodata=np.nan)
    assert(r.valid.tolist() == [[False, True]])

    r = grid([[-9999.0, 3.0]], nodata=-9999.0)
    assert(r.valid.tolist() == [[False, True]])
    assert(not r.height.flags.writeable)


def test_load_raster(tmp_path):

    p = Path(tmp_path) / 'a.r32'
    np.array([1, 2, 3, 4], dtype='<f4').tofile(p)
    (Path(tmp_path) / 'a.json').write_text(json.dumps({'rows': 2, 'cols': 2, 'gsd_m': 0.5,
                                                       'origin_x': 10.0, 'origin_y': 20.0,
                                                       'nodata': None, 'kind': 'dsm'}))

    r = load_raster(p)

    assert(r.rows == 2 and r.cols == 2)
    assert(r.gsd_m == 0.5)
    assert(r.origin == (10.0, 20.0))
    assert(r.height.tolist() == [[1, 2], [3, 4]])

    # truncated payload
    np.array([1, 2, 3], dtype='<f4').tofile(p)
    with pytest.raises(CorruptionError):
        load_raster(p)

    (Path(tmp_path) / 'a.json').write_text('{"rows": 2')
    with pytest.raises(FormatError):
        load_raster(p)

    (Path(tmp_path) / 'a.json').write_text('{"rows": 2, "cols": 2}')
    with pytest.raises(FormatError):
        load_raster(p)

    with pytest.raises(FileNotFoundError):
        load_raster(Path(tmp_path) / 'missing.r32')


def test_write_raster_is_byte_stable(tmp_path):

    rng = np.random.default_rng(0)
    first = write_raster(grid(rng.normal(size=(7, 5)), gsd_m=0.5, nodata=-9999.0),
                         Path(tmp_path) / 'first')

    assert(first.ext == '.r32')

    second = write_raster(load_raster(first), Path(tmp_path) / 'second.r32')

    assert(first.bytes() == second.bytes())
    assert((first.stripext() + '.json').bytes() ==
           (second.stripext() + '.json').bytes())


def test_normalize():

    spec = NormSpec(0.0, 200.0)

    r = normalize(grid([[0.0, 100.0, 200.0, 250.0, -9999.0]], nodata=-9999.0), spec)

    assert(r.height.tolist() == [[-1.0, 0.0, 1.0, 1.0, -1.0]])
    assert(r.nodata is None)

    assert(denormalize(grid([[0.0, -1.0]]), spec).height.tolist() == [[100.0, 0.0]])

    with pytest.raises(ParameterError):
        NormSpec(5.0, 5.0)


def test_normalize_round_trip():

    rng = np.random.default_rng(1)

    for _ in range(20):
        lo = rng.uniform(-50, 50)
        spec = NormSpec(lo, lo + rng.uniform(1, 300))
        values = rng.uniform(spec.h_min, spec.h_max, size=(16, 16)).astype(np.float32)

        back = denormalize(normalize(grid(values), spec), spec)

        assert(np.allclose(back.height, values, rtol=1e-6, atol=1e-6 * spec.span))


def test_denormalize_clamps_with_warning():

    with TestHandler() as handler:
        r = denormalize(grid([[1.5, -2.0, 0.0]]), NormSpec(0.0, 10.0))

    assert(r.height.tolist() == [[10.0, 0.0, 5.0]])
    assert(handler.has_warning('denormalize clamped 2 values outside [-1, 1]'))


def test_tile_counts():

    patches, layout = tile(grid(np.zeros((512, 512))), 256, 256)
    assert(len(patches) == 4 and layout.grid == (2, 2))
    assert(layout.pad_rows == 0 and layout.pad_cols == 0)

    patches, layout = tile(grid(np.zeros((600, 600))), 256, 256)
    assert(len(patches) == 9 and layout.grid == (3, 3))
    assert(600 + layout.pad_rows == 768)
    assert(all(p.shape == (256, 256) for p in patches))
    assert(len(patches) == layout.count)

    values = np.random.default_rng(0).normal(size=(256, 256))
    patches, layout = tile(grid(values), 256, 256)
    assert(len(patches) == 1)
    assert(np.array_equal(patches[0], values.astype(np.float32)))

    small = np.random.default_rng(1).normal(size=(100, 90))
    patches, layout = tile(grid(small), 256, 256)
    assert(len(patches) == 1 and layout.grid == (1, 1))
    assert((layout.pad_rows, layout.pad_cols) == (156, 166))
    assert(patches[0].shape == (256, 256))
    assert(np.array_equal(untile(patches, layout).height, small.astype(np.float32)))

    with pytest.raises(ParameterError):
        tile(grid(np.zeros((300, 300))), 128, 200)


def test_tile_reflect_padding():

    values = np.arange(6 * 5, dtype=np.float32).reshape(6, 5)
    patches, layout = tile(grid(values), 4, 4)

    assert(layout.grid == (2, 2))
    # bottom right patch: last rows/cols mirrored about the raster edge
    assert(patches[3][0, 0] == values[4, 4])
    assert(patches[3][0, 1] == values[4, 3])
    assert(patches[3][2, 0] == values[4, 4])
    assert(patches[3][3, 0] == values[3, 4])


def test_untile():

    rng = np.random.default_rng(2)
    values = rng.normal(size=(512, 512)).astype(np.float32)
    r = grid(values, gsd_m=0.5, origin=(3.0, 4.0))

    back = untile(*tile(r, 256, 256))
    assert(np.array_equal(back.height, values))
    assert(back.origin == (3.0, 4.0))

    odd = grid(rng.normal(size=(300, 270)))
    assert(np.array_equal(untile(*tile(odd, 128, 128)).height, odd.height))

    patches, layout = tile(grid(np.full((300, 300), 7.0)), 256, 128)
    assert(np.all(untile(patches, layout).height == 7.0))

    with pytest.raises(ParameterError):
        untile(patches[:-1], layout)


def test_dilate_mask():

    m = np.zeros((9, 9))
    m[4, 4] = 1
    out = dilate_mask(grid(m, kind='mask'), 3).height

    assert(out.sum() == 49)
    assert(out[1:8, 1:8].all())

    assert(np.array_equal(dilate_mask(grid(m, kind='mask'), 0).height, m))
    assert(not dilate_mask(grid(np.zeros((5, 5)), kind='mask'), 2).height.any())

    with pytest.raises(ValidationError):
        dilate_mask(grid([[0.0, 0.5]]), 1)

    with pytest.raises(ParameterError):
        dilate_mask(grid(m, kind='mask'), -1)


def test_dilate_mask_properties():

    rng = np.random.default_rng(3)

    for _ in range(200):
        shape = tuple(rng.integers(1, 33, size=2))
        m = (rng.random(shape) < 0.1).astype(np.float32)
        r = int(rng.integers(0, 5))
        mask = grid(m, kind='mask')

        out = dilate_mask(mask, r).height
        assert(np.array_equal(out, brute_force_dilation(m, r)))

        a, b = int(rng.integers(0, 3)), int(rng.integers(0, 3))
        assert(np.array_equal(dilate_mask(dilate_mask(mask, a), b).height,
                              dilate_mask(mask, a + b).height))

        bigger = np.maximum(m, (rng.random(shape) < 0.1).astype(np.float32))
        assert(np.all(dilate_mask(grid(bigger, kind='mask'), r).height >= out))
