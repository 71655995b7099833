import json

import numpy as np
import pytest

from wnet_dsm.errors import EvaluationError, InputError, ParameterError, ValidationError
from wnet_dsm.metrics import (MetricsReport, ProfileLine, REFERENCE_ACCURACY, mae, rmse, nmad,
                              ncc, evaluate, evaluate_scenes, extract_profile, format_table)
from wnet_dsm.raster_core import RasterGrid, dilate_mask
from wnet_dsm.synthgen import (SceneSpec, DegradationSpec, Building, generate_scene,
                               degrade_to_stereo_dsm)


def dsm(values, **kwargs):

    return RasterGrid(np.asarray(values, dtype=np.float64), **kwargs)


def mask(values):

    return RasterGrid(np.asarray(values, dtype=np.float64), kind='mask')


@pytest.fixture
def rng():

    return np.random.default_rng(0)


def test_constant_offset(rng):

    gt = dsm(rng.uniform(0, 20, size=(5, 5)))
    full = mask(np.ones((5, 5)))

    assert(mae(gt, gt, full) == 0)
    assert(rmse(gt, gt, full) == 0)
    assert(mae(dsm(gt.height + 2), gt, full) == pytest.approx(2.0, abs=1e-5))


def test_mae_brute_force(rng):

    p, g = rng.normal(size=(5, 5)), rng.normal(size=(5, 5))
    m = (rng.random((5, 5)) < 0.5).astype(float)
    m[0, 0] = 1

    pf, gf = dsm(p).height.astype(np.float64), dsm(g).height.astype(np.float64)
    total, n = 0.0, 0
    for i in range(5):
        for j in range(5):
            if m[i, j]:
                total += abs(pf[i, j] - gf[i, j])
                n += 1

    assert(mae(dsm(p), dsm(g), mask(m)) == pytest.approx(total / n, abs=1e-9))


def test_rmse():

    gt = dsm(np.zeros((2, 2)))
    pred = dsm([[3, -3], [3, -3]])

    assert(rmse(pred, gt, mask(np.ones((2, 2)))) == 3.0)


def test_rmse_bounds_mae(rng):

    for _ in range(1000):
        shape = tuple(rng.integers(1, 8, size=2))
        m = (rng.random(shape) < 0.7).astype(float)
        m.flat[0] = 1
        p, g = dsm(rng.normal(size=shape) * 5), dsm(rng.normal(size=shape) * 5)

        assert(mae(p, g, mask(m)) <= rmse(p, g, mask(m)) + 1e-12)


def test_nmad():

    gt = dsm(np.zeros((1, 5)))
    full = mask(np.ones((1, 5)))

    assert(nmad(dsm([[0, 1, 2, 3, 100]]), gt, full) == pytest.approx(1.4826, abs=1e-12))
    assert(nmad(dsm(np.full((1, 5), 5.0)), gt, full) == 0.0)


def test_nmad_is_robust(rng):

    gt = dsm(np.zeros((100, 100)))
    full = mask(np.ones((100, 100)))
    delta = rng.normal(size=(100, 100))

    outliers = delta.copy()
    outliers[rng.random(delta.shape) < 0.1] = 1000.0

    clean, dirty = dsm(delta), dsm(outliers)

    assert(abs(nmad(dirty, gt, full) - nmad(clean, gt, full)) < 0.5 * nmad(clean, gt, full))
    assert(rmse(dirty, gt, full) > 100 * rmse(clean, gt, full))


def test_ncc(rng):

    gt = dsm(rng.uniform(0, 20, size=(6, 6)))
    full = mask(np.ones((6, 6)))

    assert(ncc(gt, gt, full) == pytest.approx(1.0))
    assert(ncc(dsm(30 - gt.height), gt, full) == pytest.approx(-1.0))

    p = dsm(rng.normal(size=(6, 6)))
    a, b = p.height.astype(np.float64).ravel(), gt.height.astype(np.float64).ravel()
    expected = sum((x - a.mean()) * (y - b.mean()) for x, y in zip(a, b)) / \
        np.sqrt(sum((x - a.mean()) ** 2 for x in a) * sum((y - b.mean()) ** 2 for y in b))

    assert(ncc(p, gt, full) == pytest.approx(expected, abs=1e-9))

    with pytest.raises(EvaluationError):
        ncc(dsm(np.ones((6, 6))), gt, full)


def median(xs):

    s = sorted(xs)
    n = len(s)

    return s[n // 2] if n % 2 else 0.5 * (s[n // 2 - 1] + s[n // 2])


def brute_force(pred, gt, m):
    """Single loop reference values of (mae, rmse, nmad, ncc)."""

    p_all, g_all = pred.height.astype(np.float64), gt.height.astype(np.float64)
    p, g = [], []
    for i in range(m.shape[0]):
        for j in range(m.shape[1]):
            if m[i, j] == 1:
                p.append(p_all[i, j])
                g.append(g_all[i, j])

    n = len(p)
    d = [a - b for a, b in zip(p, g)]
    d_med = median(d)
    p_mean, g_mean = sum(p) / n, sum(g) / n

    cov = sum((a - p_mean) * (b - g_mean) for a, b in zip(p, g))
    var_p = sum((a - p_mean) ** 2 for a in p)
    var_g = sum((b - g_mean) ** 2 for b in g)

    return (sum(abs(x) for x in d) / n,
            (sum(x * x for x in d) / n) ** 0.5,
            1.4826 * median([abs(x - d_med) for x in d]),
            cov / (var_p * var_g) ** 0.5)


def test_metrics_match_brute_force(rng):

    for _ in range(500):
        shape = (int(rng.integers(1, 17)), int(rng.integers(2, 17)))
        m = (rng.random(shape) < 0.6).astype(float)
        m.flat[:2] = 1

        pred, gt = dsm(rng.normal(size=shape) * 5), dsm(rng.normal(size=shape) * 5)
        expected = brute_force(pred, gt, m)
        got = (mae(pred, gt, mask(m)), rmse(pred, gt, mask(m)),
               nmad(pred, gt, mask(m)), ncc(pred, gt, mask(m)))

        assert(got == pytest.approx(expected, abs=1e-9))


def quarters(rng, shape, low=-40, high=41):

    # multiples of 0.25 keep float32 shifts and scalings exact
    return rng.integers(low, high, size=shape) / 4.0


def test_shift_and_scale_invariance(rng):

    for _ in range(50):
        shape = tuple(int(n) for n in rng.integers(3, 12, size=2))
        m = (rng.random(shape) < 0.7).astype(float)
        m.flat[:2] = 1

        g = quarters(rng, shape)
        g.flat[:2] = (10.0, -10.0)
        gt = dsm(g)

        # strictly positive errors, so a shift moves MAE by exactly the shift
        p = g + quarters(rng, shape, 1, 41)
        pred, shifted, scaled = dsm(p), dsm(p + 3.0), dsm(2.5 * p - 7.0)

        assert(nmad(shifted, gt, mask(m)) == nmad(pred, gt, mask(m)))
        assert(mae(shifted, gt, mask(m)) == pytest.approx(mae(pred, gt, mask(m)) + 3.0, abs=1e-9))
        assert(rmse(shifted, gt, mask(m)) > rmse(pred, gt, mask(m)))

        assert(ncc(scaled, gt, mask(m)) == pytest.approx(ncc(pred, gt, mask(m)), abs=1e-9))


def test_evaluate_without_dilation_uses_footprints():

    scene = generate_scene(SceneSpec(rows=64, cols=64, n_buildings=3, footprint_px=(8, 16)))
    stereo = degrade_to_stereo_dsm(scene.gt_dsm, DegradationSpec(seed=3))

    report = evaluate(stereo, scene.gt_dsm, scene.footprints, dilation_px=0)
    raw = (mae(stereo, scene.gt_dsm, scene.footprints), rmse(stereo, scene.gt_dsm, scene.footprints),
           nmad(stereo, scene.gt_dsm, scene.footprints), ncc(stereo, scene.gt_dsm, scene.footprints))

    assert(report.row() == pytest.approx(raw, abs=1e-12))
    assert(report.n_pixels == int((scene.footprints.height == 1).sum() -
                                  (~stereo.valid & (scene.footprints.height == 1)).sum()))


def test_metric_errors():

    gt = dsm(np.zeros((3, 3)))

    with pytest.raises(InputError):
        mae(dsm(np.zeros((3, 4))), gt, mask(np.ones((3, 3))))

    with pytest.raises(EvaluationError):
        mae(gt, gt, mask(np.zeros((3, 3))))

    with pytest.raises(ValidationError):
        mae(gt, gt, dsm(np.full((3, 3), 0.5)))

    # every masked pixel is nodata
    holes = dsm(np.full((3, 3), -9999.0), nodata=-9999.0)
    with pytest.raises(EvaluationError):
        mae(holes, gt, mask(np.ones((3, 3))))


def test_evaluate_perfect_prediction():

    scene = generate_scene(SceneSpec(rows=64, cols=64, n_buildings=3, footprint_px=(8, 16)))
    report = evaluate(scene.gt_dsm, scene.gt_dsm, scene.footprints)

    assert(report.row() == (0.0, 0.0, 0.0, pytest.approx(1.0)))
    assert(report.mask_dilation_px == 3)
    assert(report.n_pixels > scene.footprints.height.sum())


def test_evaluate_degraded_is_worse():

    scene = generate_scene(SceneSpec(rows=64, cols=64, n_buildings=3, footprint_px=(8, 16)))
    stereo = degrade_to_stereo_dsm(scene.gt_dsm, DegradationSpec(seed=1))

    report = evaluate(stereo, scene.gt_dsm, scene.footprints)

    assert(report.mae_m > 0 and report.rmse_m > 0 and report.nmad_m > 0)
    assert(report.ncc < 1.0)
    assert(report.excluded_nodata == int((~stereo.valid & (dilate_mask(scene.footprints, 3).height == 1)).sum()))


def test_evaluate_dilation_is_monotonic():

    scene = generate_scene(SceneSpec(rows=64, cols=64, n_buildings=3, footprint_px=(8, 16)))
    stereo = degrade_to_stereo_dsm(scene.gt_dsm, DegradationSpec(seed=1))

    counts = [evaluate(stereo, scene.gt_dsm, scene.footprints, r).n_pixels for r in (0, 1, 3, 5)]

    assert(counts == sorted(counts))
    assert(counts[0] < counts[-1])


def test_evaluate_scenes_pools_pixels(rng):

    a = generate_scene(SceneSpec(rows=32, cols=32, n_buildings=2, footprint_px=(6, 10), seed=1))
    b = generate_scene(SceneSpec(rows=32, cols=32, n_buildings=2, footprint_px=(6, 10), seed=2))
    noisy = [dsm(s.gt_dsm.height + rng.normal(size=(32, 32))) for s in (a, b)]

    pooled = evaluate_scenes([(noisy[0], a.gt_dsm, a.footprints),
                              (noisy[1], b.gt_dsm, b.footprints)])
    single = [evaluate(n, s.gt_dsm, s.footprints) for n, s in zip(noisy, (a, b))]

    assert(pooled.n_pixels == sum(r.n_pixels for r in single))
    expected = sum(r.mae_m * r.n_pixels for r in single) / pooled.n_pixels
    assert(pooled.mae_m == pytest.approx(expected))


def test_metrics_report():

    report = MetricsReport(1.0, 2.0, 0.5, 0.9, n_pixels=10, mask_dilation_px=3)

    assert(json.loads(report.to_json()) == report.to_dict())

    with pytest.raises(EvaluationError):
        MetricsReport(3.0, 2.0, 0.5, 0.9, n_pixels=10, mask_dilation_px=3)

    with pytest.raises(EvaluationError):
        MetricsReport(1.0, 2.0, 0.5, 0.9, n_pixels=0, mask_dilation_px=3)


def test_format_table():

    table = format_table(REFERENCE_ACCURACY).splitlines()

    assert(table[0].split() == ['Model', 'MAE,', 'm', 'RMSE,', 'm', 'NMAD,', 'm', 'NCC'])
    assert(table[3].split() == ['Fused-cGAN', '1.79', '4.36', '0.67', '0.94'])
    assert(len({len(line) for line in table}) == 1)


def test_profile_constant():

    flat = dsm(np.full((10, 10), 4.0), gsd_m=0.5)
    profile = extract_profile(flat, ProfileLine((0, 0), (9, 9), samples=10))

    assert(profile.shape == (10, 2))
    assert(np.allclose(profile[:, 1], 4.0))
    assert(profile[0, 0] == 0.0)
    assert(profile[-1, 0] == pytest.approx(9 * np.sqrt(2) * 0.5))


def test_profile_grid_nodes(rng):

    values = rng.uniform(0, 10, size=(8, 8))
    raster = dsm(values)

    profile = extract_profile(raster, ProfileLine((1, 2), (5, 2), samples=5))

    # samples land on columns 1..5 of row 2
    assert(np.allclose(profile[:, 1], raster.height[2, 1:6].astype(np.float64), atol=1e-12))


def test_profile_across_gable():

    surface = np.zeros((30, 30))
    building = Building('gable', 5, 5, rows=20, cols=10, eave_m=8.0, rise_m=4.0)
    building.burn(surface)
    raster = dsm(surface)

    # across the ridge along row 15, pixel centres of the roof are columns 5..14
    profile = extract_profile(raster, ProfileLine((5, 15), (14, 15), samples=10))
    expected = building.heights()[10]

    assert(np.allclose(profile[:, 1], expected, atol=1e-5))
    assert(np.argmax(profile[:, 1]) in (4, 5))
    assert(profile[:, 1].max() == pytest.approx(8.0 + 4.0 * 4.5 / 5, abs=1e-5))


def test_profile_nodata_and_bounds():

    values = np.ones((5, 5))
    values[2, 2] = -9999.0
    raster = dsm(values, nodata=-9999.0)

    profile = extract_profile(raster, ProfileLine((0, 2), (4, 2), samples=5))
    assert(np.isnan(profile[2, 1]))
    # valid grid nodes on either side of the hole keep their exact value
    assert(profile[1, 1] == profile[3, 1] == 1.0)
    assert(profile[0, 1] == profile[4, 1] == 1.0)

    # between nodes, any weight on the hole voids the sample
    between = extract_profile(raster, ProfileLine((0, 2), (4, 2), samples=9))[:, 1]
    assert(np.isnan(between[3:6]).all())
    assert((between[[0, 1, 2, 6, 7, 8]] == 1.0).all())

    with pytest.raises(InputError):
        extract_profile(raster, ProfileLine((0, 0), (5, 0)))

    with pytest.raises(ParameterError):
        ProfileLine((0, 0), (1, 1), samples=1)
