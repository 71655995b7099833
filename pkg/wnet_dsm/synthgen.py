"""
Procedural stand-in for paired stereo DSM / PAN / LoD2 training data.

A scene is flat terrain at 0 m with prism buildings carrying exact roof
geometry (flat, gable, hip or a flat zigzag footprint). The stereo DSM is
derived from the observed surface by blurring walls, adding noise, growing
trees and dropping pixels; the PAN image is a hillshade of the sharp surface.
"""

import json

from dataclasses import dataclass, field, asdict
from typing import Dict, List, NamedTuple, Tuple

import numpy as np

from logbook import Logger
from path import Path
from scipy import ndimage

from .errors import ParameterError, FormatError
from .raster_core import RasterGrid, NormSpec, write_raster
from .utils import atomic_write_json
from . import preferences

ROOF_TYPES = ('flat', 'gable', 'hip', 'zigzag')
RIDGE_RISE_M = (2.0, 6.0)
VEG_RADIUS_PX = (3.0, 8.0)
PLACEMENT_RETRIES = 100
PLACEMENT_GAP_PX = 2
NODATA = -9999.0

GROUND_ALBEDO = 0.2
ROOF_ALBEDO = 0.8

SPLIT_FRACTIONS = (0.8, 0.1, 0.1)
RASTER_NAMES = ('gt', 'stereo', 'pan', 'mask')

logger = Logger('synthgen')


@dataclass(frozen=True)
class SceneSpec:

    rows: int = 256
    cols: int = 256
    gsd_m: float = 0.5
    n_buildings: int = 8
    roof_mix: Dict[str, float] = field(default_factory=lambda: {'flat': 0.25,
                                                               'gable': 0.35,
                                                               'hip': 0.3,
                                                               'zigzag': 0.1})
    height_range: Tuple[float, float] = (6.0, 20.0)
    footprint_px: Tuple[int, int] = (12, 40)
    omit_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):

        if self.rows < 1 or self.cols < 1 or not self.gsd_m > 0:
            raise ParameterError('Scene dimensions and GSD must be positive')
        if self.n_buildings < 0:
            raise ParameterError('n_buildings must be non-negative')

        unknown = set(self.roof_mix) - set(ROOF_TYPES)
        if unknown:
            raise ParameterError(f'Unknown roof types {sorted(unknown)}')
        if any(p < 0 for p in self.roof_mix.values()) \
           or abs(sum(self.roof_mix.values()) - 1.0) > 1e-9:
            raise ParameterError('Roof mix probabilities must be non-negative and sum to 1')

        lo, hi = self.height_range
        if not 0 < lo <= hi:
            raise ParameterError(f'Invalid eave height range {self.height_range}')

        smallest, largest = self.footprint_px
        if not 4 <= smallest <= largest:
            raise ParameterError(f'Invalid footprint size range {self.footprint_px}')
        if smallest + 2 * PLACEMENT_GAP_PX > min(self.rows, self.cols):
            raise ParameterError('Buildings do not fit inside the raster')

        if not 0 <= self.omit_rate < 1:
            raise ParameterError('omit_rate must lie in [0, 1)')

    def to_dict(self):

        return asdict(self)

    @classmethod
    def from_parameters(cls, params, seed=0):

        d = preferences.to_dict(params)

        return cls(rows=d['rows'],
                   cols=d['cols'],
                   gsd_m=d['gsd_m'],
                   n_buildings=d['n_buildings'],
                   roof_mix=d['roof_mix'],
                   height_range=(d['height_min'], d['height_max']),
                   footprint_px=(d['footprint_min'], d['footprint_max']),
                   omit_rate=d['omit_rate'],
                   seed=seed)


@dataclass(frozen=True)
class DegradationSpec:

    noise_sigma_m: float = 0.5
    smooth_radius_px: int = 2
    dropout_rate: float = 0.02
    veg_blob_count: int = 4
    veg_height_m: float = 8.0
    nodata: float = NODATA
    seed: int = 0

    def __post_init__(self):

        if self.noise_sigma_m < 0:
            raise ParameterError('noise_sigma_m must be non-negative')
        if not 0 <= self.dropout_rate < 1:
            raise ParameterError('dropout_rate must lie in [0, 1)')
        if self.smooth_radius_px < 0 or self.veg_blob_count < 0 or self.veg_height_m < 0:
            raise ParameterError('Degradation sizes and counts must be non-negative')

    def to_dict(self):

        return asdict(self)

    @classmethod
    def from_parameters(cls, params, seed=0):

        return cls(**preferences.to_dict(params), seed=seed)


@dataclass
class Building:

    roof: str
    row: int
    col: int
    rows: int
    cols: int
    eave_m: float
    rise_m: float
    omitted: bool = False

    @property
    def ridge_along_rows(self):

        return self.rows >= self.cols

    def footprint(self):
        """Boolean mask over the bounding box."""

        mask = np.zeros((self.rows, self.cols), dtype=bool)

        if self.roof == 'zigzag':
            # three overlapping steps, each a third of the width
            q = self.rows / 4.0
            edges = np.linspace(0, self.cols, 4).round().astype(int)
            for i in range(3):
                r0, r1 = int(round(i * q)), int(round(i * q + 2 * q))
                mask[r0:r1, edges[i]:edges[i + 1]] = True
        else:
            mask[:] = True

        return mask

    def heights(self):
        """Roof heights at pixel centres of the bounding box, in meters."""

        rr, cc = np.mgrid[0:self.rows, 0:self.cols] + 0.5

        to_top, to_bottom = rr, self.rows - rr
        to_left, to_right = cc, self.cols - cc

        if self.roof == 'gable':
            if self.ridge_along_rows:
                d, half = np.minimum(to_left, to_right), self.cols / 2.0
            else:
                d, half = np.minimum(to_top, to_bottom), self.rows / 2.0
            h = self.eave_m + self.rise_m * d / half
        elif self.roof == 'hip':
            d = np.minimum(np.minimum(to_left, to_right), np.minimum(to_top, to_bottom))
            half = min(self.rows, self.cols) / 2.0
            h = self.eave_m + self.rise_m * d / half
        else:
            h = np.full((self.rows, self.cols), self.eave_m)

        return h

    def burn(self, surface):

        window = surface[self.row:self.row + self.rows, self.col:self.col + self.cols]
        footprint = self.footprint()
        window[footprint] = self.heights()[footprint]

        return footprint

    def to_dict(self):

        return asdict(self)


class Scene(NamedTuple):

    gt_dsm: RasterGrid
    footprints: RasterGrid
    buildings: List[Building]
    surface: RasterGrid


def _place(rng, spec, occupied):

    lo, hi = spec.footprint_px
    hi = min(hi, spec.rows - 2 * PLACEMENT_GAP_PX, spec.cols - 2 * PLACEMENT_GAP_PX)

    for _ in range(PLACEMENT_RETRIES):
        h, w = rng.integers(lo, hi + 1, size=2)
        r = rng.integers(PLACEMENT_GAP_PX, spec.rows - h - PLACEMENT_GAP_PX + 1)
        c = rng.integers(PLACEMENT_GAP_PX, spec.cols - w - PLACEMENT_GAP_PX + 1)

        g = PLACEMENT_GAP_PX
        if not occupied[r - g:r + h + g, c - g:c + w + g].any():
            occupied[r:r + h, c:c + w] = True
            return int(r), int(c), int(h), int(w)

    return None


def generate_scene(spec: SceneSpec) -> Scene:

    rng = np.random.default_rng(spec.seed)

    roofs = [r for r in ROOF_TYPES if r in spec.roof_mix]
    probs = np.array([spec.roof_mix[r] for r in roofs])

    gt = np.zeros((spec.rows, spec.cols))
    surface = np.zeros_like(gt)
    footprints = np.zeros(gt.shape, dtype=bool)
    occupied = np.zeros(gt.shape, dtype=bool)

    buildings = []
    for _ in range(spec.n_buildings):
        roof = roofs[rng.choice(len(roofs), p=probs)]
        placement = _place(rng, spec, occupied)

        if placement is None:
            continue

        r, c, h, w = placement
        building = Building(roof=roof, row=r, col=c, rows=h, cols=w,
                            eave_m=float(rng.uniform(*spec.height_range)),
                            rise_m=0.0 if roof in ('flat', 'zigzag') else float(rng.uniform(*RIDGE_RISE_M)),
                            omitted=bool(rng.random() < spec.omit_rate))

        building.burn(surface)
        if not building.omitted:
            footprint = building.burn(gt)
            footprints[r:r + h, c:c + w] |= footprint

        buildings.append(building)

    if len(buildings) < spec.n_buildings:
        logger.warn(f'placed {len(buildings)} of {spec.n_buildings} buildings (seed {spec.seed})')

    return Scene(gt_dsm=RasterGrid(gt, gsd_m=spec.gsd_m, kind='dsm'),
                 footprints=RasterGrid(footprints, gsd_m=spec.gsd_m, kind='mask'),
                 buildings=buildings,
                 surface=RasterGrid(surface, gsd_m=spec.gsd_m, kind='dsm'))


def _vegetation(rng, values, buildings, count, height_m):

    rows, cols = values.shape
    near = ndimage.binary_dilation(buildings, iterations=10) & ~buildings
    candidates = np.argwhere(near) if near.any() else np.argwhere(np.ones_like(near))

    rr, cc = np.mgrid[0:rows, 0:cols]

    for _ in range(count):
        radius = rng.uniform(*VEG_RADIUS_PX)
        r, c = candidates[rng.integers(len(candidates))]
        cap = height_m * (1.0 - ((rr - r) ** 2 + (cc - c) ** 2) / radius ** 2)
        np.maximum(values, cap, out=values)

    return values


def degrade_to_stereo_dsm(gt_dsm: RasterGrid, spec: DegradationSpec) -> RasterGrid:
    """Blur, noise, vegetation and dropout, applied in that order."""

    if gt_dsm.kind != 'dsm':
        raise ParameterError(f'Expected a dsm raster, got {gt_dsm.kind}')

    rng = np.random.default_rng(spec.seed)
    values = gt_dsm.height.astype(np.float64)
    buildings = values > 0

    if spec.smooth_radius_px > 0:
        values = ndimage.uniform_filter(values, size=2 * spec.smooth_radius_px + 1, mode='nearest')

    if spec.noise_sigma_m > 0:
        values = values + rng.normal(0.0, spec.noise_sigma_m, size=values.shape)

    if spec.veg_blob_count > 0:
        values = _vegetation(rng, values, buildings, spec.veg_blob_count, spec.veg_height_m)

    nodata = gt_dsm.nodata
    if spec.dropout_rate > 0:
        values[rng.random(values.shape) < spec.dropout_rate] = spec.nodata
        nodata = spec.nodata

    return gt_dsm.with_values(values, nodata=nodata)


def hillshade(raster: RasterGrid, sun_azimuth_deg=315.0, sun_elevation_deg=45.0) -> np.ndarray:
    """
    Lambertian shading in [0, 1] of a height grid.

    Azimuth is clockwise from north (up the rows), elevation from the horizon.
    """

    if not 0 < sun_elevation_deg <= 90:
        raise ParameterError(f'Sun elevation must lie in (0, 90], got {sun_elevation_deg}')

    values = raster.height.astype(np.float64)

    d_row, d_col = np.gradient(values, raster.gsd_m)
    dz_dx, dz_dy = d_col, -d_row
    norm = np.sqrt(dz_dx ** 2 + dz_dy ** 2 + 1.0)

    az, el = np.radians(sun_azimuth_deg), np.radians(sun_elevation_deg)
    light = (np.sin(az) * np.cos(el), np.cos(az) * np.cos(el), np.sin(el))

    shade = (-dz_dx * light[0] - dz_dy * light[1] + light[2]) / norm

    return np.clip(shade, 0.0, 1.0)


def render_pan(gt_dsm: RasterGrid, sun_azimuth_deg=315.0, sun_elevation_deg=45.0,
               albedo_noise=0.1, seed=0) -> RasterGrid:
    """Hillshade of ``gt_dsm`` times a per-building albedo."""

    shade = hillshade(gt_dsm, sun_azimuth_deg, sun_elevation_deg)

    labels, n = ndimage.label(gt_dsm.height > 0)
    rng = np.random.default_rng(seed)
    roof_albedo = ROOF_ALBEDO + albedo_noise * (rng.random(n) - 0.5)
    albedo = np.concatenate(([GROUND_ALBEDO], roof_albedo))[labels]

    return gt_dsm.with_values(np.clip(albedo * shade, 0.0, 1.0), kind='pan', nodata=None)


def split_ids(ids, seed):

    order = [ids[i] for i in np.random.default_rng(seed).permutation(len(ids))]
    n_val = int(round(SPLIT_FRACTIONS[1] * len(ids)))
    n_test = int(round(SPLIT_FRACTIONS[2] * len(ids)))
    n_train = len(ids) - n_val - n_test

    return {'train': sorted(order[:n_train]),
            'val': sorted(order[n_train:n_train + n_val]),
            'test': sorted(order[n_train + n_val:])}


def build_dataset(out_dir, count, scene_spec: SceneSpec, degradation: DegradationSpec,
                  sun_azimuth_deg=315.0, sun_elevation_deg=45.0, albedo_noise=0.1,
                  seed=0, on_scene=None):
    """
    Synthesize ``count`` scenes below ``out_dir`` and write ``dataset.json``.

    Per-scene seeds are derived from ``seed``; the seeds stored in the specs
    are ignored.
    """

    out_dir = Path(out_dir)
    out_dir.makedirs_p()

    seeds = np.random.SeedSequence(seed).generate_state(max(count, 1), dtype=np.uint64)[:count]

    scenes = {}
    lo, hi = np.inf, -np.inf

    for i, scene_seed in enumerate(int(s) for s in seeds):
        scene_id = f'scene_{i:04d}'
        scene = generate_scene(_reseed(scene_spec, scene_seed))
        stereo = degrade_to_stereo_dsm(scene.surface, _reseed(degradation, scene_seed + 1))
        pan = render_pan(scene.surface, sun_azimuth_deg, sun_elevation_deg,
                         albedo_noise, seed=scene_seed + 2)

        rasters = dict(zip(RASTER_NAMES, (scene.gt_dsm, stereo, pan, scene.footprints)))
        entry = {'seed': scene_seed,
                 'n_buildings': len(scene.buildings),
                 'buildings': [b.to_dict() for b in scene.buildings]}
        for name, raster in rasters.items():
            path = write_raster(raster, out_dir / 'scenes' / scene_id / name)
            entry[name] = str(out_dir.relpathto(path))

        for raster in (scene.gt_dsm, stereo):
            finite = raster.height[raster.valid]
            lo, hi = min(lo, finite.min()), max(hi, finite.max())

        scenes[scene_id] = entry
        if on_scene:
            on_scene(scene_id, scene, rasters)

    if count == 0:
        lo, hi = 0.0, scene_spec.height_range[1] + RIDGE_RISE_M[1]
    hi = max(hi, lo + 1.0)

    manifest = {'seed': seed,
                'gsd_m': scene_spec.gsd_m,
                'norm_spec': {'height': NormSpec(float(lo), float(hi), 'height').to_dict(),
                              'intensity': NormSpec(0.0, 1.0, 'intensity').to_dict()},
                'splits': split_ids(sorted(scenes), seed),
                'scene_spec': scene_spec.to_dict(),
                'degradation_spec': degradation.to_dict(),
                'scenes': scenes}

    atomic_write_json(out_dir / 'dataset.json', manifest)
    logger.info(f'wrote {count} scenes to {out_dir}')

    return manifest


def _reseed(spec, seed):

    return type(spec)(**{**spec.to_dict(), 'seed': seed})


def read_manifest(path):
    """Load ``dataset.json``; raster paths are resolved against its directory."""

    path = Path(path)
    if path.isdir():
        path = path / 'dataset.json'
    if not path.exists():
        raise FileNotFoundError(f'Dataset manifest {path} not found')

    try:
        manifest = json.loads(path.read_text())
    except ValueError as e:
        raise FormatError(f'Malformed dataset manifest {path}: {e}')

    for key in ('norm_spec', 'gsd_m', 'splits', 'scenes'):
        if key not in manifest:
            raise FormatError(f'Dataset manifest {path} lacks {key!r}')

    root = path.abspath().dirname()
    for entry in manifest['scenes'].values():
        for name in RASTER_NAMES:
            entry[name] = root / entry[name]

    manifest['root'] = root

    return manifest


def manifest_norm_specs(manifest):

    specs = manifest['norm_spec']

    return NormSpec.from_dict(specs['height']), NormSpec.from_dict(specs['intensity'])
