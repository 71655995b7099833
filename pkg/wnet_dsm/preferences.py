"""
Configuration trees shared by the config files and the command line.

Every configurable concern is a pyqtgraph ``Parameter`` tree; config files
(JSON or YAML) are applied on top of the defaults and command line flags on
top of the config file.
"""

import argparse
import json

from copy import deepcopy

import yaml

from path import Path
from pyqtgraph.parametertree import Parameter

from .errors import ConfigError

TRAINING = [
    {'name': 'epochs', 'type': 'int', 'value': 200},
    {'name': 'batch_size', 'type': 'int', 'value': 5},
    {'name': 'lr_alpha', 'type': 'float', 'value': 0.0002},
    {'name': 'adam_beta1', 'type': 'float', 'value': 0.5},
    {'name': 'adam_beta2', 'type': 'float', 'value': 0.999},
    {'name': 'lambda_l1', 'type': 'float', 'value': 100.0},
    {'name': 'seed', 'type': 'int', 'value': 0},
    {'name': 'checkpoint_every', 'type': 'int', 'value': 10},
    {'name': 'patch_size', 'type': 'int', 'value': 256},
    {'name': 'architecture', 'type': 'list', 'limits': ['wnet', 'unet'], 'value': 'wnet'},
    {'name': 'base_width', 'type': 'int', 'value': 64},
    {'name': 'n_levels', 'type': 'int', 'value': 8},
    {'name': 'fusion_width', 'type': 'int', 'value': 64},
    {'name': 'dropout_rate', 'type': 'float', 'value': 0.5},
    {'name': 'crops_per_scene', 'type': 'int', 'value': 1},
    {'name': 'augment', 'type': 'bool', 'value': True},
    {'name': 'num_workers', 'type': 'int', 'value': 0},
    {'name': 'deterministic', 'type': 'bool', 'value': False},
    {'name': 'device', 'type': 'str', 'value': 'cpu'},
]

SCENE = [
    {'name': 'rows', 'type': 'int', 'value': 256},
    {'name': 'cols', 'type': 'int', 'value': 256},
    {'name': 'gsd_m', 'type': 'float', 'value': 0.5},
    {'name': 'n_buildings', 'type': 'int', 'value': 8},
    {'name': 'roof_mix', 'type': 'group', 'children': [
        {'name': 'flat', 'type': 'float', 'value': 0.25},
        {'name': 'gable', 'type': 'float', 'value': 0.35},
        {'name': 'hip', 'type': 'float', 'value': 0.3},
        {'name': 'zigzag', 'type': 'float', 'value': 0.1}]},
    {'name': 'height_min', 'type': 'float', 'value': 6.0},
    {'name': 'height_max', 'type': 'float', 'value': 20.0},
    {'name': 'footprint_min', 'type': 'int', 'value': 12},
    {'name': 'footprint_max', 'type': 'int', 'value': 40},
    {'name': 'omit_rate', 'type': 'float', 'value': 0.0},
]

DEGRADATION = [
    {'name': 'noise_sigma_m', 'type': 'float', 'value': 0.5},
    {'name': 'smooth_radius_px', 'type': 'int', 'value': 2},
    {'name': 'dropout_rate', 'type': 'float', 'value': 0.02},
    {'name': 'veg_blob_count', 'type': 'int', 'value': 4},
    {'name': 'veg_height_m', 'type': 'float', 'value': 8.0},
]

RENDERING = [
    {'name': 'sun_azimuth_deg', 'type': 'float', 'value': 315.0},
    {'name': 'sun_elevation_deg', 'type': 'float', 'value': 45.0},
    {'name': 'albedo_noise', 'type': 'float', 'value': 0.1},
]

SCHEMAS = {'Training': TRAINING,
           'Scene': SCENE,
           'Degradation': DEGRADATION,
           'Rendering': RENDERING}

_COERCE = {'int': int, 'float': float, 'str': str}


def create(name):

    return Parameter.create(name=name, type='group', children=deepcopy(SCHEMAS[name]))


def read_config_file(path):

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f'Config file {path} not found')

    text = path.read_text()
    try:
        if path.ext.lower() in ('.yaml', '.yml'):
            rv = yaml.safe_load(text)
        else:
            rv = json.loads(text)
    except (ValueError, yaml.YAMLError) as e:
        raise ConfigError(f'Cannot parse config file {path}: {e}')

    if rv is None:
        return {}
    if not isinstance(rv, dict):
        raise ConfigError(f'Config file {path} must hold a key-value mapping')

    return rv


def _coerce(param, value):

    kind = param.type()

    if kind == 'bool':
        if not isinstance(value, bool):
            raise ConfigError(f'{param.name()} expects true/false, got {value!r}')
        return value
    elif kind == 'list':
        limits = param.opts.get('limits')
        if value not in limits:
            raise ConfigError(f'{param.name()} must be one of {limits}, got {value!r}')
        return value

    try:
        rv = _COERCE[kind](value)
    except (TypeError, ValueError):
        raise ConfigError(f'{param.name()} expects a {kind}, got {value!r}')

    if kind == 'int' and (isinstance(value, bool) or rv != value):
        raise ConfigError(f'{param.name()} expects an integer, got {value!r}')

    return rv


def apply_config(params, mapping):
    """Set values of ``params`` from a (possibly nested) mapping."""

    names = {c.name(): c for c in params.children()}

    for key, value in mapping.items():
        if key not in names:
            raise ConfigError(f'Unknown {params.name()} setting {key!r}')

        child = names[key]
        if child.type() == 'group':
            if not isinstance(value, dict):
                raise ConfigError(f'{key} expects a mapping')
            apply_config(child, value)
        else:
            child.setValue(_coerce(child, value))

    return params


def add_arguments(parser, params, skip=()):
    """Expose every leaf of ``params`` as an optional ``--flag`` defaulting to None."""

    group = parser.add_argument_group(params.name())

    for child in params.children():
        if child.type() == 'group' or child.name() in skip:
            continue

        flag = '--' + child.name().replace('_', '-')
        kind = child.type()

        if kind == 'bool':
            group.add_argument(flag, dest=child.name(), default=None,
                               action=argparse.BooleanOptionalAction)
        elif kind == 'list':
            group.add_argument(flag, dest=child.name(), default=None,
                               choices=child.opts.get('limits'))
        else:
            group.add_argument(flag, dest=child.name(), default=None,
                               type=_COERCE[kind],
                               help=f'default: {child.value()}')

    return group


def apply_overrides(params, namespace):

    for child in params.children():
        value = getattr(namespace, child.name(), None)
        if child.type() != 'group' and value is not None:
            child.setValue(_coerce(child, value))

    return params


def to_dict(params):

    return {c.name(): to_dict(c) if c.type() == 'group' else c.value()
            for c in params.children()}


def load_config(path, *trees):
    """
    Apply a config file to one or more trees. Sectioned files key their
    settings by tree name; a flat file is only accepted for a single tree.
    """

    mapping = read_config_file(path)
    by_name = {t.name(): t for t in trees}

    if any(key in SCHEMAS for key in mapping):
        for key, section in mapping.items():
            if key not in by_name:
                raise ConfigError(f'Section {key!r} does not apply here, expected {list(by_name)}')
            if not isinstance(section, dict):
                raise ConfigError(f'Section {key!r} must be a mapping')
            apply_config(by_name[key], section)
    elif len(trees) == 1:
        apply_config(trees[0], mapping)
    else:
        raise ConfigError(f'{path} must be sectioned by {list(by_name)}')

    return trees


def defaults(schema):

    return {c['name']: defaults(c['children']) if c['type'] == 'group' else c['value']
            for c in schema}


def reset(params):

    return apply_config(params, defaults(SCHEMAS[params.name()]))
