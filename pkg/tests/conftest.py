import pytest

from path import Path

from wnet_dsm.synthgen import SceneSpec, DegradationSpec, build_dataset
from wnet_dsm.trainer import TrainConfig, train

# 12 scenes split 10 / 1 / 1
N_SCENES = 12


@pytest.fixture
def scene_spec():

    return SceneSpec(rows=64, cols=64, n_buildings=3, footprint_px=(8, 16))


@pytest.fixture
def degradation():

    return DegradationSpec()


@pytest.fixture
def dataset(tmp_path, scene_spec, degradation):

    root = Path(tmp_path) / 'data'
    build_dataset(root, N_SCENES, scene_spec, degradation, seed=0)

    return root


@pytest.fixture
def tiny_config():

    return TrainConfig(epochs=1,
                       batch_size=5,
                       patch_size=64,
                       base_width=4,
                       n_levels=6,
                       fusion_width=8,
                       checkpoint_every=1,
                       deterministic=True)


@pytest.fixture
def trained(tmp_path, dataset, tiny_config):

    return train(tiny_config, dataset, Path(tmp_path) / 'run')
