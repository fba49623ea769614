import pytest
import torch

from vqadistill.data import DataConfig, build_dataset_from_config
from vqadistill.models import ModelConfig

# Small geometry shared by the fast training tests.
TINY_GEOMETRY = dict(frames=2, height=8, width=8,
                     tubelet_t=1, tubelet_h=4, tubelet_w=4)


@pytest.fixture(scope="session")
def tiny_teacher_config():
    return ModelConfig(family="vit", embed_dim=8, depth=2, num_heads=2,
                       **TINY_GEOMETRY)


@pytest.fixture(scope="session")
def tiny_student_config():
    return ModelConfig(family="vit", embed_dim=4, depth=2, num_heads=2,
                       **TINY_GEOMETRY)


@pytest.fixture(scope="session")
def tiny_cnn_config():
    return ModelConfig(family="cnn3d", embed_dim=4, depth=2,
                       frames=2, height=8, width=8)


@pytest.fixture(scope="session")
def tiny_data_config():
    return DataConfig(num_contents=4, strengths_per_family=2,
                      source_frames=4, source_height=16, source_width=16,
                      crop_frames=2, crop_height=8, crop_width=8,
                      block_size=4)


@pytest.fixture(scope="session")
def tiny_split(tiny_data_config):
    return build_dataset_from_config(tiny_data_config, seed=0)


@pytest.fixture(autouse=True)
def _two_threads():
    torch.set_num_threads(2)
