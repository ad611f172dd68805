import pytest

from sgseg.config import DatasetGenConfig, ExperimentConfig, OptimConfig
from sgseg.network import NetworkConfig
from sgseg.phantom import PhantomConfig, generate_dataset


def tiny_experiment_config(manifest_path, **optim_overrides):
    """A fast desk-scale config for integration tests: small volumes, small net."""
    optim = dict(lr=2e-3, weight_decay=1e-4, epochs=3, batch_size=2)
    optim.update(optim_overrides)
    return ExperimentConfig(
        network=NetworkConfig(stage_channels=(4, 8), num_classes=4),
        optim=OptimConfig(**optim),
        phantom=PhantomConfig(volume_shape=(32, 32, 16), seed=5),
        dataset=DatasetGenConfig(n=8, split=(0.5, 0.25, 0.25)),
        manifest=str(manifest_path),
        seed=5,
    )


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """8 phantom cases at 32x32x16, split 4/2/2, shared across integration tests."""
    data_dir = tmp_path_factory.mktemp("tiny_data")
    cfg = PhantomConfig(volume_shape=(32, 32, 16), seed=5)
    generate_dataset(8, cfg, (0.5, 0.25, 0.25), data_dir)
    return data_dir / "manifest.json"
