import numpy as np
import pytest

from hsfm.featurestore import FeatureDataset
from hsfm.linhead import LinearHead, erm_train
from hsfm.presets import SYNTH_WATERBIRDS_DATA, SYNTH_WATERBIRDS_ERM
from hsfm.synthgen import SynthConfig, generate


@pytest.fixture(scope="session")
def canonical_config():
    return SynthConfig(**SYNTH_WATERBIRDS_DATA)


@pytest.fixture(scope="session")
def canonical_split(canonical_config):
    return generate(canonical_config)


@pytest.fixture(scope="session")
def erm_head(canonical_split):
    head = LinearHead.zeros(canonical_split.train.class_count, canonical_split.train.dim)
    return erm_train(
        head, canonical_split.train, SYNTH_WATERBIRDS_ERM["steps"], SYNTH_WATERBIRDS_ERM["lr"]
    )


def random_dataset(rng, n=None, d=None, class_count=None, group_count=None) -> FeatureDataset:
    n = int(rng.integers(0, 40)) if n is None else n
    d = int(rng.integers(1, 9)) if d is None else d
    class_count = int(rng.integers(2, 5)) if class_count is None else class_count
    group_count = int(rng.integers(1, 5)) if group_count is None else group_count
    features = rng.standard_normal((n, d)).astype(np.float32)
    labels = rng.integers(0, class_count, size=n).astype(np.uint32)
    groups = rng.integers(0, group_count, size=n).astype(np.uint32)
    return FeatureDataset(features, labels, groups, class_count, group_count)
