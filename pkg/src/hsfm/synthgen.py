"""Parametric synthetic spurious-correlation benchmarks in feature space.

Each sample belongs to a (class, environment) group.  Its embedding is a
Gaussian whose mean encodes the class on a block of core dimensions and
the environment on a block of spurious dimensions; the remaining
dimensions are pure noise.  Imbalanced training counts make the
environment predictive of the class, reproducing the shortcut that
worst-group-robust training is meant to repair, without any images or
backbones involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .featurestore import DatasetSplit, FeatureDataset
from .validation import check_count, check_nonnegative, check_positive


@dataclass(frozen=True)
class SynthConfig:
    """Shape and scale of one synthetic benchmark.

    ``*_group_counts`` are (class_count, env_count) matrices of sample
    counts per group; group id is ``y * env_count + a``.
    """

    class_count: int
    env_count: int
    d_core: int
    d_spur: int
    d_noise: int
    mu_core: float
    mu_spur: float
    sigma: float
    train_group_counts: np.ndarray
    val_group_counts: np.ndarray
    test_group_counts: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        check_count(self.class_count, "class_count", minimum=2)
        check_count(self.env_count, "env_count", minimum=1)
        for name in ("d_core", "d_spur", "d_noise"):
            check_count(getattr(self, name), name, minimum=0)
        if self.dim < 1:
            raise ValidationError("d_core + d_spur + d_noise must be >= 1")
        check_nonnegative(self.mu_core, "mu_core")
        check_nonnegative(self.mu_spur, "mu_spur")
        check_positive(self.sigma, "sigma")
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise ValidationError(f"seed: expected an integer, got {self.seed!r}")
        for name in ("train_group_counts", "val_group_counts", "test_group_counts"):
            counts = np.asarray(getattr(self, name), dtype=np.int64)
            if counts.shape != (self.class_count, self.env_count):
                raise ValidationError(
                    f"{name}: expected shape ({self.class_count}, {self.env_count}), "
                    f"got {counts.shape}"
                )
            if (counts < 0).any():
                raise ValidationError(f"{name}: counts must be >= 0")
            counts.setflags(write=False)
            object.__setattr__(self, name, counts)

    @property
    def dim(self) -> int:
        return self.d_core + self.d_spur + self.d_noise

    @property
    def group_count(self) -> int:
        return self.class_count * self.env_count

    def to_dict(self) -> dict:
        return {
            "class_count": self.class_count,
            "env_count": self.env_count,
            "d_core": self.d_core,
            "d_spur": self.d_spur,
            "d_noise": self.d_noise,
            "mu_core": self.mu_core,
            "mu_spur": self.mu_spur,
            "sigma": self.sigma,
            "train_group_counts": self.train_group_counts.tolist(),
            "val_group_counts": self.val_group_counts.tolist(),
            "test_group_counts": self.test_group_counts.tolist(),
            "seed": int(self.seed),
        }


def _direction_patterns(k: int, dims: int) -> np.ndarray:
    """Unit direction pattern per class/environment value, shape (k, dims).

    Two values get the symmetric -1/+1 construction on every dimension;
    more values get one-hot blocks so each value owns a slice of dims.
    """
    patterns = np.zeros((k, dims))
    if dims == 0:
        return patterns
    if k == 1:
        patterns[0] = 1.0
    elif k == 2:
        patterns[0] = -1.0
        patterns[1] = 1.0
    else:
        for value, block in enumerate(np.array_split(np.arange(dims), k)):
            patterns[value, block] = 1.0
    return patterns


def _group_mean(cfg: SynthConfig, core: np.ndarray, spur: np.ndarray, y: int, a: int) -> np.ndarray:
    return np.concatenate(
        [cfg.mu_core * core[y], cfg.mu_spur * spur[a], np.zeros(cfg.d_noise)]
    )


def _sample_part(cfg: SynthConfig, counts: np.ndarray, rng: np.random.Generator) -> FeatureDataset:
    core = _direction_patterns(cfg.class_count, cfg.d_core)
    spur = _direction_patterns(cfg.env_count, cfg.d_spur)
    blocks, labels, groups = [], [], []
    for y in range(cfg.class_count):
        for a in range(cfg.env_count):
            n_group = int(counts[y, a])
            mean = _group_mean(cfg, core, spur, y, a)
            draws = mean + cfg.sigma * rng.standard_normal((n_group, cfg.dim))
            blocks.append(draws.astype(np.float32))
            labels.append(np.full(n_group, y, dtype=np.uint32))
            groups.append(np.full(n_group, y * cfg.env_count + a, dtype=np.uint32))
    features = np.concatenate(blocks) if blocks else np.zeros((0, cfg.dim), dtype=np.float32)
    return FeatureDataset(
        features,
        np.concatenate(labels),
        np.concatenate(groups),
        cfg.class_count,
        cfg.group_count,
    )


def generate(cfg: SynthConfig) -> DatasetSplit:
    """Draw the full train/val/test split described by ``cfg``.

    Pure function of the config: the same config (seed included) always
    produces bit-identical datasets.
    """
    if int(cfg.train_group_counts.sum()) == 0:
        raise ValidationError("train_group_counts: zero total training samples")
    train_seed, val_seed, test_seed = np.random.SeedSequence(cfg.seed).spawn(3)
    return DatasetSplit(
        train=_sample_part(cfg, cfg.train_group_counts, np.random.default_rng(train_seed)),
        val=_sample_part(cfg, cfg.val_group_counts, np.random.default_rng(val_seed)),
        test=_sample_part(cfg, cfg.test_group_counts, np.random.default_rng(test_seed)),
    )


def bayes_core_accuracy(cfg: SynthConfig) -> float:
    """Accuracy of the optimal linear classifier restricted to core dims.

    Only defined for the symmetric two-class construction, where it is
    the same for every group: Phi(mu_core * sqrt(d_core) / sigma).
    """
    if cfg.class_count != 2:
        raise ValidationError(
            f"bayes_core_accuracy requires class_count=2, got {cfg.class_count}"
        )
    z = cfg.mu_core * math.sqrt(cfg.d_core) / cfg.sigma
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))
