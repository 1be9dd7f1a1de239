"""Feature-space meta-learning for worst-group robustness on frozen embeddings.

A linear softmax head is repaired post hoc: learnable support embeddings,
initialized from frozen training features, are meta-optimized so that a
few gradient steps of the head on them reduce loss on the hardest
validation examples.  Improves worst-group accuracy under spurious
correlations without group annotations.
"""

from .errors import (
    ConfigError,
    DivergenceError,
    FormatError,
    HsfmError,
    ValidationError,
)
from .featurestore import (
    DatasetSplit,
    FeatureDataset,
    group_sizes,
    read_features,
    write_features,
)
from .hardset import HardSet, build_hard_set, hard_set_loss
from .linhead import (
    EvalReport,
    LinearHead,
    batch_logits,
    batch_loss_and_grads,
    cross_entropy,
    erm_train,
    evaluate,
    logits,
    loss_grad_logits,
    predict_classes,
    read_head,
    write_head,
)
from .metaopt import (
    HsfmConfig,
    InnerTape,
    SupportSet,
    TrainTrace,
    dfr_baseline,
    export_support,
    finite_diff_meta_gradient,
    hsfm_train,
    init_support,
    inner_adapt,
    meta_gradient,
)
from .synthgen import SynthConfig, bayes_core_accuracy, generate
from .estimators import DfrHeadClassifier, ErmHeadClassifier, HsfmClassifier

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DatasetSplit",
    "DfrHeadClassifier",
    "DivergenceError",
    "ErmHeadClassifier",
    "EvalReport",
    "FeatureDataset",
    "FormatError",
    "HardSet",
    "HsfmClassifier",
    "HsfmConfig",
    "HsfmError",
    "InnerTape",
    "LinearHead",
    "SupportSet",
    "SynthConfig",
    "TrainTrace",
    "ValidationError",
    "batch_logits",
    "batch_loss_and_grads",
    "bayes_core_accuracy",
    "build_hard_set",
    "cross_entropy",
    "dfr_baseline",
    "erm_train",
    "evaluate",
    "export_support",
    "finite_diff_meta_gradient",
    "generate",
    "group_sizes",
    "hard_set_loss",
    "hsfm_train",
    "init_support",
    "inner_adapt",
    "logits",
    "loss_grad_logits",
    "meta_gradient",
    "predict_classes",
    "read_features",
    "read_head",
    "write_features",
    "write_head",
]
