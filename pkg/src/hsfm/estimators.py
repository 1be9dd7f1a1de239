"""Scikit-learn style estimators wrapping the training routines.

Thin adapters so the heads compose with sklearn pipelines, grid search,
and ``clone()``; the numerical work lives in linhead and metaopt.
Labels may be arbitrary (they are encoded to contiguous class indices);
group ids, where accepted, must already be integers in ``[0, G)``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from . import linhead, metaopt
from .errors import ValidationError
from .featurestore import DatasetSplit, FeatureDataset
from .validation import check_index_vector, check_matrix


def _encode_labels(y) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValidationError(f"labels: expected a 1-D array, got ndim={y.ndim}")
    classes, encoded = np.unique(y, return_inverse=True)
    if classes.shape[0] < 2:
        raise ValidationError("need at least two classes")
    return classes, encoded.astype(np.uint32)


def _as_dataset(X, y_encoded, class_count, groups=None, group_count=None) -> FeatureDataset:
    X = check_matrix(X, "X")
    if groups is None:
        groups = np.zeros(X.shape[0], dtype=np.uint32)
        group_count = 1
    else:
        groups = check_index_vector(groups, "groups", size=X.shape[0], bound=group_count)
    return FeatureDataset(
        X.astype(np.float32), y_encoded, groups.astype(np.uint32), class_count, group_count
    )


class _HeadClassifierBase(ClassifierMixin, BaseEstimator):
    """Shared predict surface over a fitted ``head_``."""

    def _check_fitted(self):
        if not hasattr(self, "head_"):
            raise NotFittedError(
                f"This {type(self).__name__} instance is not fitted yet; call fit first."
            )

    def decision_function(self, X):
        self._check_fitted()
        return linhead.batch_logits(self.head_, check_matrix(X, "X", dim=self.n_features_in_))

    def predict_proba(self, X):
        return linhead.softmax(self.decision_function(X))

    def predict(self, X):
        self._check_fitted()
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


class ErmHeadClassifier(_HeadClassifierBase):
    """Plain full-batch gradient-descent softmax head."""

    def __init__(self, steps=200, lr=0.1, clip_norm=None, weight_decay=0.0):
        self.steps = steps
        self.lr = lr
        self.clip_norm = clip_norm
        self.weight_decay = weight_decay

    def fit(self, X, y):
        X = check_matrix(X, "X")
        self.classes_, encoded = _encode_labels(y)
        ds = _as_dataset(X, encoded, len(self.classes_))
        head = linhead.LinearHead.zeros(ds.class_count, ds.dim)
        self.head_ = linhead.erm_train(
            head, ds, self.steps, self.lr, self.clip_norm, self.weight_decay
        )
        self.n_features_in_ = ds.dim
        return self


class DfrHeadClassifier(_HeadClassifierBase):
    """Head retrained on a balanced subset of the data it is fitted on.

    Fit it on held-out (validation) data; pass ``groups`` to balance by
    group, otherwise ``balance='by-class'`` balances classes.
    """

    def __init__(self, steps=200, lr=0.1, balance="by-group", seed=0, clip_norm=None):
        self.steps = steps
        self.lr = lr
        self.balance = balance
        self.seed = seed
        self.clip_norm = clip_norm

    def fit(self, X, y, groups=None):
        X = check_matrix(X, "X")
        self.classes_, encoded = _encode_labels(y)
        group_count = None
        if groups is not None:
            groups = np.asarray(groups)
            group_count = int(groups.max()) + 1 if groups.size else 1
        elif self.balance == "by-group":
            raise ValidationError("balance='by-group' requires fit(..., groups=...)")
        ds = _as_dataset(X, encoded, len(self.classes_), groups, group_count)
        head = linhead.LinearHead.zeros(ds.class_count, ds.dim)
        self.head_ = metaopt.dfr_baseline(
            head, ds, self.steps, self.lr, self.balance, self.seed, self.clip_norm
        )
        self.n_features_in_ = ds.dim
        return self


class HsfmClassifier(_HeadClassifierBase):
    """Support-embedding meta-learning on top of an ERM-trained head.

    ``fit(X, y, X_val=..., y_val=...)`` first trains the head with plain
    gradient descent on (X, y), then runs the bilevel procedure against
    the validation split.  No group annotations are needed; the hard set
    is selected purely by loss.
    """

    def __init__(
        self,
        support_per_class=16,
        adapt_steps=10,
        inner_lr=1e-2,
        outer_lr=3e-2,
        meta_steps=10,
        hard_per_class=32,
        epochs=20,
        seed=0,
        clip_norm=None,
        outer_optimizer="adaptive",
        first_order=False,
        erm_steps=200,
        erm_lr=0.1,
    ):
        self.support_per_class = support_per_class
        self.adapt_steps = adapt_steps
        self.inner_lr = inner_lr
        self.outer_lr = outer_lr
        self.meta_steps = meta_steps
        self.hard_per_class = hard_per_class
        self.epochs = epochs
        self.seed = seed
        self.clip_norm = clip_norm
        self.outer_optimizer = outer_optimizer
        self.first_order = first_order
        self.erm_steps = erm_steps
        self.erm_lr = erm_lr

    def fit(self, X, y, X_val=None, y_val=None):
        if X_val is None or y_val is None:
            raise ValidationError(
                "HsfmClassifier.fit requires a validation split: fit(X, y, X_val=..., y_val=...)"
            )
        X = check_matrix(X, "X")
        X_val = check_matrix(X_val, "X_val", dim=X.shape[1])
        self.classes_, encoded = _encode_labels(y)
        y_val = np.asarray(y_val)
        val_encoded = np.searchsorted(self.classes_, y_val)
        if (val_encoded >= len(self.classes_)).any() or (
            self.classes_[np.clip(val_encoded, 0, len(self.classes_) - 1)] != y_val
        ).any():
            raise ValidationError("y_val contains labels not present in y")

        train = _as_dataset(X, encoded, len(self.classes_))
        val = _as_dataset(X_val, val_encoded.astype(np.uint32), len(self.classes_))
        split = DatasetSplit(train=train, val=val, test=val)

        head = linhead.erm_train(
            linhead.LinearHead.zeros(train.class_count, train.dim),
            train, self.erm_steps, self.erm_lr, self.clip_norm,
        )
        cfg = metaopt.HsfmConfig(
            support_per_class=self.support_per_class,
            adapt_steps=self.adapt_steps,
            inner_lr=self.inner_lr,
            outer_lr=self.outer_lr,
            meta_steps=self.meta_steps,
            hard_per_class=self.hard_per_class,
            epochs=self.epochs,
            seed=self.seed,
            clip_norm=self.clip_norm,
            outer_optimizer=self.outer_optimizer,
            first_order=self.first_order,
        )
        self.head_, self.support_, self.trace_ = metaopt.hsfm_train(head, split, cfg)
        self.n_features_in_ = train.dim
        return self
