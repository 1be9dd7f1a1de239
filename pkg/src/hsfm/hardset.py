"""Selection of the highest-loss validation examples per class.

The hard set is rebuilt from scratch under the current head: per class,
the `per_class` examples with the largest cross-entropy loss, ties broken
by lower validation-row index, classes concatenated in ascending order.
Its features are frozen copies of validation embeddings; only the losses
change between refreshes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .featurestore import FeatureDataset
from .linhead import LinearHead, batch_loss_and_grads
from .validation import check_count, owned_array

logger = logging.getLogger(__name__)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class HardSet:
    """Frozen features and labels of the current top-loss validation rows.

    ``source_rows`` index into the validation dataset the set was built
    from; ``losses_at_selection`` are the losses that ranked them.
    """

    features: np.ndarray
    labels: np.ndarray
    source_rows: np.ndarray
    losses_at_selection: np.ndarray
    class_count: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", _freeze(owned_array(self.features, np.float64)))
        object.__setattr__(self, "labels", _freeze(owned_array(self.labels, np.int64)))
        object.__setattr__(self, "source_rows", _freeze(owned_array(self.source_rows, np.int64)))
        object.__setattr__(self, "losses_at_selection", _freeze(owned_array(self.losses_at_selection, np.float64)))

    @property
    def size(self) -> int:
        return self.labels.shape[0]


def build_hard_set(head: LinearHead, val: FeatureDataset, per_class: int) -> HardSet:
    """Top-``per_class`` highest-loss validation rows for every class.

    Classes with fewer rows contribute everything they have; classes
    absent from ``val`` contribute nothing (logged, not an error).
    """
    check_count(per_class, "per_class", minimum=1)
    if val.n == 0:
        raise ValidationError("cannot build a hard set from an empty validation set")
    losses = batch_loss_and_grads(head, val.features.astype(np.float64), val.labels).example_losses
    labels = val.labels.astype(np.int64)
    selected: list[np.ndarray] = []
    for c in range(val.class_count):
        rows = np.flatnonzero(labels == c)
        if rows.size == 0:
            logger.warning("class %d has no validation examples; hard set skips it", c)
            continue
        # rows are in ascending index order, so a stable sort on descending
        # loss breaks ties by lower validation-row index
        order = np.argsort(-losses[rows], kind="stable")
        selected.append(rows[order[:per_class]])
    chosen = np.concatenate(selected)
    return HardSet(
        features=val.features[chosen].astype(np.float64),
        labels=labels[chosen],
        source_rows=chosen,
        losses_at_selection=losses[chosen],
        class_count=val.class_count,
    )


def hard_set_loss(head: LinearHead, hard: HardSet) -> float:
    """Mean cross-entropy of ``head`` on the hard set."""
    if hard.size == 0:
        raise ValidationError("hard set is empty")
    return batch_loss_and_grads(head, hard.features, hard.labels).loss
