"""Linear softmax head on frozen features.

Forward pass, cross-entropy with analytic first derivatives, full-batch
gradient-descent training, grouped evaluation (worst-group accuracy),
and a small binary checkpoint format.

Heads are immutable snapshots: every training step returns a new value.
All arithmetic is float64 and sequential, so results are independent of
thread scheduling; checkpoints round through float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DivergenceError, FormatError, ValidationError
from .featurestore import FeatureDataset
from .validation import (
    check_count,
    check_index_vector,
    check_matrix,
    check_vector,
    owned_array,
)

HEAD_MAGIC = b"HSFH"
HEAD_FORMAT_VERSION = 1
_HEAD_HEADER = struct.Struct("<4sIII")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LinearHead:
    """Affine logit map: weights (C, d) and bias (C,), both float64."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        w = owned_array(self.weights, np.float64)
        b = owned_array(self.bias, np.float64)
        if w.ndim != 2:
            raise ValidationError(f"weights: expected a 2-D array, got ndim={w.ndim}")
        if b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise ValidationError(
                f"bias: expected shape ({w.shape[0]},), got {b.shape}"
            )
        if (w.size and not np.isfinite(w).all()) or (b.size and not np.isfinite(b).all()):
            raise ValidationError("head parameters contain non-finite values")
        object.__setattr__(self, "weights", _freeze(w))
        object.__setattr__(self, "bias", _freeze(b))

    @classmethod
    def zeros(cls, class_count: int, dim: int) -> "LinearHead":
        return cls(np.zeros((class_count, dim)), np.zeros(class_count))

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LinearHead):
            return NotImplemented
        return np.array_equal(self.weights, other.weights) and np.array_equal(
            self.bias, other.bias
        )


@dataclass(frozen=True)
class EvalReport:
    """Grouped accuracy summary of one head on one dataset.

    ``per_group_accuracy`` is NaN for groups with zero rows; those groups
    are excluded from the worst-group minimum.
    """

    per_group_accuracy: np.ndarray
    worst_group_accuracy: float
    average_accuracy: float
    per_group_counts: np.ndarray
    mean_loss: float

    def to_dict(self) -> dict:
        per_group = [
            None if count == 0 else float(acc)
            for acc, count in zip(self.per_group_accuracy, self.per_group_counts)
        ]
        return {
            "per_group_accuracy": per_group,
            "worst_group_accuracy": float(self.worst_group_accuracy),
            "average_accuracy": float(self.average_accuracy),
            "per_group_counts": [int(c) for c in self.per_group_counts],
            "mean_loss": float(self.mean_loss),
        }


class BatchLossGrads(NamedTuple):
    loss: float
    grad_weights: np.ndarray
    grad_bias: np.ndarray
    example_losses: np.ndarray


def logits(head: LinearHead, h) -> np.ndarray:
    """Pre-softmax scores W h + b for a single embedding."""
    h = check_vector(h, "embedding", size=head.dim)
    return head.weights @ h + head.bias


def batch_logits(head: LinearHead, features) -> np.ndarray:
    features = check_matrix(features, "features", dim=head.dim)
    return features @ head.weights.T + head.bias


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(np.asarray(z, dtype=np.float64)))


def cross_entropy(z, y: int) -> float:
    """Negative log softmax probability of class ``y``; always >= 0."""
    z = check_vector(z, "logits")
    y = check_count(y, "class index")
    if y >= z.shape[0]:
        raise ValidationError(f"class index {y} out of range [0, {z.shape[0]})")
    return float(-_log_softmax(z)[y])


def loss_grad_logits(z, y: int) -> np.ndarray:
    """Gradient of cross_entropy in logit space: softmax(z) - onehot(y)."""
    z = check_vector(z, "logits")
    y = check_count(y, "class index")
    if y >= z.shape[0]:
        raise ValidationError(f"class index {y} out of range [0, {z.shape[0]})")
    grad = softmax(z)
    grad[y] -= 1.0
    return grad


def onehot(labels: np.ndarray, class_count: int) -> np.ndarray:
    eye = np.eye(class_count)
    return eye[np.asarray(labels, dtype=np.int64)]


def batch_loss_and_grads(head: LinearHead, features, labels) -> BatchLossGrads:
    """Mean cross-entropy and its exact gradients over a batch.

    Returns the mean loss, d(loss)/dW, d(loss)/db, and the per-example
    losses (in row order).
    """
    features = check_matrix(features, "features", dim=head.dim)
    n = features.shape[0]
    if n == 0:
        raise ValidationError("empty batch")
    labels = check_index_vector(labels, "labels", size=n, bound=head.class_count)
    z = features @ head.weights.T + head.bias
    log_p = _log_softmax(z)
    example_losses = -log_p[np.arange(n), labels]
    residual = np.exp(log_p)
    residual[np.arange(n), labels] -= 1.0
    grad_w = residual.T @ features / n
    grad_b = residual.mean(axis=0)
    return BatchLossGrads(float(example_losses.mean()), grad_w, grad_b, example_losses)


def clip_global_norm(
    grad_w: np.ndarray, grad_b: np.ndarray, max_norm: float
) -> tuple[np.ndarray, np.ndarray]:
    """Rescale the concatenated (grad_w, grad_b) to global L2 norm <= max_norm."""
    norm = float(np.sqrt(np.sum(grad_w * grad_w) + np.sum(grad_b * grad_b)))
    if norm <= max_norm:
        return grad_w, grad_b
    scale = max_norm / norm
    return grad_w * scale, grad_b * scale


def head_step(
    head: LinearHead,
    features,
    labels,
    lr: float,
    clip_norm: float | None = None,
    weight_decay: float = 0.0,
) -> tuple[LinearHead, float]:
    """One full-batch gradient step; returns the new head and the pre-step loss."""
    loss, grad_w, grad_b, _ = batch_loss_and_grads(head, features, labels)
    if weight_decay:
        grad_w = grad_w + weight_decay * head.weights
    if clip_norm is not None:
        grad_w, grad_b = clip_global_norm(grad_w, grad_b, clip_norm)
    return LinearHead(head.weights - lr * grad_w, head.bias - lr * grad_b), loss


def erm_train(
    head: LinearHead,
    ds: FeatureDataset,
    steps: int,
    lr: float,
    clip_norm: float | None = None,
    weight_decay: float = 0.0,
) -> LinearHead:
    """Plain full-batch gradient descent on mean cross-entropy.

    ``clip_norm`` caps the global L2 norm of the concatenated gradient
    before each step.  Raises DivergenceError (with the step index) if a
    non-finite loss appears.
    """
    check_count(steps, "steps")
    features = ds.features.astype(np.float64)
    labels = ds.labels
    for step in range(steps):
        try:
            head, loss = head_step(head, features, labels, lr, clip_norm, weight_decay)
        except ValidationError as exc:
            raise DivergenceError(f"non-finite head parameters at step {step}: {exc}") from exc
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at step {step}")
    return head


def predict_classes(head: LinearHead, features) -> np.ndarray:
    """Argmax-logit predictions; ties resolve to the lowest class index."""
    return np.argmax(batch_logits(head, features), axis=1)


def evaluate(head: LinearHead, ds: FeatureDataset) -> EvalReport:
    """Per-group accuracies, their minimum (worst-group), overall accuracy,
    and mean loss of ``head`` on ``ds``."""
    if ds.n == 0:
        raise ValidationError("cannot evaluate on an empty dataset")
    features = ds.features.astype(np.float64)
    z = features @ head.weights.T + head.bias
    log_p = _log_softmax(z)
    labels = ds.labels.astype(np.int64)
    correct = np.argmax(z, axis=1) == labels
    mean_loss = float(-log_p[np.arange(ds.n), labels].mean())

    counts = np.zeros(ds.group_count, dtype=np.int64)
    accuracy = np.full(ds.group_count, np.nan)
    groups = ds.groups.astype(np.int64)
    for g in range(ds.group_count):
        mask = groups == g
        counts[g] = int(mask.sum())
        if counts[g]:
            accuracy[g] = float(correct[mask].mean())
    worst = float(np.min(accuracy[counts > 0]))
    return EvalReport(
        per_group_accuracy=_freeze(accuracy),
        worst_group_accuracy=worst,
        average_accuracy=float(correct.mean()),
        per_group_counts=_freeze(counts),
        mean_loss=mean_loss,
    )


def write_head(path, head: LinearHead) -> None:
    """Checkpoint ``head`` (float32) with magic HSFH."""
    header = _HEAD_HEADER.pack(HEAD_MAGIC, HEAD_FORMAT_VERSION, head.class_count, head.dim)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(head.weights.astype("<f4").tobytes())
        fh.write(head.bias.astype("<f4").tobytes())


def read_head(path) -> LinearHead:
    data = Path(path).read_bytes()
    if len(data) < _HEAD_HEADER.size or data[:4] != HEAD_MAGIC:
        raise FormatError(f"{path}: not an HSFM head checkpoint")
    magic, version, class_count, dim = _HEAD_HEADER.unpack_from(data)
    if version != HEAD_FORMAT_VERSION:
        raise FormatError(
            f"{path}: unsupported head checkpoint version {version} "
            f"(expected {HEAD_FORMAT_VERSION})"
        )
    expected = class_count * dim * 4 + class_count * 4
    actual = len(data) - _HEAD_HEADER.size
    if actual != expected:
        raise FormatError(
            f"{path}: payload length mismatch: expected {expected} bytes, found {actual}"
        )
    offset = _HEAD_HEADER.size
    weights = np.frombuffer(data, dtype="<f4", count=class_count * dim, offset=offset)
    offset += class_count * dim * 4
    bias = np.frombuffer(data, dtype="<f4", count=class_count, offset=offset)
    return LinearHead(weights.reshape(class_count, dim).astype(np.float64),
                      bias.astype(np.float64))
