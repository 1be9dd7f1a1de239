"""Bilevel optimization of support embeddings in a frozen feature space.

The inner loop adapts the linear head on a small set of learnable
support embeddings for a fixed number of full-batch gradient steps,
recording every iterate on a tape.  The outer loop differentiates the
adapted head's loss on the hard set back through those steps — exact
reverse accumulation, second-order terms included — and moves the
embeddings against that gradient.  Training alternates hard-set
refreshes, meta steps, and plain head updates on the current support.

Everything here is float64 and deterministic given the config seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, ValidationError
from .featurestore import DatasetSplit, FeatureDataset, write_features
from .hardset import HardSet, build_hard_set, hard_set_loss
from .linhead import (
    LinearHead,
    batch_loss_and_grads,
    erm_train,
    evaluate,
    head_step,
    onehot,
)
from .validation import check_count, check_positive, owned_array

logger = logging.getLogger(__name__)

OUTER_OPTIMIZERS = ("plain-gd", "adaptive")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(eq=False)
class SupportSet:
    """Learnable embeddings with fixed, class-balanced labels.

    ``embeddings`` is the only mutable array in the package: meta steps
    rewrite it in place.  ``initial_embeddings`` keeps the frozen
    features the set was initialized from.
    """

    embeddings: np.ndarray
    labels: np.ndarray
    source_rows: np.ndarray
    initial_embeddings: np.ndarray
    class_count: int

    def __post_init__(self) -> None:
        self.embeddings = owned_array(self.embeddings, np.float64)
        self.labels = _freeze(owned_array(self.labels, np.int64))
        self.source_rows = _freeze(owned_array(self.source_rows, np.int64))
        self.initial_embeddings = _freeze(owned_array(self.initial_embeddings, np.float64))
        if self.size == 0:
            raise ValidationError("support set must be non-empty")
        if self.embeddings.shape != self.initial_embeddings.shape:
            raise ValidationError("embeddings and initial_embeddings must share a shape")
        if not np.isfinite(self.embeddings).all():
            raise ValidationError("support embeddings contain non-finite values")

    @property
    def size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def row_displacement(self) -> np.ndarray:
        """Per-row L2 distance between current and initial embeddings."""
        return np.linalg.norm(self.embeddings - self.initial_embeddings, axis=1)


@dataclass(frozen=True, eq=False)
class InnerTape:
    """Recorded head iterates of one inner adaptation.

    ``iterates[0]`` is the pre-adaptation head and ``iterates[-1]`` the
    adapted one; the recurrence is re-checkable from the stored support
    snapshot, learning rate, and clip setting.
    """

    iterates: tuple[LinearHead, ...]
    alpha: float
    clip_norm: float | None
    support_embeddings: np.ndarray
    support_labels: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.iterates) - 1

    @property
    def adapted(self) -> LinearHead:
        return self.iterates[-1]


@dataclass(frozen=True)
class HsfmConfig:
    """Hyperparameters of one training run.

    ``meta_steps`` may be 0, which skips the outer loop entirely and
    reduces training to plain head updates on the frozen support.
    """

    support_per_class: int
    adapt_steps: int
    inner_lr: float
    outer_lr: float
    meta_steps: int
    hard_per_class: int
    epochs: int
    seed: int = 0
    clip_norm: float | None = None
    outer_optimizer: str = "plain-gd"
    first_order: bool = False

    def __post_init__(self) -> None:
        check_count(self.support_per_class, "support_per_class", minimum=1)
        check_count(self.adapt_steps, "adapt_steps", minimum=0)
        check_count(self.meta_steps, "meta_steps", minimum=0)
        check_count(self.hard_per_class, "hard_per_class", minimum=1)
        check_count(self.epochs, "epochs", minimum=1)
        check_positive(self.inner_lr, "inner_lr")
        check_positive(self.outer_lr, "outer_lr")
        if self.clip_norm is not None:
            check_positive(self.clip_norm, "clip_norm")
        if self.outer_optimizer not in OUTER_OPTIMIZERS:
            raise ValidationError(
                f"outer_optimizer: expected one of {OUTER_OPTIMIZERS}, got {self.outer_optimizer!r}"
            )

    def to_dict(self) -> dict:
        return {
            "support_per_class": self.support_per_class,
            "adapt_steps": self.adapt_steps,
            "inner_lr": self.inner_lr,
            "outer_lr": self.outer_lr,
            "meta_steps": self.meta_steps,
            "hard_per_class": self.hard_per_class,
            "epochs": self.epochs,
            "seed": int(self.seed),
            "clip_norm": self.clip_norm,
            "outer_optimizer": self.outer_optimizer,
            "first_order": self.first_order,
        }


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    hard_loss_before: float
    hard_loss_after: float
    val_worst_group_accuracy: float
    val_average_accuracy: float
    mean_meta_update_norm: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "hard_loss_before": self.hard_loss_before,
            "hard_loss_after": self.hard_loss_after,
            "val_worst_group_accuracy": self.val_worst_group_accuracy,
            "val_average_accuracy": self.val_average_accuracy,
            "mean_meta_update_norm": self.mean_meta_update_norm,
        }


@dataclass
class TrainTrace:
    """One record per epoch of a training run."""

    records: list[EpochRecord] = field(default_factory=list)

    def to_dicts(self) -> list[dict]:
        return [r.to_dict() for r in self.records]


def init_support(train: FeatureDataset, per_class: int, seed: int) -> SupportSet:
    """Sample ``per_class`` rows per class and copy their frozen features.

    Sampling is uniform without replacement, falling back to replacement
    (with a warning) for classes smaller than ``per_class``.
    """
    check_count(per_class, "per_class", minimum=1)
    rng = np.random.default_rng(seed)
    labels = train.labels.astype(np.int64)
    picked: list[np.ndarray] = []
    for c in range(train.class_count):
        rows = np.flatnonzero(labels == c)
        if rows.size == 0:
            raise ValidationError(f"class {c} has no training examples to sample from")
        replace_rows = rows.size < per_class
        if replace_rows:
            logger.warning(
                "class %d has %d rows < per_class=%d; sampling with replacement",
                c, rows.size, per_class,
            )
        picked.append(np.sort(rng.choice(rows, size=per_class, replace=replace_rows)))
    source_rows = np.concatenate(picked)
    frozen = train.features[source_rows].astype(np.float64)
    return SupportSet(
        embeddings=frozen.copy(),
        labels=labels[source_rows],
        source_rows=source_rows,
        initial_embeddings=frozen,
        class_count=train.class_count,
    )


def inner_adapt(
    head: LinearHead,
    sup: SupportSet,
    adapt_steps: int,
    alpha: float,
    clip_norm: float | None = None,
) -> tuple[LinearHead, InnerTape]:
    """Adapt the head on the support embeddings, recording every iterate."""
    check_count(adapt_steps, "adapt_steps")
    if head.dim != sup.dim:
        raise ValidationError(
            f"head dimension {head.dim} does not match support dimension {sup.dim}"
        )
    iterates = [head]
    for step in range(adapt_steps):
        try:
            head, loss = head_step(head, sup.embeddings, sup.labels, alpha, clip_norm)
        except ValidationError as exc:
            raise DivergenceError(f"non-finite head parameters at step {step}: {exc}") from exc
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite inner loss at step {step}")
        iterates.append(head)
    tape = InnerTape(
        iterates=tuple(iterates),
        alpha=float(alpha),
        clip_norm=clip_norm,
        support_embeddings=_freeze(sup.embeddings.copy()),
        support_labels=sup.labels,
    )
    return head, tape


def _outer_loss_grads(head: LinearHead, hard: HardSet) -> tuple[np.ndarray, np.ndarray]:
    _, grad_w, grad_b, _ = batch_loss_and_grads(head, hard.features, hard.labels)
    return grad_w, grad_b


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def meta_gradient(
    tape: InnerTape,
    sup: SupportSet,
    hard: HardSet,
    first_order: bool = False,
    hessian_sign: float = 1.0,
) -> np.ndarray:
    """Exact gradient of the adapted head's hard-set loss w.r.t. the
    support embeddings, by reverse accumulation through the tape.

    The head adjoint starts at the hard-set loss gradient of the final
    iterate.  Walking the recorded steps backward, each step contributes
    the mixed second derivative of the inner loss (embeddings x head)
    applied to the adjoint, and propagates the adjoint through
    ``identity - lr * inner-loss Hessian``.  With ``first_order`` both
    curvature products are skipped, which for this architecture leaves
    no dependence at all: the result is exactly zero (diagnostic only).

    ``hessian_sign`` is a self-test hook for the gradient checker; leave
    it at +1.
    """
    if tape.support_embeddings.shape != sup.embeddings.shape:
        raise ValidationError(
            f"tape was recorded for support of shape {tape.support_embeddings.shape}, "
            f"got {sup.embeddings.shape}"
        )
    if not np.array_equal(tape.support_embeddings, sup.embeddings):
        raise ValidationError("tape does not match the current support embeddings")
    if hard.features.shape[1] != sup.dim:
        raise ValidationError(
            f"hard-set dimension {hard.features.shape[1]} does not match support "
            f"dimension {sup.dim}"
        )
    grad_h = np.zeros_like(sup.embeddings)
    if tape.steps == 0 or first_order:
        return grad_h

    embeddings = sup.embeddings
    targets = onehot(sup.labels, tape.iterates[0].class_count)
    size = sup.size
    alpha = tape.alpha

    adj_w, adj_b = _outer_loss_grads(tape.adapted, hard)
    for t in range(tape.steps - 1, -1, -1):
        head_t = tape.iterates[t]
        z = embeddings @ head_t.weights.T + head_t.bias
        probs = _softmax_rows(z)
        residual = probs - targets

        # adjoint seen by the inner gradient, through the clip Jacobian
        # c * (I - ghat ghat^T) when the recorded step was rescaled
        vec_w, vec_b = adj_w, adj_b
        if tape.clip_norm is not None:
            grad_w = residual.T @ embeddings / size
            grad_b = residual.mean(axis=0)
            norm = float(np.sqrt(np.sum(grad_w**2) + np.sum(grad_b**2)))
            if norm > tape.clip_norm:
                scale = tape.clip_norm / norm
                unit_w, unit_b = grad_w / norm, grad_b / norm
                along = float(np.sum(unit_w * adj_w) + np.sum(unit_b * adj_b))
                vec_w = scale * (adj_w - along * unit_w)
                vec_b = scale * (adj_b - along * unit_b)

        # curvature core: rows are (diag(p) - p p^T) @ (V h_i + v_b)
        direction = embeddings @ vec_w.T + vec_b
        weighted = probs * direction
        curvature = weighted - probs * weighted.sum(axis=1, keepdims=True)
        curvature *= hessian_sign

        grad_h -= (alpha / size) * (residual @ vec_w + curvature @ head_t.weights)
        adj_w = adj_w - (alpha / size) * (curvature.T @ embeddings)
        adj_b = adj_b - (alpha / size) * curvature.sum(axis=0)
    return grad_h


def unrolled_hard_loss(
    head: LinearHead,
    embeddings: np.ndarray,
    labels: np.ndarray,
    hard: HardSet,
    adapt_steps: int,
    alpha: float,
    clip_norm: float | None = None,
) -> float:
    """Hard-set loss of the head adapted on the given embeddings.

    Forward-only: shared by the finite-difference oracle and the descent
    checks, independent of the reverse-accumulation code path.
    """
    for _ in range(adapt_steps):
        head, _ = head_step(head, embeddings, labels, alpha, clip_norm)
    return hard_set_loss(head, hard)


def finite_diff_meta_gradient(
    head: LinearHead,
    sup: SupportSet,
    hard: HardSet,
    adapt_steps: int,
    alpha: float,
    eps: float = 1e-4,
    clip_norm: float | None = None,
) -> np.ndarray:
    """Central finite differences of the full unroll-and-evaluate pipeline
    per support-embedding entry.  Intended for small instances only."""
    grad = np.zeros_like(sup.embeddings)
    base = sup.embeddings
    for i in range(base.shape[0]):
        for j in range(base.shape[1]):
            bumped = base.copy()
            bumped[i, j] = base[i, j] + eps
            up = unrolled_hard_loss(head, bumped, sup.labels, hard, adapt_steps, alpha, clip_norm)
            bumped[i, j] = base[i, j] - eps
            down = unrolled_hard_loss(head, bumped, sup.labels, hard, adapt_steps, alpha, clip_norm)
            grad[i, j] = (up - down) / (2.0 * eps)
    return grad


class _PlainOuter:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, grad: np.ndarray) -> np.ndarray:
        return -self.lr * grad


class _AdamOuter:
    """Adam on the support embeddings; state persists across meta steps."""

    def __init__(self, lr: float, shape, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return -self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def hsfm_train(
    head0: LinearHead,
    split: DatasetSplit,
    cfg: HsfmConfig,
) -> tuple[LinearHead, SupportSet, TrainTrace]:
    """Alternating training: refresh the hard set, take meta steps on the
    support embeddings, then update the persistent head on them.

    Each epoch: (1) rebuild the hard set from the validation split under
    the persistent head; (2) ``meta_steps`` times, adapt a throwaway copy
    of the head on the current embeddings, backpropagate the hard-set
    loss to the embeddings, and update them; (3) advance the persistent
    head with ``adapt_steps`` plain steps on the final embeddings.
    Deterministic given ``cfg.seed``.
    """
    sup = init_support(split.train, cfg.support_per_class, cfg.seed)
    if head0.dim != sup.dim or head0.class_count != split.train.class_count:
        raise ValidationError(
            f"head shape ({head0.class_count}, {head0.dim}) does not match data "
            f"(C={split.train.class_count}, d={split.train.dim})"
        )
    if cfg.outer_optimizer == "adaptive":
        outer = _AdamOuter(cfg.outer_lr, sup.embeddings.shape)
    else:
        outer = _PlainOuter(cfg.outer_lr)

    head = head0
    trace = TrainTrace()
    for epoch in range(cfg.epochs):
        hard = build_hard_set(head, split.val, cfg.hard_per_class)
        if hard.size == 0:
            raise ValidationError(f"epoch {epoch}: hard set is empty")

        update_norms: list[float] = []
        loss_before: float | None = None
        try:
            for k in range(cfg.meta_steps):
                adapted, tape = inner_adapt(
                    head, sup, cfg.adapt_steps, cfg.inner_lr, cfg.clip_norm
                )
                if k == 0:
                    loss_before = hard_set_loss(adapted, hard)
                grad = meta_gradient(tape, sup, hard, first_order=cfg.first_order)
                delta = outer.step(grad)
                sup.embeddings += delta
                if not np.isfinite(sup.embeddings).all():
                    raise DivergenceError("support embeddings became non-finite")
                update_norms.append(float(np.linalg.norm(delta)))
            adapted, _ = inner_adapt(head, sup, cfg.adapt_steps, cfg.inner_lr, cfg.clip_norm)
            loss_after = hard_set_loss(adapted, hard)
            if loss_before is None:
                loss_before = loss_after
        except DivergenceError as exc:
            raise DivergenceError(f"epoch {epoch}, meta phase: {exc}") from exc

        try:
            for _ in range(cfg.adapt_steps):
                try:
                    head, loss = head_step(
                        head, sup.embeddings, sup.labels, cfg.inner_lr, cfg.clip_norm
                    )
                except ValidationError as exc:
                    raise DivergenceError(f"non-finite head parameters: {exc}") from exc
                if not np.isfinite(loss):
                    raise DivergenceError("non-finite loss")
        except DivergenceError as exc:
            raise DivergenceError(f"epoch {epoch}, head phase: {exc}") from exc

        report = evaluate(head, split.val)
        trace.records.append(
            EpochRecord(
                epoch=epoch,
                hard_loss_before=float(loss_before),
                hard_loss_after=float(loss_after),
                val_worst_group_accuracy=report.worst_group_accuracy,
                val_average_accuracy=report.average_accuracy,
                mean_meta_update_norm=float(np.mean(update_norms)) if update_norms else 0.0,
            )
        )
    return head, sup, trace


def dfr_baseline(
    head0: LinearHead,
    val: FeatureDataset,
    steps: int,
    lr: float,
    balance: str = "by-group",
    seed: int = 0,
    clip_norm: float | None = None,
) -> LinearHead:
    """Retrain the head on a balanced validation subset.

    ``by-group`` subsamples every group to the smallest group's size
    (all groups must be represented); ``by-class`` balances classes and
    works when group annotations are absent.
    """
    if val.n == 0:
        raise ValidationError("validation set is empty")
    if balance not in ("by-group", "by-class"):
        raise ValidationError(f"balance: expected 'by-group' or 'by-class', got {balance!r}")
    rng = np.random.default_rng(seed)
    if balance == "by-group":
        ids = val.groups.astype(np.int64)
        id_count = val.group_count
        kind = "group"
    else:
        ids = val.labels.astype(np.int64)
        id_count = val.class_count
        kind = "class"
    buckets = [np.flatnonzero(ids == i) for i in range(id_count)]
    empty = [i for i, b in enumerate(buckets) if b.size == 0]
    if empty:
        raise ValidationError(f"{kind} {empty[0]} has no validation examples to balance on")
    quota = min(b.size for b in buckets)
    picked = np.concatenate(
        [np.sort(rng.choice(b, size=quota, replace=False)) for b in buckets]
    )
    subset = val.take(picked)
    return erm_train(head0, subset, steps, lr, clip_norm)


def export_support(sup: SupportSet, path) -> tuple[str, str]:
    """Write the initial and current embeddings as two HSFM-FS files.

    ``<path>.init`` holds the frozen starting features, ``<path>.opt``
    the optimized ones; both carry the support labels and a single
    all-zero group column.  Returns the two paths written.
    """
    groups = np.zeros(sup.size, dtype=np.uint32)
    init_path, opt_path = f"{path}.init", f"{path}.opt"
    for out, matrix in ((init_path, sup.initial_embeddings), (opt_path, sup.embeddings)):
        ds = FeatureDataset(
            matrix.astype(np.float32),
            sup.labels.astype(np.uint32),
            groups,
            sup.class_count,
            1,
        )
        write_features(out, ds)
    return init_path, opt_path
