"""Self-check of the reverse-accumulated meta-gradient against finite
differences of the forward unroll, over randomized small instances."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .hardset import HardSet
from .linhead import LinearHead
from .metaopt import SupportSet, finite_diff_meta_gradient, inner_adapt, meta_gradient

DIMS = (2, 6, 16)
CLASS_COUNTS = (2, 3)
ADAPT_STEPS = (1, 2, 3, 5)
ALPHAS = (0.01, 0.1)


@dataclass(frozen=True)
class GradCheckCase:
    dim: int
    class_count: int
    support_size: int
    hard_size: int
    adapt_steps: int
    alpha: float
    max_rel_error: float
    passed: bool

    def describe(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (
            f"[{status}] d={self.dim} C={self.class_count} s={self.support_size} "
            f"hard={self.hard_size} steps={self.adapt_steps} lr={self.alpha} "
            f"max_rel_err={self.max_rel_error:.3e}"
        )


@dataclass(frozen=True)
class GradCheckReport:
    cases: tuple[GradCheckCase, ...]
    tolerance: float
    floor: float
    zero_unroll_exact: bool
    elapsed_seconds: float

    @property
    def all_passed(self) -> bool:
        return self.zero_unroll_exact and all(c.passed for c in self.cases)

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "floor": self.floor,
            "zero_unroll_exact": self.zero_unroll_exact,
            "elapsed_seconds": self.elapsed_seconds,
            "all_passed": self.all_passed,
            "cases": [
                {
                    "dim": c.dim,
                    "class_count": c.class_count,
                    "support_size": c.support_size,
                    "hard_size": c.hard_size,
                    "adapt_steps": c.adapt_steps,
                    "alpha": c.alpha,
                    "max_rel_error": c.max_rel_error,
                    "passed": c.passed,
                }
                for c in self.cases
            ],
        }


def random_instance(rng: np.random.Generator) -> tuple[LinearHead, SupportSet, HardSet, int, float]:
    """One random small instance: head, balanced support, hard set."""
    dim = int(rng.choice(DIMS))
    class_count = int(rng.choice(CLASS_COUNTS))
    support_size = int(rng.integers(class_count, 13))
    hard_size = int(rng.integers(2, 9))
    adapt_steps = int(rng.choice(ADAPT_STEPS))
    alpha = float(rng.choice(ALPHAS))

    head = LinearHead(0.7 * rng.standard_normal((class_count, dim)),
                      0.7 * rng.standard_normal(class_count))
    labels = rng.permutation(np.arange(support_size) % class_count)
    embeddings = rng.standard_normal((support_size, dim))
    sup = SupportSet(
        embeddings=embeddings,
        labels=labels,
        source_rows=np.arange(support_size),
        initial_embeddings=embeddings.copy(),
        class_count=class_count,
    )
    hard = HardSet(
        features=rng.standard_normal((hard_size, dim)),
        labels=rng.integers(0, class_count, size=hard_size),
        source_rows=np.arange(hard_size),
        losses_at_selection=np.zeros(hard_size),
        class_count=class_count,
    )
    return head, sup, hard, adapt_steps, alpha


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def run_suite(
    num_instances: int = 20,
    seed: int = 20250,
    eps: float = 1e-4,
    tolerance: float = 1e-4,
    floor: float = 1e-7,
    hessian_sign: float = 1.0,
) -> GradCheckReport:
    """Compare reverse-mode and finite-difference meta-gradients on
    ``num_instances`` random instances, plus the zero-unroll identity."""
    rng = np.random.default_rng(seed)
    started = time.perf_counter()
    cases = []
    for _ in range(num_instances):
        head, sup, hard, adapt_steps, alpha = random_instance(rng)
        _, tape = inner_adapt(head, sup, adapt_steps, alpha)
        analytic = meta_gradient(tape, sup, hard, hessian_sign=hessian_sign)
        numeric = finite_diff_meta_gradient(head, sup, hard, adapt_steps, alpha, eps)
        err = max_relative_error(analytic, numeric, floor)
        cases.append(
            GradCheckCase(
                dim=sup.dim,
                class_count=sup.class_count,
                support_size=sup.size,
                hard_size=hard.size,
                adapt_steps=adapt_steps,
                alpha=alpha,
                max_rel_error=err,
                passed=err < tolerance,
            )
        )

    head, sup, hard, _, alpha = random_instance(rng)
    _, tape = inner_adapt(head, sup, 0, alpha)
    zero_grad = meta_gradient(tape, sup, hard, hessian_sign=hessian_sign)
    zero_exact = bool(np.all(zero_grad == 0.0))

    return GradCheckReport(
        cases=tuple(cases),
        tolerance=tolerance,
        floor=floor,
        zero_unroll_exact=zero_exact,
        elapsed_seconds=time.perf_counter() - started,
    )
