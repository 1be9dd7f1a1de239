"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
The export-integration criterion for the optional embedding exporter
lives in that component's own test suite (embed-export/), since every
criterion here must run without it.
"""

import json
import time

import numpy as np
import pytest

from hsfm.cli import main as cli_main
from hsfm.errors import FormatError
from hsfm.featurestore import read_features, write_features
from hsfm.gradcheck import max_relative_error, random_instance, run_suite
from hsfm.hardset import build_hard_set
from hsfm.linhead import LinearHead, batch_loss_and_grads, evaluate
from hsfm.metaopt import (
    HsfmConfig,
    hsfm_train,
    dfr_baseline,
    inner_adapt,
    meta_gradient,
    unrolled_hard_loss,
)
from hsfm.presets import HSFM_PRESETS, SYNTH_WATERBIRDS_ERM
from hsfm.synthgen import bayes_core_accuracy

from conftest import random_dataset

BENCH_SEED = 3


def report(criterion: str, detail: str = ""):
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {criterion}: PASS{suffix}")


@pytest.fixture(scope="module")
def benchmark(canonical_split, erm_head):
    """ERM, trained run, and DFR on the canonical benchmark, timed."""
    started = time.perf_counter()
    erm_report = evaluate(erm_head, canonical_split.test)
    cfg = HsfmConfig(**HSFM_PRESETS["synth-waterbirds"], seed=BENCH_SEED)
    head, sup, trace = hsfm_train(erm_head, canonical_split, cfg)
    hsfm_report = evaluate(head, canonical_split.test)
    dfr = dfr_baseline(
        erm_head,
        canonical_split.val,
        SYNTH_WATERBIRDS_ERM["steps"],
        SYNTH_WATERBIRDS_ERM["lr"],
        "by-group",
        seed=BENCH_SEED,
    )
    dfr_report = evaluate(dfr, canonical_split.test)
    elapsed = time.perf_counter() - started
    return {
        "erm": erm_report,
        "hsfm": hsfm_report,
        "dfr": dfr_report,
        "elapsed": elapsed,
        "config": cfg,
    }


def test_criterion_1_meta_gradient_exactness():
    suite = run_suite(num_instances=20, seed=20250, eps=1e-4, tolerance=1e-4, floor=1e-7)
    worst = max(c.max_rel_error for c in suite.cases)
    failures = [c.describe() for c in suite.cases if not c.passed]
    assert not failures, failures
    assert len(suite.cases) >= 20
    assert suite.elapsed_seconds < 10.0
    report("C1 meta-gradient exactness", f"20 instances, max_rel_err={worst:.2e}, "
                                         f"{suite.elapsed_seconds:.2f}s")


def test_criterion_2_zero_unroll_identity():
    rng = np.random.default_rng(99)
    for _ in range(5):
        head, sup, hard, _, alpha = random_instance(rng)
        _, tape = inner_adapt(head, sup, 0, alpha)
        grad = meta_gradient(tape, sup, hard)
        assert grad.shape == sup.embeddings.shape
        assert np.all(grad == 0.0), "zero-unroll meta-gradient must be exactly zero"
    report("C2 zero-unroll identity", "exact zero matrix on 5 instances")


def test_criterion_3_descent_property():
    rng = np.random.default_rng(314)
    checked = 0
    while checked < 10:
        head, sup, hard, adapt_steps, alpha = random_instance(rng)
        _, tape = inner_adapt(head, sup, adapt_steps, alpha)
        grad = meta_gradient(tape, sup, hard)
        if np.linalg.norm(grad) == 0.0:
            continue
        base = unrolled_hard_loss(head, sup.embeddings, sup.labels, hard, adapt_steps, alpha)
        eta, decreased = 1.0, False
        for _ in range(60):
            trial = unrolled_hard_loss(
                head, sup.embeddings - eta * grad, sup.labels, hard, adapt_steps, alpha
            )
            if trial < base:
                decreased = True
                break
            eta *= 0.5
        assert decreased, f"no descent found by halving eta (instance {checked})"
        checked += 1
    report("C3 descent property", "strict decrease on 10 instances with halved step")


def test_criterion_4_synthetic_robustness_gain(benchmark, canonical_config):
    bayes = bayes_core_accuracy(canonical_config)
    erm, hsfm = benchmark["erm"], benchmark["hsfm"]
    assert bayes == pytest.approx(0.987, abs=1e-3)
    assert erm.worst_group_accuracy <= bayes - 0.10, (
        f"ERM WGA {erm.worst_group_accuracy:.3f} not >=10 points below bayes {bayes:.3f}"
    )
    gain = hsfm.worst_group_accuracy - erm.worst_group_accuracy
    assert gain >= 0.10, f"gain {gain:.3f} < 10 points"
    assert hsfm.average_accuracy >= erm.average_accuracy - 0.03, (
        f"average accuracy fell by more than 3 points "
        f"({erm.average_accuracy:.3f} -> {hsfm.average_accuracy:.3f})"
    )
    assert benchmark["elapsed"] < 60.0
    report(
        "C4 synthetic robustness gain",
        f"ERM WGA {erm.worst_group_accuracy:.3f} -> trained WGA "
        f"{hsfm.worst_group_accuracy:.3f} (+{gain * 100:.1f} pts), "
        f"avg {erm.average_accuracy:.3f} -> {hsfm.average_accuracy:.3f}, "
        f"{benchmark['elapsed']:.1f}s",
    )


def test_criterion_5_baseline_ordering(benchmark):
    erm, hsfm, dfr = benchmark["erm"], benchmark["hsfm"], benchmark["dfr"]
    assert dfr.worst_group_accuracy >= erm.worst_group_accuracy + 0.10
    assert hsfm.worst_group_accuracy >= erm.worst_group_accuracy + 0.10
    gap = abs(hsfm.worst_group_accuracy - dfr.worst_group_accuracy)
    assert gap <= 0.05, f"gap to the balanced-retraining baseline is {gap:.3f}"
    report(
        "C5 baseline ordering",
        f"trained WGA {hsfm.worst_group_accuracy:.3f} vs balanced-retraining "
        f"{dfr.worst_group_accuracy:.3f} (gap {gap * 100:.1f} pts)",
    )


@pytest.fixture(scope="module")
def sweep_results(canonical_split, erm_head):
    base = dict(HSFM_PRESETS["synth-waterbirds"])
    t_curve = {}
    for steps in (1, 5, 10, 15, 25):
        cfg = HsfmConfig(**dict(base, adapt_steps=steps), seed=BENCH_SEED)
        head, _, _ = hsfm_train(erm_head, canonical_split, cfg)
        t_curve[steps] = evaluate(head, canonical_split.test).worst_group_accuracy
    support_curve = {}
    for per_class in (2, 8, 32, 128, 512):
        cfg = HsfmConfig(**dict(base, support_per_class=per_class), seed=BENCH_SEED)
        head, _, _ = hsfm_train(erm_head, canonical_split, cfg)
        support_curve[per_class] = evaluate(head, canonical_split.test).worst_group_accuracy
    return t_curve, support_curve


def test_criterion_6_ablation_shapes(sweep_results):
    t_curve, support_curve = sweep_results
    best = max(t_curve.values())
    assert t_curve[1] <= best - 0.05, (
        f"single adaptation step should trail the best by >=5 points: {t_curve}"
    )
    seq = [support_curve[k] for k in (2, 8, 32, 128, 512)]
    strictly_increasing = all(b > a for a, b in zip(seq, seq[1:]))
    assert not strictly_increasing, f"support sweep unexpectedly monotone: {support_curve}"
    report(
        "C6 ablation shapes",
        f"adaptation-steps curve {t_curve}; support curve {support_curve}",
    )


def test_criterion_7_determinism(tmp_path):
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps({"seed": BENCH_SEED}))
    outs = [tmp_path / "run1", tmp_path / "run2"]
    for out in outs:
        code = cli_main(
            ["train-hsfm", "--config", str(cfg_path), "--preset", "synth-waterbirds",
             "--out", str(out)]
        )
        assert code == 0
    identical = []
    for name in ("head_hsfm.hsfh", "support.init", "support.opt", "trace.jsonl"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
        identical.append(name)
    report("C7 determinism", "byte-identical: " + ", ".join(identical))


def test_criterion_8_format_conformance(tmp_path):
    rng = np.random.default_rng(2024)
    path = tmp_path / "ds.hsfm"
    for i in range(1000):
        ds = random_dataset(rng)
        write_features(path, ds)
        assert read_features(path) == ds, f"round trip failed on dataset {i}"

    bad_magic = tmp_path / "magic.hsfm"
    bad_magic.write_bytes(b"XXXX" + b"\x00" * 28)
    with pytest.raises(FormatError, match="not an HSFM-FS file"):
        read_features(bad_magic)

    ds = random_dataset(rng, n=6, d=3)
    truncated = tmp_path / "trunc.hsfm"
    write_features(truncated, ds)
    truncated.write_bytes(truncated.read_bytes()[:-3])
    with pytest.raises(FormatError, match="expected .* bytes, found"):
        read_features(truncated)

    import struct

    bad_label = tmp_path / "label.hsfm"
    header = struct.pack("<4sIIIII8s", b"HSFM", 1, 1, 1, 2, 1, b"\x00" * 8)
    payload = (
        np.zeros(1, dtype="<f4").tobytes()
        + np.array([9], dtype="<u4").tobytes()
        + np.array([0], dtype="<u4").tobytes()
    )
    bad_label.write_bytes(header + payload)
    with pytest.raises(FormatError, match=r"label 9 out of range"):
        read_features(bad_label)

    report("C8 format conformance", "1000 round trips + 3 malformed-file errors")


def test_criterion_9_hard_set_oracle_equivalence():
    rng = np.random.default_rng(555)
    for i in range(100):
        val = random_dataset(rng, n=int(rng.integers(4, 50)))
        if val.n >= 6:  # duplicate rows to force exact loss ties
            rows = np.arange(val.n)
            rows[2] = 0
            rows[5] = 1
            val = val.take(rows)
        head = LinearHead(
            rng.standard_normal((val.class_count, val.dim)),
            rng.standard_normal(val.class_count),
        )
        per_class = int(rng.integers(1, 7))
        hard = build_hard_set(head, val, per_class)

        losses = batch_loss_and_grads(
            head, val.features.astype(float), val.labels
        ).example_losses
        expected = []
        for c in range(val.class_count):
            rows = [r for r in range(val.n) if val.labels[r] == c]
            rows.sort(key=lambda r: (-losses[r], r))
            expected.extend(rows[:per_class])
        assert hard.source_rows.tolist() == expected, f"instance {i}"
    report("C9 hard-set oracle equivalence", "100 instances incl. ties")
