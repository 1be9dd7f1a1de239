"""Command-line harness: data generation, training, evaluation, sweeps,
and the gradient self-check.

Every command is driven by a JSON config (see config.py) and is
deterministic given that config; each writes a ``manifest.json`` echoing
the effective configuration plus SHA-256 hashes of its outputs, so any
run can be reproduced from its output directory alone.

Exit codes: 0 success, 1 validation/config error, 2 runtime or numeric
error.  Set HSFM_LOG=debug|info|warning|error for log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import gradcheck
from .config import RunConfig, build_run_config, load_config_file
from .errors import ConfigError, HsfmError, ValidationError
from .featurestore import DatasetSplit, group_sizes, read_features, write_features
from .hardset import build_hard_set
from .linhead import LinearHead, erm_train, evaluate, read_head, write_head
from .metaopt import dfr_baseline, export_support, hsfm_train
from .synthgen import generate

logger = logging.getLogger(__name__)

COMMANDS = (
    "gen-data", "train-erm", "train-dfr", "train-hsfm", "evaluate", "sweep", "check-grad",
)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dump_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_manifest(out_dir: Path, command: str, cfg: RunConfig, outputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "config": cfg.resolved,
        "outputs": {p.name: _sha256(p) for p in sorted(outputs)},
    }
    _dump_json(out_dir / "manifest.json", manifest)


def _require_out_dir(cfg: RunConfig) -> Path:
    if cfg.out_dir is None:
        raise ConfigError("out_dir is required (set it in the config or pass --out)")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_split(cfg: RunConfig) -> DatasetSplit:
    if cfg.synth is not None:
        return generate(cfg.synth)
    if cfg.data_files is not None:
        return DatasetSplit(
            train=read_features(cfg.data_files["train"]),
            val=read_features(cfg.data_files["val"]),
            test=read_features(cfg.data_files["test"]),
        )
    raise ConfigError("data section is required for this command")


def _train_erm_head(cfg: RunConfig, split: DatasetSplit) -> LinearHead:
    head = LinearHead.zeros(split.train.class_count, split.train.dim)
    return erm_train(
        head, split.train, cfg.erm.steps, cfg.erm.lr, cfg.erm.clip_norm, cfg.erm.weight_decay
    )


def _base_head(cfg: RunConfig, split: DatasetSplit) -> LinearHead:
    if cfg.hsfm_init_head is not None:
        return read_head(cfg.hsfm_init_head)
    return _train_erm_head(cfg, split)


def cmd_gen_data(cfg: RunConfig) -> int:
    if cfg.synth is None:
        raise ConfigError("gen-data requires data.synth in the config")
    out = _require_out_dir(cfg)
    split = generate(cfg.synth)
    outputs = []
    for part, ds in (("train", split.train), ("val", split.val), ("test", split.test)):
        path = out / f"{part}.hsfm"
        write_features(path, ds)
        outputs.append(path)
        logger.info("%s: n=%d groups=%s", path, ds.n, group_sizes(ds).tolist())
    _write_manifest(out, "gen-data", cfg, outputs)
    return 0


def cmd_train_erm(cfg: RunConfig) -> int:
    out = _require_out_dir(cfg)
    split = _load_split(cfg)
    head = _train_erm_head(cfg, split)
    head_path = out / "head_erm.hsfh"
    write_head(head_path, head)
    report = evaluate(head, split.test)
    report_path = out / "report_erm.json"
    _dump_json(report_path, report.to_dict())
    _write_manifest(out, "train-erm", cfg, [head_path, report_path])
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_train_dfr(cfg: RunConfig) -> int:
    out = _require_out_dir(cfg)
    split = _load_split(cfg)
    head = dfr_baseline(
        _base_head(cfg, split),
        split.val,
        cfg.dfr.steps,
        cfg.dfr.lr,
        cfg.dfr.balance,
        cfg.dfr.seed,
        cfg.dfr.clip_norm,
    )
    head_path = out / "head_dfr.hsfh"
    write_head(head_path, head)
    report = evaluate(head, split.test)
    report_path = out / "report_dfr.json"
    _dump_json(report_path, report.to_dict())
    _write_manifest(out, "train-dfr", cfg, [head_path, report_path])
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def _run_hsfm(cfg: RunConfig, split: DatasetSplit, out: Path) -> tuple[dict, list[Path]]:
    base = _base_head(cfg, split)
    base_report = evaluate(base, split.test)

    # inspection dump: what the base head found hardest before training
    initial_hard = build_hard_set(base, split.val, cfg.hsfm.hard_per_class)
    hard_path = out / "hard_set.json"
    _dump_json(
        hard_path,
        {
            "source_rows": initial_hard.source_rows.tolist(),
            "labels": initial_hard.labels.tolist(),
            "losses_at_selection": initial_hard.losses_at_selection.tolist(),
            "per_class": cfg.hsfm.hard_per_class,
        },
    )

    head, sup, trace = hsfm_train(base, split, cfg.hsfm)
    report = evaluate(head, split.test)

    head_path = out / "head_hsfm.hsfh"
    write_head(head_path, head)
    init_path, opt_path = export_support(sup, out / "support")
    trace_path = out / "trace.jsonl"
    with open(trace_path, "w") as fh:
        for record in trace.to_dicts():
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    summary = {
        "base": base_report.to_dict(),
        "final": report.to_dict(),
        "support_mean_displacement": float(np.mean(sup.row_displacement())),
    }
    summary_path = out / "summary.json"
    _dump_json(summary_path, summary)
    report_path = out / "report_hsfm.json"
    _dump_json(report_path, report.to_dict())
    outputs = [head_path, Path(init_path), Path(opt_path), trace_path, summary_path,
               report_path, hard_path]
    return summary, outputs


def cmd_train_hsfm(cfg: RunConfig) -> int:
    out = _require_out_dir(cfg)
    split = _load_split(cfg)
    summary, outputs = _run_hsfm(cfg, split, out)
    _write_manifest(out, "train-hsfm", cfg, outputs)
    print(json.dumps(summary["final"], sort_keys=True))
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    if cfg.evaluate is None:
        raise ConfigError("evaluate requires an evaluate section with head and data paths")
    head = read_head(cfg.evaluate.head)
    ds = read_features(cfg.evaluate.data)
    report = evaluate(head, ds)
    print(json.dumps(report.to_dict(), sort_keys=True))
    if cfg.out_dir is not None:
        out = _require_out_dir(cfg)
        report_path = out / "report.json"
        _dump_json(report_path, report.to_dict())
        _write_manifest(out, "evaluate", cfg, [report_path])
    return 0


def _sweep_point(cfg: RunConfig, split: DatasetSplit, out_root: Path, index: int, value: int):
    sweep = cfg.sweep
    hsfm_cfg = replace(cfg.hsfm, **{sweep.axis: value})
    if sweep.seed_policy == "per-value":
        hsfm_cfg = replace(hsfm_cfg, seed=cfg.hsfm.seed + index)
    point_cfg = replace(cfg, hsfm=hsfm_cfg)
    point_dir = out_root / f"{sweep.axis}={value}"
    point_dir.mkdir(parents=True, exist_ok=True)
    summary, outputs = _run_hsfm(point_cfg, split, point_dir)
    _write_manifest(point_dir, "train-hsfm", point_cfg, outputs)
    final = summary["final"]
    return {
        "value": value,
        "status": "ok",
        "worst_group_accuracy": final["worst_group_accuracy"],
        "average_accuracy": final["average_accuracy"],
    }


def cmd_sweep(cfg: RunConfig, threads: int = 1) -> int:
    if cfg.sweep is None:
        raise ConfigError("sweep requires a sweep section (axis, values)")
    out = _require_out_dir(cfg)
    split = _load_split(cfg)
    points_dir = out / "points"

    def run(pair):
        index, value = pair
        try:
            return _sweep_point(cfg, split, points_dir, index, value)
        except HsfmError as exc:
            logger.error("sweep point %s=%d failed: %s", cfg.sweep.axis, value, exc)
            return {
                "value": value, "status": f"error: {exc}",
                "worst_group_accuracy": "", "average_accuracy": "",
            }

    pairs = list(enumerate(cfg.sweep.values))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, pairs))
    else:
        rows = [run(p) for p in pairs]

    csv_path = out / "sweep.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["value", "status", "worst_group_accuracy", "average_accuracy"]
        )
        writer.writeheader()
        writer.writerows(rows)
    _write_manifest(out, "sweep", cfg, [csv_path])
    for row in rows:
        print(f"{cfg.sweep.axis}={row['value']}: {row['status']} "
              f"wga={row['worst_group_accuracy']} avg={row['average_accuracy']}")
    failed = [r for r in rows if r["status"] != "ok"]
    return 2 if failed else 0


def cmd_check_grad(cfg: RunConfig) -> int:
    gc = cfg.grad_check
    report = gradcheck.run_suite(
        num_instances=gc.instances,
        seed=gc.seed,
        eps=gc.eps,
        tolerance=gc.tolerance,
        floor=gc.floor,
    )
    for case in report.cases:
        print(case.describe())
    print(f"zero-unroll gradient exactly zero: {report.zero_unroll_exact}")

    # mutation sanity: a sign flip in the curvature products must be caught
    flipped = gradcheck.run_suite(
        num_instances=3, seed=gc.seed, eps=gc.eps, tolerance=gc.tolerance,
        floor=gc.floor, hessian_sign=-1.0,
    )
    mutation_detected = not all(c.passed for c in flipped.cases)
    print(f"sign-flip mutation detected: {mutation_detected}")
    print(f"elapsed: {report.elapsed_seconds:.2f}s")

    if cfg.out_dir is not None:
        out = _require_out_dir(cfg)
        payload = report.to_dict()
        payload["mutation_detected"] = mutation_detected
        _dump_json(out / "grad_check.json", payload)

    ok = report.all_passed and mutation_detected
    print("grad-check:", "PASS" if ok else "FAIL")
    return 0 if ok else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsfm",
        description="Feature-space meta-learning for worst-group robustness on frozen embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "gen-data": "generate a synthetic benchmark and write HSFM-FS files",
        "train-erm": "train the baseline head with plain gradient descent",
        "train-dfr": "retrain the head on a balanced validation subset",
        "train-hsfm": "run the full support-embedding meta-learning procedure",
        "evaluate": "evaluate a head checkpoint on a dataset file",
        "sweep": "run one training per value of a hyperparameter axis",
        "check-grad": "verify the meta-gradient against finite differences",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--preset", help="named preset merged over the config")
        p.add_argument("--out", help="output directory (overrides config out_dir)")
        p.add_argument("--seed", type=int, help="seed override (overrides every config seed)")
        p.add_argument("--threads", type=int, default=1, help="parallel workers for sweep points")
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    raw = load_config_file(args.config)
    cfg = build_run_config(
        raw,
        base_dir=Path(args.config).resolve().parent,
        preset=args.preset,
        seed_override=args.seed,
        out_override=args.out,
    )
    if args.command == "gen-data":
        return cmd_gen_data(cfg)
    if args.command == "train-erm":
        return cmd_train_erm(cfg)
    if args.command == "train-dfr":
        return cmd_train_dfr(cfg)
    if args.command == "train-hsfm":
        return cmd_train_hsfm(cfg)
    if args.command == "evaluate":
        return cmd_evaluate(cfg)
    if args.command == "sweep":
        return cmd_sweep(cfg, threads=max(1, args.threads))
    if args.command == "check-grad":
        return cmd_check_grad(cfg)
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("HSFM_LOG", "warning").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (HsfmError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
