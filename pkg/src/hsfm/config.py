"""JSON run configuration: schema validation, preset merging, seed override.

A config file drives every CLI command.  Shape:

    {
      "seed": 13,
      "out_dir": "runs/demo",                # --out overrides
      "data": {"synth": {...}}               # or {"files": {"train": ..., "val": ..., "test": ...}}
      "erm":  {"steps": 200, "lr": 0.1, "clip_norm": null, "weight_decay": 0.0},
      "dfr":  {"steps": 200, "lr": 0.1, "balance": "by-group"},
      "hsfm": {"support_per_class": 16, ..., "init_head": null},
      "sweep": {"axis": "adapt_steps", "values": [1, 5, 10], "seed_policy": "shared"},
      "evaluate": {"head": "path.hsfh", "data": "path.hsfm"},
      "grad_check": {"instances": 20, "seed": 20250, "eps": 1e-4, "tolerance": 1e-4}
    }

Sections are only required by the commands that use them.  Unknown keys
are rejected.  Section seeds default to the top-level seed.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .metaopt import HsfmConfig
from .presets import get_preset
from .synthgen import SynthConfig

SWEEP_AXES = ("adapt_steps", "support_per_class")
# accepted spellings for the sweep axis
_AXIS_ALIASES = {"T": "adapt_steps", "adapt_steps": "adapt_steps",
                 "support_per_class": "support_per_class"}

_HSFM_DEFAULTS = {
    "support_per_class": 16, "adapt_steps": 10, "inner_lr": 1e-2, "outer_lr": 3e-2,
    "meta_steps": 10, "hard_per_class": 32, "epochs": 20, "clip_norm": None,
    "outer_optimizer": "plain-gd", "first_order": False,
}


@dataclass(frozen=True)
class ErmSettings:
    steps: int = 200
    lr: float = 0.1
    clip_norm: float | None = None
    weight_decay: float = 0.0


@dataclass(frozen=True)
class DfrSettings:
    steps: int = 200
    lr: float = 0.1
    balance: str = "by-group"
    clip_norm: float | None = None
    seed: int = 0


@dataclass(frozen=True)
class SweepSettings:
    axis: str
    values: tuple[int, ...]
    seed_policy: str = "shared"


@dataclass(frozen=True)
class EvaluateSettings:
    head: str
    data: str


@dataclass(frozen=True)
class GradCheckSettings:
    instances: int = 20
    seed: int = 20250
    eps: float = 1e-4
    tolerance: float = 1e-4
    floor: float = 1e-7


@dataclass(frozen=True)
class RunConfig:
    """Validated view of one config file, after preset/flag merging."""

    seed: int
    out_dir: str | None
    synth: SynthConfig | None
    data_files: dict[str, str] | None
    erm: ErmSettings
    dfr: DfrSettings
    hsfm: HsfmConfig
    hsfm_init_head: str | None
    sweep: SweepSettings | None
    evaluate: EvaluateSettings | None
    grad_check: GradCheckSettings
    resolved: dict


def _expect_dict(raw, path: str) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected an object, got {type(raw).__name__}")
    return raw


def _reject_unknown(raw: dict, allowed: set[str], path: str) -> None:
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)} (allowed: {sorted(allowed)})")


def _get_int(raw: dict, key: str, default, path: str):
    value = raw.get(key, default)
    if value is None:
        return None
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"{path}.{key}: expected an integer, got {value!r}")
    return value


def _get_number(raw: dict, key: str, default, path: str):
    value = raw.get(key, default)
    if value is None:
        return None
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{path}.{key}: expected a number, got {value!r}")
    return float(value)


def _get_str(raw: dict, key: str, default, path: str):
    value = raw.get(key, default)
    if value is None:
        return None
    if not isinstance(value, str):
        raise ConfigError(f"{path}.{key}: expected a string, got {value!r}")
    return value


def _get_bool(raw: dict, key: str, default, path: str):
    value = raw.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError(f"{path}.{key}: expected a boolean, got {value!r}")
    return value


def load_config_file(path) -> dict:
    """Read a JSON config file, mapping parse failures to ConfigError."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return _expect_dict(raw, str(path))


def _merge(base: dict, overlay: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_synth(raw: dict, default_seed: int, path: str) -> SynthConfig:
    allowed = {
        "class_count", "env_count", "d_core", "d_spur", "d_noise",
        "mu_core", "mu_spur", "sigma", "train_group_counts",
        "val_group_counts", "test_group_counts", "seed",
    }
    _reject_unknown(raw, allowed, path)
    required = allowed - {"seed"}
    missing = required - set(raw)
    if missing:
        raise ConfigError(f"{path}: missing keys {sorted(missing)}")
    try:
        return SynthConfig(
            class_count=raw["class_count"],
            env_count=raw["env_count"],
            d_core=raw["d_core"],
            d_spur=raw["d_spur"],
            d_noise=raw["d_noise"],
            mu_core=raw["mu_core"],
            mu_spur=raw["mu_spur"],
            sigma=raw["sigma"],
            train_group_counts=raw["train_group_counts"],
            val_group_counts=raw["val_group_counts"],
            test_group_counts=raw["test_group_counts"],
            seed=raw.get("seed", default_seed),
        )
    except Exception as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_data(raw, default_seed: int, base_dir: Path):
    raw = _expect_dict(raw, "data")
    _reject_unknown(raw, {"synth", "files"}, "data")
    has_synth = "synth" in raw
    has_files = "files" in raw
    if has_synth == has_files:
        raise ConfigError("data: exactly one of 'synth' or 'files' is required")
    if has_synth:
        return _parse_synth(_expect_dict(raw["synth"], "data.synth"), default_seed, "data.synth"), None
    files = _expect_dict(raw["files"], "data.files")
    _reject_unknown(files, {"train", "val", "test"}, "data.files")
    missing = {"train", "val", "test"} - set(files)
    if missing:
        raise ConfigError(f"data.files: missing keys {sorted(missing)}")
    resolved = {}
    for part in ("train", "val", "test"):
        p = _get_str(files, part, None, "data.files")
        full = (base_dir / p).resolve() if not Path(p).is_absolute() else Path(p)
        if not full.exists():
            raise ConfigError(f"data.files.{part}: file does not exist: {full}")
        resolved[part] = str(full)
    return None, resolved


def _parse_erm(raw, path: str = "erm") -> ErmSettings:
    raw = _expect_dict(raw, path)
    _reject_unknown(raw, {"steps", "lr", "clip_norm", "weight_decay"}, path)
    return ErmSettings(
        steps=_get_int(raw, "steps", 200, path),
        lr=_get_number(raw, "lr", 0.1, path),
        clip_norm=_get_number(raw, "clip_norm", None, path),
        weight_decay=_get_number(raw, "weight_decay", 0.0, path),
    )


def _parse_dfr(raw, default_seed: int) -> DfrSettings:
    raw = _expect_dict(raw, "dfr")
    _reject_unknown(raw, {"steps", "lr", "balance", "clip_norm", "seed"}, "dfr")
    balance = _get_str(raw, "balance", "by-group", "dfr")
    if balance not in ("by-group", "by-class"):
        raise ConfigError(f"dfr.balance: expected 'by-group' or 'by-class', got {balance!r}")
    return DfrSettings(
        steps=_get_int(raw, "steps", 200, "dfr"),
        lr=_get_number(raw, "lr", 0.1, "dfr"),
        balance=balance,
        clip_norm=_get_number(raw, "clip_norm", None, "dfr"),
        seed=_get_int(raw, "seed", default_seed, "dfr"),
    )


def _parse_hsfm(raw, default_seed: int, base_dir: Path) -> tuple[HsfmConfig, str | None]:
    raw = _expect_dict(raw, "hsfm")
    allowed = set(_HSFM_DEFAULTS) | {"seed", "init_head"}
    _reject_unknown(raw, allowed, "hsfm")
    merged = dict(_HSFM_DEFAULTS)
    merged.update({k: v for k, v in raw.items() if k not in ("seed", "init_head")})
    try:
        cfg = HsfmConfig(
            support_per_class=merged["support_per_class"],
            adapt_steps=merged["adapt_steps"],
            inner_lr=merged["inner_lr"],
            outer_lr=merged["outer_lr"],
            meta_steps=merged["meta_steps"],
            hard_per_class=merged["hard_per_class"],
            epochs=merged["epochs"],
            seed=raw.get("seed", default_seed),
            clip_norm=merged["clip_norm"],
            outer_optimizer=merged["outer_optimizer"],
            first_order=merged["first_order"],
        )
    except Exception as exc:
        raise ConfigError(f"hsfm: {exc}") from exc
    init_head = _get_str(raw, "init_head", None, "hsfm")
    if init_head is not None:
        full = (base_dir / init_head).resolve() if not Path(init_head).is_absolute() else Path(init_head)
        if not full.exists():
            raise ConfigError(f"hsfm.init_head: file does not exist: {full}")
        init_head = str(full)
    return cfg, init_head


def _parse_sweep(raw) -> SweepSettings:
    raw = _expect_dict(raw, "sweep")
    _reject_unknown(raw, {"axis", "values", "seed_policy"}, "sweep")
    axis_raw = _get_str(raw, "axis", None, "sweep")
    if axis_raw is None or axis_raw not in _AXIS_ALIASES:
        raise ConfigError(
            f"sweep.axis: expected one of {sorted(_AXIS_ALIASES)}, got {axis_raw!r}"
        )
    values = raw.get("values")
    if not isinstance(values, list) or not values:
        raise ConfigError("sweep.values: expected a non-empty list of integers")
    for v in values:
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise ConfigError(f"sweep.values: expected non-negative integers, got {v!r}")
    policy = _get_str(raw, "seed_policy", "shared", "sweep")
    if policy not in ("shared", "per-value"):
        raise ConfigError(f"sweep.seed_policy: expected 'shared' or 'per-value', got {policy!r}")
    return SweepSettings(axis=_AXIS_ALIASES[axis_raw], values=tuple(values), seed_policy=policy)


def _parse_evaluate(raw, base_dir: Path) -> EvaluateSettings:
    raw = _expect_dict(raw, "evaluate")
    _reject_unknown(raw, {"head", "data"}, "evaluate")
    missing = {"head", "data"} - set(raw)
    if missing:
        raise ConfigError(f"evaluate: missing keys {sorted(missing)}")
    out = {}
    for key in ("head", "data"):
        p = _get_str(raw, key, None, "evaluate")
        full = (base_dir / p).resolve() if not Path(p).is_absolute() else Path(p)
        if not full.exists():
            raise ConfigError(f"evaluate.{key}: file does not exist: {full}")
        out[key] = str(full)
    return EvaluateSettings(head=out["head"], data=out["data"])


def _parse_grad_check(raw) -> GradCheckSettings:
    raw = _expect_dict(raw, "grad_check")
    _reject_unknown(raw, {"instances", "seed", "eps", "tolerance", "floor"}, "grad_check")
    return GradCheckSettings(
        instances=_get_int(raw, "instances", 20, "grad_check"),
        seed=_get_int(raw, "seed", 20250, "grad_check"),
        eps=_get_number(raw, "eps", 1e-4, "grad_check"),
        tolerance=_get_number(raw, "tolerance", 1e-4, "grad_check"),
        floor=_get_number(raw, "floor", 1e-7, "grad_check"),
    )


def build_run_config(
    raw: dict,
    *,
    base_dir=".",
    preset: str | None = None,
    seed_override: int | None = None,
    out_override: str | None = None,
) -> RunConfig:
    """Merge preset and flag overrides into ``raw`` and validate everything.

    The returned ``resolved`` dict is the effective configuration: writing
    it back to a file and re-running reproduces the run exactly.
    """
    base_dir = Path(base_dir)
    raw = _expect_dict(raw, "config")
    _reject_unknown(
        raw,
        {"seed", "out_dir", "data", "erm", "dfr", "hsfm", "sweep", "evaluate", "grad_check"},
        "config",
    )
    if preset is not None:
        raw = _merge(raw, get_preset(preset))
    if seed_override is not None:
        raw = dict(raw, seed=seed_override)
        for section in ("hsfm", "dfr"):
            if isinstance(raw.get(section), dict):
                raw[section] = {k: v for k, v in raw[section].items() if k != "seed"}
        if isinstance(raw.get("data"), dict) and isinstance(raw["data"].get("synth"), dict):
            synth = {k: v for k, v in raw["data"]["synth"].items() if k != "seed"}
            raw["data"] = dict(raw["data"], synth=synth)
    if out_override is not None:
        raw = dict(raw, out_dir=out_override)

    seed = _get_int(raw, "seed", 0, "config")
    out_dir = _get_str(raw, "out_dir", None, "config")

    synth = data_files = None
    if "data" in raw:
        synth, data_files = _parse_data(raw["data"], seed, base_dir)

    erm = _parse_erm(raw.get("erm", {}))
    dfr = _parse_dfr(raw.get("dfr", {}), seed)
    hsfm_cfg, init_head = _parse_hsfm(raw.get("hsfm", {}), seed, base_dir)
    sweep = _parse_sweep(raw["sweep"]) if "sweep" in raw else None
    evaluate = _parse_evaluate(raw["evaluate"], base_dir) if "evaluate" in raw else None
    grad_check = _parse_grad_check(raw.get("grad_check", {}))

    resolved = copy.deepcopy(raw)
    resolved["seed"] = seed
    if synth is not None:
        resolved["data"] = {"synth": synth.to_dict()}
    elif data_files is not None:
        resolved["data"] = {"files": dict(data_files)}
    hsfm_resolved = hsfm_cfg.to_dict()
    if init_head is not None:
        hsfm_resolved["init_head"] = init_head
    resolved["hsfm"] = hsfm_resolved
    resolved["erm"] = {
        "steps": erm.steps, "lr": erm.lr,
        "clip_norm": erm.clip_norm, "weight_decay": erm.weight_decay,
    }
    resolved["dfr"] = {
        "steps": dfr.steps, "lr": dfr.lr, "balance": dfr.balance,
        "clip_norm": dfr.clip_norm, "seed": dfr.seed,
    }
    if evaluate is not None:
        resolved["evaluate"] = {"head": evaluate.head, "data": evaluate.data}

    return RunConfig(
        seed=seed,
        out_dir=out_dir,
        synth=synth,
        data_files=data_files,
        erm=erm,
        dfr=dfr,
        hsfm=hsfm_cfg,
        hsfm_init_head=init_head,
        sweep=sweep,
        evaluate=evaluate,
        grad_check=grad_check,
        resolved=resolved,
    )
