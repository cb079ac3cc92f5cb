"""Run configuration: one JSON document feeding both CLI and service.

Sections: ``augment`` (mirrors AugmentConfig), ``train`` (mirrors
TrainConfig except the seed), a top-level ``seed``, and ``paths``. Unknown
keys anywhere are rejected so typos cannot silently fall back to defaults.
The fully resolved document (every default made explicit) is echoed into
every output directory for provenance.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .sampler import AugmentConfig
from .trainer import TrainConfig

__all__ = ["ConfigError", "RunConfig", "resolve_run_config", "load_run_config",
           "resolve_augment_section", "resolved_config_dict", "write_resolved_config"]


class ConfigError(ValueError):
    """Invalid run configuration document."""


_AUGMENT_KEYS = {
    "kernel_size", "l_max", "sigma_w", "smooth_bound", "offset_bound", "grf_alpha",
    "sigma_gamma", "sigma_beta", "eps", "enable_smoothing", "enable_offsets",
    "enable_contrast",
}
_TRAIN_KEYS = {"batch_size", "momentum", "lr0", "epochs", "selection", "selection_r"}
_PATH_KEYS = {"data", "input", "output"}
_TOP_KEYS = {"augment", "train", "seed", "paths"}


@dataclass(frozen=True)
class RunConfig:
    augment: AugmentConfig
    train: TrainConfig
    seed: int
    paths: dict


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def resolve_augment_section(section: dict) -> AugmentConfig:
    if not isinstance(section, dict):
        raise ConfigError("augment section must be an object")
    _check_keys(section, _AUGMENT_KEYS, "augment")
    try:
        return AugmentConfig(**section)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid augment config: {e}") from e


def resolve_run_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "config")
    augment = resolve_augment_section(doc.get("augment", {}))
    train_section = doc.get("train", {})
    if not isinstance(train_section, dict):
        raise ConfigError("train section must be an object")
    _check_keys(train_section, _TRAIN_KEYS, "train")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    try:
        train = TrainConfig(seed=seed, **train_section)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid train config: {e}") from e
    paths = doc.get("paths", {})
    if not isinstance(paths, dict):
        raise ConfigError("paths section must be an object")
    _check_keys(paths, _PATH_KEYS, "paths")
    return RunConfig(augment=augment, train=train, seed=seed, paths=dict(paths))


def load_run_config(path=None) -> RunConfig:
    """Load and resolve a config file; None gives the all-defaults config."""
    if path is None:
        return resolve_run_config({})
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    return resolve_run_config(doc)


def resolved_config_dict(cfg: RunConfig) -> dict:
    """Fully resolved document: every default explicit, sigma_w numeric."""
    aug = dataclasses.asdict(cfg.augment)
    aug["sigma_w"] = cfg.augment.sigma_w_effective
    train = dataclasses.asdict(cfg.train)
    train.pop("seed")
    return {"augment": aug, "train": train, "seed": cfg.seed, "paths": dict(cfg.paths)}


def write_resolved_config(cfg: RunConfig, out_dir) -> Path:
    out = Path(out_dir) / "resolved_config.json"
    out.write_text(json.dumps(resolved_config_dict(cfg), indent=2, sort_keys=True) + "\n")
    return out
