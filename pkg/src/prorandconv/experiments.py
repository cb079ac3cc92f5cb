"""Desk-scale directional generalization experiment.

Trains the classifier on digit data under several augmentation arms
(baseline ERM, single-layer RandConv, progressive same/diff weights, and the
full pipeline), then evaluates in-domain accuracy and accuracy on four
synthetic shift domains built from the test set. Arms and seeds are
independent, so they run in parallel worker processes; each worker pins its
BLAS to one thread and the shift domains come from one fixed stream so every
arm sees identical target data.
"""

from __future__ import annotations

import dataclasses
import os
import time
from concurrent.futures import ProcessPoolExecutor
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .config import RunConfig, resolve_run_config
from .core import Batch
from .idx import parse_idx_file
from .sampler import AugmentConfig
from .synthdigits import TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES, TRAIN_LABELS
from .trainer import (
    Dataset,
    RngStream,
    SHIFT_KINDS,
    TrainConfig,
    evaluate,
    prepare_digits,
    synth_shift,
    train,
)

__all__ = ["ABLATIONS", "load_digits", "build_shift_suite", "run_single",
           "run_directional_experiment", "worker_count"]

# Augmentation arm definitions: (augment mode, config switch overrides,
# selection override). The progressive same/diff arms disable the block
# extras so they isolate the progressive axis itself.
ABLATIONS = {
    "baseline": ("none", {}, "originals_only"),
    "randconv": ("randconv", {}, None),
    "prog-same": (
        "progressive",
        {"enable_smoothing": False, "enable_offsets": False, "enable_contrast": False},
        None,
    ),
    "prog-diff": (
        "progressive_diff",
        {"enable_smoothing": False, "enable_offsets": False, "enable_contrast": False},
        None,
    ),
    "full": ("progressive", {}, None),
}

# One fixed stream for shift-domain construction so every arm is evaluated
# against byte-identical targets.
_SHIFT_SEED = 0xD161757


def worker_count(n_jobs: int) -> int:
    cap = os.environ.get("PRORANDCONV_THREADS")
    if cap:
        return max(1, min(n_jobs, int(cap)))
    return max(1, min(n_jobs, os.cpu_count() or 1))


def load_digits(data_dir, limit_train: int | None = None) -> tuple[Dataset, Dataset]:
    """Load train/test IDX digit files and prepare them as 3x32x32 datasets."""
    d = Path(data_dir)
    for name in (TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS):
        if not (d / name).exists():
            raise FileNotFoundError(f"missing digit data file {d / name}")
    train_x = parse_idx_file(d / TRAIN_IMAGES)
    train_y = parse_idx_file(d / TRAIN_LABELS)
    test_x = parse_idx_file(d / TEST_IMAGES)
    test_y = parse_idx_file(d / TEST_LABELS)
    if limit_train is not None:
        train_x = Batch(train_x.stack()[:limit_train])
        train_y = train_y[:limit_train]
    train_set = prepare_digits(train_x, train_y, "digits-train")
    test_set = prepare_digits(test_x, test_y, "digits-test")
    return train_set, test_set


def build_shift_suite(test_set: Dataset) -> dict[str, Dataset]:
    rng = RngStream(_SHIFT_SEED)
    return {kind: synth_shift(test_set, kind, rng.split(i)) for i, kind in enumerate(SHIFT_KINDS)}


def _arm_configs(run_cfg: RunConfig, ablation: str, seed: int,
                 epochs: int | None) -> tuple[AugmentConfig, TrainConfig, str]:
    if ablation not in ABLATIONS:
        raise ValueError(f"unknown ablation {ablation!r}")
    mode, switch_overrides, selection = ABLATIONS[ablation]
    aug_cfg = dataclasses.replace(run_cfg.augment, **switch_overrides)
    train_kwargs: dict = {"seed": seed}
    if selection is not None:
        train_kwargs["selection"] = selection
    if epochs is not None:
        train_kwargs["epochs"] = epochs
    train_cfg = dataclasses.replace(run_cfg.train, **train_kwargs)
    return aug_cfg, train_cfg, mode


def run_single(
    data_dir,
    ablation: str,
    seed: int,
    *,
    epochs: int | None = None,
    limit_train: int | None = 10000,
    run_cfg: RunConfig | None = None,
    shift_suite: bool = True,
) -> tuple[dict, dict]:
    """Train one arm and evaluate it; returns (summary, metrics)."""
    if run_cfg is None:
        run_cfg = resolve_run_config({})
    aug_cfg, train_cfg, mode = _arm_configs(run_cfg, ablation, seed, epochs)
    train_set, test_set = load_digits(data_dir, limit_train)
    t0 = time.perf_counter()
    state, metrics = train(train_set, aug_cfg, train_cfg, augment_mode=mode)
    in_domain = evaluate(state, test_set)
    shift_accs: dict[str, float] = {}
    if shift_suite:
        for kind, shifted in build_shift_suite(test_set).items():
            shift_accs[kind] = evaluate(state, shifted)
    metrics["train_time_s"] = time.perf_counter() - t0
    summary = {
        "ablation": ablation,
        "seed": seed,
        "in_domain_acc": in_domain,
        "shift_accs": shift_accs,
        "mean_shift_acc": float(np.mean(list(shift_accs.values()))) if shift_accs else None,
    }
    return summary, metrics


def _run_job(args) -> dict:
    data_dir, ablation, seed, epochs, limit_train, blas_threads = args
    if blas_threads:
        try:
            import threadpoolctl

            threadpoolctl.threadpool_limits(blas_threads)
        except ImportError:
            pass
    summary, _ = run_single(data_dir, ablation, seed, epochs=epochs, limit_train=limit_train)
    return summary


def run_directional_experiment(
    data_dir,
    *,
    seeds=(0, 1, 2),
    epochs: int = 20,
    limit_train: int = 10000,
    ablations=("baseline", "full", "prog-same", "prog-diff"),
    workers: int | None = None,
) -> dict:
    """Run every (ablation, seed) arm, in parallel processes when possible."""
    n_workers = workers if workers is not None else worker_count(len(ablations) * len(seeds))
    blas_threads = 1 if n_workers > 1 else 0
    jobs = [
        (str(data_dir), abl, s, epochs, limit_train, blas_threads)
        for abl in ablations
        for s in seeds
    ]
    # Heavier arms first for a tighter parallel makespan.
    cost = {"full": 0, "prog-diff": 1, "prog-same": 2, "randconv": 3, "baseline": 4}
    jobs.sort(key=lambda j: cost.get(j[1], 9))

    t0 = time.perf_counter()
    summaries: list[dict]
    if n_workers <= 1:
        summaries = [_run_job(j) for j in jobs]
    else:
        # fork keeps the parent's compiled kernels and sidesteps __main__
        # re-import; each worker pins its BLAS pool to one thread.
        with ProcessPoolExecutor(max_workers=n_workers, mp_context=get_context("fork")) as ex:
            summaries = list(ex.map(_run_job, jobs))

    aggregates: dict[str, dict] = {}
    for abl in ablations:
        rows = [s for s in summaries if s["ablation"] == abl]
        aggregates[abl] = {
            "in_domain_acc": float(np.mean([r["in_domain_acc"] for r in rows])),
            "mean_shift_acc": float(np.mean([r["mean_shift_acc"] for r in rows])),
            "shift_accs": {
                kind: float(np.mean([r["shift_accs"][kind] for r in rows]))
                for kind in SHIFT_KINDS
            },
            "seeds": [r["seed"] for r in rows],
        }
    return {
        "runs": summaries,
        "aggregates": aggregates,
        "seeds": list(seeds),
        "epochs": epochs,
        "wall_time_s": time.perf_counter() - t0,
        "workers": n_workers,
    }
