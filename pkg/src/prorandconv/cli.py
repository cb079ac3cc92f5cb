"""Command-line surface: augment, grid, train, grf, serve.

Every command is deterministic under its seed: the same flags produce
byte-identical artifacts. Per-input-file work draws from a child stream
indexed by the file's sorted position, so running files in parallel cannot
change any output. A fully resolved copy of the config is echoed into each
output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .augment import (
    progressive_augment,
    progressive_augment_diff,
    randconv_baseline,
)
from .config import ConfigError, load_run_config, write_resolved_config
from .core import Batch, Image, RngStream, denormalize_u8, normalize_u8
from .idx import IdxError
from .pngio import PngError, read_png_file, write_png_file
from .sampler import AugmentConfig, sample_grf
from .tensordump import TensorDumpError, read_tensor_dump_file, write_tensor_dump_file

MODES = ("prorandconv", "randconv", "progressive-same", "progressive-diff")
SWEEP_KEYS = ("reps", "sigma_gamma", "sigma_beta", "sigma_g", "sigma_delta", "grf_alpha")

_SWITCHES_OFF = {"enable_smoothing": False, "enable_offsets": False, "enable_contrast": False}


def _worker_cap(n: int) -> int:
    cap = os.environ.get("PRORANDCONV_THREADS")
    if cap:
        return max(1, min(n, int(cap)))
    return max(1, min(n, 4, os.cpu_count() or 1))


def _mode_cfg(cfg: AugmentConfig, mode: str) -> AugmentConfig:
    if mode in ("progressive-same", "progressive-diff"):
        return dataclasses.replace(cfg, **_SWITCHES_OFF)
    return cfg


def _augment_batch(batch: Batch, cfg: AugmentConfig, mode: str, rng: RngStream,
                   reps: int | None) -> tuple[Batch, int]:
    if mode == "randconv":
        return randconv_baseline(batch, rng), 1
    cfg = _mode_cfg(cfg, mode)
    if mode == "progressive-diff":
        l_used = int(reps) if reps is not None else int(
            rng.split(1).generator().integers(1, cfg.l_max + 1)
        )
        return progressive_augment_diff(batch, cfg, rng, reps=l_used), l_used
    return progressive_augment(batch, cfg, rng, reps=reps)


def _augment_one_file(path: Path, out_dir: Path, cfg: AugmentConfig, mode: str,
                      seed: int, file_rng: RngStream, reps: int | None, count: int) -> list[str]:
    written = []
    if path.suffix == ".prct":
        arr = read_tensor_dump_file(path)
        if arr.ndim != 4:
            raise TensorDumpError(f"{path}: tensor input must be rank 4 (N, C, H, W)")
        batch = Batch(arr)
        for v in range(count):
            aug, l_used = _augment_batch(batch, cfg, mode, file_rng.split(v), reps)
            stem = f"{path.stem}_s{seed}_v{v}"
            write_tensor_dump_file(out_dir / f"{stem}.prct", aug.stack())
            (out_dir / f"{stem}.json").write_text(
                json.dumps({"input": path.name, "l_used": l_used, "mode": mode,
                            "seed": seed, "variant": v}, sort_keys=True) + "\n"
            )
            written.append(f"{stem}.prct")
        return written
    img = read_png_file(path)
    batch = Batch(img.data[None])
    for v in range(count):
        aug, l_used = _augment_batch(batch, cfg, mode, file_rng.split(v), reps)
        name = f"{path.stem}_s{seed}_L{l_used}_v{v}.png"
        write_png_file(out_dir / name, Image(aug.stack()[0]))
        written.append(name)
    return written


def cmd_augment(args) -> int:
    in_path = Path(args.input)
    if not in_path.exists():
        print(f"error: input {in_path} does not exist", file=sys.stderr)
        return 2
    run_cfg = load_run_config(args.config)
    seed = args.seed if args.seed is not None else run_cfg.seed
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    if in_path.is_dir():
        files = sorted(p for p in in_path.iterdir() if p.suffix in (".png", ".prct"))
        if not files:
            print(f"error: no .png or .prct inputs in {in_path}", file=sys.stderr)
            return 2
    else:
        files = [in_path]
    rng = RngStream(seed)
    jobs = [(f, rng.split(i)) for i, f in enumerate(files)]

    def work(job):
        f, file_rng = job
        return _augment_one_file(f, out_dir, run_cfg.augment, args.mode, seed, file_rng,
                                 args.reps, args.count)

    if len(jobs) > 1 and _worker_cap(len(jobs)) > 1:
        with ThreadPoolExecutor(max_workers=_worker_cap(len(jobs))) as ex:
            results = list(ex.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    write_resolved_config(run_cfg, out_dir)
    n_out = sum(len(r) for r in results)
    print(f"wrote {n_out} augmented file(s) to {out_dir}")
    return 0


def _grid_cell(img_batch: Batch, cfg: AugmentConfig, sweep: str, value: float,
               rng: RngStream, reps: int | None) -> np.ndarray:
    l_used = reps
    if l_used is None and sweep != "reps":
        l_used = int(rng.split(1).generator().integers(1, cfg.l_max + 1))
    if sweep == "reps":
        out, _ = progressive_augment(img_batch, cfg, rng, reps=int(value))
    elif sweep in ("sigma_gamma", "sigma_beta", "grf_alpha"):
        out, _ = progressive_augment(img_batch, dataclasses.replace(cfg, **{sweep: value}),
                                     rng, reps=l_used)
    elif sweep == "sigma_g":
        out, _ = progressive_augment(img_batch, cfg, rng, reps=l_used, fixed_sigma_g=value)
    elif sweep == "sigma_delta":
        out, _ = progressive_augment(img_batch, cfg, rng, reps=l_used, fixed_sigma_delta=value)
    else:
        raise ValueError(f"unknown sweep key {sweep!r}")
    return out.stack()[0]


def cmd_grid(args) -> int:
    if args.sweep not in SWEEP_KEYS:
        print(f"error: unknown sweep key {args.sweep!r}, choose from {SWEEP_KEYS}",
              file=sys.stderr)
        return 2
    in_path = Path(args.input)
    if not in_path.exists():
        print(f"error: input {in_path} does not exist", file=sys.stderr)
        return 2
    run_cfg = load_run_config(args.config)
    seed = args.seed if args.seed is not None else run_cfg.seed
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        print("error: --values is empty", file=sys.stderr)
        return 2
    img = read_png_file(in_path)
    batch = Batch(img.data[None])
    cells = []
    for r in range(args.rows):
        row_rng = RngStream(seed).split(r)
        row = [
            denormalize_u8(Image(_grid_cell(batch, run_cfg.augment, args.sweep, v,
                                            row_rng, args.reps)))
            for v in values
        ]
        cells.append(row)
    c, h, w = cells[0][0].shape
    sep = 2
    grid = np.full(
        (c, args.rows * h + (args.rows - 1) * sep, len(values) * w + (len(values) - 1) * sep),
        255,
        dtype=np.uint8,
    )
    for i, row in enumerate(cells):
        for j, cell in enumerate(row):
            grid[:, i * (h + sep) : i * (h + sep) + h, j * (w + sep) : j * (w + sep) + w] = cell
    out_path = Path(args.output)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_png_file(out_path, normalize_u8(grid))
    write_resolved_config(run_cfg, out_path.parent)
    print(f"wrote {args.rows}x{len(values)} grid to {out_path}")
    return 0


def cmd_train(args) -> int:
    from .experiments import run_single

    run_cfg = load_run_config(args.config)
    seed = args.seed if args.seed is not None else run_cfg.seed
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary, metrics = run_single(
        args.data,
        args.ablation,
        seed,
        run_cfg=run_cfg,
        shift_suite=args.shift_suite,
        limit_train=args.limit_train,
    )
    with open(out_dir / "metrics.jsonl", "w") as f:
        for rec in metrics["records"]:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    write_resolved_config(run_cfg, out_dir)
    msg = f"{args.ablation}: in_domain_acc={summary['in_domain_acc']:.4f}"
    if summary["mean_shift_acc"] is not None:
        msg += f" mean_shift_acc={summary['mean_shift_acc']:.4f}"
    print(msg)
    return 0


def cmd_grf(args) -> int:
    h, w = args.size
    field = sample_grf(h, w, args.alpha, RngStream(args.seed))
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_tensor_dump_file(prefix.with_suffix(".prct"), field)
    lo, hi = float(field.min()), float(field.max())
    if hi > lo:
        scaled = (field - lo) / (hi - lo)
    else:
        scaled = np.full_like(field, 0.5)
    u8 = np.round(scaled * 255).astype(np.uint8)[None]
    write_png_file(prefix.with_suffix(".png"), normalize_u8(u8))
    print(f"wrote {prefix.with_suffix('.prct')} and {prefix.with_suffix('.png')}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prorandconv",
                                 description="Progressive random convolution augmentation")
    ap.add_argument("--version", action="version", version=f"prorandconv {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", help="augment images or tensor dumps")
    p.add_argument("--input", required=True, help="input file or directory (.png / .prct)")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=MODES, default="prorandconv")
    p.add_argument("--reps", type=int, default=None, help="pin the number of repetitions")
    p.add_argument("--count", type=int, default=1, help="variants per input")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("grid", help="sweep grid visualization")
    p.add_argument("--input", required=True, help="input PNG image")
    p.add_argument("--output", required=True, help="output PNG path")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sweep", required=True, help=f"one of {', '.join(SWEEP_KEYS)}")
    p.add_argument("--values", required=True, help="comma-separated sweep values")
    p.add_argument("--rows", type=int, default=3, help="seed rows in the grid")
    p.add_argument("--reps", type=int, default=None, help="pin L for non-reps sweeps")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("train", help="train the classifier on digit data")
    p.add_argument("--data", required=True, help="directory with IDX digit files")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ablation", choices=("baseline", "randconv", "prog-same", "prog-diff",
                                          "full"), default="full")
    p.add_argument("--shift-suite", action="store_true",
                   help="also evaluate the four synthetic shift domains")
    p.add_argument("--limit-train", type=int, default=10000,
                   help="use only the first N training samples")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grf", help="sample a Gaussian random field")
    p.add_argument("--size", type=int, nargs=2, required=True, metavar=("H", "W"))
    p.add_argument("--alpha", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_grf)

    p = sub.add_parser("serve", help="run the HTTP augmentation service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, IdxError, PngError, TensorDumpError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
