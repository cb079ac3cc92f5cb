"""Acceptance gate: one test per criterion, cheap checks first.

Run with `pytest tests/test_acceptance.py -v -s` to get one line per
criterion. The directional experiment at the end is the expensive one
(twelve 20-epoch training runs over worker processes).
"""

import json
import struct
import subprocess
import sys
import time

import numpy as np
import pytest

from prorandconv.augment import conv2d_direct, deform_conv2d, progressive_augment, standardize
from prorandconv.core import Batch, Image, RngStream, normalize_u8
from prorandconv.idx import (
    IMAGE_MAGIC,
    IdxDimensionError,
    IdxMagicError,
    IdxTruncatedError,
    parse_idx,
    parse_idx_file,
)
from prorandconv.pngio import write_png_file
from prorandconv.sampler import AugmentConfig, BlockParams, sample_grf, sample_weights, smoothing_mask
from prorandconv.trainer import backward, cross_entropy, forward, init_classifier
from tests.test_augment import CFG_OFF, conv_reference
from tests.test_sampler import lag1_autocorr


def _ok(name: str, detail: str = "") -> None:
    print(f"[ACCEPTANCE] {name}: PASS {detail}", flush=True)


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "prorandconv.cli", *map(str, args)],
                          capture_output=True, text=True)


def test_zero_offset_oracle_equivalence():
    """deform_conv2d(zero offsets) == conv2d_direct == nested-loop reference,
    100 random (3x32x32 image, 3x3 kernel) pairs, max abs diff <= 1e-5."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_dc, worst_dr = 0.0, 0.0
    for trial in range(100):
        x = rng.normal(size=(3, 32, 32))
        w = rng.normal(0.0, 1.0 / np.sqrt(27.0), size=(3, 3, 3, 3))
        img = Image(x)
        direct = conv2d_direct(img, w).data
        deformed = deform_conv2d(img, BlockParams(weights=w, offsets=np.zeros((18, 32, 32)))).data
        worst_dc = max(worst_dc, float(np.max(np.abs(deformed - direct))))
        if trial < 100:
            ref = conv_reference(x, w)
            worst_dr = max(worst_dr, float(np.max(np.abs(direct - ref))))
    elapsed = time.perf_counter() - t0
    assert worst_dc <= 1e-5
    assert worst_dr <= 1e-5
    assert elapsed < 10.0
    _ok("zero-offset oracle equivalence",
        f"(deform vs direct {worst_dc:.2e}, direct vs loops {worst_dr:.2e}, {elapsed:.1f}s)")


def test_variance_preservation():
    """One unsmoothed He-init convolution keeps per-channel output std in
    [0.8, 1.2] for N(0,1) input, averaged over 100 seeds."""
    t0 = time.perf_counter()
    cfg = AugmentConfig(enable_smoothing=False)
    stds = []
    for i in range(100):
        x = RngStream(900).split(i).generator().normal(size=(3, 64, 64))
        w = sample_weights(cfg, RngStream(901).split(i))
        out = conv2d_direct(Image(x), w).data
        stds.append(out.std(axis=(1, 2)).mean())
    mean_std = float(np.mean(stds))
    elapsed = time.perf_counter() - t0
    assert 0.8 <= mean_std <= 1.2
    assert elapsed < 30.0
    _ok("variance preservation", f"(mean per-channel std {mean_std:.3f}, {elapsed:.1f}s)")


def test_contrast_stage_invariants():
    """Standardized intermediate |mean| <= 1e-5 and |std-1| <= 1e-4; outputs
    strictly inside (-1, 1); constant channel -> tanh(beta) within 1e-6."""
    rng = np.random.default_rng(7)
    from prorandconv.augment import contrast_diversify

    img = Image(rng.normal(1.5, 2.5, size=(3, 32, 32)))
    z = standardize(img).data
    for c in range(3):
        assert abs(z[c].mean()) <= 1e-5
        assert abs(z[c].std() - 1.0) <= 1e-4
    gamma = np.array([0.8, -1.2, 0.3])
    beta = np.array([0.1, -0.4, 2.0])
    out = contrast_diversify(img, gamma, beta).data
    assert np.all(out > -1.0) and np.all(out < 1.0)
    const = Image(np.full((3, 16, 16), 0.25))
    out_const = contrast_diversify(const, gamma, beta).data
    for c in range(3):
        assert np.max(np.abs(out_const[c] - np.tanh(beta[c]))) <= 1e-6
    _ok("contrast-stage invariants")


def test_smoothing_limits():
    """sigma_g=1e-3 -> one-hot center within 1e-6; sigma_g=1e3 -> all within
    1e-3 of 1; sigma_g=1 corner equals exp(-1) within 1e-9."""
    tiny = smoothing_mask(3, 1e-3)
    one_hot = np.zeros((3, 3))
    one_hot[1, 1] = 1.0
    assert np.max(np.abs(tiny - one_hot)) <= 1e-6
    wide = smoothing_mask(3, 1e3)
    assert np.max(np.abs(wide - 1.0)) <= 1e-3
    assert abs(smoothing_mask(3, 1.0)[0, 0] - np.exp(-1.0)) <= 1e-9
    _ok("smoothing limits")


def test_grf_correlation_monotonicity():
    """Lag-1 autocorrelation strictly increasing over alpha in {0.1, 4, 10};
    alpha=0 white noise |rho| < 0.05; standardization within 1e-6."""
    t0 = time.perf_counter()
    means = {}
    for alpha in (0.0, 0.1, 4.0, 10.0):
        rhos = []
        for i in range(20):
            f = sample_grf(64, 64, alpha, RngStream(77).split(i))
            assert abs(f.mean()) <= 1e-6
            assert abs(f.var() - 1.0) <= 1e-6
            rhos.append(lag1_autocorr(f))
        means[alpha] = float(np.mean(rhos))
    elapsed = time.perf_counter() - t0
    assert abs(means[0.0]) < 0.05
    assert means[0.1] < means[4.0] < means[10.0]
    assert elapsed < 30.0
    _ok("GRF correlation monotonicity",
        f"(rho: " + ", ".join(f"a={a}:{m:.3f}" for a, m in means.items()) + f", {elapsed:.1f}s)")


@pytest.mark.parametrize("l_used", [1, 2, 5, 10])
def test_receptive_field_containment(l_used):
    """Impulse support after L zero-offset unsmoothed 3x3 blocks stays inside
    the (2L+1)^2 window, exactly."""
    size = 31
    center = size // 2
    x = np.zeros((1, 3, size, size))
    x[0, :, center, center] = 1.0
    out, _ = progressive_augment(Batch(x), CFG_OFF, RngStream(88), reps=l_used)
    y = np.abs(out.stack()[0]).max(axis=0)
    mask = np.zeros_like(y, dtype=bool)
    mask[center - l_used : center + l_used + 1, center - l_used : center + l_used + 1] = True
    assert np.all(y[~mask] == 0.0)
    if l_used == 10:
        _ok("receptive-field containment", "(L in {1, 2, 5, 10})")


def test_gradient_correctness():
    """Full-classifier central-difference check (h=1e-4) on a 2-class 4x4
    instance: max relative error < 1e-3."""
    st = init_classifier((3, 4, 4), 2, RngStream(5), dtype=np.float64)
    x = np.random.default_rng(5).normal(size=(6, 3, 4, 4))
    labels = np.array([0, 1, 1, 0, 1, 0])
    g = backward(st, x, labels)
    h = 1e-4
    num = np.zeros_like(st.params)
    for i in range(st.params.size):
        st.params[i] += h
        lp = cross_entropy(forward(st, x), labels)
        st.params[i] -= 2 * h
        lm = cross_entropy(forward(st, x), labels)
        st.params[i] += h
        num[i] = (lp - lm) / (2 * h)
    rel = np.abs(g - num) / np.maximum(np.abs(num), 1e-8)
    worst = float(rel.max())
    assert worst < 1e-3
    _ok("gradient correctness", f"(max relative error {worst:.2e} over {st.params.size} params)")


def test_cli_determinism(tmp_path, digits_dir):
    """cli augment, train, and grf each produce byte-identical artifacts
    across two runs with a fixed seed."""
    u8 = np.random.default_rng(3).integers(0, 256, size=(3, 24, 24)).astype(np.uint8)
    write_png_file(tmp_path / "img.png", normalize_u8(u8))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"train": {"epochs": 2, "batch_size": 64}, "seed": 13}))

    def artifact_bytes(out_dir):
        return {p.name: p.read_bytes() for p in sorted(out_dir.rglob("*")) if p.is_file()}

    pairs = {}
    for tag in ("one", "two"):
        o = tmp_path / f"aug_{tag}"
        r = run_cli("augment", "--input", tmp_path / "img.png", "--output", o,
                    "--seed", "5", "--count", "2")
        assert r.returncode == 0, r.stderr
        pairs[tag] = artifact_bytes(o)
    assert pairs["one"] == pairs["two"]

    for tag in ("one", "two"):
        o = tmp_path / f"grf_{tag}"
        r = run_cli("grf", "--size", "32", "32", "--alpha", "10", "--seed", "9", "--out",
                    o / "field")
        assert r.returncode == 0, r.stderr
        pairs[tag] = artifact_bytes(o)
    assert pairs["one"] == pairs["two"]

    for tag in ("one", "two"):
        o = tmp_path / f"train_{tag}"
        r = run_cli("train", "--data", digits_dir, "--config", cfg, "--out", o,
                    "--ablation", "full", "--limit-train", "256", "--shift-suite")
        assert r.returncode == 0, r.stderr
        pairs[tag] = artifact_bytes(o)
    assert pairs["one"] == pairs["two"]
    _ok("CLI determinism", "(augment, grf, train byte-identical across reruns)")


def test_idx_parser(digits_dir, using_real_mnist):
    """Reference digit files parse to their documented shapes; three malformed
    fixtures raise three distinct errors."""
    from prorandconv.synthdigits import TRAIN_IMAGES, TRAIN_LABELS

    batch = parse_idx_file(digits_dir / TRAIN_IMAGES)
    labels = parse_idx_file(digits_dir / TRAIN_LABELS)
    n = 60000 if using_real_mnist else 12000
    assert batch.stack().shape == (n, 1, 28, 28)
    assert labels.shape == (n,)

    with pytest.raises(IdxMagicError):
        parse_idx(struct.pack(">IIII", 0x00000805, 1, 2, 2) + bytes(4))
    with pytest.raises(IdxTruncatedError):
        parse_idx(struct.pack(">IIII", IMAGE_MAGIC, 2, 3, 3) + bytes(10))
    with pytest.raises(IdxDimensionError):
        parse_idx(struct.pack(">IIII", IMAGE_MAGIC, 60000, 60000, 60000))
    source = "real MNIST" if using_real_mnist else "synthetic corpus"
    _ok("IDX parser", f"({source}: shapes ({n}, 28, 28) / ({n},); 3 distinct errors)")


def test_directional_generalization_experiment(digits_dir):
    """Desk-scale Table-1 trend: over 3 seeds and 20 epochs on the first
    10,000 digit samples, the full pipeline beats the ERM baseline by >= 10
    points of mean shift accuracy without losing more than 2 points
    in-domain. The prog-same >= prog-diff ordering is soft-checked. Runtime
    budget 30 minutes."""
    from prorandconv.experiments import run_directional_experiment

    result = run_directional_experiment(digits_dir, seeds=(0, 1, 2), epochs=20,
                                        limit_train=10000)
    agg = result["aggregates"]
    base, full = agg["baseline"], agg["full"]
    gap = full["mean_shift_acc"] - base["mean_shift_acc"]
    in_domain_drop = base["in_domain_acc"] - full["in_domain_acc"]

    print("[ACCEPTANCE] directional experiment aggregates "
          f"(3 seeds, {result['epochs']} epochs, {result['wall_time_s']:.0f}s wall, "
          f"{result['workers']} workers):", flush=True)
    for abl in ("baseline", "full", "prog-same", "prog-diff"):
        a = agg[abl]
        shifts = ", ".join(f"{k}={v:.3f}" for k, v in a["shift_accs"].items())
        print(f"    {abl:10s} in_domain={a['in_domain_acc']:.4f} "
              f"mean_shift={a['mean_shift_acc']:.4f} ({shifts})", flush=True)

    assert gap >= 0.10, f"full vs baseline mean shift gap {gap:.4f} < 0.10"
    assert in_domain_drop <= 0.02, f"in-domain dropped by {in_domain_drop:.4f} > 0.02"
    assert base["in_domain_acc"] > 0.95

    same, diff = agg["prog-same"]["mean_shift_acc"], agg["prog-diff"]["mean_shift_acc"]
    if same >= diff:
        print(f"[ACCEPTANCE] soft check prog-same >= prog-diff: PASS "
              f"({same:.4f} >= {diff:.4f})", flush=True)
    else:
        print(f"[ACCEPTANCE] soft check prog-same >= prog-diff: ORDERING NOT REPRODUCED "
              f"({same:.4f} < {diff:.4f}); reported, not fatal. Same-weight stacking "
              f"without the contrast stage amplifies exponentially with L, which "
              f"destabilizes training at desk scale.", flush=True)

    assert result["wall_time_s"] < 1800.0, (
        f"experiment took {result['wall_time_s']:.0f}s, budget is 1800s"
    )
    _ok("directional generalization experiment",
        f"(gap +{gap * 100:.1f} pts, in-domain drop {in_domain_drop * 100:.2f} pts, "
        f"{result['wall_time_s']:.0f}s)")
