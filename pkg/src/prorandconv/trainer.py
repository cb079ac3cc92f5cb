"""Desk-scale classifier training on original plus augmented views.

A LeNet-style convnet (two valid 5x5 convolutions with max pooling, two fully
connected layers) is trained with plain SGD + momentum under a per-step cosine
learning-rate schedule. Parameters live in one flat vector with per-layer
views; backpropagation is hand-rolled so gradients can be checked against
finite differences. Selection strategies control how original and augmented
images are mixed into each training batch, and ``synth_shift`` builds
label-preserving shifted test domains for directional generalization checks.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import fold_valid, im2col_valid, maxpool2_backward, maxpool2_forward
from .augment import progressive_augment, progressive_augment_diff, randconv_baseline
from .core import Batch, RngStream
from .sampler import AugmentConfig

__all__ = [
    "Dataset",
    "TrainConfig",
    "ClassifierState",
    "TrainingDivergedError",
    "SELECTION_STRATEGIES",
    "AUGMENT_MODES",
    "init_classifier",
    "forward",
    "cross_entropy",
    "backward",
    "cosine_lr",
    "select_training_views",
    "train",
    "evaluate",
    "synth_shift",
    "SHIFT_KINDS",
    "prepare_digits",
]

VAL_FRACTION = 0.1
_EMA_WINDOW = 50
_PROB_FLOOR = 1e-12

SELECTION_STRATEGIES = (
    "originals_only",
    "augmented_only",
    "batch_either",
    "both_concat",
    "instance_fraction",
    "instance_fraction_random",
)

AUGMENT_MODES = ("none", "randconv", "progressive", "progressive_diff")

SHIFT_KINDS = ("negate", "channel_permute", "contrast_gamma", "hue_cast")


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class Dataset:
    """Labelled image collection used for training or evaluation."""

    images: Batch
    name: str
    num_classes: int

    def __post_init__(self) -> None:
        if self.images.labels is None:
            raise ValueError("dataset batch must carry labels")
        lab = self.images.labels
        if lab.min() < 0 or lab.max() >= self.num_classes:
            raise ValueError(f"labels must lie in [0, {self.num_classes}), got range "
                             f"[{lab.min()}, {lab.max()}]")

    def __len__(self) -> int:
        return len(self.images)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings. The schedule is cosine decay to zero over all steps."""

    batch_size: int = 64
    momentum: float = 0.9
    lr0: float = 0.01
    epochs: int = 20
    selection: str = "both_concat"
    selection_r: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.selection not in SELECTION_STRATEGIES:
            raise ValueError(f"unknown selection strategy {self.selection!r}")
        if not 0.0 <= self.selection_r <= 1.0:
            raise ValueError("selection_r must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Layers. Parameters are slices of one flat vector; each layer knows its size.
# ---------------------------------------------------------------------------


class _Conv:
    """Valid 2D convolution (no padding), weight (O, I, k, k) + bias (O,).

    Columns are laid out (C, ki, kj)-major so both the gather and the fold
    run as per-tap contiguous block copies instead of 6D permutes.
    """

    def __init__(self, in_shape, out_ch, k):
        c, h, w = in_shape
        self.in_shape = in_shape
        self.k = k
        self.out_ch = out_ch
        self.out_shape = (out_ch, h - k + 1, w - k + 1)
        self.n_weights = out_ch * c * k * k
        self.n_params = self.n_weights + out_ch
        # Scratch buffers keyed by (name, N, dtype); fresh   multi-MB
        # allocations every step would pay page-fault cost each time.
        self._scratch: dict = {}

    def init(self, rng: RngStream, dtype) -> np.ndarray:
        c = self.in_shape[0]
        std = math.sqrt(2.0 / (c * self.k * self.k))
        w = rng.generator().normal(0.0, std, size=self.n_weights)
        return np.concatenate([w, np.zeros(self.out_ch)]).astype(dtype)

    def _buf(self, name, shape, dtype):
        key = (name, shape, np.dtype(dtype).str)
        buf = self._scratch.get(key)
        if buf is None:
            if len(self._scratch) > 16:
                self._scratch.clear()
            buf = np.empty(shape, dtype=dtype)
            self._scratch[key] = buf
        return buf

    def _cols(self, x: np.ndarray) -> np.ndarray:
        """(C, k, k, N, Ho, Wo) column tensor."""
        k = self.k
        n, c = x.shape[:2]
        _, ho, wo = self.out_shape
        xt = self._buf("xt", (c, n) + x.shape[2:], x.dtype)
        np.copyto(xt, x.transpose(1, 0, 2, 3))
        cols = self._buf("cols", (c, k, k, n, ho, wo), x.dtype)
        im2col_valid(xt, k, cols)
        return cols

    def forward(self, x, p, need_cache):
        o = self.out_ch
        c, ho, wo = x.shape[1], self.out_shape[1], self.out_shape[2]
        n = x.shape[0]
        wmat = p[: self.n_weights].reshape(o, -1)
        b = p[self.n_weights:]
        cols = self._cols(x)
        out = self._buf("out", (o, n * ho * wo), x.dtype)
        np.matmul(wmat, cols.reshape(c * self.k * self.k, n * ho * wo), out=out)
        out += b[:, None]
        y = self._buf("y", (n, o, ho, wo), x.dtype)
        np.copyto(y, out.reshape(o, n, ho, wo).transpose(1, 0, 2, 3))
        return y, (x.shape, cols) if need_cache else None

    def backward(self, dy, cache, p):
        x_shape, cols = cache
        n, c = x_shape[:2]
        o = self.out_ch
        k = self.k
        _, ho, wo = self.out_shape
        wmat = p[: self.n_weights].reshape(o, -1)
        dy2 = self._buf("dy2", (o, n * ho * wo), dy.dtype)
        np.copyto(dy2.reshape(o, n, ho, wo), dy.transpose(1, 0, 2, 3))
        dwmat = dy2 @ cols.reshape(c * k * k, -1).T
        db = dy2.sum(axis=1)
        dcols = self._buf("dcols", (c, k, k, n, ho, wo), dy.dtype)
        np.matmul(wmat.T, dy2, out=dcols.reshape(c * k * k, -1))
        # Fold taps back onto the input grid (edges accumulate fewer taps).
        dxt = self._buf("dxt", (c, n) + x_shape[2:], dy.dtype)
        dxt[:] = 0
        fold_valid(dcols, k, dxt)
        dx = self._buf("dx", x_shape, dy.dtype)
        np.copyto(dx, dxt.transpose(1, 0, 2, 3))
        return dx, np.concatenate([dwmat.ravel(), db])


class _ReLU:
    def __init__(self, in_shape):
        self.in_shape = in_shape
        self.out_shape = in_shape
        self.n_params = 0

    def init(self, rng, dtype):
        return np.zeros(0, dtype=dtype)

    def forward(self, x, p, need_cache):
        y = np.maximum(x, 0)
        return y, y if need_cache else None

    def backward(self, dy, cache, p):
        return dy * (cache > 0), np.zeros(0, dtype=dy.dtype)


class _MaxPool2:
    def __init__(self, in_shape):
        c, h, w = in_shape
        if h % 2 or w % 2:
            raise ValueError(f"max pool needs even spatial dims, got {(h, w)}")
        self.in_shape = in_shape
        self.out_shape = (c, h // 2, w // 2)
        self.n_params = 0

    def init(self, rng, dtype):
        return np.zeros(0, dtype=dtype)

    def forward(self, x, p, need_cache):
        n, c, h, w = x.shape
        x = np.ascontiguousarray(x)
        y = np.empty((n, c, h // 2, w // 2), dtype=x.dtype)
        arg = np.empty((n, c, h // 2, w // 2), dtype=np.uint8)
        maxpool2_forward(x, y, arg)
        return y, (x.shape, arg) if need_cache else None

    def backward(self, dy, cache, p):
        x_shape, arg = cache
        dx = np.zeros(x_shape, dtype=dy.dtype)
        maxpool2_backward(np.ascontiguousarray(dy), arg, dx)
        return dx, np.zeros(0, dtype=dy.dtype)


class _Flatten:
    def __init__(self, in_shape):
        self.in_shape = in_shape
        self.out_shape = (int(np.prod(in_shape)),)
        self.n_params = 0

    def init(self, rng, dtype):
        return np.zeros(0, dtype=dtype)

    def forward(self, x, p, need_cache):
        return x.reshape(x.shape[0], -1), x.shape if need_cache else None

    def backward(self, dy, cache, p):
        return dy.reshape(cache), np.zeros(0, dtype=dy.dtype)


class _Dense:
    def __init__(self, in_shape, out_n):
        (in_n,) = in_shape
        self.in_shape = in_shape
        self.out_shape = (out_n,)
        self.in_n, self.out_n = in_n, out_n
        self.n_weights = in_n * out_n
        self.n_params = self.n_weights + out_n

    def init(self, rng, dtype):
        std = math.sqrt(2.0 / self.in_n)
        w = rng.generator().normal(0.0, std, size=self.n_weights)
        return np.concatenate([w, np.zeros(self.out_n)]).astype(dtype)

    def forward(self, x, p, need_cache):
        w = p[: self.n_weights].reshape(self.in_n, self.out_n)
        y = x @ w
        y += p[self.n_weights:]
        return y, x if need_cache else None

    def backward(self, dy, cache, p):
        w = p[: self.n_weights].reshape(self.in_n, self.out_n)
        dw = cache.T @ dy
        db = dy.sum(axis=0)
        dx = dy @ w.T
        return dx, np.concatenate([dw.ravel(), db])


def _build_layers(input_shape, num_classes):
    c, h, w = input_shape
    layers = []

    def push(layer):
        layers.append(layer)
        return layer.out_shape

    if h >= 16 and w >= 16:
        s = push(_Conv(input_shape, 6, 5))
        s = push(_ReLU(s))
        s = push(_MaxPool2(s))
        s = push(_Conv(s, 16, 5))
        s = push(_ReLU(s))
        s = push(_MaxPool2(s))
        s = push(_Flatten(s))
        s = push(_Dense(s, 120))
        s = push(_ReLU(s))
        push(_Dense(s, num_classes))
    else:
        # Downsized stack for tiny inputs (gradient checks), same layer kinds.
        s = push(_Conv(input_shape, 4, 3))
        s = push(_ReLU(s))
        s = push(_MaxPool2(s))
        s = push(_Flatten(s))
        s = push(_Dense(s, 8))
        s = push(_ReLU(s))
        push(_Dense(s, num_classes))
    return layers


@dataclass
class ClassifierState:
    """Network parameters as one flat vector plus the momentum buffer."""

    input_shape: tuple[int, int, int]
    num_classes: int
    params: np.ndarray
    velocity: np.ndarray
    layers: list = field(repr=False, default_factory=list)
    offsets: list = field(repr=False, default_factory=list)

    def layer_params(self, i: int) -> np.ndarray:
        a, b = self.offsets[i]
        return self.params[a:b]


def init_classifier(
    input_shape=(3, 32, 32), num_classes=10, rng: RngStream = RngStream(0), dtype=np.float32
) -> ClassifierState:
    """Build the classifier for the given input size and seed its parameters."""
    layers = _build_layers(tuple(input_shape), num_classes)
    chunks, offsets, pos = [], [], 0
    for i, layer in enumerate(layers):
        p = layer.init(rng.split(i), dtype)
        chunks.append(p)
        offsets.append((pos, pos + p.size))
        pos += p.size
    params = np.concatenate(chunks) if chunks else np.zeros(0, dtype=dtype)
    return ClassifierState(
        input_shape=tuple(input_shape),
        num_classes=num_classes,
        params=params,
        velocity=np.zeros_like(params),
        layers=layers,
        offsets=offsets,
    )


def _as_input(state: ClassifierState, batch) -> np.ndarray:
    x = batch.stack() if isinstance(batch, Batch) else np.asarray(batch)
    if x.shape[1:] != state.input_shape:
        raise ValueError(f"input shape {x.shape[1:]} does not match network {state.input_shape}")
    return x.astype(state.params.dtype, copy=False)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_caches(state: ClassifierState, x: np.ndarray, need_cache: bool):
    caches = []
    for i, layer in enumerate(state.layers):
        x, cache = layer.forward(x, state.layer_params(i), need_cache)
        caches.append(cache)
    return _softmax(x), caches


def forward(state: ClassifierState, batch) -> np.ndarray:
    """Class probabilities, one row per image, rows summing to 1."""
    probs, _ = _forward_caches(state, _as_input(state, batch), need_cache=False)
    return probs


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-probability of the true class."""
    labels = np.asarray(labels)
    p = probs[np.arange(probs.shape[0]), labels]
    return float(-np.mean(np.log(np.maximum(p, _PROB_FLOOR))))


def _loss_and_grad(state: ClassifierState, x: np.ndarray, labels: np.ndarray):
    probs, caches = _forward_caches(state, x, need_cache=True)
    loss = cross_entropy(probs, labels)
    n = x.shape[0]
    dlogits = probs.astype(state.params.dtype, copy=True)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    grad = np.zeros_like(state.params)
    dy = dlogits
    for i in range(len(state.layers) - 1, -1, -1):
        layer = state.layers[i]
        dy, dp = layer.backward(dy, caches[i], state.layer_params(i))
        a, b = state.offsets[i]
        grad[a:b] = dp
    return loss, grad


def backward(state: ClassifierState, batch, labels) -> np.ndarray:
    """Analytic gradient of the mean cross-entropy with respect to all parameters."""
    x = _as_input(state, batch)
    _, grad = _loss_and_grad(state, x, np.asarray(labels))
    return grad


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """Cosine decay over all steps: lr(0) = lr0, lr(total-1) ~ 0."""
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def select_training_views(
    originals: Batch, augmented: Batch, strategy: str, rng: RngStream, *, r: float = 0.5
) -> Batch:
    """Compose the batch the network actually trains on.

    both_concat concatenates originals and augmented (the default);
    batch_either flips one coin per batch; instance_fraction keeps each image
    original with probability r; instance_fraction_random first draws
    r ~ U(0, 1) per batch.
    """
    if strategy not in SELECTION_STRATEGIES:
        raise ValueError(f"unknown selection strategy {strategy!r}")
    if not 0.0 <= r <= 1.0:
        raise ValueError("r must lie in [0, 1]")
    if originals.data.shape != augmented.data.shape:
        raise ValueError("originals and augmented batches must be shape-matched")
    if strategy == "originals_only":
        return originals
    if strategy == "augmented_only":
        return augmented
    if strategy == "both_concat":
        labels = None
        if originals.labels is not None:
            labels = np.concatenate([originals.labels, augmented.labels])
        return Batch(np.concatenate([originals.data, augmented.data]), labels)
    g = rng.generator()
    if strategy == "batch_either":
        return originals if g.integers(2) == 0 else augmented
    if strategy == "instance_fraction_random":
        r = float(g.random())
    keep = g.random(len(originals)) < r
    data = np.where(keep[:, None, None, None], originals.data, augmented.data)
    return Batch(data, originals.labels)


def _augment_views(origs: Batch, aug_cfg: AugmentConfig, mode: str, rng: RngStream) -> Batch:
    if mode == "randconv":
        return randconv_baseline(origs, rng)
    if mode == "progressive":
        return progressive_augment(origs, aug_cfg, rng)[0]
    if mode == "progressive_diff":
        return progressive_augment_diff(origs, aug_cfg, rng)
    raise ValueError(f"unknown augment mode {mode!r}")


def train(
    dataset: Dataset,
    aug_cfg: AugmentConfig,
    train_cfg: TrainConfig,
    augment_mode: str = "progressive",
) -> tuple[ClassifierState, dict]:
    """Train the classifier, returning the best-validation checkpoint and metrics.

    Per mini-batch: augment (one block per batch), apply the selection
    strategy, take one SGD step under the cosine schedule. The last
    VAL_FRACTION of the dataset is held out; the returned state carries the
    parameters of the epoch with the best validation accuracy. Fully
    deterministic given the config seed.
    """
    if augment_mode not in AUGMENT_MODES:
        raise ValueError(f"unknown augment mode {augment_mode!r}")
    rng = RngStream(train_cfg.seed)
    x_all = dataset.images.stack().astype(np.float32)
    y_all = dataset.images.labels
    n = x_all.shape[0]
    n_val = max(1, int(round(VAL_FRACTION * n)))
    if n_val >= n:
        raise ValueError("dataset too small to hold out a validation split")
    x_tr, y_tr = x_all[: n - n_val], y_all[: n - n_val]
    val_set = Dataset(Batch(x_all[n - n_val :], y_all[n - n_val :]), dataset.name + ":val",
                      dataset.num_classes)

    state = init_classifier(x_all.shape[1:], dataset.num_classes, rng.split(0), np.float32)
    n_train = x_tr.shape[0]
    bs = train_cfg.batch_size
    steps_per_epoch = (n_train + bs - 1) // bs
    total_steps = steps_per_epoch * train_cfg.epochs

    ema = None
    ema_alpha = 2.0 / (_EMA_WINDOW + 1)
    records: list[dict] = []
    step_losses: list[float] = []
    best = (-1.0, -1)
    best_params = state.params.copy()
    global_step = 0
    lr = train_cfg.lr0

    for epoch in range(train_cfg.epochs):
        perm = rng.split(1).split(epoch).generator().permutation(n_train)
        for s in range(steps_per_epoch):
            idx = perm[s * bs : (s + 1) * bs]
            origs = Batch(x_tr[idx], y_tr[idx])
            if augment_mode == "none":
                views = origs
            else:
                step_rng = rng.split(2).split(epoch).split(s)
                augmented = _augment_views(origs, aug_cfg, augment_mode, step_rng.split(0))
                views = select_training_views(
                    origs, augmented, train_cfg.selection, step_rng.split(1),
                    r=train_cfg.selection_r,
                )
            loss, grad = _loss_and_grad(state, views.stack().astype(np.float32, copy=False),
                                        views.labels)
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"loss became non-finite at step {global_step}")
            step_losses.append(loss)
            ema = loss if ema is None else (1 - ema_alpha) * ema + ema_alpha * loss
            lr = cosine_lr(global_step, total_steps, train_cfg.lr0)
            state.velocity *= train_cfg.momentum
            state.velocity += grad
            state.params -= (lr * state.velocity).astype(state.params.dtype, copy=False)
            global_step += 1
        val_acc = evaluate(state, val_set)
        records.append(
            {
                "epoch": epoch,
                "step": global_step,
                "lr": lr,
                "loss": float(ema),
                "in_domain_acc": val_acc,
            }
        )
        if val_acc > best[0]:
            best = (val_acc, epoch)
            best_params = state.params.copy()

    state.params = best_params
    metrics = {
        "records": records,
        "step_losses": step_losses,
        "best_epoch": best[1],
        "best_val_acc": best[0],
        "total_steps": total_steps,
    }
    return state, metrics


def evaluate(state: ClassifierState, dataset: Dataset, chunk: int = 512) -> float:
    """Top-1 accuracy of the classifier on the dataset."""
    x = dataset.images.stack()
    labels = dataset.images.labels
    hits = 0
    for start in range(0, x.shape[0], chunk):
        probs = forward(state, x[start : start + chunk])
        hits += int((probs.argmax(axis=1) == labels[start : start + chunk]).sum())
    return hits / x.shape[0]


def synth_shift(dataset: Dataset, kind: str, rng: RngStream) -> Dataset:
    """Label-preserving pixel shift of a dataset, standing in for a real
    target domain. Kinds: negate, channel_permute, contrast_gamma, hue_cast."""
    if kind not in SHIFT_KINDS:
        raise ValueError(f"unknown shift kind {kind!r}")
    x = dataset.images.stack()
    c = x.shape[1]
    if kind == "negate":
        out = -x
    elif kind == "channel_permute":
        perms = [p for p in itertools.permutations(range(c)) if p != tuple(range(c))]
        perm = perms[int(rng.generator().integers(len(perms)))]
        out = x[:, list(perm)]
    elif kind == "contrast_gamma":
        log_g = rng.generator().uniform(math.log(0.4), math.log(2.5))
        gamma = math.exp(log_g)
        t = np.clip((x + 1.0) / 2.0, 0.0, 1.0)
        out = (2.0 * t**gamma - 1.0).astype(x.dtype)
    else:  # hue_cast
        cast = np.linspace(0.25, -0.25, c).astype(x.dtype)
        out = np.clip(x + cast[None, :, None, None], -1.0, 1.0)
    return Dataset(Batch(out, dataset.images.labels), f"{dataset.name}:{kind}",
                   dataset.num_classes)


def prepare_digits(images: np.ndarray | Batch, labels: np.ndarray, name: str,
                   num_classes: int = 10, side: int = 32) -> Dataset:
    """Turn raw digit images into trainer input: pad to ``side`` x ``side``
    with background (-1) and replicate grayscale to 3 channels."""
    if isinstance(images, Batch):
        x = images.stack()
    else:
        x = np.asarray(images)
        if x.ndim == 3:
            x = x[:, None]
    n, c, h, w = x.shape
    if h > side or w > side:
        raise ValueError(f"images ({h}x{w}) larger than target side {side}")
    top = (side - h) // 2
    left = (side - w) // 2
    padded = np.full((n, c, side, side), -1.0, dtype=np.float32)
    padded[:, :, top : top + h, left : left + w] = x
    if c == 1:
        padded = np.repeat(padded, 3, axis=1)
    elif c != 3:
        raise ValueError(f"expected 1- or 3-channel digits, got {c}")
    return Dataset(Batch(padded, labels), name, num_classes)
