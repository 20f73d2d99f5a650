"""Patch classifier: a two-layer perceptron trained with Adam.

The model maps a flattened, z-scored patch (200*26 samples) through one
ReLU hidden layer to a sigmoid probability.  Training is plain shuffled
minibatch gradient descent on binary cross-entropy with Adam updates,
lateral-flip augmentation, and best-validation-accuracy model selection.
All randomness flows from two seeds: the config seed fixes the
train/validation split, the model seed fixes init, shuffling, and flips.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagic,
    DimMismatch,
    EmptyDataset,
    InvalidConfig,
    MalformedHeader,
    NonFiniteInput,
    ShapeMismatch,
    SingleClassDataset,
    TruncatedFile,
    UnlabeledData,
    VersionMismatch,
)
from .rf import NormStats, Patch

MODEL_MAGIC = b"M2MNN1\x00\x00"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<8sIII")

DEFAULT_HIDDEN = 64


@dataclass
class MLPModel:
    """sigmoid(w2 . relu(w1 @ x + b1) + b2)."""

    w1: np.ndarray  # [hidden, input_dim]
    b1: np.ndarray  # [hidden]
    w2: np.ndarray  # [hidden]
    b2: float
    hidden: int = DEFAULT_HIDDEN
    input_dim: int = 200 * 26

    def __post_init__(self):
        self.w1 = np.asarray(self.w1)
        self.b1 = np.asarray(self.b1)
        self.w2 = np.asarray(self.w2)
        if self.w1.shape != (self.hidden, self.input_dim):
            raise ShapeMismatch(f"w1 shape {self.w1.shape} != ({self.hidden}, {self.input_dim})")
        if self.b1.shape != (self.hidden,) or self.w2.shape != (self.hidden,):
            raise ShapeMismatch("b1/w2 must be [hidden] vectors")
        for arr in (self.w1, self.b1, self.w2):
            if not np.all(np.isfinite(arr)):
                raise NonFiniteInput("model parameters must be finite")
        if not np.isfinite(self.b2):
            raise NonFiniteInput("model parameters must be finite")

    def params(self) -> list[np.ndarray]:
        """Parameters in declaration order (b2 as a 0-d array)."""
        return [self.w1, self.b1, self.w2, np.asarray(self.b2, dtype=self.w1.dtype)]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 20
    batch_size: int = 256
    validation_fraction: float = 0.1
    flip_prob: float = 0.5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise InvalidConfig("learning_rate/epochs/batch_size must be positive")
        if not (0.0 < self.validation_fraction < 1.0):
            raise InvalidConfig("validation_fraction must be in (0, 1)")
        if not (0.0 <= self.flip_prob <= 1.0):
            raise InvalidConfig("flip_prob must be in [0, 1]")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1 and self.adam_eps > 0):
            raise InvalidConfig("adam parameters out of range")


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    auc: float
    n_samples: int

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 1.0 and 0.0 <= self.auc <= 1.0):
            raise InvalidConfig("metrics must lie in [0, 1]")


@dataclass(frozen=True)
class RepetitionReport:
    mean_accuracy: float
    std_accuracy: float
    mean_auc: float
    std_auc: float
    n_repetitions: int
    per_run: tuple = field(default=())


# ---------------------------------------------------------------------------
# forward / backward


def _forward_batch(w1, b1, w2, b2, x):
    """Returns (probabilities, hidden activations, pre-activations)."""
    z1 = x @ w1.T + b1
    a1 = np.maximum(z1, 0)
    z2 = a1 @ w2 + b2
    p = 1.0 / (1.0 + np.exp(-z2))
    return p, a1, z1


def forward(model: MLPModel, patch_flat: np.ndarray) -> float:
    """Probability of class 1 for one flattened patch."""
    x = np.asarray(patch_flat, dtype=model.w1.dtype).ravel()
    if x.shape[0] != model.input_dim:
        raise DimMismatch(f"expected {model.input_dim} inputs, got {x.shape[0]}")
    p, _, _ = _forward_batch(model.w1, model.b1, model.w2, model.b2, x[None, :])
    return float(p[0])


def loss_and_grads(model: MLPModel, x: np.ndarray, y: np.ndarray):
    """Mean binary cross-entropy and its gradients w.r.t. every parameter.

    Computed in the model's own dtype so the same code path serves float32
    training and float64 finite-difference checks.  Returns
    (loss, [g_w1, g_b1, g_w2, g_b2]).
    """
    dtype = model.w1.dtype
    x = np.asarray(x, dtype=dtype)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimMismatch("x must be [batch, input_dim]")
    y = np.asarray(y, dtype=dtype)
    w1, b1, w2, b2 = model.w1, model.b1, model.w2, dtype.type(model.b2)

    z1 = x @ w1.T + b1
    a1 = np.maximum(z1, 0)
    z2 = a1 @ w2 + b2
    # stable BCE on logits: softplus(z) - y*z
    loss = float(np.mean(np.logaddexp(dtype.type(0), z2) - y * z2))
    p = 1.0 / (1.0 + np.exp(-z2))

    n = dtype.type(x.shape[0])
    dz2 = (p - y) / n
    g_w2 = a1.T @ dz2
    g_b2 = np.asarray(dz2.sum(), dtype=dtype)
    dz1 = np.outer(dz2, w2)
    dz1[z1 <= 0] = 0
    g_w1 = dz1.T @ x
    g_b1 = dz1.sum(axis=0)
    return loss, [g_w1, g_b1, g_w2, g_b2]


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0


def init_adam(params: list[np.ndarray]) -> AdamState:
    return AdamState(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update.  Functional: returns new (params, state)."""
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ShapeMismatch("params and grads must have identical shapes")
    b1, b2, eps, lr = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.learning_rate
    t = state.t + 1
    new_params, new_m, new_v = [], [], []
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        step = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_params.append(p - step)
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(m=new_m, v=new_v, t=t)


# ---------------------------------------------------------------------------
# dataset plumbing


def design_matrix(patches: list[Patch], stats: NormStats, dtype=np.float32):
    """Normalize and flatten patches into (X [n, 5200], y [n]).

    Applies the same z-score as rf.normalize element-wise, vectorized in
    chunks so the float64 intermediate stays small.  Raises UnlabeledData
    if any patch lacks a label.
    """
    if not patches:
        raise EmptyDataset("no patches")
    labels = []
    for p in patches:
        if p.label is None:
            raise UnlabeledData("patch without class label")
        labels.append(p.label)
    n = len(patches)
    x = np.empty((n,) + patches[0].samples.shape, dtype=dtype)
    chunk = 2048
    for start in range(0, n, chunk):
        block = np.stack([p.samples for p in patches[start : start + chunk]]).astype(np.float64)
        x[start : start + chunk] = (block - stats.mean_patch) / stats.std_patch
    return x.reshape(n, -1), np.asarray(labels, dtype=np.int64)


def _flip_lateral(x: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Reverse the lateral axis of flattened patches."""
    return np.ascontiguousarray(x.reshape(-1, rows, cols)[:, :, ::-1]).reshape(x.shape[0], -1)


def init_model(input_dim: int, hidden: int, seed, dtype=np.float32) -> MLPModel:
    """He-scaled Gaussian init for the ReLU layer, smaller for the head."""
    rng = np.random.default_rng(seed)
    w1 = (rng.standard_normal((hidden, input_dim)) * np.sqrt(2.0 / input_dim)).astype(dtype)
    w2 = (rng.standard_normal(hidden) * np.sqrt(1.0 / hidden)).astype(dtype)
    b1 = np.zeros(hidden, dtype=dtype)
    return MLPModel(w1=w1, b1=b1, w2=w2, b2=0.0, hidden=hidden, input_dim=input_dim)


def train(
    model_seed,
    dataset: list[Patch],
    stats: NormStats,
    cfg: TrainConfig,
    hidden: int = DEFAULT_HIDDEN,
    patch_shape: tuple[int, int] | None = None,
) -> MLPModel:
    """Train on labeled patches, returning the best-validation-epoch model.

    The split is fixed by cfg.seed; initialization, shuffling, and flip
    draws are fixed by model_seed, so (cfg.seed, model_seed, data) fully
    determine the result.
    """
    x, y = design_matrix(dataset, stats)
    rows, cols = patch_shape or dataset[0].samples.shape
    return _train_matrix(model_seed, x, y, cfg, hidden, rows, cols)


def _train_matrix(
    model_seed,
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    hidden: int,
    rows: int,
    cols: int,
) -> MLPModel:
    """train() after design_matrix; shared so callers can reuse matrices."""
    classes = set(int(v) for v in y)
    if classes != {0, 1}:
        raise SingleClassDataset(f"need both classes, got {sorted(classes)}")
    n = x.shape[0]

    split_rng = np.random.default_rng(cfg.seed)
    order = split_rng.permutation(n)
    n_val = min(max(1, int(round(n * cfg.validation_fraction))), n - 2)
    val_idx, tr_idx = order[:n_val], order[n_val:]
    x_tr, y_tr = x[tr_idx], y[tr_idx].astype(np.float32)
    x_val, y_val = x[val_idx], y[val_idx]
    if {0, 1} - set(int(v) for v in y_tr):
        raise SingleClassDataset("training split lost a class; add data")

    rng = np.random.default_rng(model_seed)
    model = init_model(x.shape[1], hidden, rng)
    params = [model.w1, model.b1, model.w2, np.asarray(model.b2, dtype=np.float32)]
    state = init_adam(params)

    best_acc = -1.0
    best_params = [p.copy() for p in params]
    n_tr = x_tr.shape[0]
    work = MLPModel(*params[:3], float(params[3]), hidden=hidden, input_dim=x.shape[1])
    for _ in range(cfg.epochs):
        perm = rng.permutation(n_tr)
        flips = rng.random(n_tr)  # always drawn, so flip_prob only gates use
        for start in range(0, n_tr, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb = x_tr[idx]
            do_flip = flips[idx] < cfg.flip_prob
            if do_flip.any():
                xb = xb.copy()
                xb[do_flip] = _flip_lateral(xb[do_flip], rows, cols)
            work.w1, work.b1, work.w2, work.b2 = (
                params[0],
                params[1],
                params[2],
                float(params[3]),
            )
            _, grads = loss_and_grads(work, xb, y_tr[idx])
            params, state = adam_step(params, grads, state, cfg)
        probs, _, _ = _forward_batch(params[0], params[1], params[2], float(params[3]), x_val)
        acc = float(np.mean((probs >= 0.5).astype(np.int64) == y_val))
        if acc > best_acc:
            best_acc = acc
            best_params = [p.copy() for p in params]

    w1, b1, w2, b2 = best_params
    return MLPModel(w1=w1, b1=b1, w2=w2, b2=float(b2), hidden=hidden, input_dim=x.shape[1])


# ---------------------------------------------------------------------------
# metrics


def auc_score(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg), ties counting 1/2.

    Computed from the rank-sum of the positive class with average ranks
    for tied scores.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise SingleClassDataset("AUC needs both classes")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum_pos = float(np.sum(ranks[labels == 1]))
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def evaluate(model: MLPModel, dataset: list[Patch], stats: NormStats) -> Metrics:
    """Accuracy at threshold 0.5 plus rank AUC on labeled patches."""
    if not dataset:
        raise EmptyDataset("nothing to evaluate")
    x, y = design_matrix(dataset, stats, dtype=model.w1.dtype)
    return _evaluate_matrix(model, x, y)


def _evaluate_matrix(model: MLPModel, x: np.ndarray, y: np.ndarray) -> Metrics:
    """evaluate() after design_matrix; shared so callers can reuse matrices."""
    probs, _, _ = _forward_batch(model.w1, model.b1, model.w2, model.b2, x)
    acc = float(np.mean((probs >= 0.5).astype(np.int64) == y))
    return Metrics(accuracy=acc, auc=auc_score(probs, y), n_samples=int(y.shape[0]))


def repeat_experiment(run, n: int, base_seed: int) -> RepetitionReport:
    """Run the closure at seeds base_seed..base_seed+n-1 and aggregate.

    Means and population standard deviations of accuracy and AUC.
    """
    if n < 1:
        raise InvalidConfig("n must be >= 1")
    per_run = tuple(run(base_seed + i) for i in range(n))
    accs = np.array([m.accuracy for m in per_run], dtype=np.float64)
    aucs = np.array([m.auc for m in per_run], dtype=np.float64)
    return RepetitionReport(
        mean_accuracy=float(accs.mean()),
        std_accuracy=float(accs.std()),
        mean_auc=float(aucs.mean()),
        std_auc=float(aucs.std()),
        n_repetitions=n,
        per_run=per_run,
    )


# ---------------------------------------------------------------------------
# checkpoint format


def save_model(path, model: MLPModel) -> None:
    """Binary checkpoint: 20-byte header then f32 parameters in order."""
    header = _MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, model.hidden, model.input_dim)
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in (model.w1, model.b1, model.w2):
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        fh.write(np.float32(model.b2).tobytes())


def load_model(path) -> MLPModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _MODEL_HEADER.size:
        if blob[: len(MODEL_MAGIC)] != MODEL_MAGIC[: len(blob)]:
            raise BadMagic("not a model checkpoint")
        raise TruncatedFile("checkpoint shorter than its header")
    magic, version, hidden, input_dim = _MODEL_HEADER.unpack_from(blob)
    if magic != MODEL_MAGIC:
        raise BadMagic("not a model checkpoint")
    if version != MODEL_VERSION:
        raise VersionMismatch(f"unsupported checkpoint version {version}")
    if hidden < 1 or input_dim < 1:
        raise MalformedHeader("degenerate model dims")
    n_params = hidden * input_dim + hidden + hidden + 1
    expected = _MODEL_HEADER.size + 4 * n_params
    if len(blob) < expected:
        raise TruncatedFile("checkpoint payload incomplete")
    if len(blob) > expected:
        raise MalformedHeader("trailing bytes after parameters")
    flat = np.frombuffer(blob, dtype="<f4", offset=_MODEL_HEADER.size)
    w1 = flat[: hidden * input_dim].reshape(hidden, input_dim).copy()
    off = hidden * input_dim
    b1 = flat[off : off + hidden].copy()
    w2 = flat[off + hidden : off + 2 * hidden].copy()
    b2 = float(flat[off + 2 * hidden])
    return MLPModel(w1=w1, b1=b1, w2=w2, b2=b2, hidden=hidden, input_dim=input_dim)
