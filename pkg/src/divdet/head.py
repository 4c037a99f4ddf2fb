"""Trainable detection head over fused features.

Architecture: three linear layers (input -> 256 -> 128 -> 1 by default)
with LeakyReLU activations and inverted dropout after each hidden layer,
producing a single real/fake logit.  Training minimizes mean binary
cross-entropy plus a weighted supervised-contrastive term with analytic
gradients and Adam-style moment updates; everything is seed-deterministic.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import DataError
from .fusion import FusedFeature, feature_matrix

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

SC_ON_FUSED = "fused"
SC_ON_HIDDEN = "hidden"


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    sc_weight scales the contrastive term (0 disables it); sc_temperature
    is its softmax temperature; sc_features picks the representation the
    contrastive term compares: the normalized fused input ("fused") or the
    normalized last hidden activation ("hidden").
    """

    epochs: int = 10
    batch_size: int = 128
    learning_rate: float = 1e-4
    sc_weight: float = 0.1
    sc_temperature: float = 0.1
    dropout_rate: float = 0.2
    leaky_slope: float = 0.01
    seed: int = 0
    hidden_dims: tuple[int, int] = (256, 128)
    sc_features: str = SC_ON_FUSED

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.sc_weight < 0:
            raise ValueError("sc_weight must be nonnegative")
        if self.sc_temperature <= 0:
            raise ValueError("sc_temperature must be positive")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.leaky_slope <= 0:
            raise ValueError("leaky_slope must be positive")
        if len(self.hidden_dims) != 2 or any(int(h) < 1 for h in self.hidden_dims):
            raise ValueError("hidden_dims must be two positive sizes")
        if self.sc_features not in (SC_ON_FUSED, SC_ON_HIDDEN):
            raise ValueError(f"sc_features must be '{SC_ON_FUSED}' or '{SC_ON_HIDDEN}'")


@dataclass
class HeadParameters:
    """Weights and biases of the three linear layers."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden_dims(self) -> tuple[int, int]:
        return (self.W1.shape[1], self.W2.shape[1])

    def blocks(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2, self.W3, self.b3]

    def check_finite(self) -> None:
        for name, block in zip(("W1", "b1", "W2", "b2", "W3", "b3"), self.blocks()):
            if not np.all(np.isfinite(block)):
                raise FloatingPointError(f"non-finite values in parameter {name}")


def init_parameters(input_dim: int, cfg: TrainConfig, rng: np.random.Generator) -> HeadParameters:
    """He-style Gaussian init scaled by fan-in; biases start at zero."""
    h1, h2 = cfg.hidden_dims
    def w(fan_in, fan_out):
        return rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
    return HeadParameters(
        W1=w(input_dim, h1), b1=np.zeros(h1),
        W2=w(h1, h2), b2=np.zeros(h2),
        W3=w(h2, 1), b3=np.zeros(1),
    )


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def _leaky_grad(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, 1.0, slope)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class ForwardCache:
    """Everything backward() needs: inputs, pre-activations, scaled dropout
    masks, post-dropout activations, logits, and the contrastive reps."""

    X: np.ndarray
    Z1: np.ndarray
    mask1: np.ndarray
    D1: np.ndarray
    Z2: np.ndarray
    mask2: np.ndarray
    D2: np.ndarray
    logits: np.ndarray
    sc_z: np.ndarray | None = None
    sc_norms: np.ndarray | None = None


def forward_batch(
    params: HeadParameters,
    X: np.ndarray,
    cfg: TrainConfig,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> ForwardCache:
    """Run the head over a batch.

    Train mode applies inverted dropout (masks pre-scaled by 1/(1-p)) so
    eval mode needs no rescaling and is fully deterministic.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise ValueError(
            f"expected (batch, {params.input_dim}) input, got shape {X.shape}"
        )
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "train" and cfg.dropout_rate > 0 and rng is None:
        raise ValueError("train mode with dropout requires an rng")

    def mask(shape):
        if mode == "eval" or cfg.dropout_rate == 0:
            return np.ones(shape)
        return (rng.random(shape) >= cfg.dropout_rate) / (1.0 - cfg.dropout_rate)

    Z1 = X @ params.W1 + params.b1
    mask1 = mask(Z1.shape)
    D1 = leaky_relu(Z1, cfg.leaky_slope) * mask1
    Z2 = D1 @ params.W2 + params.b2
    mask2 = mask(Z2.shape)
    D2 = leaky_relu(Z2, cfg.leaky_slope) * mask2
    logits = (D2 @ params.W3 + params.b3).ravel()
    cache = ForwardCache(X=X, Z1=Z1, mask1=mask1, D1=D1, Z2=Z2, mask2=mask2, D2=D2, logits=logits)
    source = X if cfg.sc_features == SC_ON_FUSED else D2
    norms = np.linalg.norm(source, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    cache.sc_z = source / safe[:, None]
    cache.sc_norms = norms
    return cache


def forward(
    params: HeadParameters,
    x: np.ndarray,
    mode: str = "eval",
    cfg: TrainConfig | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[float, np.ndarray]:
    """Single-sample forward pass: returns (logit, last hidden activation)."""
    cfg = cfg or TrainConfig(hidden_dims=(
        int(params.W1.shape[1]), int(params.W2.shape[1])))
    cache = forward_batch(params, np.asarray(x, dtype=np.float64)[None, :], cfg, mode, rng)
    return float(cache.logits[0]), cache.D2[0]


def loss_ce(y: int, y_hat: float) -> float:
    """Binary cross-entropy of one probability prediction."""
    if not (0.0 < y_hat < 1.0):
        raise ValueError(f"y_hat must lie strictly in (0, 1), got {y_hat}")
    if y not in (0, 1):
        raise ValueError(f"y must be 0 or 1, got {y!r}")
    return float(-(y * np.log(y_hat) + (1 - y) * np.log(1.0 - y_hat)))


def ce_from_logits(labels: np.ndarray, logits: np.ndarray) -> np.ndarray:
    """Per-sample binary cross-entropy straight from logits.

    Uses the softplus identity ce = max(l, 0) - l*y + log(1 + exp(-|l|)),
    which never forms an intermediate probability and cannot overflow.
    """
    labels = np.asarray(labels, dtype=np.float64)
    logits = np.asarray(logits, dtype=np.float64)
    return np.maximum(logits, 0.0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))


@dataclass(frozen=True)
class ContrastiveBatchView:
    """Unit-norm representations plus labels, as seen by the contrastive
    loss.  For each anchor i the positives are the other same-label rows."""

    z: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        labels = np.asarray(self.labels)
        if z.ndim != 2 or labels.shape != (z.shape[0],):
            raise ValueError("z must be (batch, dim) with one label per row")
        norms = np.linalg.norm(z, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("every representation must be unit norm within 1e-6")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "labels", labels)


def _supcon_terms(z: np.ndarray, labels: np.ndarray, temperature: float):
    """Shared machinery for the contrastive loss and its gradient.

    Returns (per-anchor losses, valid-anchor mask, softmax weights q,
    positive-average weights m) where rows of q are softmax of z_i . z_a / temperature
    over a != i, stabilized by row-max subtraction.
    """
    b = z.shape[0]
    s = (z @ z.T) / temperature
    off = ~np.eye(b, dtype=bool)
    row_max = np.max(np.where(off, s, -np.inf), axis=1)
    e = np.where(off, np.exp(s - row_max[:, None]), 0.0)
    denom = e.sum(axis=1)
    lse = np.log(denom) + row_max
    pos = (labels[:, None] == labels[None, :]) & off
    counts = pos.sum(axis=1)
    valid = counts > 0
    safe_counts = np.where(valid, counts, 1)
    mean_pos = (s * pos).sum(axis=1) / safe_counts
    losses = lse - mean_pos
    q = e / denom[:, None]
    m = pos / safe_counts[:, None]
    return losses, valid, q, m


def loss_supcon(batch: ContrastiveBatchView, temperature: float) -> float:
    """Supervised contrastive loss, averaged over anchors that have at
    least one positive.  Anchors without positives are skipped; a batch
    where all anchors are skipped carries no contrastive signal."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    b = batch.z.shape[0]
    if b < 2:
        raise ValueError("contrastive loss needs a batch of at least 2")
    losses, valid, _, _ = _supcon_terms(batch.z, batch.labels, temperature)
    if not np.any(valid):
        raise DataError("every anchor lacks a positive; contrastive loss undefined")
    return float(losses[valid].mean())


def supcon_value_and_grad(z: np.ndarray, labels: np.ndarray, temperature: float):
    """Loss plus dLoss/dz.

    With q the non-self softmax rows, m the positive-average rows, and
    B' valid anchors, G = (q - m) / (temperature * B') restricted to valid rows;
    the gradient is (G + G^T) z since each dot product z_i . z_j feeds two
    entries of the score matrix.
    """
    losses, valid, q, m = _supcon_terms(z, labels, temperature)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise DataError("every anchor lacks a positive; contrastive loss undefined")
    g = (q - m) / (temperature * n_valid)
    g[~valid] = 0.0
    grad = g @ z + g.T @ z
    return float(losses[valid].mean()), grad


def loss_total(
    logits: np.ndarray,
    labels: np.ndarray,
    z_batch: ContrastiveBatchView | None,
    cfg: TrainConfig,
) -> float:
    """Mean cross-entropy plus the weighted contrastive term.

    With sc_weight == 0 this is exactly the mean cross-entropy; the
    contrastive term is then never evaluated.
    """
    ce = float(ce_from_logits(labels, logits).mean())
    if cfg.sc_weight == 0:
        return ce
    if z_batch is None:
        raise ValueError("sc_weight > 0 requires a contrastive batch view")
    return ce + cfg.sc_weight * loss_supcon(z_batch, cfg.sc_temperature)


@dataclass
class HeadGradients:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def blocks(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2, self.W3, self.b3]


def backward(
    params: HeadParameters,
    cache: ForwardCache,
    labels: np.ndarray,
    cfg: TrainConfig,
) -> HeadGradients:
    """Analytic gradients of the total loss for the batch in ``cache``.

    The recorded dropout masks are reused, so gradients match the exact
    stochastic forward pass.  When the contrastive term is computed on the
    fused input it does not depend on the parameters and contributes
    nothing here; on the hidden representation it backpropagates through
    the normalization z = h/|h| via (dz - (z . dz) z) / |h|.
    """
    labels = np.asarray(labels, dtype=np.float64)
    b = cache.X.shape[0]
    dlogits = (sigmoid(cache.logits) - labels) / b

    dD2 = dlogits[:, None] @ params.W3.T
    if cfg.sc_weight > 0 and cfg.sc_features == SC_ON_HIDDEN and b >= 2:
        counts = (labels[:, None] == labels[None, :]).sum(axis=1) - 1
        if np.any(counts > 0):
            _, dz = supcon_value_and_grad(cache.sc_z, labels, cfg.sc_temperature)
            norms = cache.sc_norms
            nonzero = norms > 0
            proj = dz - (np.sum(cache.sc_z * dz, axis=1, keepdims=True)) * cache.sc_z
            dD2_sc = np.where(nonzero[:, None], proj / np.where(nonzero, norms, 1.0)[:, None], 0.0)
            dD2 = dD2 + cfg.sc_weight * dD2_sc

    dA2 = dD2 * cache.mask2
    dZ2 = dA2 * _leaky_grad(cache.Z2, cfg.leaky_slope)
    dD1 = dZ2 @ params.W2.T
    dA1 = dD1 * cache.mask1
    dZ1 = dA1 * _leaky_grad(cache.Z1, cfg.leaky_slope)

    return HeadGradients(
        W1=cache.X.T @ dZ1,
        b1=dZ1.sum(axis=0),
        W2=cache.D1.T @ dZ2,
        b2=dZ2.sum(axis=0),
        W3=cache.D2.T @ dlogits[:, None],
        b3=np.array([dlogits.sum()]),
    )


@dataclass
class TrainLogEntry:
    epoch: int
    mean_ce: float
    mean_sc: float
    total: float

    def to_json(self) -> str:
        return json.dumps(
            {"epoch": self.epoch, "mean_ce": self.mean_ce,
             "mean_sc": self.mean_sc, "total": self.total}
        )


class _Adam:
    """Adaptive-moment updates with bias correction."""

    def __init__(self, params: HeadParameters, lr: float):
        self.lr = lr
        self.t = 0
        self.m = [np.zeros_like(p) for p in params.blocks()]
        self.v = [np.zeros_like(p) for p in params.blocks()]

    def step(self, params: HeadParameters, grads: HeadGradients) -> None:
        self.t += 1
        c1 = 1.0 - ADAM_BETA1 ** self.t
        c2 = 1.0 - ADAM_BETA2 ** self.t
        for i, (p, g) in enumerate(zip(params.blocks(), grads.blocks())):
            self.m[i] = ADAM_BETA1 * self.m[i] + (1 - ADAM_BETA1) * g
            self.v[i] = ADAM_BETA2 * self.v[i] + (1 - ADAM_BETA2) * g * g
            p -= self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + ADAM_EPS)


def _batch_sc(cache: ForwardCache, labels: np.ndarray, cfg: TrainConfig) -> float:
    """Contrastive loss of one training batch, or 0.0 when the batch is too
    small or single-class (those batches carry cross-entropy signal only)."""
    if cfg.sc_weight == 0 or cache.X.shape[0] < 2:
        return 0.0
    counts = (labels[:, None] == labels[None, :]).sum(axis=1) - 1
    if not np.any(counts > 0):
        return 0.0
    losses, valid, _, _ = _supcon_terms(cache.sc_z, labels, cfg.sc_temperature)
    return float(losses[valid].mean())


def train(
    features: list[FusedFeature], cfg: TrainConfig
) -> tuple[HeadParameters, list[TrainLogEntry]]:
    """Fit the head on fused features.

    Per epoch: seeded shuffle, minibatch forward/backward, Adam update,
    finiteness check.  The log records the per-epoch sample-weighted mean
    of each loss term.  Deterministic for a fixed config.
    """
    X, y = feature_matrix(features)
    n = X.shape[0]
    if np.sum(y == 0) < 2 or np.sum(y == 1) < 2:
        raise DataError("training requires at least 2 samples of each class")
    rng = np.random.default_rng(cfg.seed)
    params = init_parameters(X.shape[1], cfg, rng)
    opt = _Adam(params, cfg.learning_rate)
    log: list[TrainLogEntry] = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        ce_sum = 0.0
        sc_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = X[idx], y[idx].astype(np.float64)
            cache = forward_batch(params, xb, cfg, mode="train", rng=rng)
            ce_sum += float(ce_from_logits(yb, cache.logits).sum())
            sc_sum += _batch_sc(cache, yb, cfg) * len(idx)
            grads = backward(params, cache, yb, cfg)
            opt.step(params, grads)
            params.check_finite()
        mean_ce = ce_sum / n
        mean_sc = sc_sum / n
        entry = TrainLogEntry(epoch, mean_ce, mean_sc,
                              mean_ce + cfg.sc_weight * mean_sc)
        log.append(entry)
        logger.info("epoch %d: ce=%.6f sc=%.6f total=%.6f",
                    epoch, entry.mean_ce, entry.mean_sc, entry.total)
    return params, log


def predict_proba_scores(params: HeadParameters, X: np.ndarray,
                         cfg: TrainConfig | None = None) -> np.ndarray:
    """Eval-mode fake-class probabilities for a feature matrix."""
    cfg = cfg or TrainConfig(hidden_dims=params.hidden_dims)
    cache = forward_batch(params, X, cfg, mode="eval")
    return sigmoid(cache.logits)


def save_head(params: HeadParameters, cfg: TrainConfig, path) -> None:
    """Checkpoint: one JSON header line, then the six parameter blocks as
    little-endian float64 in a fixed order (W1 b1 W2 b2 W3 b3)."""
    header = {
        "input_dim": params.input_dim,
        "hidden_dims": list(params.hidden_dims),
        "dtype": "f64",
        "config": {
            "epochs": cfg.epochs, "batch_size": cfg.batch_size,
            "learning_rate": cfg.learning_rate, "sc_weight": cfg.sc_weight,
            "sc_temperature": cfg.sc_temperature, "dropout_rate": cfg.dropout_rate,
            "leaky_slope": cfg.leaky_slope, "seed": cfg.seed,
            "hidden_dims": list(cfg.hidden_dims), "sc_features": cfg.sc_features,
        },
    }
    with open(path, "wb") as f:
        f.write((json.dumps(header) + "\n").encode("utf-8"))
        for block in params.blocks():
            f.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def load_head(path) -> tuple[HeadParameters, TrainConfig]:
    from .errors import FormatError, IntegrityError

    path = Path(path)
    with open(path, "rb") as f:
        try:
            header = json.loads(f.readline().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"{path}: unreadable checkpoint header: {e}") from e
        payload = f.read()
    try:
        fdim = int(header["input_dim"])
        h1, h2 = (int(v) for v in header["hidden_dims"])
        cfg_d = dict(header["config"])
        cfg_d["hidden_dims"] = tuple(cfg_d["hidden_dims"])
        cfg = TrainConfig(**cfg_d)
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: bad checkpoint header: {e}") from e
    shapes = [(fdim, h1), (h1,), (h1, h2), (h2,), (h2, 1), (1,)]
    need = sum(int(np.prod(s)) for s in shapes) * 8
    if len(payload) != need:
        raise IntegrityError(
            f"{path}: checkpoint payload is {len(payload)} bytes, header implies {need}"
        )
    blocks = []
    offset = 0
    for s in shapes:
        size = int(np.prod(s))
        blocks.append(
            np.frombuffer(payload, dtype="<f8", count=size, offset=offset * 8)
            .reshape(s).astype(np.float64)
        )
        offset += size
    params = HeadParameters(*blocks)
    return params, cfg


class DetectionHead(BaseEstimator, ClassifierMixin):
    """Estimator wrapper: fit on (X, y) feature arrays, score with sigmoid
    probabilities.  All TrainConfig fields are constructor parameters."""

    def __init__(self, epochs: int = 10, batch_size: int = 128,
                 learning_rate: float = 1e-4, sc_weight: float = 0.1,
                 sc_temperature: float = 0.1, dropout_rate: float = 0.2,
                 leaky_slope: float = 0.01, seed: int = 0,
                 hidden_dims: tuple[int, int] = (256, 128),
                 sc_features: str = SC_ON_FUSED):
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.sc_weight = sc_weight
        self.sc_temperature = sc_temperature
        self.dropout_rate = dropout_rate
        self.leaky_slope = leaky_slope
        self.seed = seed
        self.hidden_dims = hidden_dims
        self.sc_features = sc_features

    def _config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate, sc_weight=self.sc_weight,
            sc_temperature=self.sc_temperature, dropout_rate=self.dropout_rate,
            leaky_slope=self.leaky_slope, seed=self.seed,
            hidden_dims=tuple(self.hidden_dims), sc_features=self.sc_features,
        )

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        features = [
            FusedFeature(id=str(i), vector=X[i], label=int(y[i]))
            for i in range(X.shape[0])
        ]
        self.config_ = self._config()
        self.params_, self.log_ = train(features, self.config_)
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X) -> np.ndarray:
        cache = forward_batch(self.params_, np.asarray(X, dtype=np.float64),
                              self.config_, mode="eval")
        return cache.logits

    def predict_proba(self, X) -> np.ndarray:
        p = sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)
