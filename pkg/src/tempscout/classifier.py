"""Bias-free linear classifier on L2-normalized embeddings.

Logits are cosine similarities z = x @ W with unit-norm rows x and unit-norm
weight columns, sharpened by an inverse temperature alpha inside the softmax.
The cross-entropy gradient w.r.t. a weight column carries a multiplicative
alpha; dividing the loss by alpha cancels it, leaving only the
distribution-shaping effect of the temperature. Both variants are implemented
so their training behavior can be compared.

Weight columns are re-projected to unit norm after every optimizer step
rather than differentiating through the normalization, so the analytic
gradient stays exact for z = x @ W.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import SplitDataset, EmbeddingDataset
from .errors import ConfigError, ZeroRowError

LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class Weights:
    """d x C weight matrix; column c is the class-c direction."""

    W: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        object.__setattr__(self, "W", np.asarray(self.W, dtype=np.float64))
        if self.normalized:
            norms = np.linalg.norm(self.W, axis=0)
            if not np.allclose(norms, 1.0, atol=1e-6):
                raise ConfigError("normalized Weights must have unit-norm columns")


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 1.0
    epochs: int = 100
    batch_size: int = 2048
    lr: float = 0.1
    optimizer: str = "sgd"
    rescaled_loss: bool = True
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (np.isfinite(self.lr) and self.lr > 0):
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")


@dataclass
class TrainRunResult:
    final_weights: Weights
    best_val_accuracy: float
    accuracy_history: list[float] = field(default_factory=list)
    loss_history: list[float] = field(default_factory=list)
    diverged: bool = False


def normalize_rows(M: np.ndarray) -> np.ndarray:
    """Scale each row to unit L2 norm; rejects all-zero rows."""
    M = np.asarray(M, dtype=np.float64)
    norms = np.linalg.norm(M, axis=-1, keepdims=True)
    if (norms == 0.0).any():
        raise ZeroRowError("cannot normalize an all-zero row")
    return M / norms


def _normalize_columns(W: np.ndarray) -> np.ndarray:
    # Projection step after an optimizer update; non-finite updates are left
    # for the divergence check to catch, so no zero-norm guard here.
    return W / np.linalg.norm(W, axis=0, keepdims=True)


def softmax_temp(z: np.ndarray, alpha: float) -> np.ndarray:
    """Softmax over the last axis with logits scaled by alpha, max-subtracted."""
    if not alpha > 0:
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    z = np.asarray(z, dtype=np.float64)
    u = alpha * (z - np.max(z, axis=-1, keepdims=True))
    with np.errstate(over="ignore"):
        e = np.exp(u)
    return e / np.sum(e, axis=-1, keepdims=True)


def ce_loss(p: np.ndarray, y: int) -> float:
    """Cross-entropy against a one-hot target: -log p[y], log-clamped."""
    p = np.asarray(p, dtype=np.float64)
    if not 0 <= y < p.shape[-1]:
        raise ConfigError(f"class index {y} out of range for {p.shape[-1]} classes")
    return float(-np.log(max(p[y], LOG_CLAMP)))


def rescaled_ce_loss(p: np.ndarray, y: int, alpha: float) -> float:
    """Cross-entropy divided by alpha; the scale is not differentiated."""
    if not alpha > 0:
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    return ce_loss(p, y) / alpha


def grad_weights(x, p, y: int, alpha: float, rescaled: bool) -> np.ndarray:
    """Gradient of the (optionally rescaled) CE w.r.t. the d x C weight matrix.

    Column c is (p_c - q_c) * x for the rescaled loss and alpha times that
    for the plain loss; the unrescaled value reuses the rescaled expression
    so the two differ by exactly a factor alpha.
    """
    x = np.asarray(x, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if x.ndim != 1 or p.ndim != 1:
        raise ConfigError("grad_weights takes a single sample; see grad_weights_batch")
    q = np.zeros_like(p)
    q[y] = 1.0
    base = np.outer(x, p - q)
    return base if rescaled else alpha * base


def grad_weights_batch(X, P, y, alpha: float, rescaled: bool) -> np.ndarray:
    """Mean per-sample gradient over a batch. X: B x d, P: B x C, y: B ints."""
    X = np.asarray(X, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    if X.shape[0] != P.shape[0]:
        raise ConfigError(f"batch sizes disagree: {X.shape[0]} vs {P.shape[0]}")
    R = P.copy()
    R[np.arange(len(y)), y] -= 1.0
    base = X.T @ R / X.shape[0]
    return base if rescaled else alpha * base


class SgdOptimizer:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, W: np.ndarray, G: np.ndarray) -> np.ndarray:
        return W - self.lr * G


class AdamOptimizer:
    def __init__(self, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, W: np.ndarray, G: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(W)
            self.v = np.zeros_like(W)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * G
        self.v = self.beta2 * self.v + (1 - self.beta2) * np.square(G)
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return W - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "sgd":
        return SgdOptimizer(cfg.lr)
    return AdamOptimizer(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)


def init_weights(d: int, c: int, rng: np.random.Generator) -> np.ndarray:
    """Isotropic Gaussian columns projected to unit norm."""
    W = rng.standard_normal((d, c))
    return _normalize_columns(W)


def evaluate_accuracy(weights: Weights, ds: EmbeddingDataset) -> float:
    """Top-1 accuracy of argmax cosine logits; independent of temperature."""
    W = weights.W
    if ds.d != W.shape[0]:
        raise ConfigError(f"dimension mismatch: weights d={W.shape[0]}, data d={ds.d}")
    Xn = normalize_rows(ds.X)
    pred = np.argmax(Xn @ W, axis=1)
    return float(np.mean(pred == ds.y))


def train_linear(split: SplitDataset, cfg: TrainConfig, step_callback=None) -> TrainRunResult:
    """Mini-batch training with per-step weight re-projection.

    Shuffles each epoch from cfg.seed, evaluates validation accuracy per
    epoch, and aborts with diverged=True when the mean epoch loss goes
    non-finite. `step_callback(step_index, W)` (if given) observes a copy of
    the projected weights after each optimizer step.
    """
    Xtr = normalize_rows(split.train.X)
    ytr = np.asarray(split.train.y, dtype=np.int64)
    n, d = Xtr.shape
    c = split.train.c
    alpha = cfg.alpha

    rng = np.random.default_rng(cfg.seed)
    W = init_weights(d, c, rng)
    opt = _make_optimizer(cfg)
    val = split.val

    acc_hist: list[float] = []
    loss_hist: list[float] = []
    diverged = False
    step = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            Xb, yb = Xtr[idx], ytr[idx]
            P = softmax_temp(Xb @ W, alpha)
            py = np.maximum(P[np.arange(len(yb)), yb], LOG_CLAMP)
            batch_loss = -np.log(py)
            if cfg.rescaled_loss:
                batch_loss = batch_loss / alpha
            loss_sum += float(np.sum(batch_loss))
            G = grad_weights_batch(Xb, P, yb, alpha, cfg.rescaled_loss)
            W = _normalize_columns(opt.step(W, G))
            if step_callback is not None:
                step_callback(step, W.copy())
            step += 1
        mean_loss = loss_sum / n
        if not np.isfinite(mean_loss):
            diverged = True
            break
        loss_hist.append(mean_loss)
        acc_hist.append(evaluate_accuracy(Weights(W, normalized=False), val))

    best = max(acc_hist, default=0.0)
    final = Weights(W, normalized=bool(np.isfinite(W).all()))
    return TrainRunResult(
        final_weights=final,
        best_val_accuracy=best,
        accuracy_history=acc_hist,
        loss_history=loss_hist,
        diverged=diverged,
    )
