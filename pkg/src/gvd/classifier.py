"""Small MLP classifier used as student, teacher and scoring model.

Training minimizes ``tau^2 * KL(target || softmax(logits / tau))`` with
``target = alpha * teacher + (1 - alpha) * onehot``.  Hard-label training is
the ``alpha = 0, tau = 1`` case, where the loss is plain cross-entropy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

from .dataset import VideoDataset
from .errors import ConfigError, TrainingError


@dataclass
class ClassifierParams:
    W1: np.ndarray  # (n_in, H)
    b1: np.ndarray
    W2: np.ndarray  # (H, C)
    b2: np.ndarray
    shift: np.ndarray | float = 0.0  # input standardization, fixed before training
    scale: float = 1.0

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.W2.ravel(), self.b2])

    def assign(self, flat: np.ndarray) -> None:
        pos = 0
        for a in (self.W1, self.b1, self.W2, self.b2):
            a[...] = flat[pos : pos + a.size].reshape(a.shape)
            pos += a.size

    def copy(self) -> ClassifierParams:
        return ClassifierParams(
            self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy(), np.copy(self.shift), self.scale
        )

    @property
    def n_params(self) -> int:
        return self.W1.size + self.b1.size + self.W2.size + self.b2.size

    @property
    def n_classes(self) -> int:
        return self.W2.shape[1]


@dataclass
class SoftLabelConfig:
    alpha: float = 0.2
    temperature: float = 3.0

    def validate(self) -> None:
        if not 0 <= self.alpha <= 1:
            raise ConfigError("must lie in [0, 1]", "alpha")
        if not self.temperature > 0:
            raise ConfigError("must be > 0", "temperature")


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 128
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    hidden: int = 128
    standardize: bool = True  # centre inputs and divide by their overall std
    log_every: int = 0  # 0: log only the final epoch

    def validate(self) -> None:
        for name in ("epochs", "batch_size", "hidden"):
            if getattr(self, name) < (0 if name == "epochs" else 1):
                raise ConfigError("out of range", name)
        if self.lr <= 0:
            raise ConfigError("must be > 0", "lr")


@dataclass
class TrainResult:
    params: ClassifierParams
    trace: list[dict] = field(default_factory=list)


def init_classifier(n_in: int, n_classes: int, hidden: int, rng: np.random.Generator) -> ClassifierParams:
    return ClassifierParams(
        rng.standard_normal((n_in, hidden)) * np.sqrt(2.0 / n_in),
        np.zeros(hidden),
        rng.standard_normal((hidden, n_classes)) * np.sqrt(1.0 / hidden),
        np.zeros(n_classes),
    )


def _inputs(p: ClassifierParams, x: np.ndarray) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - p.shift) / p.scale


def _hidden(p: ClassifierParams, x: np.ndarray) -> np.ndarray:
    return np.maximum(_inputs(p, x) @ p.W1 + p.b1, 0.0)


def logits(p: ClassifierParams, x: np.ndarray) -> np.ndarray:
    return _hidden(p, x) @ p.W2 + p.b2


def features(p: ClassifierParams, x: np.ndarray) -> np.ndarray:
    """Hidden-layer activations, usable as a learned feature space."""
    return _hidden(p, x)


def blend_targets(onehot: np.ndarray, teacher: np.ndarray | None, alpha: float) -> np.ndarray:
    if teacher is None or alpha == 0:
        return onehot.astype(np.float64)
    return alpha * np.asarray(teacher, dtype=np.float64) + (1.0 - alpha) * onehot


def kl_loss_and_grad(
    p: ClassifierParams, x: np.ndarray, target: np.ndarray, temperature: float = 1.0, weight_decay: float = 0.0
) -> tuple[float, ClassifierParams]:
    """Batch-mean ``tau^2 KL(target || softmax(z / tau))`` plus L2 penalty, and its gradient."""
    n = len(x)
    x = _inputs(p, x)
    pre = x @ p.W1 + p.b1
    h = np.maximum(pre, 0.0)
    z = h @ p.W2 + p.b2
    logq = log_softmax(z / temperature, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(target > 0, target * np.log(np.where(target > 0, target, 1.0)), 0.0)
    tau2 = temperature**2
    loss = tau2 * float(np.sum(plogp - target * logq) / n)
    loss += 0.5 * weight_decay * (np.sum(p.W1**2) + np.sum(p.W2**2))

    dz = tau2 * (np.exp(logq) - target) / (temperature * n)
    gW2 = h.T @ dz + weight_decay * p.W2
    gb2 = dz.sum(axis=0)
    dh = (dz @ p.W2.T) * (pre > 0)
    gW1 = x.T @ dh + weight_decay * p.W1
    gb1 = dh.sum(axis=0)
    return loss, ClassifierParams(gW1, gb1, gW2, gb2)


def evaluate(p: ClassifierParams, test: VideoDataset | np.ndarray, labels: np.ndarray | None = None) -> float:
    """Top-1 accuracy; ties in the logits go to the lowest class index."""
    if isinstance(test, VideoDataset):
        x, labels = test.flat(), test.labels
    else:
        x = np.asarray(test, dtype=np.float64)
    if len(x) == 0:
        return float("nan")
    return float(np.mean(np.argmax(logits(p, x), axis=1) == labels))


def train_classifier(
    train: VideoDataset,
    cfg: TrainConfig,
    softcfg: SoftLabelConfig | None = None,
    seed: int = 0,
    test: VideoDataset | None = None,
) -> TrainResult:
    """Minibatch momentum SGD; the learning rate drops by 10x at the half-way epoch."""
    cfg.validate()
    if len(train) == 0:
        raise ConfigError("training set is empty", "train")
    if softcfg is not None:
        softcfg.validate()
        if train.soft_labels is None and softcfg.alpha > 0:
            raise ConfigError("soft-label training needs soft labels on every record", "soft_labels")
    rng = np.random.default_rng(seed)
    x = train.flat()
    onehot = np.eye(train.n_classes)[train.labels]
    alpha = softcfg.alpha if softcfg else 0.0
    tau = softcfg.temperature if softcfg else 1.0
    target = blend_targets(onehot, train.soft_labels, alpha)

    p = init_classifier(x.shape[1], train.n_classes, cfg.hidden, rng)
    if cfg.standardize:
        p.shift = x.mean(axis=0)
        spread = float(np.sqrt(np.mean((x - p.shift) ** 2)))
        p.scale = spread if spread > 0 else 1.0
    velocity = np.zeros(p.n_params)
    result = TrainResult(p)
    step = 0
    for epoch in range(cfg.epochs):
        lr = cfg.lr if epoch < cfg.epochs // 2 else cfg.lr * 0.1
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grad = kl_loss_and_grad(p, x[idx], target[idx], tau, cfg.weight_decay)
            if not np.isfinite(loss):
                raise TrainingError("classifier loss became non-finite", step)
            velocity = cfg.momentum * velocity - lr * grad.flatten()
            p.assign(p.flatten() + velocity)
            total += loss * len(idx)
            step += 1
        last = epoch == cfg.epochs - 1
        if last or (cfg.log_every and (epoch + 1) % cfg.log_every == 0):
            result.trace.append(
                {
                    "epoch": epoch + 1,
                    "loss": total / len(x),
                    "train_acc": evaluate(p, x, train.labels),
                    "test_acc": evaluate(p, test) if test is not None else float("nan"),
                }
            )
    return result


def teacher_soft_labels(teacher: ClassifierParams, d: VideoDataset, temperature: float) -> np.ndarray:
    if not temperature > 0:
        raise ConfigError("must be > 0", "temperature")
    return softmax(logits(teacher, d.flat()) / temperature, axis=1)


def representativeness(pretrained: ClassifierParams, distilled: VideoDataset) -> float:
    """Accuracy of a full-data classifier on the distilled videos."""
    return evaluate(pretrained, distilled)
