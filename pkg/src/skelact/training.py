"""Mini-batch SGD training loop and evaluation for :class:`ResNetModel`."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .augment import AugmentPolicy
from .nn.functional import softmax_cross_entropy
from .nn.optim import DivergenceError, lr_at, sgd_step, validate_schedule

log = logging.getLogger(__name__)

DEFAULT_SCHEDULE = ((0.0, 0.1), (0.5, 0.01), (0.75, 0.001))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 160
    batch_size: int = 128
    lr_schedule: tuple = DEFAULT_SCHEDULE
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0
    augment_policy: AugmentPolicy = field(default_factory=AugmentPolicy)
    dtype: str = "float32"

    def __post_init__(self):
        schedule = tuple((float(f), float(lr)) for f, lr in self.lr_schedule)
        validate_schedule(schedule)
        object.__setattr__(self, "lr_schedule", schedule)
        if isinstance(self.augment_policy, dict):
            object.__setattr__(self, "augment_policy", AugmentPolicy(**self.augment_policy))
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")

    def to_dict(self):
        d = asdict(self)
        d["lr_schedule"] = [list(p) for p in self.lr_schedule]
        return d

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray
    predictions: np.ndarray


@dataclass
class TrainHistory:
    """One record per completed epoch: loss, lr, train_error and optionally test_error (percent)."""

    epochs: list = field(default_factory=list)

    @property
    def losses(self):
        return [e["loss"] for e in self.epochs]

    def curves(self):
        return [(e["train_error"], e.get("test_error")) for e in self.epochs]


def images_to_batch(images, dtype=np.float32):
    """(n, H, W, 3) images with values in [0, 255] -> (n, 3, H, W) in [0, 1]."""
    images = np.asarray(images)
    if images.ndim != 4 or images.shape[3] != 3:
        raise ValueError(f"expected (n, H, W, 3) images, got {images.shape}")
    return np.ascontiguousarray(images.transpose(0, 3, 1, 2), dtype=dtype) / dtype(255)


def predict(model, images, batch_size=256):
    logits = model.predict_logits(images_to_batch(images, model.dtype.type), batch_size)
    # argmax returns the lowest index on ties
    return np.argmax(logits, axis=1)


def evaluate(model, images, labels, batch_size=256):
    """Eval-mode top-1 accuracy (percent) and confusion matrix (rows = true class)."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    k = model.config.num_classes
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k - 1}]")
    pred = predict(model, images, batch_size)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (labels, pred), 1)
    accuracy = 100.0 * np.trace(confusion) / confusion.sum()
    return EvalResult(float(accuracy), confusion, pred)


def train(model, images, labels, config, test=None, target_train_accuracy=None, on_epoch=None):
    """Train ``model`` in place with shuffled mini-batch SGD.

    ``test`` is an optional ``(images, labels)`` pair evaluated after every
    epoch for the learning curve. If ``target_train_accuracy`` is set,
    training stops early once eval-mode accuracy on the training images
    reaches it. Raises :class:`DivergenceError` on a non-finite loss.
    """
    labels = np.asarray(labels)
    x = images_to_batch(images, model.dtype.type)
    n = len(x)
    if n != len(labels):
        raise ValueError(f"{n} images but {len(labels)} labels")
    k = model.config.num_classes
    missing = sorted(set(range(k)) - set(labels.tolist()))
    if missing:
        raise ValueError(f"no training samples for classes {missing}")

    rng = np.random.default_rng(config.seed)
    history = TrainHistory()
    params = model.parameters()
    for epoch in range(config.epochs):
        lr = lr_at(config.lr_schedule, epoch, config.epochs)
        order = rng.permutation(n)
        total_loss = 0.0
        wrong = 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            logits = model.forward(x[idx], training=True)
            loss, dlogits, _ = softmax_cross_entropy(logits, labels[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b}")
            model.backward(dlogits)
            try:
                sgd_step(params, lr, config.momentum, config.weight_decay)
            except DivergenceError as exc:
                raise DivergenceError(f"{exc} at epoch {epoch}, batch {b}") from None
            total_loss += loss * len(idx)
            wrong += int(np.sum(np.argmax(logits, axis=1) != labels[idx]))
        record = {
            "epoch": epoch + 1,
            "lr": lr,
            "loss": total_loss / n,
            "train_error": 100.0 * wrong / n,
        }
        if test is not None:
            record["test_error"] = 100.0 - evaluate(model, *test).accuracy
        history.epochs.append(record)
        log.info("epoch %d: %s", epoch + 1, record)
        if on_epoch is not None:
            on_epoch(record)
        if target_train_accuracy is not None:
            if evaluate(model, images, labels).accuracy >= target_train_accuracy:
                break
    return history
