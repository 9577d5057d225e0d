"""scikit-learn compatible wrapper around the residual network."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .augment import AugmentPolicy
from .resnet import INPUT_SIZE, ResNetConfig, ResNetModel, build
from .training import DEFAULT_SCHEDULE, TrainConfig, evaluate, images_to_batch, train


def _check_images(X):
    X = check_array(X, allow_nd=True, dtype=None, ensure_all_finite=True)
    if X.ndim != 4 or X.shape[1:] != (INPUT_SIZE, INPUT_SIZE, 3):
        raise ValueError(
            f"expected images of shape (n, {INPUT_SIZE}, {INPUT_SIZE}, 3), got {X.shape}"
        )
    return X


class ResNetClassifier(ClassifierMixin, BaseEstimator):
    """Residual network classifier over (n, 32, 32, 3) images with values in [0, 255].

    Parameters mirror :class:`~skelact.training.TrainConfig` plus the
    architecture depth. ``fit`` trains a fresh network from ``random_state``.
    """

    def __init__(
        self,
        depth=20,
        epochs=160,
        batch_size=128,
        lr_schedule=DEFAULT_SCHEDULE,
        momentum=0.9,
        weight_decay=1e-4,
        random_state=0,
        dtype="float32",
    ):
        self.depth = depth
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_schedule = lr_schedule
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.random_state = random_state
        self.dtype = dtype

    def _train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr_schedule=self.lr_schedule,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            seed=self.random_state,
            augment_policy=AugmentPolicy(),
            dtype=self.dtype,
        )

    def fit(self, X, y, eval_set=None):
        X, y = check_X_y(X, y, allow_nd=True, dtype=None)
        X = _check_images(X)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        config = ResNetConfig(self.depth, len(self.classes_), seed=self.random_state)
        self.model_ = build(config, dtype=self.dtype)
        test = None
        if eval_set is not None:
            Xt, yt = eval_set
            test = (_check_images(Xt), np.searchsorted(self.classes_, yt))
        self.history_ = train(self.model_, X, y_idx, self._train_config(), test=test)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = _check_images(X)
        return self.model_.predict_logits(images_to_batch(X, self.model_.dtype.type))

    def predict_proba(self, X):
        logits = self.decision_function(X)
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]

    def confusion(self, X, y):
        """(accuracy in percent, confusion matrix) over ``classes_`` order."""
        check_is_fitted(self, "model_")
        y_idx = np.searchsorted(self.classes_, y)
        res = evaluate(self.model_, _check_images(X), y_idx)
        return res.accuracy, res.confusion

    def save(self, path):
        check_is_fitted(self, "model_")
        self.model_.save(path, extra={"classes": [int(c) for c in self.classes_]})

    @classmethod
    def load(cls, path):
        model = ResNetModel.load(path)
        est = cls(depth=model.config.depth, random_state=model.config.seed, dtype=model.dtype.name)
        est.model_ = model
        est.classes_ = np.asarray(model.extra.get("classes", range(model.config.num_classes)))
        return est
