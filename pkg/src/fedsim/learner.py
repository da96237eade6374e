"""Small numpy learners trained with mini-batch SGD.

Two architectures: multinomial logistic regression and a one-hidden-layer
perceptron (tanh hidden units).  Both expose the same estimator surface:
``scores``, ``predict``, ``predict_proba``, ``loss_and_grads``, and flat
parameter get/set so aggregators only ever see vectors.
"""

import copy
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import StructuralError, TrainingError, ValidationError
from .params import ShapeSpec, flatten, unflatten
from .seeding import seeded_rng


@dataclass(frozen=True)
class ModelArch:
    kind: str = "logreg"
    input_dim: int = 784
    num_classes: int = 10
    hidden_dim: int = 64

    def __post_init__(self):
        if self.kind not in ("logreg", "mlp"):
            raise ValidationError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1:
            raise ValidationError("input_dim must be >= 1")
        if self.num_classes < 2:
            raise ValidationError("num_classes must be >= 2")
        if self.kind == "mlp" and self.hidden_dim < 1:
            raise ValidationError("hidden_dim must be >= 1 for mlp")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    local_epochs: int = 2
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.local_epochs < 1:
            raise ValidationError("local_epochs must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")


def _log_softmax(scores):
    # log-sum-exp stabilized
    shifted = scores - scores.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


class Model:
    """Common surface over the weight dict; subclasses define scores and grads."""

    def __init__(self, arch: ModelArch, weights: dict):
        self.arch = arch
        self.weights = weights
        self.shape_spec = ShapeSpec.from_arrays(weights)

    def copy(self) -> "Model":
        clone = copy.copy(self)
        clone.weights = {k: v.copy() for k, v in self.weights.items()}
        return clone

    def get_vector(self) -> np.ndarray:
        return flatten(self.weights, self.shape_spec)

    def set_vector(self, v) -> None:
        self.weights = unflatten(v, self.shape_spec)

    def scores(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def loss_and_grads(self, X, y):
        raise NotImplementedError

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return np.exp(_log_softmax(self.scores(X)))

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax breaks ties toward the smallest class index
        return np.argmax(self.scores(X), axis=1)

    def _check_X(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.arch.input_dim:
            raise StructuralError(
                f"expected features of width {self.arch.input_dim}, got shape {X.shape}"
            )
        return X


class SoftmaxRegression(Model):
    def scores(self, X):
        X = self._check_X(X)
        return X @ self.weights["W"] + self.weights["b"]

    def loss_and_grads(self, X, y):
        X = self._check_X(X)
        n = X.shape[0]
        logp = _log_softmax(X @ self.weights["W"] + self.weights["b"])
        loss = -logp[np.arange(n), y].mean()
        delta = np.exp(logp)
        delta[np.arange(n), y] -= 1.0
        delta /= n
        return loss, {"W": X.T @ delta, "b": delta.sum(axis=0)}


class TwoLayerPerceptron(Model):
    def _hidden(self, X):
        return np.tanh(X @ self.weights["W1"] + self.weights["b1"])

    def scores(self, X):
        X = self._check_X(X)
        return self._hidden(X) @ self.weights["W2"] + self.weights["b2"]

    def loss_and_grads(self, X, y):
        X = self._check_X(X)
        n = X.shape[0]
        h = self._hidden(X)
        logp = _log_softmax(h @ self.weights["W2"] + self.weights["b2"])
        loss = -logp[np.arange(n), y].mean()
        delta = np.exp(logp)
        delta[np.arange(n), y] -= 1.0
        delta /= n
        dh = (delta @ self.weights["W2"].T) * (1.0 - h * h)
        return loss, {
            "W1": X.T @ dh,
            "b1": dh.sum(axis=0),
            "W2": h.T @ delta,
            "b2": delta.sum(axis=0),
        }


def _glorot(rng, fan_in, fan_out):
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


def init_model(arch: ModelArch, seed: int) -> Model:
    """Uniform Glorot weights, zero biases; deterministic per (arch, seed)."""
    if arch.kind == "logreg":
        rng = seeded_rng(seed, 0)
        weights = {
            "W": _glorot(rng, arch.input_dim, arch.num_classes),
            "b": np.zeros(arch.num_classes),
        }
        return SoftmaxRegression(arch, weights)
    rng1 = seeded_rng(seed, 0)
    rng2 = seeded_rng(seed, 1)
    weights = {
        "W1": _glorot(rng1, arch.input_dim, arch.hidden_dim),
        "b1": np.zeros(arch.hidden_dim),
        "W2": _glorot(rng2, arch.hidden_dim, arch.num_classes),
        "b2": np.zeros(arch.num_classes),
    }
    return TwoLayerPerceptron(arch, weights)


def sgd_fit(model: Model, X, y, cfg: TrainConfig) -> Model:
    """Train a copy of ``model`` with mini-batch SGD; the input is untouched.

    Batch order is a seed-determined shuffle keyed by (seed, epoch).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    if n == 0:
        raise ValidationError("cannot train on an empty dataset")
    trained = model.copy()
    for epoch in range(cfg.local_epochs):
        perm = seeded_rng(cfg.seed, epoch).permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            loss, grads = trained.loss_and_grads(X[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss in epoch {epoch}")
            for name, g in grads.items():
                trained.weights[name] -= cfg.learning_rate * g
    return trained


def train_local(model: Model, data, cfg: TrainConfig):
    """One client's local training pass; returns its round contribution."""
    from .aggregation import ModelUpdate

    trained = sgd_fit(model, data.data.features, data.data.labels, cfg)
    return ModelUpdate(
        client_id=data.client_id,
        params=trained.get_vector(),
        sample_count=data.data.features.shape[0],
    )


def evaluate(model: Model, X, y):
    """Return (accuracy, mean cross-entropy loss) over a labeled set."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValidationError("cannot evaluate on an empty dataset")
    logp = _log_softmax(model.scores(X))
    accuracy = float((np.argmax(logp, axis=1) == y).mean())
    mean_loss = float(-logp[np.arange(X.shape[0]), y].mean())
    return accuracy, mean_loss


def predict(model: Model, example) -> int:
    """Predicted class for a single feature vector."""
    x = np.asarray(example, dtype=np.float64)
    if x.ndim != 1 or x.size != model.arch.input_dim:
        raise StructuralError(
            f"expected a feature vector of length {model.arch.input_dim}, got shape {x.shape}"
        )
    return int(model.predict(x[None, :])[0])
