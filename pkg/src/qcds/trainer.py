"""Mini-batch training of a bound circuit and split metrics."""

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .circuit import BoundCircuit
from .data import Dataset, Split
from .design import Design
from .errors import ConfigurationError, EvaluationError
from .grad import loss_and_gradient, nll_batch

OPTIMIZERS = ("SGD", "ADAM")


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 16
    learning_rate: float = 0.05
    optimizer: str = "ADAM"
    seed: int = 0
    init_scale: float = np.pi / 8

    def __post_init__(self):
        self.optimizer = self.optimizer.upper()
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be non-negative")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigurationError(f"optimizer must be one of {OPTIMIZERS}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: Optional[float]
    val_acc: Optional[float]
    test_loss: Optional[float]
    test_acc: Optional[float]


HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc", "test_loss", "test_acc")


@dataclass
class TrainHistory:
    records: List[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def final(self) -> EpochRecord:
        return self.records[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for r in self.records:
            w.writerow([_fmt(v) for v in asdict(r).values()])
        return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass
class TrainResult:
    theta: np.ndarray
    history: TrainHistory


class Adam:
    def __init__(self, shape, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SGD:
    def __init__(self, shape, lr):
        self.lr = lr

    def step(self, params, grad):
        return params - self.lr * grad


def evaluate(design: Design, theta, X, y, n_measure: int):
    """Mean per-sample NLL and accuracy (argmax, ties to the lowest class)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise EvaluationError("cannot evaluate on an empty row set")
    logits = BoundCircuit(design, theta, n_measure).forward_batch(X)
    losses, probs = nll_batch(logits, y)
    pred = np.argmax(probs, axis=1)
    return float(losses.mean()), float(np.mean(pred == y))


def _check_dims(design, dataset):
    if design.n_qubits != dataset.n_features:
        raise ConfigurationError(
            f"design has {design.n_qubits} qubits but dataset has {dataset.n_features} features"
        )
    if dataset.n_classes > design.n_qubits:
        raise ConfigurationError(
            f"{dataset.n_classes} classes cannot be read from {design.n_qubits} qubits"
        )


def train(design: Design, dataset: Dataset, split: Split, config: TrainConfig,
          theta0=None) -> TrainResult:
    """Train from a uniform [-init_scale, init_scale] start (or ``theta0``)."""
    _check_dims(design, dataset)
    n_measure = dataset.n_classes
    rng = np.random.default_rng(config.seed)
    theta = rng.uniform(-config.init_scale, config.init_scale, size=(design.n_layers, design.n_qubits))
    if theta0 is not None:
        theta = np.array(theta0, dtype=float).reshape(theta.shape)
    opt_cls = Adam if config.optimizer == "ADAM" else SGD
    opt = opt_cls(theta.shape, config.learning_rate)
    X, y = dataset.features, dataset.labels
    circuit = BoundCircuit(design, theta, n_measure)
    history = TrainHistory()
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(split.train)
        for start in range(0, order.size, config.batch_size):
            idx = order[start:start + config.batch_size]
            circuit.theta = theta
            _, grad = loss_and_gradient(circuit, X[idx], y[idx])
            theta = opt.step(theta, grad)
        history.records.append(_epoch_record(epoch, design, theta, X, y, split, n_measure))
    return TrainResult(theta, history)


def _epoch_record(epoch, design, theta, X, y, split, n_measure):
    def metrics(idx):
        if len(idx) == 0:
            return None, None
        return evaluate(design, theta, X[idx], y[idx], n_measure)

    tr = metrics(split.train)
    va = metrics(split.val)
    te = metrics(split.test)
    return EpochRecord(epoch, tr[0], tr[1], va[0], va[1], te[0], te[1])
