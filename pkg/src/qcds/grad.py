"""
Softmax/NLL loss head and parameter-shift gradients.

Every trainable angle enters through a single exp(-i phi P / 2) with P a
Pauli operator, so d<Z>/dphi = (f(phi + pi/2) - f(phi - pi/2)) / 2 exactly.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .circuit import BoundCircuit
from .errors import ConfigurationError, LabelError

SHIFT = np.pi / 2


@dataclass
class LossValue:
    value: float
    per_class_probs: np.ndarray


def softmax(logits, axis=-1):
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=axis, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def softmax_nll(logits, label: int) -> LossValue:
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[-1]:
        raise LabelError(f"label {label} out of range for {logits.shape[-1]} classes")
    logp = log_softmax(logits)
    return LossValue(float(-logp[label]), np.exp(logp))


def nll_batch(logits, labels):
    """Per-row NLL and probabilities for a (rows, classes) logit array."""
    logp = log_softmax(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise LabelError(f"labels out of range for {logits.shape[1]} classes")
    return -logp[np.arange(labels.size), labels], np.exp(logp)


def shifted_angle_rows(base_rows, n_params):
    """(rows, A) -> (rows, 1 + 2 * n_params, A): unshifted, then +shift, then -shift."""
    rows, width = base_rows.shape
    out = np.repeat(base_rows[:, None, :], 1 + 2 * n_params, axis=1)
    p = np.arange(n_params)
    out[:, 1 + p, p] += SHIFT
    out[:, 1 + n_params + p, p] -= SHIFT
    return out


def output_jacobian(circuit: BoundCircuit, X):
    """Outputs (B, M) and their theta-Jacobian (B, n_params, M) by parameter shift."""
    n_params = circuit.design.n_params
    base = circuit.angle_rows(X)
    rows = shifted_angle_rows(base, n_params)
    flat = rows.reshape(-1, rows.shape[-1])
    f = K.run_program(circuit.ops, flat, circuit.design.n_qubits, circuit.n_measure)
    f = f.reshape(base.shape[0], 1 + 2 * n_params, circuit.n_measure)
    jac = 0.5 * (f[:, 1:1 + n_params] - f[:, 1 + n_params:])
    return f[:, 0], jac


def loss_and_gradient(circuit: BoundCircuit, X, y):
    """Mean NLL over the batch and its gradient w.r.t. theta (n_layers x n_qubits)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise ConfigurationError("gradient batch must be non-empty")
    f, jac = output_jacobian(circuit, X)
    losses, probs = nll_batch(f, y)
    dlogits = probs.copy()
    dlogits[np.arange(y.size), y] -= 1.0
    # sample-ordered reduction keeps results bit-stable under a fixed seed
    grad = np.zeros(circuit.design.n_params)
    for b in range(y.size):
        grad += jac[b] @ dlogits[b]
    grad /= y.size
    return float(losses.mean()), grad.reshape(circuit.theta.shape)


def param_shift_gradient(circuit: BoundCircuit, batch) -> np.ndarray:
    """Batch-averaged dLoss/dtheta; ``batch`` is a sequence of (x, label)."""
    batch = list(batch)
    if not batch:
        raise ConfigurationError("gradient batch must be non-empty")
    X = np.array([np.asarray(x, dtype=float) for x, _ in batch])
    y = np.array([int(lab) for _, lab in batch])
    return loss_and_gradient(circuit, X, y)[1]
