"""
Policy-gradient design search.

A controller emits one categorical distribution per decision of every cell
it designs (re-upload, rotation axis, fixed gate).  In LAYER mode it designs
one layer that is repeated through the circuit; in WHOLE mode it designs
every cell.  Two controllers are provided:

* ``ClassicalController``: a feed-forward net with no real input (a
  constant ones vector), two shared tanh layers (48, 12) and one linear
  head per decision.
* ``HybridController``: per designed cell, three small fixed-structure
  PQCs whose <Z> readouts, times a scale, are the head logits.  Their
  gradients come from the parameter-shift rule.

Updates are REINFORCE with an EMA baseline and an entropy bonus.
"""

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from . import _kernels as K
from .data import Dataset, Split
from .design import FIXED_GATES, ROTATIONS, Design, QubitDecision, allowed_gates
from .errors import ConfigurationError
from .grad import log_softmax, shifted_angle_rows, softmax
from .search_random import TrialRecord, trial_seed
from .trainer import TrainConfig, train

log = logging.getLogger(__name__)

MODES = ("WHOLE", "LAYER")
METRICS = ("VAL_LOSS", "VAL_ACC")
HYBRID_GATES = ("CX", "CZ", "TOF", "CSWAP")


# ---------------------------------------------------------------------------
# categorical heads
# ---------------------------------------------------------------------------


def head_entropy(logits) -> float:
    logp = log_softmax(logits)
    return float(-np.sum(np.exp(logp) * logp))


def dlogp_dlogits(logits, action: int) -> np.ndarray:
    g = -softmax(logits)
    g[action] += 1.0
    return g


def dentropy_dlogits(logits) -> np.ndarray:
    logp = log_softmax(logits)
    p = np.exp(logp)
    h = -np.sum(p * logp)
    return -p * (logp + h)


# ---------------------------------------------------------------------------
# controllers
# ---------------------------------------------------------------------------


class _Controller:
    """Shared plumbing: ``head_sizes`` lists categorical widths in sampling order."""

    head_sizes: List[int]

    def head_logits(self) -> List[np.ndarray]:
        raise NotImplementedError

    def backprop(self, dlogits: Sequence[np.ndarray]) -> np.ndarray:
        """Gradient w.r.t. the flat parameter vector given per-head logit gradients."""
        raise NotImplementedError

    def get_params(self) -> np.ndarray:
        raise NotImplementedError

    def set_params(self, flat) -> None:
        raise NotImplementedError

    def entropy(self) -> float:
        return sum(head_entropy(z) for z in self.head_logits())


class TabularPolicy(_Controller):
    """Free logits per head; the textbook bandit policy."""

    def __init__(self, head_sizes, logits=None):
        self.head_sizes = list(head_sizes)
        self.theta = np.zeros(sum(self.head_sizes)) if logits is None else np.array(logits, float)

    def head_logits(self):
        out, k = [], 0
        for s in self.head_sizes:
            out.append(self.theta[k:k + s].copy())
            k += s
        return out

    def backprop(self, dlogits):
        return np.concatenate([np.asarray(d, float) for d in dlogits])

    def get_params(self):
        return self.theta.copy()

    def set_params(self, flat):
        self.theta = np.array(flat, dtype=float)


class ClassicalController(_Controller):
    kind = "CLASSICAL"

    def __init__(self, n_cells: int, gate_choices=FIXED_GATES, hidden=(48, 12),
                 input_width: int = 4, rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_cells = n_cells
        self.gate_choices = tuple(gate_choices)
        self.head_sizes = [2, len(ROTATIONS), len(self.gate_choices)] * n_cells
        self.x0 = np.ones(input_width)
        h1, h2 = hidden

        def glorot(fan_out, fan_in):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-lim, lim, size=(fan_out, fan_in))

        # zero heads -> exactly uniform initial policy
        self.layers = {
            "W1": glorot(h1, input_width), "b1": np.zeros(h1),
            "W2": glorot(h2, h1), "b2": np.zeros(h2),
            "Wh": np.zeros((sum(self.head_sizes), h2)), "bh": np.zeros(sum(self.head_sizes)),
        }
        self._order = ("W1", "b1", "W2", "b2", "Wh", "bh")

    def _hidden(self):
        L = self.layers
        a1 = np.tanh(L["W1"] @ self.x0 + L["b1"])
        a2 = np.tanh(L["W2"] @ a1 + L["b2"])
        return a1, a2

    def head_logits(self):
        _, a2 = self._hidden()
        z = self.layers["Wh"] @ a2 + self.layers["bh"]
        return np.split(z, np.cumsum(self.head_sizes)[:-1])

    def backprop(self, dlogits):
        L = self.layers
        a1, a2 = self._hidden()
        dz = np.concatenate([np.asarray(d, float) for d in dlogits])
        g = {"Wh": np.outer(dz, a2), "bh": dz}
        d2 = (L["Wh"].T @ dz) * (1 - a2**2)
        g["W2"], g["b2"] = np.outer(d2, a1), d2
        d1 = (L["W2"].T @ d2) * (1 - a1**2)
        g["W1"], g["b1"] = np.outer(d1, self.x0), d1
        return np.concatenate([g[k].ravel() for k in self._order])

    def get_params(self):
        return np.concatenate([self.layers[k].ravel() for k in self._order])

    def set_params(self, flat):
        k = 0
        for name in self._order:
            arr = self.layers[name]
            self.layers[name] = np.array(flat[k:k + arr.size], dtype=float).reshape(arr.shape)
            k += arr.size


def small_pqc_ops(n_qubits: int, n_layers: int = 3) -> np.ndarray:
    """H on every line, then per layer RY(theta) on every line and a CZ ladder."""
    rows = [[K.K_H, q, 0, 0, -1] for q in range(n_qubits)]
    for l in range(n_layers):
        for q in range(n_qubits):
            rows.append([K.K_RY, q, 0, 0, l * n_qubits + q])
        for q in range(n_qubits - 1):
            rows.append([K.K_CZ, q, q + 1, 0, -1])
    return np.array(rows, dtype=np.int64)


class HybridController(_Controller):
    """Three small PQCs per designed cell: (3q, 2 readouts), (3q, 3 readouts), (4q, 4 readouts)."""

    kind = "HYBRID_QUANTUM"
    SPECS = ((3, 2), (3, 3), (4, 4))

    def __init__(self, n_cells: int, scale: float = 5.0, pqc_layers: int = 3,
                 rng: Optional[np.random.Generator] = None, init_spread: float = 0.0):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_cells = n_cells
        self.scale = scale
        self.pqc_layers = pqc_layers
        self.gate_choices = HYBRID_GATES
        self.head_sizes = [m for _, m in self.SPECS] * n_cells
        self.ops = [small_pqc_ops(nq, pqc_layers) for nq, _ in self.SPECS]
        self.theta = [
            rng.uniform(-init_spread, init_spread, size=(n_cells, nq * pqc_layers))
            for nq, _ in self.SPECS
        ]

    def _readouts(self, with_jacobian: bool):
        outs, jacs = [], []
        for (nq, m), ops, th in zip(self.SPECS, self.ops, self.theta):
            n_par = th.shape[1]
            if with_jacobian:
                rows = shifted_angle_rows(th, n_par).reshape(-1, n_par)
                f = K.run_program(ops, rows, nq, m).reshape(self.n_cells, 1 + 2 * n_par, m)
                outs.append(f[:, 0])
                jacs.append(0.5 * (f[:, 1:1 + n_par] - f[:, 1 + n_par:]))
            else:
                outs.append(K.run_program(ops, th, nq, m))
        return outs, jacs

    def head_logits(self):
        outs, _ = self._readouts(False)
        return [self.scale * outs[d][c] for c in range(self.n_cells) for d in range(3)]

    def backprop(self, dlogits):
        _, jacs = self._readouts(True)
        grads = [np.zeros_like(th) for th in self.theta]
        k = 0
        for c in range(self.n_cells):
            for d in range(3):
                grads[d][c] = self.scale * (jacs[d][c] @ np.asarray(dlogits[k], float))
                k += 1
        return np.concatenate([g.ravel() for g in grads])

    def get_params(self):
        return np.concatenate([th.ravel() for th in self.theta])

    def set_params(self, flat):
        k = 0
        for i, th in enumerate(self.theta):
            self.theta[i] = np.array(flat[k:k + th.size], dtype=float).reshape(th.shape)
            k += th.size


def make_controller(kind: str, mode: str, n_qubits: int, n_layers: int,
                    rng: Optional[np.random.Generator] = None, **kwargs) -> _Controller:
    mode = mode.upper()
    if mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}")
    n_cells = n_qubits if mode == "LAYER" else n_qubits * n_layers
    kind = kind.upper()
    if kind == "CLASSICAL":
        return ClassicalController(n_cells, allowed_gates(n_qubits), rng=rng, **kwargs)
    if kind in ("HYBRID", "HYBRID_QUANTUM"):
        if n_qubits < 3:
            raise ConfigurationError("the hybrid controller's gate pool needs >= 3 qubits")
        return HybridController(n_cells, rng=rng, **kwargs)
    raise ConfigurationError(f"unknown controller kind {kind!r}")


# ---------------------------------------------------------------------------
# sampling and updates
# ---------------------------------------------------------------------------


@dataclass
class PolicySample:
    design: Optional[Design]
    log_prob: float
    entropy: float
    actions: List[int] = field(default_factory=list)


def _actions_to_design(policy, actions, mode, n_qubits, n_layers):
    gates = getattr(policy, "gate_choices", FIXED_GATES)
    cells = []
    for c in range(len(actions) // 3):
        a_r, a_u, a_w = actions[3 * c:3 * c + 3]
        cells.append(QubitDecision(bool(a_r), ROTATIONS[a_u], gates[a_w]))
    if mode == "LAYER":
        grid = [tuple(cells)] * n_layers
    else:
        grid = [tuple(cells[l * n_qubits:(l + 1) * n_qubits]) for l in range(n_layers)]
    return Design(n_qubits, n_layers, tuple(grid))


def _design_to_actions(policy, design, mode):
    gates = getattr(policy, "gate_choices", FIXED_GATES)
    rows = design.cells[:1] if mode == "LAYER" else design.cells
    actions = []
    for row in rows:
        for c in row:
            actions += [int(c.reupload), ROTATIONS.index(c.rotation), gates.index(c.gate)]
    return actions


def sample_actions(policy: _Controller, rng: np.random.Generator):
    actions, log_prob, entropy = [], 0.0, 0.0
    for z in policy.head_logits():
        logp = log_softmax(z)
        p = np.exp(logp)
        a = int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"), p.size - 1))
        actions.append(a)
        log_prob += float(logp[a])
        entropy += float(-np.sum(p * logp))
    return actions, log_prob, entropy


def sample_design(policy: _Controller, mode: str, n_qubits: int, n_layers: int,
                  rng: np.random.Generator) -> PolicySample:
    mode = mode.upper()
    actions, log_prob, entropy = sample_actions(policy, rng)
    design = _actions_to_design(policy, actions, mode, n_qubits, n_layers)
    return PolicySample(design, log_prob, entropy, actions)


def log_prob_of(policy: _Controller, design: Design, mode: str) -> float:
    actions = _design_to_actions(policy, design, mode.upper())
    return float(sum(log_softmax(z)[a] for z, a in zip(policy.head_logits(), actions)))


def mode_design(policy: _Controller, mode: str, n_qubits: int, n_layers: int) -> Design:
    actions = [int(np.argmax(z)) for z in policy.head_logits()]
    return _actions_to_design(policy, actions, mode.upper(), n_qubits, n_layers)


def objective_gradient(policy: _Controller, actions, advantage: float,
                       entropy_coeff: float) -> np.ndarray:
    """d/dw of advantage * log pi(actions) + entropy_coeff * H(pi)."""
    dlogits = []
    for z, a in zip(policy.head_logits(), actions):
        g = advantage * dlogp_dlogits(z, a)
        if entropy_coeff:
            g = g + entropy_coeff * dentropy_dlogits(z)
        dlogits.append(g)
    return policy.backprop(dlogits)


def reinforce_update(policy: _Controller, sample: PolicySample, reward: float,
                     baseline: float, entropy_coeff: float, learning_rate: float) -> _Controller:
    """One ascent step on (reward - baseline) * log_prob + entropy_coeff * entropy."""
    if not np.isfinite(reward):
        raise ConfigurationError("reward must be finite")
    advantage = reward - baseline
    if advantage == 0.0 and entropy_coeff == 0.0:
        return policy
    grad = objective_gradient(policy, sample.actions, advantage, entropy_coeff)
    policy.set_params(policy.get_params() + learning_rate * grad)
    return policy


# ---------------------------------------------------------------------------
# search loop
# ---------------------------------------------------------------------------


@dataclass
class LoopRecord:
    loop: int
    controller_loss: float
    metric_value: float
    entropy_per_cell: float
    design: Design


@dataclass
class RLResult:
    best: TrialRecord
    suggested: TrialRecord
    curve: List[LoopRecord]
    converged: bool

    def curve_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["loop", "controller_loss", "metric_value"])
        for r in self.curve:
            w.writerow([r.loop, repr(float(r.controller_loss)), repr(float(r.metric_value))])
        return buf.getvalue()


def _score(rec, metric):
    if metric == "VAL_LOSS":
        return (rec.val_loss, -rec.val_acc)
    return (-rec.val_acc, rec.val_loss)


def _evaluate(design, dataset, split, config, cache):
    key = design.tokens()
    if key not in cache:
        result = train(design, dataset, split, config)
        f = result.history.final
        cache[key] = TrialRecord(design, config.epochs, f.val_loss, f.val_acc, seed=config.seed,
                                 test_loss=f.test_loss, test_acc=f.test_acc, theta=result.theta)
    return cache[key]


def run_rl_search(dataset: Dataset, split: Split, n_layers: int, mode: str = "LAYER",
                  metric: str = "VAL_LOSS", controller: str = "CLASSICAL",
                  inner_epochs: int = 20, max_loops: int = 100, controller_lr: float = 0.1,
                  entropy_coeff: float = 0.01, baseline_decay: float = 0.9,
                  entropy_threshold: float = 0.05, normalize_advantage: bool = True,
                  train_config: Optional[TrainConfig] = None, seed: int = 0) -> RLResult:
    """Sample -> train from scratch -> score on validation -> REINFORCE, until converged."""
    mode, metric = mode.upper(), metric.upper()
    if metric not in METRICS:
        raise ConfigurationError(f"metric must be one of {METRICS}")
    if len(split.val) == 0:
        raise ConfigurationError("design search needs a validation split")
    n_qubits = dataset.n_features
    rng = np.random.default_rng(seed)
    policy = make_controller(controller, mode, n_qubits, n_layers, rng=rng)
    n_cells = len(policy.head_sizes) // 3
    # one init seed for every trial: the same design always earns the same reward
    config = replace(train_config or TrainConfig(), epochs=inner_epochs, seed=trial_seed(seed, 0))
    cache = {}
    baseline = None
    adv_var = None
    curve: List[LoopRecord] = []
    best: Optional[TrialRecord] = None
    converged = False
    for loop in range(1, max_loops + 1):
        sample = sample_design(policy, mode, n_qubits, n_layers, rng)
        rec = _evaluate(sample.design, dataset, split, config, cache)
        pqc_loss = rec.val_loss if metric == "VAL_LOSS" else 1.0 - rec.val_acc
        reward = -pqc_loss
        if baseline is None:
            baseline = reward
        advantage = reward - baseline
        scale = 1.0
        if normalize_advantage:
            adv_var = advantage**2 if adv_var is None else (
                baseline_decay * adv_var + (1 - baseline_decay) * advantage**2)
            scale = np.sqrt(adv_var) + 1e-8 if adv_var > 0 else 1.0
        controller_loss = -(advantage * sample.log_prob) - entropy_coeff * sample.entropy
        reinforce_update(policy, sample, reward / scale, baseline / scale,
                         entropy_coeff, controller_lr)
        baseline = baseline_decay * baseline + (1 - baseline_decay) * reward
        if best is None or _score(rec, metric) < _score(best, metric):
            best = rec
        ent = policy.entropy() / n_cells
        curve.append(LoopRecord(loop, controller_loss,
                                rec.val_loss if metric == "VAL_LOSS" else rec.val_acc,
                                ent, sample.design))
        log.info("loop %d: metric %.4f entropy/cell %.4f", loop, curve[-1].metric_value, ent)
        if ent < entropy_threshold:
            converged = True
            break
    suggested = _evaluate(mode_design(policy, mode, n_qubits, n_layers), dataset, split, config, cache)
    return RLResult(best, suggested, curve, converged)
