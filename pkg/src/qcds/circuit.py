"""
PQC construction and evaluation.

The register starts in |0...0>, each qubit i receives RY(x_i), then each
layer sweeps qubits in ascending order applying, per qubit, the fixed gate,
the trainable rotation and (optionally) RY(x_i) again.  The output vector is
<Z> on the first ``n_measure`` qubits.

Circuits are compiled to an integer op table whose angle column indexes a
per-evaluation angle vector ``[theta (layer-major), x]``; this is what the
kernels consume.
"""

from dataclasses import dataclass
from typing import List

import numpy as np

from . import _kernels as K
from .design import Design, QubitDecision, wiring
from .errors import ConfigurationError
from .qsim import GATE_KINDS, GateOp

BENCHMARKS = {
    "RY_CX": QubitDecision(False, "RY", "CX"),
    "RY_CZ": QubitDecision(False, "RY", "CZ"),
    "RY_CX_REUPLOAD": QubitDecision(True, "RY", "CX"),
}


def make_benchmark(kind: str, n_qubits: int, n_layers: int) -> Design:
    try:
        decision = BENCHMARKS[kind.upper()]
    except KeyError:
        raise ConfigurationError(f"unknown benchmark {kind!r}; choose from {sorted(BENCHMARKS)}")
    return Design.uniform(decision, n_qubits, n_layers)


def encode(x) -> List[GateOp]:
    return [GateOp("RY", (i,), float(v)) for i, v in enumerate(np.asarray(x, dtype=float))]


def compile_design(design: Design) -> np.ndarray:
    """Op table for ``design``; angle sources: theta index, or n_params + feature index."""
    n, n_params = design.n_qubits, design.n_params
    rows = [[K.K_RY, i, 0, 0, n_params + i] for i in range(n)]
    for l, layer in enumerate(design.cells):
        for i, cell in enumerate(layer):
            wires = list(wiring(cell.gate, i, n)) + [0, 0]
            rows.append([GATE_KINDS[cell.gate], wires[0], wires[1], wires[2], -1])
            rows.append([GATE_KINDS[cell.rotation], i, 0, 0, l * n + i])
            if cell.reupload:
                rows.append([K.K_RY, i, 0, 0, n_params + i])
    return np.array(rows, dtype=np.int64)


def circuit_ops(design: Design, theta, x) -> List[GateOp]:
    """Explicit gate list (encoding included) for inspection and oracles."""
    theta = np.asarray(theta, dtype=float).reshape(design.n_layers, design.n_qubits)
    ops = encode(x)
    for l, layer in enumerate(design.cells):
        for i, cell in enumerate(layer):
            ops.append(GateOp(cell.gate, wiring(cell.gate, i, design.n_qubits)))
            ops.append(GateOp(cell.rotation, (i,), float(theta[l, i])))
            if cell.reupload:
                ops.append(GateOp("RY", (i,), float(x[i])))
    return ops


@dataclass
class BoundCircuit:
    design: Design
    theta: np.ndarray
    n_measure: int

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(
            self.design.n_layers, self.design.n_qubits
        )
        if not 1 <= self.n_measure <= self.design.n_qubits:
            raise ConfigurationError(
                f"n_measure must be in 1..{self.design.n_qubits}, got {self.n_measure}"
            )
        self._ops = compile_design(self.design)

    @property
    def ops(self) -> np.ndarray:
        return self._ops

    def angle_rows(self, X, thetas=None) -> np.ndarray:
        """Stack ``[theta, x]`` per row.  ``thetas`` may be (rows, n_params)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.design.n_qubits:
            raise ConfigurationError(
                f"expected {self.design.n_qubits} features, got {X.shape[1]}"
            )
        if thetas is None:
            thetas = np.broadcast_to(self.theta.ravel(), (X.shape[0], self.design.n_params))
        return np.concatenate([thetas, X], axis=1)

    def forward_batch(self, X) -> np.ndarray:
        return K.run_program(self._ops, self.angle_rows(X), self.design.n_qubits, self.n_measure)

    def forward(self, x) -> np.ndarray:
        return self.forward_batch(np.asarray(x, dtype=float)[None, :])[0]


def forward(circuit: BoundCircuit, x) -> np.ndarray:
    return circuit.forward(x)
