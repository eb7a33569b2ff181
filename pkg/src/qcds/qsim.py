"""
Dense statevector simulation.

Amplitudes are stored flat in the computational basis with qubit 0 as the
most significant bit.  Rotations follow R_a(phi) = exp(-i phi sigma_a / 2).
Gates act in place through index arithmetic; no 2**n x 2**n operator is
ever built here.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import _kernels as K
from .errors import ConfigurationError, WiringError

MAX_QUBITS = 12

GATE_KINDS = {
    "I": K.K_I,
    "RX": K.K_RX,
    "RY": K.K_RY,
    "RZ": K.K_RZ,
    "H": K.K_H,
    "X": K.K_X,
    "Y": K.K_Y,
    "Z": K.K_Z,
    "CX": K.K_CX,
    "CZ": K.K_CZ,
    "TOF": K.K_TOF,
    "CSWAP": K.K_CSWAP,
}
ROTATIONS = ("RX", "RY", "RZ")
ARITY = {"I": 1, "RX": 1, "RY": 1, "RZ": 1, "H": 1, "X": 1, "Y": 1, "Z": 1,
         "CX": 2, "CZ": 2, "TOF": 3, "CSWAP": 3}


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ConfigurationError(
                f"expected {1 << self.n_qubits} amplitudes, got {self.amplitudes.shape}"
            )

    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())


@dataclass(frozen=True)
class GateOp:
    """One gate on designated wires.

    Wire order is significant: CX/CZ are (control, target), TOF is
    (control, control, target) and CSWAP is (control, swap_a, swap_b).
    """

    kind: str
    wires: Tuple[int, ...]
    angle: Optional[float] = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ConfigurationError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "wires", tuple(int(w) for w in self.wires))
        if len(self.wires) != ARITY[self.kind]:
            raise WiringError(
                f"{self.kind} acts on {ARITY[self.kind]} wire(s), got {len(self.wires)}"
            )
        if len(set(self.wires)) != len(self.wires):
            raise WiringError(f"{self.kind} wires must be distinct: {self.wires}")
        if self.kind in ROTATIONS and self.angle is None:
            raise ConfigurationError(f"{self.kind} needs an angle")

    def inverse(self) -> "GateOp":
        if self.kind in ROTATIONS:
            return GateOp(self.kind, self.wires, -self.angle)
        return self

    def op_row(self, angle_source=-1):
        w = list(self.wires) + [0] * (3 - len(self.wires))
        return [GATE_KINDS[self.kind], w[0], w[1], w[2], angle_source]


def zero_state(n_qubits: int) -> StateVector:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigurationError(f"n_qubits must be in 1..{MAX_QUBITS}, got {n_qubits}")
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def check_wires(op: GateOp, n_qubits: int) -> None:
    for w in op.wires:
        if not 0 <= w < n_qubits:
            raise WiringError(f"wire {w} out of range for {n_qubits} qubit(s)")


def apply_gate(state: StateVector, op: GateOp) -> StateVector:
    """Return a new state with ``op`` applied."""
    check_wires(op, state.n_qubits)
    ops = np.array([op.op_row(0 if op.angle is not None else -1)], dtype=np.int64)
    angles = np.array([op.angle if op.angle is not None else 0.0])
    out = state.amplitudes.copy()
    if K.USE_NUMBA:
        K.apply_ops_numba(out, ops, angles, state.n_qubits)
    else:
        out = K.apply_ops_numpy(out[None, :], ops, angles[None, :], state.n_qubits)[0]
    return StateVector(state.n_qubits, out)


def apply_circuit(state: StateVector, ops) -> StateVector:
    for op in ops:
        state = apply_gate(state, op)
    return state


def sigma_z_expectation(state: StateVector, qubit: int) -> float:
    if not 0 <= qubit < state.n_qubits:
        raise WiringError(f"qubit {qubit} out of range for {state.n_qubits} qubit(s)")
    probs = np.abs(state.amplitudes) ** 2
    bit = (np.arange(probs.size) >> (state.n_qubits - 1 - qubit)) & 1
    return float(np.sum(np.where(bit, -probs, probs)))


def product_z_expectation(state: StateVector, qubits) -> float:
    """<sigma_z x ... x sigma_z> over ``qubits``, identity elsewhere."""
    probs = np.abs(state.amplitudes) ** 2
    idx = np.arange(probs.size)
    parity = np.zeros(probs.size, dtype=np.int64)
    for q in qubits:
        if not 0 <= q < state.n_qubits:
            raise WiringError(f"qubit {q} out of range for {state.n_qubits} qubit(s)")
        parity ^= (idx >> (state.n_qubits - 1 - q)) & 1
    return float(np.sum(np.where(parity, -probs, probs)))


# dense single-gate matrices, used by tests and oracles only
def gate_matrix(kind: str, angle: Optional[float] = None) -> np.ndarray:
    c = s = 0.0
    if kind in ROTATIONS:
        c, s = np.cos(angle / 2), np.sin(angle / 2)
    mats = {
        "I": np.eye(2),
        "RX": np.array([[c, -1j * s], [-1j * s, c]]),
        "RY": np.array([[c, -s], [s, c]]),
        "RZ": np.diag([np.exp(-0.5j * angle if angle is not None else 0),
                       np.exp(0.5j * angle if angle is not None else 0)]),
        "H": np.array([[1, 1], [1, -1]]) / np.sqrt(2),
        "X": np.array([[0, 1], [1, 0]]),
        "Y": np.array([[0, -1j], [1j, 0]]),
        "Z": np.diag([1, -1]),
    }
    return np.asarray(mats[kind], dtype=np.complex128)
