"""
The discrete design space.

A design is an ``n_layers x n_qubits`` grid of per-qubit decisions: whether
to re-upload the qubit's input feature, which rotation axis carries the
trainable angle, and which fixed gate the qubit triggers.  Fixed
multi-qubit gates are wired nearest-neighbour with wraparound, anchored at
the deciding qubit.
"""

import difflib
import json
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from .errors import ComparisonError, ConfigurationError, DesignParseError, TilingError, WiringError

ROTATIONS = ("RX", "RY", "RZ")
FIXED_GATES = ("H", "X", "Y", "Z", "CX", "CZ", "TOF", "CSWAP")
MULTI_QUBIT_GATES = {"CX": 2, "CZ": 2, "TOF": 3, "CSWAP": 3}
N_OUTCOMES = 2 * len(ROTATIONS) * len(FIXED_GATES)

# one printable symbol per decision, used for gestalt similarity
_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuv"
assert len(_ALPHABET) == N_OUTCOMES


class QubitDecision(NamedTuple):
    reupload: bool
    rotation: str
    gate: str

    @property
    def code(self) -> int:
        return (
            int(self.reupload) * len(ROTATIONS) * len(FIXED_GATES)
            + ROTATIONS.index(self.rotation) * len(FIXED_GATES)
            + FIXED_GATES.index(self.gate)
        )

    @classmethod
    def from_code(cls, code: int) -> "QubitDecision":
        code = int(code)
        if not 0 <= code < N_OUTCOMES:
            raise ConfigurationError(f"decision code {code} out of range")
        reup, rest = divmod(code, len(ROTATIONS) * len(FIXED_GATES))
        rot, gate = divmod(rest, len(FIXED_GATES))
        return cls(bool(reup), ROTATIONS[rot], FIXED_GATES[gate])

    @property
    def token(self) -> str:
        return _ALPHABET[self.code]


ALL_DECISIONS = tuple(QubitDecision.from_code(c) for c in range(N_OUTCOMES))


def allowed_gates(n_qubits: int) -> Tuple[str, ...]:
    if n_qubits >= 3:
        return FIXED_GATES
    if n_qubits == 2:
        return tuple(g for g in FIXED_GATES if MULTI_QUBIT_GATES.get(g, 1) <= 2)
    return FIXED_GATES[:4]


def wiring(gate: str, qubit: int, n_qubits: int) -> Tuple[int, ...]:
    """Wires used by ``gate`` when decided at ``qubit``.

    CX/CZ: (i, i+1); TOF: (i, i+1, i+2) with the last as target;
    CSWAP: control i, swapping i+1 and i+2.  All indices mod n_qubits.
    """
    arity = MULTI_QUBIT_GATES.get(gate, 1)
    if arity > n_qubits:
        raise WiringError(f"{gate} needs {arity} distinct wires, circuit has {n_qubits}")
    return tuple((qubit + k) % n_qubits for k in range(arity))


@dataclass(frozen=True)
class Design:
    n_qubits: int
    n_layers: int
    cells: Tuple[Tuple[QubitDecision, ...], ...]

    def __post_init__(self):
        cells = tuple(tuple(QubitDecision(*c) for c in row) for row in self.cells)
        object.__setattr__(self, "cells", cells)
        if self.n_qubits < 1 or self.n_layers < 1:
            raise ConfigurationError("a design needs at least one qubit and one layer")
        if len(cells) != self.n_layers or any(len(row) != self.n_qubits for row in cells):
            raise ConfigurationError(
                f"cell grid does not match {self.n_layers} layers x {self.n_qubits} qubits"
            )
        for row in cells:
            for c in row:
                if c.rotation not in ROTATIONS or c.gate not in FIXED_GATES:
                    raise ConfigurationError(f"invalid decision {c}")
                if MULTI_QUBIT_GATES.get(c.gate, 1) > self.n_qubits:
                    raise WiringError(f"{c.gate} cannot be wired on {self.n_qubits} qubit(s)")

    @classmethod
    def from_codes(cls, codes) -> "Design":
        codes = np.asarray(codes, dtype=np.int64)
        n_layers, n_qubits = codes.shape
        return cls(n_qubits, n_layers,
                   tuple(tuple(ALL_DECISIONS[c] for c in row) for row in codes))

    @classmethod
    def uniform(cls, decision: QubitDecision, n_qubits: int, n_layers: int) -> "Design":
        return cls(n_qubits, n_layers, tuple((decision,) * n_qubits for _ in range(n_layers)))

    def codes(self) -> np.ndarray:
        return np.array([[c.code for c in row] for row in self.cells], dtype=np.int64)

    def tokens(self) -> str:
        return "".join(c.token for row in self.cells for c in row)

    @property
    def n_params(self) -> int:
        return self.n_layers * self.n_qubits

    def __str__(self):
        rows = []
        for row in self.cells:
            rows.append(" ".join(
                ("T" if c.reupload else "-") + c.rotation[1] + ":" + c.gate for c in row
            ))
        return "\n".join(rows)


def _check_dims(n_qubits, n_layers):
    if n_qubits < 1 or n_layers < 1:
        raise ConfigurationError(f"dimensions must be positive, got {n_qubits}x{n_layers}")


def space_size(n_qubits: int, n_layers: int) -> int:
    _check_dims(n_qubits, n_layers)
    return N_OUTCOMES ** (n_qubits * n_layers)


def random_design(rng: np.random.Generator, n_qubits: int, n_layers: int) -> Design:
    """Each cell uniform over the decisions that can be wired at this width."""
    _check_dims(n_qubits, n_layers)
    gates = allowed_gates(n_qubits)
    pool = np.array([d.code for d in ALL_DECISIONS if d.gate in gates])
    codes = pool[rng.integers(0, pool.size, size=(n_layers, n_qubits))]
    return Design.from_codes(codes)


def similarity(a: Design, b: Design) -> float:
    """Ratcliff-Obershelp ratio of the row-major decision token strings."""
    if (a.n_qubits, a.n_layers) != (b.n_qubits, b.n_layers):
        raise ComparisonError(
            f"cannot compare {a.n_layers}x{a.n_qubits} with {b.n_layers}x{b.n_qubits}"
        )
    return difflib.SequenceMatcher(None, a.tokens(), b.tokens(), autojunk=False).ratio()


def symmetric_similarity(a: Design, b: Design) -> float:
    """Larger of the two argument orders; the plain ratio is order-sensitive."""
    return max(similarity(a, b), similarity(b, a))


def tile(design: Design, target_qubits: int) -> Design:
    """Repeat the per-qubit pattern across a wider register (qubit j copies j mod n)."""
    if target_qubits < design.n_qubits:
        raise TilingError(
            f"cannot tile a {design.n_qubits}-qubit design down to {target_qubits} qubits"
        )
    cells = tuple(
        tuple(row[j % design.n_qubits] for j in range(target_qubits)) for row in design.cells
    )
    return Design(target_qubits, design.n_layers, cells)


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

_ROT_TO_FILE = {"RX": "X", "RY": "Y", "RZ": "Z"}
_FILE_TO_ROT = {v: k for k, v in _ROT_TO_FILE.items()}


def serialize(design: Design) -> str:
    lines = ["{", f'  "qubits": {design.n_qubits},', '  "layers": [']
    for li, row in enumerate(design.cells):
        cells = ", ".join(
            '{"reupload": %s, "rot": "%s", "gate": "%s"}'
            % ("true" if c.reupload else "false", _ROT_TO_FILE[c.rotation], c.gate)
            for c in row
        )
        sep = "," if li < design.n_layers - 1 else ""
        lines.append(f"    [{cells}]{sep}")
    lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _locate(text, needle):
    pos = text.find(needle)
    if pos < 0:
        return None, None
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def parse(text: str) -> Design:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DesignParseError(f"malformed design document: {exc.msg}", exc.lineno, exc.colno)

    def fail(msg, needle=None):
        line, col = _locate(text, needle) if needle is not None else (None, None)
        raise DesignParseError(msg, line, col)

    if not isinstance(doc, dict) or "qubits" not in doc or "layers" not in doc:
        fail("design document needs 'qubits' and 'layers'")
    n_qubits = doc["qubits"]
    if not isinstance(n_qubits, int) or isinstance(n_qubits, bool) or n_qubits < 1:
        fail(f"invalid qubit count {n_qubits!r}", '"qubits"')
    layers = doc["layers"]
    if not isinstance(layers, list) or not layers:
        fail("'layers' must be a non-empty list", '"layers"')
    rows = []
    for li, layer in enumerate(layers):
        if not isinstance(layer, list) or len(layer) != n_qubits:
            fail(f"layer {li} must list {n_qubits} cells", '"layers"')
        row = []
        for qi, cell in enumerate(layer):
            if not isinstance(cell, dict) or set(cell) != {"reupload", "rot", "gate"}:
                fail(f"layer {li} qubit {qi}: cell needs exactly reupload/rot/gate")
            if not isinstance(cell["reupload"], bool):
                fail(f"layer {li} qubit {qi}: reupload must be true/false")
            if cell["rot"] not in _FILE_TO_ROT:
                fail(f"layer {li} qubit {qi}: unknown rotation {cell['rot']!r}",
                     json.dumps(cell["rot"]))
            if cell["gate"] not in FIXED_GATES:
                fail(f"layer {li} qubit {qi}: unknown gate {cell['gate']!r}",
                     json.dumps(cell["gate"]))
            row.append(QubitDecision(cell["reupload"], _FILE_TO_ROT[cell["rot"]], cell["gate"]))
        rows.append(tuple(row))
    try:
        return Design(n_qubits, len(rows), tuple(rows))
    except (ConfigurationError, WiringError) as exc:
        raise DesignParseError(str(exc))


def load(path) -> Design:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def save(design: Design, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(design))
