"""Gate-list circuits: the hardware-efficient ansatz and estimation circuitry.

Qubit 0 is reserved for the ancilla whenever one is present; bitstrings and
state indices are big-endian in qubit order (qubit 0 is the most significant
bit).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ANSATZ_LAYERS = 3

_SELF_INVERSE = {"h", "x", "cx", "cy", "cz"}
_KINDS_1Q = {"ry", "rz", "h", "x", "s", "sdg"}
_KINDS_2Q = {"cx", "cy", "cz"}


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    param: float | None = None

    def inverse(self) -> "Gate":
        if self.kind in _SELF_INVERSE:
            return self
        if self.kind in ("ry", "rz"):
            return Gate(self.kind, self.qubits, -self.param)
        if self.kind == "s":
            return Gate("sdg", self.qubits)
        if self.kind == "sdg":
            return Gate("s", self.qubits)
        raise ValueError(f"gate {self.kind!r} has no inverse")


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...]

    def __post_init__(self):
        for gate in self.gates:
            if gate.kind not in _KINDS_1Q | _KINDS_2Q | {"measure"}:
                raise ValueError(f"unknown gate kind {gate.kind!r}")
            if any(q < 0 or q >= self.n_qubits for q in gate.qubits):
                raise ValueError(
                    f"gate {gate.kind} targets {gate.qubits} outside "
                    f"0..{self.n_qubits - 1}"
                )
            if gate.kind in _KINDS_2Q and len(set(gate.qubits)) != 2:
                raise ValueError(f"two-qubit gate needs two distinct qubits: {gate}")

    def inverse(self) -> "Circuit":
        if any(g.kind == "measure" for g in self.gates):
            raise ValueError("cannot invert a circuit containing measurements")
        return Circuit(self.n_qubits, tuple(g.inverse() for g in reversed(self.gates)))

    def shifted(self, offset: int, n_qubits: int) -> "Circuit":
        """Re-target every gate by ``offset`` on a wider register."""
        gates = tuple(
            Gate(g.kind, tuple(q + offset for q in g.qubits), g.param)
            for g in self.gates
        )
        return Circuit(n_qubits, gates)

    def dump(self) -> str:
        """Line-per-gate debug text."""
        lines = []
        for g in self.gates:
            qubits = ",".join(str(q) for q in g.qubits)
            if g.param is None:
                lines.append(f"{g.kind} {qubits}")
            else:
                lines.append(f"{g.kind} {qubits} {g.param:.12g}")
        return "\n".join(lines)


def ansatz_parameter_count(q: int, layers: int = ANSATZ_LAYERS) -> int:
    return 2 * q * (layers + 1)


def random_initial_params(q: int, rng: np.random.Generator) -> np.ndarray:
    """Pseudorandom start in the canonical domain [-pi, pi]."""
    return rng.uniform(-np.pi, np.pi, size=ansatz_parameter_count(q))


def build_ansatz(params: np.ndarray, q: int) -> Circuit:
    """Hardware-efficient SU(2) ansatz: RY+RZ columns with a linear CX chain.

    Layout: an initial column of per-qubit RY then RZ rotations, followed by
    ANSATZ_LAYERS repetitions of [CX chain 0->1->...->q-1, RY column,
    RZ column].  Parameter k of column c is the angle for qubit k, with
    columns ordered (RY_0, RZ_0, RY_1, RZ_1, ...): params[2*q*c + k] is the
    RY angle of qubit k in block c and params[2*q*c + q + k] the RZ angle.
    """
    params = np.asarray(params, dtype=float)
    expected = ansatz_parameter_count(q)
    if params.shape != (expected,):
        raise ValueError(
            f"ansatz on {q} qubits needs {expected} parameters, got {params.shape}"
        )
    if not np.all(np.isfinite(params)):
        raise ValueError("ansatz parameters must be finite")
    gates: list[Gate] = []

    def rotation_block(block: int):
        base = 2 * q * block
        for k in range(q):
            gates.append(Gate("ry", (k,), float(params[base + k])))
        for k in range(q):
            gates.append(Gate("rz", (k,), float(params[base + q + k])))

    rotation_block(0)
    for layer in range(1, ANSATZ_LAYERS + 1):
        for k in range(q - 1):
            gates.append(Gate("cx", (k, k + 1)))
        rotation_block(layer)
    return Circuit(q, tuple(gates))


def controlled_word_gates(word: str, control: int, targets_offset: int) -> list[Gate]:
    """Controlled Pauli code word as one controlled gate per non-identity letter."""
    gates = []
    for k, letter in enumerate(word):
        if letter == "I":
            continue
        gates.append(Gate("c" + letter.lower(), (control, targets_offset + k)))
    return gates


def hadamard_test_circuit(ansatz: Circuit, word: str, part: str = "real") -> Circuit:
    """Ancilla-based estimation of Re or Im of <psi|P|psi> for a Pauli word.

    The ancilla is qubit 0 and the prepared system sits on qubits 1..q.
    P(ancilla=0) - P(ancilla=1) gives the requested part; the imaginary
    part uses an S-dagger phase on the ancilla before the controlled word.
    """
    if part not in ("real", "imag"):
        raise ValueError(f"part must be 'real' or 'imag', got {part!r}")
    if len(word) != ansatz.n_qubits:
        raise ValueError("word length must match the ansatz qubit count")
    n = ansatz.n_qubits + 1
    gates = list(ansatz.shifted(1, n).gates)
    gates.append(Gate("h", (0,)))
    if part == "imag":
        gates.append(Gate("sdg", (0,)))
    gates.extend(controlled_word_gates(word, control=0, targets_offset=1))
    gates.append(Gate("h", (0,)))
    return Circuit(n, tuple(gates))


def overlap_circuit(ansatz_a: Circuit, ansatz_b: Circuit) -> Circuit:
    """Low-depth overlap: run U(a) then U(b)^dagger; P(all zeros) = |<b|a>|^2."""
    if ansatz_a.n_qubits != ansatz_b.n_qubits:
        raise ValueError("overlap requires equal qubit counts")
    return Circuit(
        ansatz_a.n_qubits, ansatz_a.gates + ansatz_b.inverse().gates
    )
