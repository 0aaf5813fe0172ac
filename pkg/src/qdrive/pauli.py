"""Sparse weighted sums of tensor-product Pauli operators.

Every operator handed to the quantum estimators is represented as a
``PauliSum``: a map from Pauli code words (strings over ``IXYZ``, one letter
per qubit) to complex coefficients.  Dense matrices are decomposed with the
normalized trace inner product so that reconstruction is exact:

    coeff(P) = Tr(M P) / 2**q,    M = sum_P coeff(P) * P
"""
from __future__ import annotations

from itertools import product

import numpy as np

LETTERS = "IXYZ"

PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "Y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}

PRUNE_TOL = 1e-14
HERMITIAN_TOL = 1e-12

# xy = iz and cyclic; reversed order flips the sign.
_MUL = {
    ("X", "Y"): (1j, "Z"),
    ("Y", "Z"): (1j, "X"),
    ("Z", "X"): (1j, "Y"),
    ("Y", "X"): (-1j, "Z"),
    ("Z", "Y"): (-1j, "X"),
    ("X", "Z"): (-1j, "Y"),
}

_word_dense_cache: dict[str, np.ndarray] = {}


def _mul_letters(a: str, b: str) -> tuple[complex, str]:
    if a == "I":
        return 1, b
    if b == "I":
        return 1, a
    if a == b:
        return 1, "I"
    return _MUL[(a, b)]


def word_to_dense(word: str) -> np.ndarray:
    """Dense matrix of a Pauli code word (cached for small qubit counts)."""
    cached = _word_dense_cache.get(word)
    if cached is not None:
        return cached
    mat = PAULI_1Q[word[0]]
    for letter in word[1:]:
        mat = np.kron(mat, PAULI_1Q[letter])
    if len(word) <= 4:
        _word_dense_cache[word] = mat
    return mat


class PauliSum:
    """Weighted sum of Pauli code words on a fixed number of qubits."""

    __slots__ = ("n_qubits", "terms", "_dense", "_split")

    def __init__(self, n_qubits: int, terms: dict[str, complex] | None = None):
        self.n_qubits = int(n_qubits)
        self.terms: dict[str, complex] = {}
        self._dense = None
        self._split = None
        if terms:
            for word, coeff in terms.items():
                if len(word) != self.n_qubits:
                    raise ValueError(
                        f"word {word!r} has length {len(word)}, expected {self.n_qubits}"
                    )
                if any(letter not in LETTERS for letter in word):
                    raise ValueError(f"invalid letters in word {word!r}")
                if abs(coeff) >= PRUNE_TOL:
                    self.terms[word] = complex(coeff)

    @property
    def identity_word(self) -> str:
        return "I" * self.n_qubits

    @property
    def is_hermitian(self) -> bool:
        return all(abs(c.imag) < HERMITIAN_TOL for c in self.terms.values())

    def __len__(self) -> int:
        return len(self.terms)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PauliSum)
            and self.n_qubits == other.n_qubits
            and self.terms == other.terms
        )

    def __repr__(self) -> str:
        return f"PauliSum(q={self.n_qubits}, terms={len(self.terms)})"

    def __add__(self, other: "PauliSum") -> "PauliSum":
        if self.n_qubits != other.n_qubits:
            raise ValueError("qubit count mismatch")
        out = dict(self.terms)
        for word, coeff in other.terms.items():
            out[word] = out.get(word, 0.0) + coeff
        return PauliSum(self.n_qubits, out)

    def scaled(self, factor: complex) -> "PauliSum":
        return PauliSum(self.n_qubits, {w: factor * c for w, c in self.terms.items()})

    def hermitian_split(self) -> tuple["PauliSum", "PauliSum"]:
        """Split into (A, B) with real coefficients such that self = A + i*B.

        For a sum built from H + i*V with Hermitian H and V this recovers the
        two Hermitian parts term-wise.
        """
        if self._split is None:
            re = {w: complex(c.real) for w, c in self.terms.items()}
            im = {w: complex(c.imag) for w, c in self.terms.items()}
            self._split = (PauliSum(self.n_qubits, re), PauliSum(self.n_qubits, im))
        return self._split

    def to_dense(self) -> np.ndarray:
        if self._dense is None:
            dim = 2**self.n_qubits
            mat = np.zeros((dim, dim), dtype=complex)
            for word, coeff in self.terms.items():
                mat += coeff * word_to_dense(word)
            self._dense = mat
        return self._dense

    def to_text(self) -> str:
        """Serialize as one ``coeff_re coeff_im WORD`` line per term."""
        lines = [
            f"{c.real:.17g} {c.imag:.17g} {w}"
            for w, c in sorted(self.terms.items())
        ]
        return "\n".join(lines)

    @classmethod
    def from_text(cls, text: str, n_qubits: int | None = None) -> "PauliSum":
        terms: dict[str, complex] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            re_s, im_s, word = line.split()
            terms[word] = terms.get(word, 0.0) + complex(float(re_s), float(im_s))
        if n_qubits is None:
            if not terms:
                raise ValueError("cannot infer qubit count from empty text")
            n_qubits = len(next(iter(terms)))
        return cls(n_qubits, terms)


def decompose(matrix: np.ndarray) -> PauliSum:
    """Decompose a dense 2**q x 2**q matrix into a PauliSum.

    Coefficients carry the 1/2**q trace normalization required for the
    reconstruction sum_P coeff(P)*P to reproduce the input exactly.
    """
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
    dim = matrix.shape[0]
    q = dim.bit_length() - 1
    if 2**q != dim:
        raise ValueError(f"matrix dimension {dim} is not a power of two")
    terms: dict[str, complex] = {}
    mt = matrix.T.copy()
    for letters in product(LETTERS, repeat=q):
        word = "".join(letters)
        # Tr(M P) = sum_ij M_ij P_ji
        coeff = np.sum(mt * word_to_dense(word)) / dim
        if abs(coeff) >= PRUNE_TOL:
            terms[word] = complex(coeff)
    return PauliSum(q, terms)


def multiply(a: PauliSum, b: PauliSum) -> PauliSum:
    """Exact Pauli-algebra product with phase bookkeeping."""
    if a.n_qubits != b.n_qubits:
        raise ValueError(
            f"qubit count mismatch: {a.n_qubits} vs {b.n_qubits}"
        )
    out: dict[str, complex] = {}
    for wa, ca in a.terms.items():
        for wb, cb in b.terms.items():
            phase: complex = 1
            letters = []
            for la, lb in zip(wa, wb):
                ph, letter = _mul_letters(la, lb)
                phase *= ph
                letters.append(letter)
            word = "".join(letters)
            out[word] = out.get(word, 0.0) + ca * cb * phase
    return PauliSum(a.n_qubits, out)


def adjoint(a: PauliSum) -> PauliSum:
    """Hermitian adjoint: Pauli words are self-adjoint, so conjugate coefficients."""
    return PauliSum(a.n_qubits, {w: c.conjugate() for w, c in a.terms.items()})
