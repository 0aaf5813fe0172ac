import numpy as np
import pytest

from qdrive import pauli
from qdrive.pauli import PauliSum, adjoint, decompose, multiply, word_to_dense


def random_pauli_sum(q, rng, n_terms=5, complex_coeffs=True):
    words = ["".join(rng.choice(list("IXYZ"), size=q)) for _ in range(n_terms)]
    terms = {}
    for w in words:
        c = rng.normal() + (1j * rng.normal() if complex_coeffs else 0.0)
        terms[w] = terms.get(w, 0.0) + c
    return PauliSum(q, terms)


class TestDecompose:
    def test_single_letter_basis_element(self):
        out = decompose(np.diag([1.0, -1.0]).astype(complex))
        assert out.terms == {"Z": 1.0 + 0.0j}

    def test_raising_operator(self):
        # [[0,1],[0,0]] = (X + iY)/2, checked by dense reconstruction
        out = decompose(np.array([[0, 1], [0, 0]], dtype=complex))
        assert out.terms["X"] == pytest.approx(0.5)
        assert out.terms["Y"] == pytest.approx(0.5j)
        assert np.allclose(out.to_dense(), [[0, 1], [0, 0]], atol=1e-14)

    def test_hermitian_input_gives_real_coefficients(self):
        rng = np.random.default_rng(7)
        m = rng.normal(size=(4, 4))
        m = m + m.T
        out = decompose(m.astype(complex))
        assert out.is_hermitian

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError, match="power of two"):
            decompose(np.eye(3))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError, match="square"):
            decompose(np.ones((2, 4)))

    @pytest.mark.parametrize("q", [1, 2, 3, 4])
    def test_roundtrip_random_matrices(self, q):
        rng = np.random.default_rng(100 + q)
        dim = 2**q
        for _ in range(20):
            m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            out = decompose(m)
            assert np.max(np.abs(out.to_dense() - m)) < 1e-12

    @pytest.mark.parametrize("q", [1, 2, 3])
    def test_roundtrip_from_pruned_sum(self, q):
        rng = np.random.default_rng(200 + q)
        for _ in range(10):
            s = random_pauli_sum(q, rng)
            back = decompose(s.to_dense())
            assert set(back.terms) == set(s.terms)
            for w in s.terms:
                assert back.terms[w] == pytest.approx(s.terms[w], abs=1e-12)

    def test_identity_coefficient_is_normalized_trace(self):
        rng = np.random.default_rng(3)
        m = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        out = decompose(m)
        assert out.terms["III"] == pytest.approx(np.trace(m) / 8.0, abs=1e-12)


class TestMultiply:
    def test_single_qubit_algebra(self):
        out = multiply(PauliSum(1, {"X": 1.0}), PauliSum(1, {"Y": 1.0}))
        assert out.terms == {"Z": 1j}

    def test_involution(self):
        xi = PauliSum(2, {"XI": 1.0})
        assert multiply(xi, xi).terms == {"II": 1.0 + 0.0j}

    def test_qubit_count_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            multiply(PauliSum(1, {"X": 1.0}), PauliSum(2, {"XX": 1.0}))

    def test_matches_dense_product(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            a = random_pauli_sum(2, rng)
            b = random_pauli_sum(2, rng)
            prod = multiply(a, b)
            assert np.max(np.abs(prod.to_dense() - a.to_dense() @ b.to_dense())) < 1e-12

    def test_dagger_product_is_hermitian_flagged(self):
        rng = np.random.default_rng(11)
        h = random_pauli_sum(2, rng, complex_coeffs=False)
        v = random_pauli_sum(2, rng, complex_coeffs=False)
        h_n = h + v.scaled(1j)
        assert multiply(adjoint(h_n), h_n).is_hermitian


class TestAdjoint:
    def test_conjugates_coefficients(self):
        out = adjoint(PauliSum(1, {"Z": 1 + 2j}))
        assert out.terms == {"Z": 1 - 2j}

    def test_hermitian_fixed_point(self):
        s = PauliSum(2, {"XZ": 0.5, "YY": -1.25})
        assert adjoint(s) == s

    def test_matches_dense_conjugate_transpose(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            a = random_pauli_sum(3, rng)
            assert np.max(np.abs(adjoint(a).to_dense() - a.to_dense().conj().T)) < 1e-12


class TestPauliSum:
    def test_prunes_small_coefficients(self):
        s = PauliSum(1, {"X": 1e-16, "Z": 1.0})
        assert set(s.terms) == {"Z"}

    def test_hermitian_split_reassembles(self):
        rng = np.random.default_rng(9)
        s = random_pauli_sum(2, rng)
        re, im = s.hermitian_split()
        assert re.is_hermitian and im.is_hermitian
        back = re + im.scaled(1j)
        for w in s.terms:
            assert back.terms[w] == pytest.approx(s.terms[w], abs=1e-14)

    def test_rejects_bad_word_length(self):
        with pytest.raises(ValueError, match="length"):
            PauliSum(2, {"X": 1.0})

    def test_text_serialization_roundtrip(self):
        s = PauliSum(2, {"XZ": 0.5, "YI": 0.25j, "ZZ": -1.0 + 2.0j})
        back = PauliSum.from_text(s.to_text())
        assert back == s

    def test_word_dense_consistency(self):
        xz = word_to_dense("XZ")
        assert np.allclose(xz, np.kron(pauli.PAULI_1Q["X"], pauli.PAULI_1Q["Z"]))
