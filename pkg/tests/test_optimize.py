import numpy as np
import pytest

from qdrive import pauli
from qdrive.estimator import Estimator
from qdrive.model import Grid, PotentialModel, build_basis, project_hamiltonians
from qdrive.optimize import (
    OptimizerConfig,
    minimize,
    nft_minimize,
    pseudovariance_objective,
    vqd_objective,
    wrap_angles,
)
from qdrive.pauli import PauliSum, decompose

BENCHMARK = PotentialModel(lam=0.1, j=0.8, x0=8.0)


@pytest.fixture(scope="module")
def q2_even_problem():
    grid = Grid()
    basis = build_basis("even", 2, grid)
    pair = project_hamiltonians(BENCHMARK, basis, grid)
    h_h = decompose(pair.h_h)
    v_cap = decompose(pair.v_cap)
    h_n = h_h + v_cap.scaled(1j)
    h_dag_h = pauli.multiply(pauli.adjoint(h_n), h_n)
    return pair, h_h, v_cap, h_n, h_dag_h


class TestNft:
    def test_single_sinusoid_exact_in_four_evaluations(self):
        calls = []

        def fun(x):
            calls.append(x.copy())
            return 2.0 + 1.5 * np.cos(x[0])

        cfg = OptimizerConfig(kind="nft", max_iterations=1, f_max=16)
        result = nft_minimize(fun, np.array([0.3]), cfg)
        assert len(calls) <= 4
        assert abs(wrap_angles(result.params)[0]) == pytest.approx(np.pi, abs=1e-8)
        assert result.value == pytest.approx(0.5, abs=1e-8)

    def test_multiparameter_trig_objective(self):
        def fun(x):
            return np.cos(x[0]) + 0.5 * np.cos(x[1] - 1.0) + 2.0

        cfg = OptimizerConfig(kind="nft", max_iterations=4, f_max=200)
        result = nft_minimize(fun, np.array([0.1, 0.2]), cfg)
        assert result.value == pytest.approx(0.5, abs=1e-6)

    def test_budget_exhaustion_returns_flagged_best(self):
        def fun(x):
            return float(np.sum(np.cos(x)))

        cfg = OptimizerConfig(kind="nft", max_iterations=100, f_max=7)
        result = nft_minimize(fun, np.zeros(5), cfg)
        assert result.exhausted
        assert result.nfev <= 7

    def test_downgrade_on_non_sinusoidal_objective(self):
        def fun(x):
            return float((x[0] - 1.0) ** 2 + 0.3 * x[0] ** 4)

        cfg = OptimizerConfig(kind="nft", max_iterations=8, f_max=300)
        result = nft_minimize(fun, np.array([0.2]), cfg)
        assert result.kind == "nft->trust_region"
        assert "downgraded" in result.message

    def test_monotone_best_bookkeeping(self):
        values = []

        def fun(x):
            v = np.cos(x[0]) + np.cos(2 * x[1] + 0.3)
            values.append(v)
            return float(v)

        telemetry = []
        cfg = OptimizerConfig(kind="nft", max_iterations=6, f_max=120, reset_interval=3)
        result = nft_minimize(fun, np.array([0.5, -0.4]), cfg, telemetry=telemetry)
        assert result.value <= min(values) + 1e-12


class TestTrustRegion:
    def test_quadratic_argmin(self):
        def fun(x):
            return float((x[0] - 1.0) ** 2)

        cfg = OptimizerConfig(kind="trust_region", f_max=200, f_tol=1e-10)
        result = minimize(fun, cfg, np.array([0.0]))
        assert result.params[0] == pytest.approx(1.0, abs=1e-4)

    def test_retry_loop_reaches_tolerance(self):
        calls = {"n": 0}

        def fun(x):
            calls["n"] += 1
            return float(np.sum((x - 0.7) ** 2))

        cfg = OptimizerConfig(kind="trust_region", f_max=500, f_tol=1e-6, retries=3)
        result = minimize(fun, cfg, np.array([2.0, -2.0]))
        assert result.converged
        assert result.nfev == calls["n"] <= 500

    def test_budget_cap_respected(self):
        def fun(x):
            return float(np.sum(x**2))

        cfg = OptimizerConfig(kind="trust_region", f_max=30, f_tol=0.0, retries=5)
        result = minimize(fun, cfg, np.full(4, 2.0))
        assert result.nfev <= 30


class TestSimplex:
    def test_quadratic(self):
        def fun(x):
            return float((x[0] + 0.5) ** 2 + (x[1] - 0.25) ** 2)

        cfg = OptimizerConfig(kind="simplex", max_iterations=400, f_max=500)
        result = minimize(fun, cfg, np.array([1.0, 1.0]))
        assert result.value < 1e-6


class TestVqdObjective:
    def test_no_priors_is_plain_energy(self, q2_even_problem):
        _, h_h, _, _, _ = q2_even_problem
        est = Estimator(q=2, tier="statevector")
        params = np.random.default_rng(0).uniform(-np.pi, np.pi, 16)
        expected = est.expectation(h_h, params).real
        assert vqd_objective(params, h_h, [], 100.0, est) == pytest.approx(expected)

    def test_self_prior_penalty(self, q2_even_problem):
        _, h_h, _, _, _ = q2_even_problem
        est = Estimator(q=2, tier="statevector")
        params = np.random.default_rng(1).uniform(-np.pi, np.pi, 16)
        energy = est.expectation(h_h, params).real
        value = vqd_objective(params, h_h, [params], 100.0, est)
        assert value >= energy + 100.0 * (1.0 - 1e-9)

    def test_matches_dense_evaluation(self, q2_even_problem):
        pair, h_h, _, _, _ = q2_even_problem
        est = Estimator(q=2, tier="statevector")
        rng = np.random.default_rng(2)
        params = rng.uniform(-np.pi, np.pi, 16)
        prior = rng.uniform(-np.pi, np.pi, 16)
        psi = est.ansatz_state(params)
        chi = est.ansatz_state(prior)
        expected = np.vdot(psi, pair.h_h @ psi).real + 100.0 * abs(np.vdot(chi, psi)) ** 2
        got = vqd_objective(params, h_h, [prior], 100.0, est)
        assert got == pytest.approx(expected, abs=1e-9)

    def test_penalty_invariant_under_global_phase(self, q2_even_problem):
        # a 2*pi shift of one RZ angle flips the state's global sign only
        _, h_h, _, _, _ = q2_even_problem
        est = Estimator(q=2, tier="statevector")
        rng = np.random.default_rng(3)
        params = rng.uniform(-np.pi, np.pi, 16)
        prior = rng.uniform(-np.pi, np.pi, 16)
        shifted = prior.copy()
        shifted[4] += 2.0 * np.pi
        a = vqd_objective(params, h_h, [prior], 100.0, est)
        b = vqd_objective(params, h_h, [shifted], 100.0, est)
        assert a == pytest.approx(b, abs=1e-10)

    def test_q2_benchmark_ground_energy(self, q2_even_problem):
        pair, h_h, _, _, _ = q2_even_problem
        exact_ground = np.sort(np.linalg.eigvalsh(pair.h_h))[0]
        best = np.inf
        cfg = OptimizerConfig(kind="simplex", max_iterations=512, f_max=2048)
        for restart in range(8):
            est = Estimator(q=2, tier="statevector")
            rng = np.random.default_rng(1000 + restart)
            x0 = rng.uniform(-np.pi, np.pi, 16)
            result = minimize(lambda x: vqd_objective(x, h_h, [], 100.0, est), cfg, x0)
            best = min(best, result.value)
        assert abs(best - exact_ground) / abs(exact_ground) < 0.005


class TestPseudovariance:
    def test_exact_eigenstate_of_diagonal_toy(self):
        # diag(0.3, 1.7): zero angles prepare |0>, an exact eigenstate
        h_n = PauliSum(1, {"I": 1.0, "Z": -0.7})
        h_dag_h = pauli.multiply(pauli.adjoint(h_n), h_n)
        est = Estimator(q=1, tier="statevector")
        value = pseudovariance_objective(np.zeros(8), h_n, h_dag_h, est)
        assert abs(value) < 1e-9

    def test_complex_diagonal_toy(self):
        # H = diag(1, i), state (|0> + |1>)/sqrt(2): <H^dag H> = 1, |<H>|^2 = 1/2
        h_n = decompose(np.diag([1.0, 1.0j]))
        h_dag_h = pauli.multiply(pauli.adjoint(h_n), h_n)
        est = Estimator(q=1, tier="statevector")
        params = np.zeros(8)
        params[0] = np.pi / 2.0  # RY(pi/2)|0> = (|0> + |1>)/sqrt(2)
        value = pseudovariance_objective(params, h_n, h_dag_h, est)
        assert value == pytest.approx(0.5, abs=1e-10)

    def test_hermitian_two_level_variance(self):
        # spectrum {0, 2}, equal superposition: variance 1
        h_n = decompose(np.diag([0.0, 2.0]).astype(complex))
        h_dag_h = pauli.multiply(pauli.adjoint(h_n), h_n)
        est = Estimator(q=1, tier="statevector")
        params = np.zeros(8)
        params[0] = np.pi / 2.0
        value = pseudovariance_objective(params, h_n, h_dag_h, est)
        assert value == pytest.approx(1.0, abs=1e-10)

    def test_matches_dense_oracle_on_benchmark(self, q2_even_problem):
        pair, _, _, h_n, h_dag_h = q2_even_problem
        est = Estimator(q=2, tier="statevector")
        rng = np.random.default_rng(4)
        params = rng.uniform(-np.pi, np.pi, 16)
        psi = est.ansatz_state(params)
        dense = pair.h_n
        expected = np.vdot(psi, dense.conj().T @ dense @ psi).real - abs(
            np.vdot(psi, dense @ psi)
        ) ** 2
        got = pseudovariance_objective(params, h_n, h_dag_h, est)
        assert got == pytest.approx(expected, abs=1e-9)

    def test_nonnegative_on_statevector(self, q2_even_problem):
        _, _, _, h_n, h_dag_h = q2_even_problem
        est = Estimator(q=2, tier="statevector")
        rng = np.random.default_rng(5)
        for _ in range(25):
            params = rng.uniform(-np.pi, np.pi, 16)
            assert pseudovariance_objective(params, h_n, h_dag_h, est) > -1e-10
