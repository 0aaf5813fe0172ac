import numpy as np
import pytest

from qdrive.estimator import Estimator
from qdrive.model import (
    ClassifierThresholds,
    Grid,
    PotentialModel,
    exact_diagonalize,
)
from qdrive.optimize import OptimizerConfig
from qdrive.pipeline import (
    ResonanceRecord,
    RunPlan,
    build_problem,
    compute_fidelity_error,
    deduplicate,
    filter_spurious,
    match_targets,
    pool_batches,
    records_from_json,
    records_to_json,
    run_hermitian_stage,
    run_nonhermitian_stage,
)

BENCHMARK = PotentialModel(lam=0.1, j=0.8, x0=8.0)


@pytest.fixture(scope="module")
def grid():
    return Grid()


@pytest.fixture(scope="module")
def q2_even(grid):
    return build_problem(BENCHMARK, grid, "even", 2)


@pytest.fixture(scope="module")
def sv_plan():
    return RunPlan(q=2, parities=("even",), n_states={"even": 4}, batch_size=2,
                   tier="statevector", seed=77)


def make_record(index=1, run_id=0, sigma2=0.1, energy=(1.0, -0.01), params=None,
                parity="even", q=2):
    if params is None:
        params = list(np.zeros(8 * q))
    return ResonanceRecord(
        parity=parity,
        index=index,
        run_id=run_id,
        batch_id="batch0",
        params=list(params),
        energy_re=energy[0],
        energy_im=energy[1],
        sigma2=sigma2,
        warm_start_value=1.0,
        converged=True,
        evaluations=10,
    )


class TestHermitianStage:
    def test_ground_state_energy(self, q2_even, sv_plan):
        exact = np.sort(np.linalg.eigvalsh(q2_even.pair.h_h))[0]
        stage = run_hermitian_stage(1, [], q2_even, sv_plan, run_id=0)
        assert abs(stage["energy"] - exact) / abs(exact) < 0.005

    def test_deflation_pushes_second_state_off_first(self, q2_even, sv_plan):
        first = run_hermitian_stage(1, [], q2_even, sv_plan, run_id=0)
        theta1 = np.asarray(first["theta"])
        second = run_hermitian_stage(2, [theta1], q2_even, sv_plan, run_id=0)
        assert second["overlaps"][0] < 0.01

    def test_empty_priors_is_plain_vqe(self, q2_even, sv_plan):
        stage = run_hermitian_stage(1, [], q2_even, sv_plan, run_id=1)
        assert stage["overlaps"] == []
        assert stage["converged"]


class TestNonHermitianStage:
    def test_capless_problem_keeps_warm_start(self, grid):
        # with the absorber onset beyond the box the warm start is optimal
        capless = PotentialModel(lam=0.1, j=0.8, x0=100.0)
        problem = build_problem(capless, grid, "even", 1)
        plan = RunPlan(q=1, parities=("even",), n_states={"even": 1}, batch_size=1,
                       tier="statevector", seed=3)
        stage = run_hermitian_stage(1, [], problem, plan, run_id=0)
        record = run_nonhermitian_stage(1, np.asarray(stage["theta"]), problem, plan, 0)
        assert record.sigma2 < 1e-6
        assert abs(record.energy_im) < 1e-9
        assert record.converged

    def test_q3_bound_state_energy(self, grid):
        problem = build_problem(BENCHMARK, grid, "even", 3)
        plan = RunPlan(q=3, parities=("even",), n_states={"even": 1}, batch_size=1,
                       tier="statevector", seed=11)
        stage = run_hermitian_stage(1, [], problem, plan, run_id=0)
        record = run_nonhermitian_stage(1, np.asarray(stage["theta"]), problem, plan, 0)
        reference = 0.504 - 2.48e-5j
        assert abs(record.energy - reference) / abs(reference) < 0.01
        assert record.sigma2 <= record.warm_start_value + 1e-12

    def test_record_serialization(self):
        record = make_record()
        back = records_from_json(records_to_json([record]))[0]
        assert back == record


class TestDeduplicate:
    def test_identical_records_collapse(self, sv_plan):
        est = Estimator(q=2, tier="statevector")
        rng = np.random.default_rng(0)
        params = rng.uniform(-np.pi, np.pi, 16)
        a = make_record(index=1, sigma2=0.2, params=params)
        b = make_record(index=2, sigma2=0.1, params=params)
        survivors = deduplicate([a, b], est, overlap_tol=0.5)
        assert len(survivors) == 1
        assert survivors[0].sigma2 == 0.1

    def test_orthogonal_records_survive(self):
        est = Estimator(q=1, tier="statevector")
        zero = np.zeros(8)
        one = np.zeros(8)
        one[0] = np.pi
        a = make_record(index=1, sigma2=0.2, params=zero, q=1)
        b = make_record(index=2, sigma2=0.1, params=one, q=1)
        survivors = deduplicate([a, b], est, overlap_tol=0.5)
        assert len(survivors) == 2

    def test_three_way_overlap_keeps_minimum(self):
        # all three mutually overlapping: brute force over keep-sets says the
        # unique maximal valid set is the single lowest-sigma2 record
        est = Estimator(q=1, tier="statevector")
        rng = np.random.default_rng(1)
        base = rng.uniform(-np.pi, np.pi, 8)
        records = [
            make_record(index=i + 1, sigma2=s, params=base + rng.normal(scale=1e-3, size=8), q=1)
            for i, s in enumerate([0.3, 0.05, 0.2])
        ]
        overlaps = {
            (i, j): est.overlap_lowdepth(
                np.asarray(records[i].params), np.asarray(records[j].params)
            )
            for i in range(3)
            for j in range(i + 1, 3)
        }
        assert all(v > 0.5 for v in overlaps.values())
        valid_sets = [
            keep
            for keep in [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]
            if all(overlaps[min(i, j), max(i, j)] <= 0.5 for i in keep for j in keep if i < j)
        ]
        best_single = min(valid_sets, key=lambda k: min(records[i].sigma2 for i in k))
        survivors = deduplicate(records, est, overlap_tol=0.5)
        assert len(survivors) == 1
        assert survivors[0].sigma2 == min(r.sigma2 for r in records)
        assert records.index(survivors[0]) in best_single


class TestPoolBatches:
    def test_single_run_passthrough(self):
        records = [make_record(index=1, run_id=0), make_record(index=2, run_id=0)]
        assert pool_batches(records) == records

    def test_argmin_sigma(self):
        a = make_record(index=1, run_id=0, sigma2=0.3)
        b = make_record(index=1, run_id=1, sigma2=0.1)
        assert pool_batches([a, b]) == [b]

    def test_tie_breaks_on_width_then_run(self):
        a = make_record(index=1, run_id=0, sigma2=0.1, energy=(1.0, -0.2))
        b = make_record(index=1, run_id=1, sigma2=0.1, energy=(1.0, -0.01))
        assert pool_batches([a, b]) == [b]
        c = make_record(index=1, run_id=2, sigma2=0.1, energy=(1.0, -0.01))
        assert pool_batches([b, c]) == [b]

    def test_missing_state_not_fabricated(self):
        records = [make_record(index=2, run_id=0)]
        winners = pool_batches(records)
        assert [w.index for w in winners] == [2]


class TestFilterSpurious:
    def test_oracle_like_bound_record(self, grid):
        problem = build_problem(BENCHMARK, grid, "even", 3)
        plan = RunPlan(q=3, parities=("even",), n_states={"even": 1}, batch_size=1,
                       tier="statevector", seed=5)
        stage = run_hermitian_stage(1, [], problem, plan, run_id=0)
        record = run_nonhermitian_stage(1, np.asarray(stage["theta"]), problem, plan, 0)
        filter_spurious([record], problem)
        assert record.classification == "bound"

    def test_unconverged_record_flagged(self, q2_even):
        record = make_record(sigma2=5.0, energy=(1.5, -0.01))
        filter_spurious([record], q2_even)
        assert record.classification == "spurious:indifferent"

    def test_gain_record_flagged(self, q2_even):
        record = make_record(sigma2=0.0, energy=(1.5, +0.1))
        filter_spurious([record], q2_even)
        assert record.classification == "spurious:gain"


class TestFidelity:
    def test_identical_state(self):
        v = np.array([1.0, 0.0, 0.0, 0.0])
        assert compute_fidelity_error(v, v) == pytest.approx(0.0)

    def test_orthogonal_state(self):
        a = np.array([1.0, 0.0])
        b = np.array([0.0, 1.0])
        assert compute_fidelity_error(a, b) == pytest.approx(1.0)

    def test_phase_free(self):
        rng = np.random.default_rng(2)
        v = rng.normal(size=4) + 1j * rng.normal(size=4)
        assert compute_fidelity_error(v, np.exp(0.7j) * v) == pytest.approx(0.0, abs=1e-12)

    def test_q3_bound_state_against_oracle(self, grid):
        problem = build_problem(BENCHMARK, grid, "even", 3)
        plan = RunPlan(q=3, parities=("even",), n_states={"even": 1}, batch_size=1,
                       tier="statevector", seed=21)
        stage = run_hermitian_stage(1, [], problem, plan, run_id=0)
        record = run_nonhermitian_stage(1, np.asarray(stage["theta"]), problem, plan, 0)
        spectrum = exact_diagonalize(problem.pair)
        error = compute_fidelity_error(
            record.state_coefficients(3), spectrum.eigenvectors[:, 0]
        )
        assert error < 0.05


class TestMatchTargets:
    def test_assignment_by_parity_and_proximity(self):
        winners = [
            make_record(index=1, energy=(0.62, -0.003), parity="even"),
            make_record(index=4, energy=(2.36, -0.006), parity="even"),
            make_record(index=2, energy=(1.62, -0.04), parity="odd"),
        ]
        winners[0].classification = "bound"
        winners[1].classification = "resonance"
        winners[2].classification = "resonance"
        targets = {
            ("even", "bound"): 0.623 - 2.6e-3j,
            ("even", "resonance"): 2.357 - 5.8e-3j,
            ("odd", "resonance"): 1.614 - 4.2e-2j,
        }
        matched = match_targets(winners, targets)
        assert matched["bound"] is winners[0]
        assert matched["resonance_2"] is winners[1]
        assert matched["resonance_1"] is winners[2]

    def test_absent_target_reported_none(self):
        matched = match_targets([], {("even", "bound"): 0.5 + 0j})
        assert matched["bound"] is None
        assert matched["resonance_1"] is None


class TestParitySeparation:
    def test_even_channel_states_have_even_densities(self, q2_even, sv_plan):
        stage = run_hermitian_stage(1, [], q2_even, sv_plan, run_id=0)
        coeffs = Estimator(q=2, tier="statevector").ansatz_state(np.asarray(stage["theta"]))
        psi = coeffs @ q2_even.basis.functions
        dens = np.abs(psi)
        assert np.max(np.abs(dens - dens[::-1])) < 1e-6
