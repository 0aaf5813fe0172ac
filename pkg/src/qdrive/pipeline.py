"""Deflation-chained resonance search over one or two parity channels.

Per run and parity channel, Hermitian eigenstates are found in energy order
with the deflated objective; each converged parameter vector warm-starts a
pseudovariance minimization against the CAP-augmented operator.  Runs are
batched: duplicates are removed within a run, and across the batch each
state index keeps the record with the lowest pseudovariance.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import pauli
from .circuits import ansatz_parameter_count, build_ansatz, random_initial_params
from .estimator import Estimator
from .model import (
    ClassifierThresholds,
    Grid,
    HamiltonianPair,
    PotentialModel,
    SineBasis,
    build_basis,
    classify_state,
    exact_diagonalize,
    project_hamiltonians,
)
from .optimize import (
    OptimizerConfig,
    OptResult,
    minimize,
    pseudovariance_objective,
    vqd_objective,
)
from .simulator import NoiseModel, statevector

PARITY_CODE = {"even": 0, "odd": 1}
KIND_CODE = {"hermitian": 0, "nonhermitian": 1, "pool": 2, "sort": 3, "init": 4}


@dataclass
class ChannelProblem:
    """Pauli-space operators of one parity channel plus the grid context."""

    parity: str
    q: int
    h_h: pauli.PauliSum
    v_cap: pauli.PauliSum
    h_n: pauli.PauliSum
    h_dag_h: pauli.PauliSum
    pair: HamiltonianPair
    basis: SineBasis
    grid: Grid
    model: PotentialModel


def build_problem(
    model: PotentialModel, grid: Grid, parity: str, q: int
) -> ChannelProblem:
    basis = build_basis(parity, q, grid)
    pair = project_hamiltonians(model, basis, grid)
    h_h = pauli.decompose(pair.h_h)
    v_cap = pauli.decompose(pair.v_cap)
    h_n = h_h + v_cap.scaled(1j)
    h_dag_h = pauli.multiply(pauli.adjoint(h_n), h_n)
    return ChannelProblem(
        parity=parity,
        q=q,
        h_h=h_h,
        v_cap=v_cap,
        h_n=h_n,
        h_dag_h=h_dag_h,
        pair=pair,
        basis=basis,
        grid=grid,
        model=model,
    )


@dataclass
class RunPlan:
    """Everything one batch needs: problem sizes, tier, budgets, and seeds."""

    q: int = 3
    parities: tuple[str, ...] = ("even", "odd")
    n_states: dict = field(default_factory=lambda: {"even": 4, "odd": 2})
    batch_size: int = 8
    tier: str = "statevector"
    shots: int = 10**5
    final_shots: int = 10**6
    seed: int = 20240601
    noise: NoiseModel | None = None
    penalty: float = 100.0
    overlap_tol: float = 0.5
    thresholds: ClassifierThresholds = field(default_factory=ClassifierThresholds)
    hermitian_cfg: OptimizerConfig | None = None
    nonhermitian_cfg: OptimizerConfig | None = None
    mitigate_readout: bool | None = None
    mitigate_zne: bool | None = None

    def hermitian_config(self) -> OptimizerConfig:
        if self.hermitian_cfg is not None:
            return self.hermitian_cfg
        if self.tier == "statevector":
            return OptimizerConfig(kind="simplex", max_iterations=2**9, f_max=2**11)
        return OptimizerConfig(kind="nft", f_max=2**11, reset_interval=32)

    def nonhermitian_config(self) -> OptimizerConfig:
        if self.nonhermitian_cfg is not None:
            return self.nonhermitian_cfg
        return OptimizerConfig(
            kind="trust_region", f_max=2**10, f_tol=0.05, retries=3, r_beg=1.0
        )

    def task_seed(self, parity: str, run: int, kind: str, index: int = 0) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            [self.seed, PARITY_CODE[parity], run, KIND_CODE[kind], index]
        )

    def make_estimator(
        self, parity: str, run: int, kind: str, index: int = 0,
        shots: int | None = None, telemetry=None,
    ) -> Estimator:
        return Estimator(
            q=self.q,
            tier=self.tier,
            noise=self.noise,
            shots=self.shots if shots is None else shots,
            seed=np.random.default_rng(self.task_seed(parity, run, kind, index)),
            mitigate_readout=self.mitigate_readout,
            mitigate_zne=self.mitigate_zne,
            telemetry=telemetry,
        )


@dataclass
class ResonanceRecord:
    """One candidate state with its provenance and diagnostics."""

    parity: str
    index: int
    run_id: int
    batch_id: str
    params: list
    energy_re: float
    energy_im: float
    sigma2: float
    warm_start_value: float
    converged: bool
    evaluations: int
    classification: str | None = None
    fidelity_error: float | None = None

    @property
    def energy(self) -> complex:
        return complex(self.energy_re, self.energy_im)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ResonanceRecord":
        return cls(**doc)

    def state_coefficients(self, q: int) -> np.ndarray:
        """Basis coefficients of the record's state on the exact simulator."""
        return statevector(build_ansatz(np.asarray(self.params), q))


def run_hermitian_stage(
    index: int,
    priors: list[np.ndarray],
    problem: ChannelProblem,
    plan: RunPlan,
    run_id: int,
    telemetry=None,
) -> dict:
    """Find the index-th Hermitian eigenstate by deflated minimization."""
    est = plan.make_estimator(problem.parity, run_id, "hermitian", index, telemetry=telemetry)
    rng = np.random.default_rng(plan.task_seed(problem.parity, run_id, "init", index))
    x0 = random_initial_params(plan.q, rng)
    cfg = plan.hermitian_config()

    def objective(x):
        return vqd_objective(x, problem.h_h, priors, plan.penalty, est)

    sigma = est.statistical_sigma(problem.h_h)
    result = minimize(objective, cfg, x0, telemetry=telemetry, sigma_hint=sigma)
    energy = est.expectation(problem.h_h, result.params).real
    overlaps = [est.overlap_lowdepth(result.params, prior) for prior in priors]
    return {
        "index": index,
        "theta": [float(v) for v in result.params],
        "energy": float(energy),
        "objective": float(result.value),
        "overlaps": [float(v) for v in overlaps],
        "evaluations": result.nfev,
        "converged": bool(result.converged),
        "optimizer": result.kind,
    }


def run_nonhermitian_stage(
    index: int,
    theta: np.ndarray,
    problem: ChannelProblem,
    plan: RunPlan,
    run_id: int,
    batch_id: str = "batch0",
    telemetry=None,
) -> ResonanceRecord:
    """Pseudovariance minimization warm-started at the Hermitian eigenstate."""
    est = plan.make_estimator(problem.parity, run_id, "nonhermitian", index, telemetry=telemetry)
    cfg = plan.nonhermitian_config()

    def objective(x):
        return pseudovariance_objective(x, problem.h_n, problem.h_dag_h, est)

    theta = np.asarray(theta, dtype=float)
    warm = float(objective(theta))
    result = minimize(objective, cfg, theta, telemetry=telemetry)
    if warm < result.value:
        # the optimizer never reports a value above its warm start
        result = OptResult(
            params=theta, value=warm, nfev=result.nfev,
            converged=warm <= cfg.f_tol, kind=result.kind,
            message="warm start retained",
        )
    # final comparison estimates use an extra order of magnitude of shots
    final_est = plan.make_estimator(
        problem.parity, run_id, "nonhermitian", index + 1000, shots=plan.final_shots
    )
    h_h, v_cap = problem.h_n.hermitian_split()
    energy = final_est.energy(result.params, h_h, v_cap)
    sigma2 = pseudovariance_objective(result.params, problem.h_n, problem.h_dag_h, final_est)
    return ResonanceRecord(
        parity=problem.parity,
        index=index,
        run_id=run_id,
        batch_id=batch_id,
        params=[float(v) for v in result.params],
        energy_re=float(energy.real),
        energy_im=float(energy.imag),
        sigma2=float(sigma2),
        warm_start_value=warm,
        converged=bool(result.converged),
        evaluations=result.nfev,
    )


def deduplicate(
    records: list[ResonanceRecord], est: Estimator, overlap_tol: float = 0.5
) -> list[ResonanceRecord]:
    """Greedy keep-lowest-pseudovariance filter on pairwise overlaps."""
    survivors: list[ResonanceRecord] = []
    for record in sorted(records, key=lambda r: r.sigma2):
        duplicate = False
        for kept in survivors:
            overlap = est.overlap_lowdepth(
                np.asarray(record.params), np.asarray(kept.params)
            )
            if overlap > overlap_tol:
                duplicate = True
                break
        if not duplicate:
            survivors.append(record)
    survivors.sort(key=lambda r: r.index)
    return survivors


def pool_batches(records: list[ResonanceRecord]) -> list[ResonanceRecord]:
    """Per (parity, state index), keep the lowest-pseudovariance record.

    Ties break toward lower |Im E|, then lower run id.
    """
    groups: dict[tuple[str, int], list[ResonanceRecord]] = {}
    for record in records:
        groups.setdefault((record.parity, record.index), []).append(record)
    winners = []
    for key in sorted(groups):
        winners.append(
            min(
                groups[key],
                key=lambda r: (r.sigma2, abs(r.energy_im), r.run_id),
            )
        )
    return winners


def filter_spurious(
    records: list[ResonanceRecord],
    problem: ChannelProblem,
    thresholds: ClassifierThresholds | None = None,
) -> list[ResonanceRecord]:
    """Attach a classification to every record (records are kept, not dropped)."""
    for record in records:
        coeffs = record.state_coefficients(problem.q)
        record.classification = classify_state(
            record.energy,
            coeffs,
            problem.basis,
            problem.model,
            sigma2=record.sigma2,
            thresholds=thresholds,
        )
    return records


def compute_fidelity_error(state_coeffs: np.ndarray, oracle_vector: np.ndarray) -> float:
    """1 - |<sim|exact>|^2, phase-free."""
    a = np.asarray(state_coeffs) / np.linalg.norm(state_coeffs)
    b = np.asarray(oracle_vector) / np.linalg.norm(oracle_vector)
    return float(1.0 - abs(np.vdot(b, a)) ** 2)


def attach_fidelity(
    records: list[ResonanceRecord], problem: ChannelProblem
) -> list[ResonanceRecord]:
    """Diagnostics: fidelity error against the closest oracle eigenvector."""
    spectrum = exact_diagonalize(problem.pair)
    for record in records:
        coeffs = record.state_coefficients(problem.q)
        errors = [
            compute_fidelity_error(coeffs, spectrum.eigenvectors[:, k])
            for k in range(spectrum.eigenvectors.shape[1])
        ]
        record.fidelity_error = float(min(errors))
    return records


def match_targets(
    winners: list[ResonanceRecord],
    targets: dict[tuple[str, str], complex],
) -> dict[str, ResonanceRecord | None]:
    """Assign non-spurious winners to the oracle target states.

    ``targets`` maps (parity, kind) to the oracle energy, with kinds "bound"
    and "resonance"; the reported states are the bound state (even), the
    first resonance (odd channel), and the second resonance (even channel).
    Each target takes the winner of matching parity and classification with
    the closest real energy.
    """
    out: dict[str, ResonanceRecord | None] = {}
    label_map = {
        "bound": ("even", "bound"),
        "resonance_1": ("odd", "resonance"),
        "resonance_2": ("even", "resonance"),
    }
    for label, key in label_map.items():
        if key not in targets:
            out[label] = None
            continue
        target = targets[key]
        candidates = [
            w for w in winners
            if w.parity == key[0] and w.classification == key[1]
        ]
        if not candidates:
            out[label] = None
            continue
        out[label] = min(candidates, key=lambda w: abs(w.energy_re - target.real))
    return out


def records_to_json(records: list[ResonanceRecord]) -> str:
    return json.dumps([r.to_dict() for r in records], indent=2)


def records_from_json(text: str) -> list[ResonanceRecord]:
    return [ResonanceRecord.from_dict(doc) for doc in json.loads(text)]
