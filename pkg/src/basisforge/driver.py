"""
Inductive construction of the perturbed system.

Step k takes the target g_k, removes its components along every psi built so
far, normalises what is left into the corrective vector g^(k), and applies
A_{n_k} to (block k, g^(k)). The new psi's are orthogonal to all earlier ones
because both block k and g^(k) are.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from basisforge.blocks import (
    BlockSchedule,
    DenseFamily,
    InputSystem,
    SubspaceIndex,
    ValidationReport,
    default_working_max,
    family_from_spec,
    input_system_from_spec,
    next_dense_vector,
    schedule_from_spec,
    split_blocks,
    validate_input,
)
from basisforge.config import RunConfig
from basisforge.errors import ExhaustionError, VerificationError
from basisforge.l2core import (
    ORTHO_TOL,
    Projector,
    SparseL2Vector,
    gram_defect,
    linear_combination,
    norm,
)
from basisforge.perturbation import PERTURBATION_CONSTANT, apply_structured, make_completion_matrix

LAMBDA_MIN = 1e-8
FALLBACK_FLOOR = 1e-3
IDENTITY_TOL = 1e-10


@dataclass
class StepRecord:
    k: int
    n: int
    g_k: SparseL2Vector
    prior_coefficients: list[float]
    lam: float
    g_corr: SparseL2Vector
    psis: list[SparseL2Vector]
    h: SparseL2Vector
    fallback_used: bool


@dataclass
class CompletionResult:
    steps: list[StepRecord]
    system: InputSystem
    schedule: BlockSchedule
    index: SubspaceIndex
    config: dict[str, Any] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def psis_sequential(self) -> list[SparseL2Vector]:
        return [psi for step in self.steps for psi in step.psis]

    @property
    def leftovers(self) -> list[SparseL2Vector]:
        return [step.h for step in self.steps]


class RunAborted(RuntimeError):
    """A step failed; ``partial`` holds the steps completed before it."""

    def __init__(self, message: str, partial: CompletionResult):
        super().__init__(message)
        self.partial = partial


def _orthogonalize(v: SparseL2Vector, projector: Projector) -> tuple[np.ndarray, SparseL2Vector]:
    # Classical Gram-Schmidt twice; the second pass restores orthogonality lost to rounding.
    c1, r = projector.project(v)
    c2, r = projector.project(r)
    return c1 + c2, r


def choose_corrective(
    g_k: SparseL2Vector,
    prior: Projector | list[SparseL2Vector],
    idx: SubspaceIndex,
    k: int,
    lambda_min: float = LAMBDA_MIN,
    fallback_floor: float = FALLBACK_FLOOR,
) -> tuple[float, SparseL2Vector, list[float], bool]:
    """Decompose ``g_k = sum coeff*psi + lambda*g_corr`` over the prior psi's.

    Returns ``(lambda, g_corr, coefficients, fallback_used)``. When the
    residual is shorter than ``lambda_min`` the true residual norm is still
    reported, and ``g_corr`` is built from the first reference coordinate in
    the ``L_k``-orthogonal pool that survives Gram-Schmidt with norm at least
    ``fallback_floor``.
    """
    projector = prior if isinstance(prior, Projector) else Projector(prior)
    if not len(projector):
        return norm(g_k), g_k, [], False
    coeffs, residual = _orthogonalize(g_k, projector)
    lam = norm(residual)
    if lam >= lambda_min:
        return lam, residual / lam, coeffs.tolist(), False
    for coord in idx.complement_pool(k):
        candidate = idx.remove_tail(SparseL2Vector.basis(int(coord)), k)
        _, candidate = _orthogonalize(candidate, projector)
        length = norm(candidate)
        if length >= fallback_floor:
            return lam, candidate / length, coeffs.tolist(), True
    raise ExhaustionError(
        f"step {k}: no unit vector orthogonal to the prior psi's and L_{k} in the working range"
    )


@dataclass
class CompletionState:
    index: SubspaceIndex
    family: DenseFamily
    prior_psis: list[SparseL2Vector] = field(default_factory=list)
    steps: list[StepRecord] = field(default_factory=list)
    verify: bool = False
    workers: int = 1
    lambda_min: float = LAMBDA_MIN
    fallback_floor: float = FALLBACK_FLOOR


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise VerificationError(message)


def _verify_step(state: CompletionState, record: StepRecord, block: list[SparseL2Vector],
                 projector: Projector) -> None:
    k, n = record.k, record.n
    _check(abs(norm(record.g_corr) - 1.0) <= 1e-12, f"step {k}: corrective vector is not unit")
    defect = gram_defect([*block, record.g_corr])
    _check(defect <= ORTHO_TOL, f"step {k}: A_n inputs not orthonormal (defect {defect:.3e})")
    if len(projector):
        cross = np.abs(projector.coefficients(record.g_corr)).max()
        _check(cross <= ORTHO_TOL, f"step {k}: corrective vector meets prior psi's ({cross:.3e})")
    overlap = state.index.tail_overlap(record.g_corr, k)
    _check(overlap <= ORTHO_TOL, f"step {k}: corrective vector meets L_{k} ({overlap:.3e})")
    expected = PERTURBATION_CONSTANT / n
    for j, (psi, chi) in enumerate(zip(record.psis, block)):
        sq = norm(psi - chi) ** 2
        _check(abs(sq - expected) <= IDENTITY_TOL,
               f"step {k}: |psi_{j} - chi_{j}|^2 = {sq!r}, expected {expected!r}")
    approx = linear_combination(np.full(n, 1.0 / math.sqrt(2 * n)), record.psis)
    sq = norm(approx - record.g_corr) ** 2
    _check(abs(sq - 0.5) <= IDENTITY_TOL, f"step {k}: residual identity gives {sq!r}, expected 0.5")
    defect = gram_defect([*record.psis, record.h])
    _check(defect <= ORTHO_TOL, f"step {k}: outputs not orthonormal (defect {defect:.3e})")


def run_step(state: CompletionState, k: int) -> StepRecord:
    index = state.index
    n = len(index.block_ranges[k - 1])
    g_k = next_dense_vector(state.family, k, index)
    projector = Projector(state.prior_psis)
    lam, g_corr, coeffs, fallback = choose_corrective(
        g_k, projector, index, k, state.lambda_min, state.fallback_floor
    )
    block = index.block(k)
    psis, h = apply_structured(make_completion_matrix(n), block, g_corr, workers=state.workers)
    record = StepRecord(k, n, g_k, coeffs, lam, g_corr, psis, h, fallback)
    if state.verify:
        _verify_step(state, record, block, projector)
    state.prior_psis.extend(psis)
    state.steps.append(record)
    return record


def worker_count(requested: int = 1) -> int:
    """Requested thread count, capped by ``BASISFORGE_THREADS`` when set."""
    cap = os.environ.get("BASISFORGE_THREADS")
    workers = max(1, int(requested))
    if cap:
        workers = min(workers, max(1, int(cap)))
    return workers


@dataclass
class Prepared:
    system: InputSystem
    schedule: BlockSchedule
    index: SubspaceIndex
    validation: ValidationReport


def prepare(config: RunConfig) -> Prepared:
    """Parse and validate the problem described by ``config``."""
    system = input_system_from_spec(config.input)
    schedule = schedule_from_spec(config.schedule, config.epsilon)
    if config.steps is not None:
        schedule = schedule.truncated(config.steps)
    if system.ambient_guard is None:
        system.ambient_guard = default_working_max(system, schedule)
    validation = validate_input(system)
    return Prepared(system, schedule, split_blocks(system, schedule), validation)


def run(config: RunConfig, workers: int = 1, verify: bool | None = None) -> CompletionResult:
    """Execute every scheduled step and return the completed system."""
    prep = prepare(config)
    family = family_from_spec(config.dense_family)
    state = CompletionState(
        prep.index,
        family,
        verify=config.verify if verify is None else verify,
        workers=worker_count(workers),
        lambda_min=config.tolerances.get("lambda_min", LAMBDA_MIN),
        fallback_floor=config.tolerances.get("fallback_floor", FALLBACK_FLOOR),
    )
    metadata = {
        "working_max": prep.validation.working_max,
        "input_defect": prep.validation.max_defect,
        "l0_witnesses": int(prep.validation.witnesses.size),
        "schedule": list(prep.schedule.values),
        "dense_family": family.describe(),
    }
    result = CompletionResult(state.steps, prep.system, prep.schedule, prep.index,
                              config.to_dict(), metadata)
    for k in range(1, len(prep.schedule) + 1):
        try:
            run_step(state, k)
        except (ExhaustionError, VerificationError, ValueError) as exc:
            raise RunAborted(f"step {k} failed: {exc}", result) from exc
    return result
