"""
Runtime verification of a finished completion.

Everything here reads a :class:`~basisforge.driver.CompletionResult` and
measures it: orthonormality, the closed-form perturbation norms, the
per-step residual identities, the completeness certificate over the targets
actually emitted, Bari partial sums and the sqrt(n) decay constant.

The certificate is a statement about the finitely many targets g_k, never a
proof that the infinite system is complete.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from basisforge.blocks import BlockSchedule, epsilon_threshold
from basisforge.driver import CompletionResult
from basisforge.errors import ConfigurationError
from basisforge.l2core import (
    ORTHO_TOL,
    Projector,
    SparseL2Vector,
    gram_defect,
    linear_combination,
    norm,
)
from basisforge.perturbation import PERTURBATION_CONSTANT

DEFAULT_ALPHA = 1.0 / math.sqrt(2.0)
CERTIFICATE_SLACK = 1e-9
IDENTITY_TOL = 1e-10
RESIDUAL_TOL = 1e-9
BARI_TOL = 1e-9


class NotApplicable(ValueError):
    """The requested diagnostic does not apply to this schedule."""


@dataclass
class CertificateSection:
    alpha: float
    residuals: list[float]
    verdict: str


@dataclass
class PerturbationNorm:
    n: int  # 1-based global index
    norm: float
    block: int
    bound: float  # 1/sqrt(n_k)


def perturbation_norms(result: CompletionResult) -> list[PerturbationNorm]:
    out = []
    for step in result.steps:
        rng = result.index.block_ranges[step.k - 1]
        bound = 1.0 / math.sqrt(step.n)
        for i, psi in zip(rng, step.psis):
            out.append(PerturbationNorm(i + 1, norm(psi - result.system.chis[i]), step.k, bound))
    return out


def completeness_certificate(
    psis: Sequence[SparseL2Vector] | Projector,
    dense_vectors: Sequence[SparseL2Vector],
    alpha: float = DEFAULT_ALPHA,
) -> CertificateSection:
    """Best-approximation residual of every target against ``span(psis)``.

    PASS iff every residual is below ``alpha`` (plus a 1e-9 slack). Any
    ``alpha < 1`` turns a PASS over a dense family into completeness; here it
    certifies only the targets supplied.
    """
    projector = psis if isinstance(psis, Projector) else Projector(psis)
    residuals = [norm(projector.project(g)[1]) for g in dense_vectors]
    ok = all(r < alpha + CERTIFICATE_SLACK for r in residuals)
    return CertificateSection(alpha, residuals, "PASS" if ok else "FAIL")


def bari_partial_sums(norms: Sequence[PerturbationNorm]) -> list[float]:
    """Cumulative sum of squared perturbation norms after each block."""
    sums: list[float] = []
    total, current = 0.0, None
    for p in norms:
        if current is not None and p.block != current:
            sums.append(total)
        current = p.block
        total += p.norm**2
    if current is not None:
        sums.append(total)
    return sums


def decay_bound(base: int) -> float:
    """Upper bound on ``sqrt(n) * ||psi_n - chi_n||`` for ratio ``base`` schedules."""
    return math.sqrt(base / (base - 1) * PERTURBATION_CONSTANT)


def decay_fit(norms: Sequence[PerturbationNorm], schedule: BlockSchedule) -> float:
    """``sup_n sqrt(n) * ||psi_n - chi_n||``; geometric schedules only."""
    if schedule.ratio() is None:
        raise NotApplicable(f"schedule {list(schedule.values)} is not geometric")
    return max((math.sqrt(p.n) * p.norm for p in norms), default=0.0)


def epsilon_check(result: CompletionResult, epsilon: float) -> tuple[float, str]:
    values = result.schedule.values
    if values and values[0] <= epsilon_threshold(epsilon):
        raise ConfigurationError(
            f"epsilon check needs n1 > 1/epsilon^2 = {float(epsilon_threshold(epsilon)):g}; "
            f"n1 = {values[0]}"
        )
    max_norm = max((p.norm for p in perturbation_norms(result)), default=0.0)
    return max_norm, "PASS" if max_norm < epsilon else "FAIL"


@dataclass
class StepCheck:
    k: int
    n: int
    lam: float
    fallback_used: bool
    residual_sq: float  # ||sum psi / sqrt(2n) - g_corr||^2
    target_residual: float  # g_k against psi's built through step k
    expected_residual: float
    final_residual: float  # g_k against the whole system
    recovery_error: float
    leftover_defect: float
    max_perturbation: float


@dataclass
class Check:
    name: str
    value: float
    limit: float
    passed: bool

    def __post_init__(self) -> None:
        self.value, self.limit, self.passed = float(self.value), float(self.limit), bool(self.passed)


@dataclass
class CompletionReport:
    orthonormality_defect: float
    perturbation_norms: list[PerturbationNorm]
    closed_form_max_error: float
    strict_bound_holds: bool
    residual_checks: list[StepCheck]
    certificate: CertificateSection
    bari_partial_sums: list[float]
    decay_sup: float | None
    decay_bound: float | None
    epsilon_check: dict[str, Any] | None
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self, include_norms: bool = True) -> dict[str, Any]:
        out = asdict(self)
        out["verdict"] = "PASS" if self.passed else "FAIL"
        for step in out["residual_checks"]:
            step["lambda"] = step.pop("lam")
        if not include_norms:
            out.pop("perturbation_norms")
        return out


def _leftover_defect(h: SparseL2Vector, projector: Projector) -> float:
    # h^(k) against its own and earlier psi's; later steps may legitimately overlap it.
    cross = np.abs(projector.coefficients(h)).max() if len(projector) else 0.0
    return max(float(cross), abs(norm(h) - 1.0))


def build_report(
    result: CompletionResult, alpha: float | None = None, epsilon: float | None = None
) -> CompletionReport:
    alpha = DEFAULT_ALPHA if alpha is None else alpha
    psis = result.psis_sequential
    norms = perturbation_norms(result)
    projector = Projector(psis)

    closed = max(
        (abs(p.norm**2 - PERTURBATION_CONSTANT / result.schedule.values[p.block - 1]) for p in norms),
        default=0.0,
    )
    strict = all(p.norm < p.bound for p in norms)

    steps: list[StepCheck] = []
    built = 0
    for step in result.steps:
        built += step.n
        head = projector.head(built)
        w = 1.0 / math.sqrt(2 * step.n)
        approx = linear_combination(np.full(step.n, w), step.psis)
        recovered = approx + step.h * (1.0 / math.sqrt(2.0))
        diff = recovered - step.g_corr
        steps.append(
            StepCheck(
                k=step.k,
                n=step.n,
                lam=step.lam,
                fallback_used=step.fallback_used,
                residual_sq=norm(approx - step.g_corr) ** 2,
                target_residual=norm(head.project(step.g_k)[1]),
                # A fallback direction is unrelated to g_k, which prior psi's already capture.
                expected_residual=step.lam if step.fallback_used else step.lam / math.sqrt(2.0),
                final_residual=norm(projector.project(step.g_k)[1]),
                recovery_error=float(np.abs(diff.values).max()) if len(diff) else 0.0,
                leftover_defect=_leftover_defect(step.h, head),
                max_perturbation=max(p.norm for p in norms if p.block == step.k),
            )
        )

    cert = completeness_certificate(projector, [s.g_k for s in result.steps], alpha)
    bari = bari_partial_sums(norms)
    try:
        sup = decay_fit(norms, result.schedule)
        bound = decay_bound(result.schedule.ratio())
    except NotApplicable:
        sup = bound = None
    eps_section = None
    if epsilon is not None:
        max_norm, verdict = epsilon_check(result, epsilon)
        eps_section = {"epsilon": epsilon, "max_norm": max_norm, "verdict": verdict}

    report = CompletionReport(
        orthonormality_defect=gram_defect(psis),
        perturbation_norms=norms,
        closed_form_max_error=closed,
        strict_bound_holds=strict,
        residual_checks=steps,
        certificate=cert,
        bari_partial_sums=bari,
        decay_sup=sup,
        decay_bound=bound,
        epsilon_check=eps_section,
    )
    report.checks = _checks(report)
    return report


def _checks(r: CompletionReport) -> list[Check]:
    def worst(values: list[float]) -> float:
        return max(values, default=0.0)

    steps = r.residual_checks
    increments = np.diff([0.0, *r.bari_partial_sums])
    checks = [
        Check("orthonormality", r.orthonormality_defect, ORTHO_TOL, r.orthonormality_defect <= ORTHO_TOL),
        Check("leftover_orthonormality", worst([s.leftover_defect for s in steps]), ORTHO_TOL,
              all(s.leftover_defect <= ORTHO_TOL for s in steps)),
        Check("closed_form", r.closed_form_max_error, IDENTITY_TOL, r.closed_form_max_error <= IDENTITY_TOL),
        Check("strict_bound", float(not r.strict_bound_holds), 0.0, r.strict_bound_holds),
        Check("residual_identity", worst([abs(s.residual_sq - 0.5) for s in steps]), IDENTITY_TOL,
              all(abs(s.residual_sq - 0.5) <= IDENTITY_TOL for s in steps)),
        Check("recovery_identity", worst([s.recovery_error for s in steps]), IDENTITY_TOL,
              all(s.recovery_error <= IDENTITY_TOL for s in steps)),
        Check("target_residual", worst([abs(s.target_residual - s.expected_residual) for s in steps]),
              RESIDUAL_TOL, all(abs(s.target_residual - s.expected_residual) <= RESIDUAL_TOL for s in steps)),
        Check("certificate", worst(r.certificate.residuals), r.certificate.alpha + CERTIFICATE_SLACK,
              r.certificate.verdict == "PASS"),
        Check("bari_increments", worst([abs(d - PERTURBATION_CONSTANT) for d in increments]), BARI_TOL,
              all(abs(d - PERTURBATION_CONSTANT) <= BARI_TOL for d in increments)),
    ]
    if r.decay_sup is not None:
        checks.append(Check("decay", r.decay_sup, r.decay_bound + 1e-6, r.decay_sup <= r.decay_bound + 1e-6))
    if r.epsilon_check is not None:
        e = r.epsilon_check
        checks.append(Check("epsilon", e["max_norm"], e["epsilon"], e["verdict"] == "PASS"))
    return checks


def format_report(r: CompletionReport) -> str:
    """Aligned-column text rendering for terminals."""
    lines = [
        f"{'k':>3} {'n_k':>6} {'lambda':>12} {'fb':>3} {'max|psi-chi|':>14} {'1/sqrt(n_k)':>12} "
        f"{'resid^2':>12} {'g residual':>12}",
    ]
    for s in r.residual_checks:
        lines.append(
            f"{s.k:>3} {s.n:>6} {s.lam:>12.9f} {'y' if s.fallback_used else '-':>3} "
            f"{s.max_perturbation:>14.9f} {1 / math.sqrt(s.n):>12.9f} {s.residual_sq:>12.9f} "
            f"{s.target_residual:>12.9f}"
        )
    lines.append("")
    if r.bari_partial_sums:
        lines.append("bari partial sums: " + " ".join(f"{x:.6f}" for x in r.bari_partial_sums))
    if r.decay_sup is not None:
        lines.append(f"decay sup sqrt(n)|psi_n-chi_n| = {r.decay_sup:.9f} (bound {r.decay_bound:.9f})")
    lines.append(f"certificate over {len(r.certificate.residuals)} emitted targets "
                 f"(alpha={r.certificate.alpha:.9f}): {r.certificate.verdict}")
    lines.append("")
    width = max((len(c.name) for c in r.checks), default=0)
    for c in r.checks:
        lines.append(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<{width}}  {c.value:.3e}  (limit {c.limit:.3e})")
    lines.append(f"verdict: {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)


def perturbation_csv(norms: Sequence[PerturbationNorm]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "norm", "block", "bound"])
    for p in norms:
        writer.writerow([p.n, repr(p.norm), p.block, repr(p.bound)])
    return buf.getvalue()
