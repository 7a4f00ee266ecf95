"""Exit criteria, one test per criterion, each at its stated tolerance.

Each test prints (and records for the terminal summary) one PASS/FAIL line.
"""

import json
import math
import time

import pytest

from basisforge.cli import bench, main
from basisforge.config import RunConfig
from basisforge.driver import run
from basisforge.l2core import SparseL2Vector, gram_defect, linear_combination, norm
from basisforge.perturbation import (
    apply_naive,
    apply_structured,
    make_completion_matrix,
    orthogonality_defect,
)
from basisforge.verify import build_report, completeness_certificate

from conftest import ACCEPTANCE_LINES, even_config, max_coefficient_gap, rotated_basis

TWO_MINUS_ROOT2 = 0.5857864376269049511983112757903019214303
ROOT_HALF = 0.7071067811865475244008443621048490392848

GEOMETRIC_K10 = {
    "input": {"type": "reference_subset", "start": 2, "step": 2, "count": 2046},
    "schedule": {"type": "geometric", "n1": 2, "base": 2, "steps": 10},
}


def record(criterion: str, passed: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


@pytest.fixture(scope="module")
def k10():
    t0 = time.perf_counter()
    result = run(RunConfig.from_dict(GEOMETRIC_K10))
    elapsed = time.perf_counter() - t0
    return result, build_report(result), elapsed


def test_criterion_01_matrix_orthogonality():
    t0 = time.perf_counter()
    defects = {n: orthogonality_defect(make_completion_matrix(n)) for n in (1, 2, 3, 7, 8, 64, 1024, 4096)}
    elapsed = time.perf_counter() - t0
    worst = max(defects.values())
    record("1", worst <= 1e-12 and elapsed < 5.0,
           f"max defect {worst:.2e} <= 1e-12 over n={sorted(defects)}; {elapsed:.2f}s < 5s")


def test_criterion_02_structured_naive_equivalence():
    t0 = time.perf_counter()
    worst = 0.0
    for n in (1, 2, 3, 8, 64):
        for seed in range(4):
            inputs = rotated_basis(n + 1, seed)
            m = make_completion_matrix(n)
            fast = apply_structured(m, inputs[:n], inputs[n])
            slow = apply_naive(m, inputs[:n], inputs[n])
            for a, b in zip([*fast[0], fast[1]], [*slow[0], slow[1]]):
                worst = max(worst, max_coefficient_gap(a, b))
    elapsed = time.perf_counter() - t0
    record("2", worst <= 1e-12 and elapsed < 2.0, f"max coefficient gap {worst:.2e} <= 1e-12; {elapsed:.2f}s < 2s")


def test_criterion_03_closed_form_perturbation(k10):
    result, report, elapsed = k10
    worst, strict = 0.0, True
    for p in report.perturbation_norms:
        n_k = result.schedule.values[p.block - 1]
        worst = max(worst, abs(p.norm**2 - TWO_MINUS_ROOT2 / n_k))
        strict &= p.norm < 1 / math.sqrt(n_k)
    ok = worst <= 1e-10 and strict and elapsed < 10.0 and len(report.perturbation_norms) == 2046
    record("3", ok, f"max |norm^2 - (2-sqrt2)/n_k| {worst:.2e} <= 1e-10; strict bound {strict}; run {elapsed:.2f}s < 10s")


def test_criterion_04_residual_identity(k10):
    result, _, _ = k10
    worst = 0.0
    for step in result.steps:
        w = 1 / math.sqrt(2 * step.n)
        sq = norm(linear_combination([w] * step.n, step.psis) - step.g_corr) ** 2
        worst = max(worst, abs(sq - 0.5))
    record("4", worst <= 1e-10, f"max |resid^2 - 0.5| {worst:.2e} <= 1e-10 over {len(result.steps)} steps")


def test_criterion_05_lemma_certificate(k10):
    result, report, _ = k10
    gap = max(abs(c.target_residual - c.lam / math.sqrt(2)) for c in report.residual_checks)
    top = max(c.target_residual for c in report.residual_checks)
    contra = completeness_certificate([SparseL2Vector.basis(0)], [SparseL2Vector.basis(1)])
    ok = gap <= 1e-9 and top <= ROOT_HALF + 1e-9 and report.certificate.verdict == "PASS" \
        and contra.verdict == "FAIL"
    record("5", ok, f"max |residual - lambda/sqrt2| {gap:.2e} <= 1e-9; max residual {top:.10f}; "
                    f"certificate {report.certificate.verdict}; contrapositive {contra.verdict}")


def test_criterion_06_bari_divergence(k10):
    _, report, _ = k10
    sums = report.bari_partial_sums
    increments = [b - a for a, b in zip([0.0, *sums], sums)]
    worst = max(abs(d - TWO_MINUS_ROOT2) for d in increments)
    linear = all(abs(s - (k + 1) * TWO_MINUS_ROOT2) <= (k + 1) * 1e-9 for k, s in enumerate(sums))
    record("6", len(sums) == 10 and worst <= 1e-9 and linear,
           f"{len(sums)} block increments within {worst:.2e} of 2-sqrt2; final sum {sums[-1]:.10f}")


def test_criterion_07_decay(k10):
    _, report, _ = k10
    record("7", report.decay_sup <= 1.0823922 + 1e-6, f"sup sqrt(n)|psi_n - chi_n| = {report.decay_sup:.10f} <= 1.0823922")


def test_criterion_08_epsilon_guarantee():
    cfg = even_config(128 + 256, {"type": "geometric", "n1": 128, "base": 2, "steps": 2}, epsilon=0.1)
    report = build_report(run(cfg), epsilon=0.1)
    eps = report.epsilon_check
    expected = math.sqrt(TWO_MINUS_ROOT2 / 128)
    ok = eps["verdict"] == "PASS" and eps["max_norm"] < 0.1 and abs(eps["max_norm"] - expected) <= 1e-10
    record("8", ok, f"max norm {eps['max_norm']:.6f} < 0.1 (closed form {expected:.6f}); {eps['verdict']}")


def test_criterion_09_degenerate_fallback():
    chis = {"type": "reference_subset", "start": 2, "step": 2, "count": 6}
    step1 = apply_structured(make_completion_matrix(2), [SparseL2Vector.basis(2), SparseL2Vector.basis(4)],
                             SparseL2Vector.basis(1))[0]
    targets = [{"coords": {"1": 1.0}}, {"coords": {str(i): v for i, v in step1[0]}}]
    cfg = RunConfig.from_dict({
        "input": chis,
        "schedule": {"type": "explicit", "values": [2, 4]},
        "dense_family": {"type": "explicit", "vectors": targets},
        "verify": True,
    })
    result = run(cfg)
    report = build_report(result)
    step, check = result.steps[1], report.residual_checks[1]
    closed = max(abs(norm(p - result.system.chis[i]) ** 2 - TWO_MINUS_ROOT2 / 4)
                 for p, i in zip(step.psis, result.index.block_ranges[1]))
    ok = (step.fallback_used and closed <= 1e-10 and abs(check.residual_sq - 0.5) <= 1e-10
          and abs(check.target_residual - step.lam / math.sqrt(2)) <= 1e-9
          and report.certificate.verdict == "PASS" and report.passed)
    record("9", ok, f"fallback_used={step.fallback_used}, lambda={step.lam:.1e}, closed-form err {closed:.1e}, "
                    f"resid^2 {check.residual_sq:.12f}, certificate {report.certificate.verdict}")


def test_criterion_10_global_orthonormality(k10):
    """As stated: every psi and every leftover h pairwise orthonormal."""
    result, _, _ = k10
    t0 = time.perf_counter()
    vectors = [*result.psis_sequential, *result.leftovers]
    defect = gram_defect(vectors)
    elapsed = time.perf_counter() - t0
    record("10", defect <= 1e-10 and elapsed < 60.0,
           f"Gram defect over {len(vectors)} psi's and h's = {defect:.2e} (limit 1e-10); {elapsed:.2f}s")


def test_criterion_10b_psi_orthonormality(k10):
    """What the construction guarantees: the psi's are orthonormal, and each h^(k)
    is orthonormal to the psi's of steps <= k."""
    result, report, elapsed = k10
    t0 = time.perf_counter()
    defect = gram_defect(result.psis_sequential)
    leftover = max(c.leftover_defect for c in report.residual_checks)
    elapsed += time.perf_counter() - t0
    record("10b", defect <= 1e-10 and leftover <= 1e-10 and elapsed < 60.0,
           f"Gram defect over {len(result.psis_sequential)} psi's {defect:.2e}; "
           f"h^(k) vs psi's through step k {leftover:.2e}; {elapsed:.2f}s")


def test_criterion_11_performance_contract():
    row = bench([4096], repeat=1)[0]  # equivalence at 1e-12 is asserted inside
    record("11", row["ratio"] >= 10.0,
           f"n=4096 structured {row['t_structured']:.4f}s vs naive {row['t_naive']:.4f}s: {row['ratio']:.1f}x >= 10x")


def test_criterion_12_determinism(tmp_path):
    cfg = tmp_path / "k10.json"
    cfg.write_text(json.dumps(GEOMETRIC_K10))
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    codes = [main(["run", "--config", str(cfg), "--out", str(p)]) for p in (a, b)]
    same = a.read_bytes() == b.read_bytes()
    record("12", codes == [0, 0] and same, f"exit codes {codes}; reports byte-identical: {same} "
                                           f"({a.stat().st_size} bytes)")
