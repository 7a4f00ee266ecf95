import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from basisforge.blocks import BlockSchedule
from basisforge.config import RunConfig
from basisforge.driver import run
from basisforge.errors import ConfigurationError
from basisforge.l2core import SparseL2Vector
from basisforge.verify import (
    DEFAULT_ALPHA,
    NotApplicable,
    PerturbationNorm,
    bari_partial_sums,
    build_report,
    completeness_certificate,
    decay_fit,
    epsilon_check,
    format_report,
    perturbation_csv,
    perturbation_norms,
)

from conftest import even_config, rotated_basis

e = SparseL2Vector.basis
TWO_MINUS_ROOT2 = 0.5857864376269049511983112757903019214303


def test_certificate_examples():
    assert completeness_certificate([e(0)], [e(0)], 0.01).verdict == "PASS"
    cert = completeness_certificate([e(0)], [e(1)], DEFAULT_ALPHA)
    assert cert.residuals == [1.0] and cert.verdict == "FAIL"


def test_certificate_on_small_run():
    result = run(even_config(14, {"type": "explicit", "values": [2, 4, 8]}))
    report = build_report(result)
    assert report.certificate.verdict == "PASS"
    for step, check in zip(result.steps, report.residual_checks):
        assert check.target_residual == pytest.approx(step.lam / math.sqrt(2), abs=1e-9)
        assert check.target_residual <= 1 / math.sqrt(2) + 1e-9
        assert check.final_residual <= check.target_residual + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_certificate_monotone_in_family(seed, split):
    family = rotated_basis(14, seed)
    targets = [e(i) for i in range(10)] + family[:2]
    small = completeness_certificate(family[:split], targets).residuals
    large = completeness_certificate(family, targets).residuals
    assert all(b <= a + 1e-12 for a, b in zip(small, large))


def _norms(blocks):
    out, n = [], 0
    for k, size in enumerate(blocks, 1):
        for _ in range(size):
            n += 1
            out.append(PerturbationNorm(n, math.sqrt(TWO_MINUS_ROOT2 / size), k, 1 / math.sqrt(size)))
    return out


def test_bari_examples():
    assert bari_partial_sums([]) == []
    assert bari_partial_sums(_norms([4])) == pytest.approx([TWO_MINUS_ROOT2], abs=1e-9)
    sums = bari_partial_sums(_norms([2**k for k in range(1, 11)]))
    assert sums == pytest.approx([k * TWO_MINUS_ROOT2 for k in range(1, 11)], abs=1e-9)


def test_decay_examples():
    blocks = [2**k for k in range(1, 11)]
    assert decay_fit(_norms(blocks), BlockSchedule.explicit(blocks)) <= 1.0823922002923939688 + 1e-6
    assert decay_fit(_norms([7]), BlockSchedule.explicit([7])) == pytest.approx(
        0.7653668647301795434569, abs=1e-12
    )
    with pytest.raises(NotApplicable):
        decay_fit(_norms([2, 4, 6]), BlockSchedule.explicit([2, 4, 6]))


def test_epsilon_examples():
    result = run(even_config(128, {"type": "explicit", "values": [128]}))
    max_norm, verdict = epsilon_check(result, 0.1)
    assert max_norm == pytest.approx(0.06764951251827462305, abs=1e-12) and verdict == "PASS"
    small = run(even_config(64, {"type": "explicit", "values": [64]}))
    with pytest.raises(ConfigurationError):
        epsilon_check(small, 0.1)
    two = run(even_config(2, {"type": "explicit", "values": [2]}))
    max_norm, verdict = epsilon_check(two, 1.0)
    assert max_norm == pytest.approx(0.5411961001461969844, abs=1e-12) and verdict == "PASS"


def test_full_report(geometric_run):
    report = build_report(geometric_run)
    assert report.passed, format_report(report)
    assert report.decay_sup <= report.decay_bound + 1e-6
    assert len(report.perturbation_norms) == 2046
    assert [p.n for p in report.perturbation_norms] == list(range(1, 2047))
    doc = report.to_dict()
    assert doc["verdict"] == "PASS"
    assert "lambda" in doc["residual_checks"][0]


def test_non_geometric_report_marks_decay_not_applicable():
    report = build_report(run(even_config(12, {"type": "explicit", "values": [2, 4, 6]})))
    assert report.decay_sup is None
    assert "decay" not in [c.name for c in report.checks]


def test_alpha_is_a_parameter():
    result = run(even_config(14, {"type": "explicit", "values": [2, 4, 8]}))
    assert build_report(result, alpha=0.01).certificate.verdict == "FAIL"


def test_csv_rows():
    result = run(even_config(6, {"type": "explicit", "values": [2, 4]}))
    text = perturbation_csv(perturbation_norms(result))
    lines = text.strip().split("\n")
    assert lines[0] == "n,norm,block,bound"
    assert len(lines) == 7
    n, value, block, bound = lines[1].split(",")
    assert (n, block) == ("1", "1")
    assert float(value) == pytest.approx(math.sqrt(TWO_MINUS_ROOT2 / 2), abs=1e-12)
    assert float(bound) == pytest.approx(1 / math.sqrt(2), abs=1e-16)
