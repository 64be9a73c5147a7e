"""Acceptance criteria 1-10, one test per criterion.

Each test prints a PASS/FAIL line (shown with ``-s`` and collected into the
terminal summary) and then asserts the criterion's own tolerances on the
reported metrics, so a silent change in the harness cannot hide a regression.
"""

import pytest

from cclinf import acceptance

from .conftest import ACCEPTANCE_LINES


def run_criterion(k):
    result = acceptance.CRITERIA[k - 1]()
    line = result.line()
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert result.number == k
    assert result.runtime < result.budget
    return result


def test_criterion_01_trig_map_residual():
    r = run_criterion(1)
    assert r.metrics["points"] == 200
    assert r.metrics["max_abs_residual"] < 1e-8
    assert r.passed


def test_criterion_02_splitting_orthogonality():
    r = run_criterion(2)
    assert r.metrics["max_scaled_inner_product"] <= 1e-8
    assert r.passed


def test_criterion_03_projector_algebra():
    r = run_criterion(3)
    m = r.metrics
    assert max(m["idempotent"], m["symmetric"], m["complement"]) <= 1e-10
    assert m["bot_annihilates"] <= 1e-8
    assert r.passed


def test_criterion_04_p_limit_rate():
    r = run_criterion(4)
    m = r.metrics
    assert m["p_values"] == [1e2, 1e3, 1e4]
    assert 8 <= m["raw_ratio_min"] and m["raw_ratio_max"] <= 12.5
    assert 8 <= m["rescaled_ratio_min"] and m["rescaled_ratio_max"] <= 12.5
    assert r.passed


def test_criterion_05_commutator_identity():
    r = run_criterion(5)
    assert len(r.metrics["maps"]) == 5
    assert r.metrics["max_abs_error"] <= 1e-8
    assert r.passed


def test_criterion_06_flow_invariants():
    r = run_criterion(6)
    m = r.metrics
    assert m["slope"] == pytest.approx(2, abs=1e-8)
    assert m["hnorm_drift"] <= 1e-8
    assert m["rk4_halving_ratio"] >= 12
    assert r.passed


def test_criterion_07_max_min_principle():
    r = run_criterion(7)
    m = r.metrics
    assert m["constant_norm_spread"] <= 1e-10
    assert m["solved"]["passed"] and not m["perturbed"]["passed"]
    assert r.passed


def test_criterion_08_cc_distance():
    r = run_criterion(8)
    m = r.metrics
    assert m["euclidean"]["value"] == pytest.approx(1, rel=0.02)
    assert m["heisenberg_horizontal"]["value"] == pytest.approx(1, rel=0.03)
    assert m["heisenberg_vertical"]["value"] == pytest.approx(1, rel=0.05)
    assert r.passed


def test_criterion_09_variational_witnesses():
    r = run_criterion(9)
    m = r.metrics
    assert m["min_rank_one_margin"] >= -1e-8
    assert m["square_1d_min_margin"] < -1e-4
    assert m["min_vertical_margin"] >= -1e-6
    assert m["convexity_defect"] >= -r.tolerances["convexity"]
    assert r.passed


def test_criterion_10_p_continuation():
    r = run_criterion(10)
    m = r.metrics
    res = m["residuals"]
    assert m["nodes"] == 65 and len(res) == 5
    assert all(b < a for a, b in zip(res, res[1:]))
    assert m["p2_relative_error"] <= 1e-6
    assert r.passed


def test_run_all_reports_every_criterion():
    rows = acceptance.run_all(workers=2)
    assert [r.number for r in rows] == list(range(1, 11))
    assert all(r.passed for r in rows)
