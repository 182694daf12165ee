"""Acceptance battery: one test and one printed pass/fail line per criterion.

Each criterion runs the same checks as the ``vibias suite`` subcommand, at
the stated tolerances, and prints a single summary line.
"""
import pytest

from vibias import suite


def _run(criterion_fn):
    r = criterion_fn()
    status = "PASS" if r.passed else "FAIL"
    print(f"[{status}] C{r.cid} {r.description}: {r.detail}")
    assert r.passed, f"C{r.cid} failed: {r.detail}"


def test_criterion_01_gaussian_closed_form_fit():
    # V = diag(1 - rho^2) and KL = -0.5 ln(1 - rho^2), both within 1e-10
    _run(suite.criterion_1)


def test_criterion_02_residual_orthogonality():
    # |<f, delta>| <= 1e-8 closed form, <= 1e-6 CAVI grid, scores + 10 probes
    _run(suite.criterion_2)


def test_criterion_03_change_of_measure_identity():
    # exact = linear + remainder within 1e-8 for 20 random grid functionals
    _run(suite.criterion_3)


def test_criterion_04_cross_covariance_decomposition():
    # bias 0.2 = 0.192 + 0.008 within 1e-9; bound ratio finite, linear in rho
    _run(suite.criterion_4)


def test_criterion_05_bias_scaling_slopes():
    # slope 2.00 +- 0.05 block-additive, 1.00 +- 0.05 interaction
    _run(suite.criterion_5)


def test_criterion_06_anova_properties():
    # reconstruction, centering, annihilation, Pythagoras within 1e-9 x100
    _run(suite.criterion_6)


def test_criterion_07_trace_formula():
    # quadratic exact within 1e-12, slope -1 +- 1e-6, quartic 1e-3 relative
    _run(suite.criterion_7)


def test_criterion_08_variance_audit_discrepancy():
    # n*bias = 0.18 within 1e-12, flagged inconsistent; diagonal consistent
    _run(suite.criterion_8)


def test_criterion_09_joint_tail_bias():
    # zero within 1e-6 when independent; positive and bound-consistent at 0.2
    _run(suite.criterion_9)


def test_criterion_10_deterministic_reports():
    # two renderings byte-identical
    _run(suite.criterion_10)


def test_fault_injection_hook_breaks_criterion_2():
    r = suite.criterion_2(inject_v_perturbation=True)
    assert not r.passed
