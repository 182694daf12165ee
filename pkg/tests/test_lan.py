"""Local-asymptotic sweeps: trace formula, slopes, and the variance audit."""
import math

import numpy as np
import pytest

from vibias.blocks import BlockStructure
from vibias.errors import NotBlockAdditive, NotPolynomial, ShapeMismatch
from vibias.functional import BoxTail, GridTable, Polynomial
from vibias.lan import (
    LanExperiment,
    hessian_at,
    make_lan_experiment,
    predict_bias,
    run_sweep,
    tangent_functional_audit,
)
from vibias.presets import lan_default


def _finite_difference_hessian(poly, point, step=1e-4):
    point = np.asarray(point, dtype=float)
    d = len(point)
    H = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            pts = []
            for si in (step, -step):
                for sj in (step, -step):
                    p = point.copy()
                    p[i] += si
                    p[j] += sj
                    pts.append(p)
            f = poly.evaluate_points(np.array(pts))
            H[i, j] = (f[0] - f[1] - f[2] + f[3]) / (4 * step * step)
    return H


def test_hessian_matches_finite_differences():
    rng = np.random.default_rng(31)
    for _ in range(5):
        terms = []
        for _ in range(6):
            e = rng.integers(0, 3, size=2)
            terms.append((float(rng.standard_normal()), e.tolist()))
        poly = Polynomial.from_terms(2, terms)
        point = rng.standard_normal(2)
        exact = hessian_at(poly, point)
        approx = _finite_difference_hessian(poly, point)
        assert np.max(np.abs(exact - approx)) <= 1e-5 * max(1.0, np.max(np.abs(exact)))


def test_hessian_rejects_non_polynomial():
    with pytest.raises(NotPolynomial):
        hessian_at(BoxTail((1.0, 1.0)), [0.0, 0.0])


def test_quadratic_sweep_exact():
    exp = lan_default(rho=0.3)
    sw = run_sweep(exp, Polynomial.monomial(2, 1.0, [1, 1]))
    for n, m, p in zip(exp.n_grid, sw.measured, sw.predicted):
        assert m == pytest.approx(0.3 / n, abs=1e-12)
        assert p == pytest.approx(0.3 / n, abs=1e-12)
    assert sw.slope == pytest.approx(-1.0, abs=1e-6)
    assert sw.n_bias_limit == pytest.approx(0.3, abs=1e-9)


def test_quartic_trace_coefficient_first_order():
    exp = lan_default(rho=0.3, mu=(1.0, 0.0))
    sw = run_sweep(exp, Polynomial.monomial(2, 1.0, [4, 0]))
    coeff = float(np.trace(sw.hessian @ (exp.sigma - exp.v))) / 2.0
    assert coeff != 0.0
    assert sw.n_bias_limit / coeff == pytest.approx(1.0, abs=1e-3)


def test_diagonal_sigma_gives_zero_bias():
    exp = lan_default(rho=0.0)
    sw = run_sweep(exp, Polynomial.monomial(2, 1.0, [1, 1]))
    assert all(m == 0.0 for m in sw.measured)
    assert sw.slope == math.inf


def test_boxtail_sweep_runs_with_nan_prediction():
    exp = lan_default(rho=0.3, n_grid=(10, 20, 40))
    sw = run_sweep(exp, BoxTail((0.0, 0.0)))
    assert all(math.isnan(p) for p in sw.predicted)
    assert all(math.isfinite(m) for m in sw.measured)


def test_grid_table_rejected():
    exp = lan_default(rho=0.3)
    t = GridTable(dims=2, coords=(0,), axes=(np.linspace(0, 1, 3),), values=np.zeros(3))
    with pytest.raises(NotPolynomial):
        run_sweep(exp, t)


def test_predict_bias_shape_checks():
    with pytest.raises(ShapeMismatch):
        predict_bias(np.eye(2), np.eye(3), np.eye(3), 10)
    with pytest.raises(ShapeMismatch):
        predict_bias(np.eye(2), np.eye(2), np.eye(2), 0)


def test_audit_flags_shrinkage_gap():
    g = Polynomial.from_terms(2, [(1.0, [2, 0]), (1.0, [0, 2])])
    aud = tangent_functional_audit(lan_default(rho=0.3), g)
    assert aud.measured_n_bias == pytest.approx(0.18, abs=1e-12)
    assert not aud.theorem4_consistent
    aud0 = tangent_functional_audit(lan_default(rho=0.0), g)
    assert aud0.theorem4_consistent


def test_audit_rejects_cross_block_functional():
    with pytest.raises(NotBlockAdditive):
        tangent_functional_audit(lan_default(rho=0.3), Polynomial.monomial(2, 1.0, [1, 1]))


def test_experiment_validates_v():
    sigma = np.array([[1.0, 0.3], [0.3, 1.0]])
    blocks = BlockStructure.fully_factorized(2)
    with pytest.raises(ShapeMismatch):
        LanExperiment(np.zeros(2), sigma, sigma, (10, 100), blocks)
    with pytest.raises(ShapeMismatch):
        LanExperiment(np.zeros(2), sigma, np.eye(2), (10, 100), blocks)


def test_make_experiment_two_block():
    rng = np.random.default_rng(41)
    a = rng.standard_normal((3, 3)) * 0.3
    sigma = a @ a.T + np.eye(3)
    blocks = BlockStructure.two_block(3, 2)
    exp = make_lan_experiment(np.zeros(3), sigma, blocks, (10, 100, 1000))
    # within-block covariance of the fit need not match sigma, but the
    # off-block entries of v must vanish
    assert exp.v[0, 2] == 0.0 and exp.v[1, 2] == 0.0
    sw = run_sweep(exp, Polynomial.monomial(3, 1.0, [1, 0, 1]))
    for m, p in zip(sw.measured, sw.predicted):
        assert m == pytest.approx(p, abs=1e-12)
