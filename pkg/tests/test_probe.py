import math
import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from eqfree.probe import (PROBE_SET1, PROBE_SET2, ProbeConfig, ProbeError, ProductGaussianCdf,
                          a_from_ratio, alpha_from_a, compute_a, estimate_operator, exact_operator,
                          newton_solve_p, quadrature_operator)
from eqfree.sde import Model, RngStream, SdeParams

XY = SdeParams(model=Model.DIFFUSIVE_XY)


@given(st.floats(1.0, 20.0), st.floats(1.0, 200.0), st.floats(-10, 10), st.floats(-50, 50),
       st.sampled_from(list(Model)))
def test_closed_form_operator_matches_quadrature(sx, sy, x, y, model):
    # [DERIVED] integral of F_y done numerically vs by parts
    F = ProductGaussianCdf(sx, sy)
    sde = SdeParams(model=model)
    a = exact_operator(F, x, y, sde)
    b = quadrature_operator(F, x, y, sde)
    assert a == pytest.approx(b, rel=1e-7, abs=1e-12)


def test_product_cdf_derivatives_by_finite_differences():
    F = ProductGaussianCdf(3.0, 7.0)
    x, y, h = 1.3, -2.1, 1e-4
    assert F.d_y(x, y) == pytest.approx((F(x, y + h) - F(x, y - h)) / (2 * h), rel=1e-6)
    assert F.d_xx(x, y) == pytest.approx((F(x + h, y) - 2 * F(x, y) + F(x - h, y)) / h**2, rel=1e-4)
    assert F.d_yy(x, y) == pytest.approx((F(x, y + h) - 2 * F(x, y) + F(x, y - h)) / h**2, rel=1e-4)
    assert F.scaled(2.0, 3.0) == ProductGaussianCdf(6.0, 56.0)


@pytest.mark.parametrize("preset", [PROBE_SET1, PROBE_SET2])
@pytest.mark.parametrize("estimator", ["exact", "quadrature"])
def test_oracle_newton_finds_three_and_minus_two(preset, estimator):
    t = time.perf_counter()
    rep = newton_solve_p(preset.with_(estimator=estimator), RngStream(0))
    assert rep.converged
    assert rep.p == pytest.approx(3.0, abs=1e-4)
    assert rep.a == pytest.approx(-2.0, abs=1e-4)
    assert rep.alpha == pytest.approx(0.5, abs=1e-4)
    assert time.perf_counter() - t < 1.0


@pytest.mark.parametrize("preset, p_expected", [(PROBE_SET1, 3.97691), (PROBE_SET2, 3.74942)])
def test_oracle_on_the_asymptotic_system(preset, p_expected):
    # [DERIVED] closed-form operator; no constant p makes the identity exact, so p depends on the set
    rep = newton_solve_p(preset.with_(estimator="exact", sde=XY), RngStream(0))
    assert rep.p == pytest.approx(p_expected, abs=1e-4)
    assert rep.a == pytest.approx(1.0 - p_expected, abs=1e-3)


def test_burst_estimate_is_close_to_the_exact_operator():
    cfg = PROBE_SET1.with_(particles=4000, replicas=200)
    F = cfg.test_cdf
    val, se = estimate_operator(F, (3.0, 3.0), cfg, RngStream(4))
    exact = exact_operator(F, 3.0, 3.0, cfg.sde)
    assert se > 0
    # a 5-step burst carries an O(delta) bias on top of the noise
    assert abs(val - exact) < 5 * se + 0.05 * abs(exact)


def test_compute_a_with_oracle():
    assert compute_a(3.0, PROBE_SET2.with_(estimator="exact"), RngStream(0)) == pytest.approx(-2.0, abs=1e-9)
    with pytest.raises(ValueError):
        compute_a(float("nan"), PROBE_SET1.with_(estimator="exact"), RngStream(0))


def test_small_stochastic_run_reports_rows_and_median(tmp_path):
    cfg = PROBE_SET1.with_(particles=3000, replicas=100, max_iter=4, burn_in=1)
    rep = newton_solve_p(cfg, RngStream(2))
    assert [k for k, _, _ in rep.rows] == list(range(5))
    tail = np.array([(p, a) for _, p, a in rep.rows[1:]])
    assert rep.p == pytest.approx(np.median(tail[:, 0]))
    assert 2.5 < rep.p < 3.5
    rep.to_csv(tmp_path / "it.csv")
    lines = (tmp_path / "it.csv").read_text().splitlines()
    assert lines[0] == "iter,p,a" and len(lines) == 6


def test_conversions_and_errors():
    assert a_from_ratio(0.25, 2.0) == pytest.approx(-2.0)
    assert alpha_from_a(-2.0) == 0.5
    with pytest.raises(ProbeError):
        a_from_ratio(-0.1, 2.0)
    with pytest.raises(ValueError):
        alpha_from_a(0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        ProbeConfig(A=1.0)
    with pytest.raises(ValueError):
        ProbeConfig(point1=(1, 1), point2=(1, 1))
    with pytest.raises(ValueError):
        ProbeConfig(residual="log")
    with pytest.raises(ValueError):
        ProbeConfig(estimator="magic")
    assert PROBE_SET1.delta == pytest.approx(0.05)


def test_sparse_probe_point_warns():
    cfg = PROBE_SET1.with_(particles=50, replicas=2, chunk=2)
    with pytest.warns(RuntimeWarning):
        estimate_operator(cfg.test_cdf, (-9.0, -9.0), cfg, RngStream(0))
