import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import dblquad

from eqfree.analytic import (AnalyticParams, cdf_asymptotic, cdf_selfsimilar, conditional_var_asymptotic,
                             moments_asymptotic, moments_selfsimilar, pde_residual, pdf_asymptotic,
                             pdf_selfsimilar, rescaled_cdf, rescaled_moments, scaling_identity_residual)
from eqfree.sde import Model

PARAMS = AnalyticParams(D=5.0, t0=0.0, c=0.2)


def quad_moments(pdf, t, params, half=None):
    """Mass and second moments by 2D quadrature over a +-12 sigma box."""
    tau = params.tau(t)
    sx = params.D * math.sqrt(tau)
    sy = params.D * math.sqrt(tau + tau**3 / 3)
    box = (-12 * sx, 12 * sx, -12 * sy, 12 * sy)
    integ = lambda g: dblquad(lambda y, x: g(x, y) * float(pdf(x, y, t, params)),
                              box[0], box[1], box[2], box[3], epsabs=1e-10, epsrel=1e-9)[0]
    mass = integ(lambda x, y: 1.0)
    return mass, integ(lambda x, y: x * x), integ(lambda x, y: x * y), integ(lambda x, y: y * y)


def test_params_validation():
    with pytest.raises(ValueError):
        AnalyticParams(D=0)
    with pytest.raises(ValueError):
        AnalyticParams(c=-1)
    with pytest.raises(ValueError):
        pdf_selfsimilar(0.0, 0.0, 1.0, AnalyticParams(t0=1.0))
    with pytest.raises(ValueError):
        pdf_asymptotic(0.0, 0.0, 0.5, AnalyticParams(t0=1.0))


@given(st.floats(-30, 30), st.floats(0.3, 6.0))
def test_peak_along_y_sits_on_the_shear_line(x, t):
    # [TRIVIAL] exponent is minimised at y = x (t - t0) / 2
    y0 = 0.5 * x * t
    h = 1e-3 * (1 + abs(y0))
    p0 = pdf_selfsimilar(x, y0, t, PARAMS)
    assert p0 >= pdf_selfsimilar(x, y0 + h, t, PARAMS)
    assert p0 >= pdf_selfsimilar(x, y0 - h, t, PARAMS)


def test_selfsimilar_mass_and_covariance_by_quadrature():
    # [DERIVED] Var X = D^2 tau, Var Y = D^2 tau^3 / 3, corr = sqrt(3)/2
    t = 2.0
    mass, xx, xy, yy = quad_moments(pdf_selfsimilar, t, PARAMS)
    assert mass == pytest.approx(1.0, abs=1e-6)
    assert xx == pytest.approx(25 * t, rel=1e-6)
    assert yy == pytest.approx(25 * t**3 / 3, rel=1e-6)
    assert xy / math.sqrt(xx * yy) == pytest.approx(math.sqrt(3) / 2, rel=1e-6)
    mo = moments_selfsimilar(t, PARAMS)
    assert mo.std_x**2 == pytest.approx(xx, rel=1e-6) and mo.std_y**2 == pytest.approx(yy, rel=1e-6)


def test_asymptotic_variances_by_quadrature():
    # [DERIVED] marginal Var Y = D^2 (tau + tau^3/3); conditional Var(Y|X) = D^2 tau (1 + tau^2/12)
    t = 1.5
    mass, xx, xy, yy = quad_moments(pdf_asymptotic, t, PARAMS)
    assert mass == pytest.approx(1.0, abs=1e-6)
    assert xx == pytest.approx(25 * t, rel=1e-6)
    mo = moments_asymptotic(t, PARAMS)
    assert yy == pytest.approx(mo.std_y**2, rel=1e-6)
    assert yy - xy**2 / xx == pytest.approx(conditional_var_asymptotic(t, PARAMS), rel=1e-6)


def test_rescaled_family_statistics():
    # [PAPER] (5 sqrt 5, 25 sqrt 15 / 3, sqrt 3 / 2) at c = 0.2, D = 5
    mo = rescaled_moments(PARAMS)
    assert mo.std_x == pytest.approx(5 * math.sqrt(5), abs=1e-4)
    assert mo.std_y == pytest.approx(25 * math.sqrt(15) / 3, abs=1e-4)
    assert mo.corr == pytest.approx(0.86603, abs=1e-5)


def test_asymptotic_rescaled_statistics_approach_the_family():
    # [DERIVED] differences shrink monotonically for tau in {1, 10, 100}
    ref = rescaled_moments(PARAMS)
    gaps = [abs(rescaled_moments(PARAMS, tau).std_y - ref.std_y) + abs(rescaled_moments(PARAMS, tau).corr - ref.corr)
            for tau in (1.0, 10.0, 100.0)]
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 1e-3 * ref.std_y
    assert all(rescaled_moments(PARAMS, tau).std_x == ref.std_x for tau in (1.0, 10.0))


def test_cdf_limits_and_a_closed_form_value():
    assert cdf_selfsimilar(np.inf, np.inf, 1.0, PARAMS) == pytest.approx(1.0, abs=1e-7)
    assert cdf_selfsimilar(-np.inf, 3.0, 1.0, PARAMS) == 0.0
    # at the origin the orthant probability of a correlated Gaussian is 1/4 + asin(rho)/(2 pi)
    rho = math.sqrt(3) / 2
    assert cdf_selfsimilar(0.0, 0.0, 1.0, PARAMS) == pytest.approx(0.25 + math.asin(rho) / (2 * math.pi), abs=1e-7)
    assert 0.0 <= cdf_asymptotic(-3.0, 2.0, 2.0, PARAMS) <= 1.0


def test_rescaled_cdf_is_time_invariant():
    # [TRIVIAL] exact self-similarity: t and 4t agree to quadrature tolerance
    for u, v in [(-5.0, -10.0), (3.0, 20.0)]:
        a = rescaled_cdf(u, v, 1.0, PARAMS, tol=1e-11)
        assert a == pytest.approx(rescaled_cdf(u, v, 4.0, PARAMS, tol=1e-11), abs=1e-7)
    # the asymptotic system is not exactly self-similar at early times
    a = rescaled_cdf(3.0, 5.0, 0.5, PARAMS, Model.DIFFUSIVE_XY)
    b = rescaled_cdf(3.0, 5.0, 2.0, PARAMS, Model.DIFFUSIVE_XY)
    assert abs(a - b) > 1e-3


@given(st.floats(-40, 40), st.floats(-200, 200), st.floats(0.1, 8.0))
def test_densities_are_non_negative(x, y, t):
    assert pdf_selfsimilar(x, y, t, PARAMS) >= 0
    assert pdf_asymptotic(x, y, t, PARAMS) >= 0


def test_residuals_and_negative_control():
    rng = np.random.default_rng(0)
    for _ in range(10):
        t = rng.uniform(0.5, 5)
        x = rng.normal() * 5 * math.sqrt(t)
        y = 0.5 * x * t + rng.normal() * 5 * math.sqrt(t**3 / 12)
        assert pde_residual(pdf_selfsimilar, x, y, t, PARAMS).relative < 1e-6
        assert pde_residual(pdf_asymptotic, x, y, t, PARAMS, Model.DIFFUSIVE_XY).relative < 1e-6
        wrong = lambda a, b, s, p: pdf_selfsimilar(a, b, s, p, shear_factor=5.0)
        assert pde_residual(wrong, x, y, t, PARAMS).relative > 1e-2
        # and the asymptotic field does not solve the x-diffusion equation
        assert pde_residual(pdf_asymptotic, x, y, t, PARAMS).relative > 1e-3


def test_scaling_identity_holds_only_for_p3_a_minus2():
    g = lambda x, y: float(pdf_selfsimilar(x, y, 1.0, PARAMS))
    for A in (1.5, 2.0):
        assert scaling_identity_residual(g, 4.0, 6.0, A, 3.0, -2.0, 5.0).relative < 1e-6
        assert scaling_identity_residual(g, 4.0, 6.0, A, 3.0, -1.0, 5.0).relative > 1e-2
        assert scaling_identity_residual(g, 4.0, 6.0, A, 2.0, -2.0, 5.0).relative > 1e-2
