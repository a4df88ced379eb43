import numpy as np
import pytest
from hypothesis import given, strategies as st

from eqfree.basis import CoarseState, linear_state
from eqfree.cdr import (CdrSettings, RenormalizationError, Template, backward_rates, cdr_fixed_point,
                        projected_template_quantile, renormalize_once, similarity_exponent,
                        template_factor, template_quantile, template_rescale, track_rescaling)
from eqfree.observables import MARGINAL_X, MARGINAL_Y
from eqfree.sde import ParticleEnsemble, RngStream, SdeParams
from eqfree.stepper import StepperConfig, restrict_state

TABLE_TIMES = [0.0, 1.0, 3.0]
TABLE_A = [1.0, 1.10268, 1.27793]


def test_template_validation():
    with pytest.raises(ValueError):
        Template(e=1.0)
    with pytest.raises(ValueError):
        Template(m=0.6)


def test_template_quantile_is_the_ceil_order_statistic():
    x = np.array([5.0, 1.0, 4.0, 2.0, 3.0])
    assert template_quantile(x, 0.4) == 2.0     # ceil(0.4 * 5) = 2nd smallest
    assert template_quantile(x, 0.41) == 3.0
    with pytest.raises(RenormalizationError):
        template_factor(np.abs(x), Template())


@given(st.integers(0, 10_000), st.floats(0.05, 0.45))
def test_rescaled_ensemble_satisfies_the_template(seed, m):
    ens = ParticleEnsemble(RngStream(seed).normal(501) * 3, RngStream(seed, 1).normal(501))
    tpl = Template(-2.0, m)
    try:
        out, A = template_rescale(ens, tpl, 3.0)
    except RenormalizationError:
        return
    assert template_quantile(out.x, m) == pytest.approx(tpl.e, rel=1e-12)


@given(st.floats(0.1, 10.0), st.floats(2.0, 4.0))
def test_scale_equivariance_of_the_rescale(lam, p):
    ens = ParticleEnsemble(RngStream(1).normal(300) * 4 - 1, RngStream(2).normal(300))
    tpl = Template()
    out, A = template_rescale(ens, tpl, p)
    out2, A2 = template_rescale(ParticleEnsemble(lam * ens.x, lam**p * ens.y), tpl, p)
    assert A2 == pytest.approx(lam * A, rel=1e-12)
    np.testing.assert_allclose(out2.x, out.x, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(out2.y, out.y, rtol=1e-9, atol=1e-12)


def test_similarity_exponent_on_the_published_table():
    # [PAPER] rescaling table gives 0.520
    assert similarity_exponent(TABLE_TIMES, TABLE_A) == pytest.approx(0.520, abs=1e-3)
    np.testing.assert_allclose(backward_rates(TABLE_TIMES, TABLE_A)[1:], [0.10268, 0.087625])


@given(st.floats(0.2, 0.9), st.floats(0.5, 20.0))
def test_similarity_exponent_recovers_power_laws_with_exact_rates(alpha, t0):
    # with exact derivatives the formula is an identity: A/A_t = (t0 + t)/alpha
    t1, t2 = 1.0, 3.0
    A = lambda t: ((t0 + t) / t0) ** alpha
    rate = lambda t: alpha / t0 * ((t0 + t) / t0) ** (alpha - 1)
    got = (t2 - t1) / (A(t2) / rate(t2) - A(t1) / rate(t1))
    assert got == pytest.approx(alpha, rel=1e-12)


def test_similarity_exponent_errors():
    with pytest.raises(ValueError):
        similarity_exponent([0, 1], [1, 1.1])
    with pytest.raises(ValueError):
        similarity_exponent([0, 1, 3], [1, 1.2, 1.1])
    with pytest.raises(ValueError):
        similarity_exponent([0, 3, 1], [1, 1.1, 1.2])


def small_cfg(**kw):
    base = dict(N=400, M=10, P=5, micro_steps=20, replicas=4, orientation=MARGINAL_X)
    base.update(kw)
    return StepperConfig(**base)


def test_renormalize_once_pins_the_template():
    cfg = small_cfg()
    betas, A, mom, x, y = renormalize_once(linear_state(10, 5, 10.0, MARGINAL_X), cfg, Template(), 3.0,
                                           RngStream(0))
    assert betas.shape == (4, 11, 6)
    assert template_quantile(x, 0.4) == pytest.approx(-2.832)
    assert A > 0


def test_recentering_pins_the_centroid_at_the_origin():
    cfg = small_cfg()
    st_ = linear_state(10, 5, 10.0, MARGINAL_X)
    _, _, mom, x, y = renormalize_once(st_, cfg, Template(), 3.0, RngStream(0), recenter=True)
    assert abs(x.mean()) < 1e-12 and abs(y.mean()) < 1e-9
    assert template_quantile(x, 0.4) == pytest.approx(-2.832)
    # without it the frozen-noise centroid sits off the origin
    _, _, _, x0, _ = renormalize_once(st_, cfg, Template(), 3.0, RngStream(0))
    assert abs(x0.mean()) > 1e-6


def test_fixed_point_trace_and_orientation_guard():
    cfg = small_cfg()
    tr = cdr_fixed_point(linear_state(10, 5, 10.0, MARGINAL_X), cfg, Template(), 3.0, RngStream(1),
                         CdrSettings(max_iter=4, tol=0.5, patience=2))
    # the first change is O(1) (uniform start), later ones fall below 0.5
    assert tr.changes[0] > 0.5
    assert tr.converged and tr.settled_at == tr.converged_at - 1
    assert all(c < 0.5 for c in tr.changes[tr.settled_at - 1:])
    assert len(list(tr.rows())) == tr.iterations == tr.converged_at
    np.testing.assert_allclose(np.cumprod(tr.A_loop), tr.A_cum)
    with pytest.raises(ValueError):
        cdr_fixed_point(linear_state(10, 5, 10.0), cfg, Template(), 3.0, RngStream(1))


def test_frozen_noise_reuses_replica_streams():
    cfg = small_cfg(replicas=2)
    st_ = linear_state(10, 5, 10.0, MARGINAL_X)
    a = renormalize_once(st_, cfg, Template(), 3.0, RngStream(0), key=99)[0]
    b = renormalize_once(st_, cfg, Template(), 3.0, RngStream(5), key=99)[0]
    np.testing.assert_array_equal(a, b)


def test_divergent_scaling_aborts():
    cfg = small_cfg()
    with pytest.raises(RenormalizationError):
        cdr_fixed_point(linear_state(10, 5, 10.0, MARGINAL_X), cfg, Template(), 3.0, RngStream(1),
                        CdrSettings(max_iter=3, A_bounds=(0.999, 1.001)))


def test_tracking_starts_at_one_and_grows():
    cfg = small_cfg(N=1000)
    # a Gaussian cloud keeps its shape, so after healing the truncation
    # distortion of the lift its template quantile only grows
    cloud = ParticleEnsemble(RngStream(0).normal(1000) * 8, RngStream(1).normal(1000) * 20)
    st_ = restrict_state(cloud, cfg)
    for mode in ("projected", "symmetric", "order"):
        t, A = track_rescaling(st_, cfg, Template(), [100, 200], RngStream(2), replicas=6,
                               heal_steps=100, quantile=mode)
        np.testing.assert_allclose(t, [0.0, 1.0, 2.0])
        assert A[0] == 1.0 and A[2] > A[1] > 1.0
    with pytest.raises(ValueError):
        track_rescaling(st_, cfg, Template(), [50], RngStream(2), quantile="median")


def test_projected_quantile_scales_linearly():
    x = RngStream(0).normal((5, 200)) * 3
    tpl = Template()
    assert projected_template_quantile(2 * x, tpl) == pytest.approx(2 * projected_template_quantile(x, tpl))
