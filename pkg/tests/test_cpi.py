import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from eqfree.basis import even_mode_mask, linear_state
from eqfree.cpi import CpiSchedule, cpi_run, direct_run, fit_slope, project_forward
from eqfree.sde import RngStream, uniform_square
from eqfree.stepper import StepperConfig

small = st.floats(-100, 100, allow_nan=False)


def test_schedule_accounting():
    s = CpiSchedule(10, 10, 10)
    assert (s.micro, s.cycle, s.speedup) == (20, 30, 1.5)
    with pytest.raises(ValueError):
        CpiSchedule(record=1)
    with pytest.raises(ValueError):
        CpiSchedule(heal=-1)


@given(arrays(float, (2, 3), elements=small), arrays(float, (2, 3), elements=small), st.integers(2, 15))
def test_fit_slope_is_exact_on_lines(intercept, slope, n):
    dt = 0.01
    series = intercept + slope * (np.arange(n) * dt)[:, None, None]
    got, end = fit_slope(series, dt)
    np.testing.assert_allclose(got, slope, atol=1e-6 * (1 + np.abs(slope).max() + np.abs(intercept).max() / dt))
    np.testing.assert_allclose(end, series[-1], atol=1e-7 * (1 + np.abs(series).max()))


def test_fit_slope_matches_polyfit_on_noise():
    y = RngStream(0).normal(12)
    slope, _ = fit_slope(y, 0.5)
    assert slope == pytest.approx(np.polyfit(np.arange(12) * 0.5, y, 1)[0])
    with pytest.raises(ValueError):
        fit_slope([1.0], 0.1)


def test_project_forward_zeroes_suppressed_modes():
    st_ = linear_state(3, 5, 1.0)
    slopes = np.ones_like(st_.beta)
    out = project_forward(st_, slopes, 10, 0.01, even_mode_mask(3, 5))
    np.testing.assert_allclose(out.beta[:, 1], st_.beta[:, 1] + 0.1)
    assert np.all(out.beta[:, [2, 4]] == 0)
    with pytest.raises(ValueError):
        project_forward(st_, np.ones(3), 1, 0.01)


def test_cpi_run_accounts_steps_and_takes_snapshots():
    cfg = StepperConfig(N=400, M=10)
    run = cpi_run(linear_state(10, 5, 10.0), cfg, CpiSchedule(), 90, RngStream(1), snapshot_steps=[0, 15, 25, 90])
    assert run.micro_steps == 60 and run.simulated_steps == 90
    assert run.speedup == 1.5
    assert sorted(run.snapshots) == [0, 15, 25, 90]
    assert run.times == [30, 60, 90]
    assert all(np.all(s.beta[:, [2, 4]] == 0) for s in run.states)
    # the cloud spreads: x-marginal width grows over the run
    assert run.states[-1].beta[1, 1] > run.states[0].beta[1, 1] * 0.9


def test_cpi_run_is_reproducible_and_validates():
    cfg = StepperConfig(N=200, M=10)
    a = cpi_run(linear_state(10, 5, 10.0), cfg, CpiSchedule(), 60, RngStream(3))
    b = cpi_run(linear_state(10, 5, 10.0), cfg, CpiSchedule(), 60, RngStream(3))
    np.testing.assert_array_equal(a.states[-1].beta, b.states[-1].beta)
    with pytest.raises(ValueError):
        cpi_run(linear_state(10, 5, 10.0), cfg, CpiSchedule(), 60, RngStream(3), anchor="mid")
    with pytest.raises(ValueError):
        cpi_run(linear_state(10, 5, 10.0), cfg, CpiSchedule(), 60, RngStream(3), snapshot_steps=[61])


def test_direct_run_snapshots_are_cumulative():
    ens = uniform_square(100, 10.0, RngStream(0))
    cfg = StepperConfig(N=100, M=10)
    snaps = direct_run(ens, cfg, 20, RngStream(1), [10, 20])
    again = direct_run(ens, cfg, 20, RngStream(1), [20])
    np.testing.assert_array_equal(snaps[20].x, again[20].x)
    with pytest.raises(ValueError):
        direct_run(ens, cfg, 20, RngStream(1), [30])
