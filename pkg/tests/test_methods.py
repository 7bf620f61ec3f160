import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlmnag.core import ObjectiveSpec, RunConfig, StepSchedule, TwoStepCoefficients
from vlmnag.methods import (ADAMS2, GRADIENT_DESCENT, NAG_C, PROPOSED, DivergenceError,
                            RestartPolicy, general_vlm_step, get_method,
                            nag_c_vlm_coefficients, proposed_coefficients, run,
                            run_nag_c_classic)
from vlmnag.lyapunov import nag_c_lyapunov_params


def diag(w, x0=None):
    w = np.asarray(w, dtype=float)
    d = len(w)
    return ObjectiveSpec(d, lambda x: 0.5 * float(x @ (w * x)), lambda x: w * x, float(w.max()),
                         0.0, np.zeros(d), "diag", np.ones(d) if x0 is None else x0)


def nesterov_reference(grad, s, x0, iterations):
    # textbook two-sequence form, written independently of the package
    x = np.array(x0, float)
    y = x.copy()
    out = [x.copy(), x.copy()]
    for k in range(1, iterations):
        y_new = x - s * grad(x)
        x = y_new + (k - 1) / (k + 2) * (y_new - y)
        y = y_new
        out.append(x.copy())
    return np.array(out)


def test_nag_c_coefficients_at_linear_ratio():
    # w = (n+4)/(n+3): the VLM collapses to Nesterov's momentum recursion
    for n in range(0, 20):
        w = (n + 4) / (n + 3)
        co = nag_c_vlm_coefficients(w)
        h_next = 0.1 * (n + 4)
        assert co.a == pytest.approx(-(2 * n + 3) / (n + 3))
        assert co.b == pytest.approx(n / (n + 3))
        # h_{n+1} c = s (2n+3)/(n+3) and h_{n+1} d = s n/(n+3) with s = 0.4
        assert h_next * co.c == pytest.approx(0.4 * (2 * n + 3) / (n + 3))
        assert h_next * co.d == pytest.approx(0.4 * n / (n + 3))


def test_proposed_coefficients_at_five_quarters():
    co = proposed_coefficients(1.25)
    assert (co.a, co.b, co.c, co.d) == pytest.approx((-17 / 16, 1 / 16, 5 / 16, 0.0))


def test_coefficients_reject_nonpositive_ratio():
    with pytest.raises(ValueError):
        nag_c_vlm_coefficients(0.0)
    with pytest.raises(ValueError):
        proposed_coefficients(-1.0)


def test_get_method():
    assert get_method("proposed") is PROPOSED
    with pytest.raises(KeyError):
        get_method("heavy_ball")


def test_classic_matches_independent_reference():
    obj = diag([1.0, 3.0, 10.0])
    ours = run_nag_c_classic(obj, 0.05, obj.x0, 200)
    ref = nesterov_reference(obj.gradient, 0.05, obj.x0, 200)
    assert np.allclose(ours, ref, rtol=0, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.1, 20.0), min_size=1, max_size=6), st.floats(0.05, 1.0))
def test_vlm_form_equals_classic_form(weights, frac):
    obj = diag(weights)
    a = frac / (4 * obj.lipschitz_L)
    traj = run(NAG_C, obj, StepSchedule.linear(a, 3), obj.x0, RunConfig(150))
    ref = nesterov_reference(obj.gradient, 4 * a, obj.x0, 150)
    dev = np.abs(traj.x - ref).max() / max(1.0, np.abs(ref).max())
    assert dev < 1e-10


def test_general_step_formula():
    co = TwoStepCoefficients(-1.5, 0.5, 2.0, 1.0)
    grad = lambda x: 2 * x
    x0, x1 = np.array([1.0]), np.array([0.5])
    got = general_vlm_step(x0, x1, co, 0.1, grad)
    # x2 = 1.5 x1 - 0.5 x0 + h (c g(x1) - d g(x0)), g = -grad
    expected = 1.5 * 0.5 - 0.5 * 1.0 + 0.1 * (2.0 * -1.0 - 1.0 * -2.0)
    assert got[0] == pytest.approx(expected)


def test_general_step_divergence():
    co = TwoStepCoefficients(-1.0, 0.0, 1.0, 0.0)
    with pytest.raises(DivergenceError):
        general_vlm_step(np.zeros(1), np.array([1e300]), co, 1e10, lambda x: -x)
    with pytest.raises(ValueError):
        general_vlm_step(np.zeros(1), np.zeros(1), co, 0.0, lambda x: x)


def test_run_records_and_time():
    obj = diag([1.0, 2.0])
    s = StepSchedule.linear(0.05, 3)
    tr = run(NAG_C, obj, s, obj.x0, RunConfig(50, record_every=7))
    assert list(tr.n) == [0, 7, 14, 21, 28, 35, 42, 49, 50]
    full = run(NAG_C, obj, s, obj.x0, RunConfig(50))
    assert np.allclose(full.t, [s.time(n) for n in range(51)])
    assert full.records[1].f_gap == full.records[0].f_gap  # x_1 = x_0


def test_order1_start_uses_euler_step():
    obj = diag([2.0])
    tr = run(GRADIENT_DESCENT, obj, StepSchedule.constant(0.1), obj.x0, RunConfig(3))
    assert tr.x[1][0] == pytest.approx(1 - 0.1 * 2.0)
    assert tr.x[2][0] == pytest.approx((1 - 0.2) ** 2)


@pytest.mark.parametrize("method", [NAG_C, PROPOSED, GRADIENT_DESCENT, ADAMS2])
def test_methods_converge_on_easy_quadratic(method):
    obj = diag(np.ones(4))
    s = StepSchedule.constant(0.5) if method.needs_order1_start else StepSchedule.linear(0.05, 3)
    tr = run(method, obj, s, obj.x0, RunConfig(400))
    assert not tr.diverged
    assert tr.final_gap < 1e-10


def test_divergence_is_recorded():
    obj = diag([100.0])
    tr = run(NAG_C, obj, StepSchedule.linear(1.0, 3), obj.x0, RunConfig(500))
    assert tr.diverged
    assert tr.diverged_at is not None and tr.diverged_at <= 500
    assert tr.n[-1] < tr.diverged_at


def test_translation_covariance():
    obj = diag([1.0, 5.0])
    shift = np.array([3.0, -1.0])
    s = StepSchedule.linear(0.02, 3)
    a = run(PROPOSED, obj, s, obj.x0, RunConfig(100))
    b = run(PROPOSED, obj.translated(shift), s, obj.x0 + shift, RunConfig(100))
    assert np.allclose(b.x - shift, a.x, atol=1e-12)
    assert np.allclose(a.f_gap, b.f_gap, rtol=1e-9, atol=1e-15)


def test_restart_policy():
    assert RestartPolicy(True).triggered(2.0, 1.0)
    assert not RestartPolicy(False).triggered(2.0, 1.0)
    assert not RestartPolicy(True).triggered(1.0, 1.0)


def test_restart_resets_momentum():
    obj = diag([1.0, 100.0])
    s = StepSchedule.linear(1 / 400, 3)
    plain = run(NAG_C, obj, s, obj.x0, RunConfig(400))
    rs = run(NAG_C, obj, s, obj.x0, RunConfig(400, restart=True))
    assert rs.restarted.any()
    assert not plain.restarted.any()
    assert np.all(np.diff(rs.t) > 0)
    assert rs.final_gap < plain.final_gap


def test_lyapunov_monitoring_preconditions():
    obj = diag([1.0])
    p = nag_c_lyapunov_params(0.25, 1.0)
    no_star = ObjectiveSpec(1, obj.value, obj.gradient, 1.0)
    with pytest.raises(ValueError):
        run(NAG_C, no_star, StepSchedule.linear(0.25), np.ones(1), RunConfig(5), lyapunov=p)
    with pytest.raises(ValueError):
        run(NAG_C, obj, StepSchedule.linear(0.25), np.ones(1), RunConfig(5, restart=True), lyapunov=p)
    tr = run(NAG_C, obj, StepSchedule.linear(0.25), np.ones(1), RunConfig(5), lyapunov=p)
    assert tr.records[-1].lyapunov is None
    assert all(r.lyapunov is not None for r in tr.records[:-1])
