import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ptlab.engine import (Trajectory, csv_text, integrate, make_grid, rk4_step, rk4_step_tuple,
                          settling)
from ptlab.errors import NumericError, ValidationError
from ptlab.scaling import TimeHorizon


def terminal_error(dt):
    tr = integrate(lambda t, x: -x, 1.0, 1.0, dt)
    return abs(tr.states[-1] - math.exp(-1.0))


def test_rk4_fourth_order():
    errs = [terminal_error(0.1 / 2 ** i) for i in range(4)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(r >= 8 for r in ratios)
    assert all(abs(r - 16) < 1.5 for r in ratios)


def test_grid_lands_on_end():
    g = make_grid(0.0, 1.0, 0.3)
    assert g[-1] == 1.0 and len(g) == 5
    np.testing.assert_allclose(np.diff(g[:-1]), 0.3)
    with pytest.raises(ValidationError):
        make_grid(0.0, 1.0, 0.0)
    with pytest.raises(ValidationError):
        make_grid(1.0, 1.0, 0.1)


def test_paths_agree():
    f_arr = lambda t, y: np.array([y[1], -y[0] - 0.1 * y[1] + math.sin(t)])  # noqa: E731
    f_tup = lambda t, y: (y[1], -y[0] - 0.1 * y[1] + math.sin(t))  # noqa: E731
    a = integrate(f_arr, [1.0, 0.0], 2.0, 0.01)
    b = integrate(f_tup, (1.0, 0.0), 2.0, 0.01)
    np.testing.assert_array_equal(a.states, b.states)
    y = (0.3, -0.2)
    np.testing.assert_array_equal(rk4_step(f_arr, 0.1, np.array(y), 0.05),
                                  rk4_step_tuple(f_tup, 0.1, y, 0.05))


def test_batch_equals_single():
    x0 = np.array([1.0, -2.0, 0.5])
    batch = integrate(lambda t, x: -x ** 3 + math.cos(t), x0, 1.0, 0.01)
    for i, v in enumerate(x0):
        single = integrate(lambda t, x: -x ** 3 + math.cos(t), float(v), 1.0, 0.01)
        np.testing.assert_allclose(batch.states[:, i], single.states, rtol=0, atol=1e-15)


def test_horizon_guard_and_clamp():
    h = TimeHorizon(1.0, eps=1e-2)
    with pytest.raises(ValidationError):
        integrate(lambda t, x: -x, 1.0, 1.0, 0.01, h)
    seen = []

    def f(t, x):
        seen.append(t)
        return -x
    integrate(f, 1.0, h.t_stop, 0.007, h)
    assert max(seen) <= h.t_stop


def test_cap_event():
    h = TimeHorizon(1.0, eps=1e-3, mu_cap=10.0)
    tr = integrate(lambda t, x: -x, 1.0, h.t_stop, 0.01, h)
    ev = [e for e in tr.events if e.kind == "cap_engaged"]
    assert len(ev) == 1 and ev[0].t >= 0.9


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_error():
    with pytest.raises(NumericError) as info:
        integrate(lambda t, x: x * x, 1.0, 2.0, 0.1)
    assert info.value.t is not None


def test_stop_and_control():
    tr = integrate(lambda t, x: -1.0, 1.0, 5.0, 0.1, stop=lambda t, x: x <= 0.5,
                   control=lambda t, x: -2 * x)
    assert tr.states[-1] <= 0.5 < tr.states[-2]
    np.testing.assert_allclose(tr.controls, -2 * tr.states)


def test_settling_stays_below_rule():
    tr = Trajectory(times=np.arange(6.0), states=np.array([1.0, 0.0, 1.0, 0.0, 0.0, 0.0]))
    assert settling(tr, 0.5).settle_time == 3.0
    assert settling(tr, 2.0).settle_time == 0.0
    tr2 = Trajectory(times=np.arange(3.0), states=np.array([1.0, 0.0, 1.0]))
    assert settling(tr2, 0.5).settle_time is None


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=20), st.floats(0.0, 1e6))
def test_settling_property(values, thr):
    tr = Trajectory(times=np.arange(float(len(values))), states=np.array(values))
    st_ = settling(tr, thr).settle_time
    norms = np.abs(values)
    if st_ is None:
        assert norms[-1] > thr
    else:
        k = int(st_)
        assert np.all(norms[k:] <= thr)
        assert k == 0 or norms[k - 1] > thr


def test_csv_roundtrip_and_labels():
    tr = integrate(lambda t, x: -x, np.array([1.0, 2.0]), 0.1, 0.05,
                   control=lambda t, x: -x)
    tr.extras["flag"] = np.ones(len(tr.times))
    text = csv_text(tr)
    lines = text.splitlines()
    assert lines[0] == "t,x1,x2,u1,u2,flag"
    parsed = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    np.testing.assert_array_equal(parsed[:, 1:3], tr.states)
    assert text == csv_text(tr)


def test_trajectory_shape_check():
    with pytest.raises(ValidationError):
        Trajectory(times=np.arange(3.0), states=np.zeros(2))
