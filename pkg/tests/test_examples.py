"""Worked input/output examples, one block per module."""

import math

import numpy as np
import pytest

from ptlab import bench, mas
from ptlab.engine import Trajectory, integrate, settling
from ptlab.mimo import (MimoPlant, check_gain_assumption, nonsquare_pt, polynomial_drift,
                        simulate_mimo, square_pt)
from ptlab.scalar import (AdaptiveState, ControllerSpec, ScalarPlant, adaptive_pt_ti,
                          adaptive_pt_tv, nussbaum_pt, polynomial_plant, robust_pt,
                          simulate_scalar)
from ptlab.scaling import TimeHorizon, a_prime, mu, mu_dot_over_mu_sq, time_scale
from ptlab.settling import LyapunovSpec, settling_bound, simulate_inequality

H1 = TimeHorizon(1.0)


# -- scaling -------------------------------------------------------------------

def test_scaling_values():
    assert mu(0.0, H1) == 1.0
    assert mu(0.5, H1) == 2.0
    assert mu(1 - 1e-9, TimeHorizon(1.0, eps=1e-10)) == 1e6
    assert [mu_dot_over_mu_sq(TimeHorizon(T)) for T in (1.0, 2.0, 10.0)] == [1.0, 0.5, 0.1]
    assert time_scale(0.0, H1) == (0.0, 1.0)
    tau, rate = time_scale(1 - math.exp(-1), H1)
    assert tau == pytest.approx(1.0) and rate == pytest.approx(math.e)
    tau, rate = time_scale(0.5, TimeHorizon(2.0))
    assert tau == pytest.approx(math.log(4 / 3)) and rate == pytest.approx(2 / 3)
    assert a_prime(0.5, TimeHorizon(2.0)) == pytest.approx(2 / 3)


# -- engine ----------------------------------------------------------------------

def test_engine_values():
    const = integrate(lambda t, x: 0.0, 1.0, 1.0, 0.01)
    assert np.all(const.states == 1.0)
    dec = integrate(lambda t, x: -x, 1.0, 1.0, 1e-3)
    assert abs(dec.states[-1] - math.exp(-1)) <= 1e-9
    h = TimeHorizon(1.0, mu_cap=math.inf)
    lin = integrate(lambda t, x: -2 * x / (1 - t), 1.0, h.t_stop, 1e-4, h)
    np.testing.assert_allclose(lin.states, (1 - lin.times) ** 2, atol=1e-6)


def test_settling_values():
    t = np.linspace(0.0, 10.0, 10001)
    zero = settling(Trajectory(times=t, states=np.zeros_like(t)), 1e-3)
    assert zero.settle_time == 0.0
    ex = settling(Trajectory(times=t, states=np.exp(-t)), math.exp(-5))
    assert ex.settle_time == pytest.approx(5.0, abs=1e-3)
    grow = settling(Trajectory(times=t, states=np.exp(t)), 1.0)
    assert grow.settle_time is None


# -- inequality bounds --------------------------------------------------------------

def test_bound_values():
    assert settling_bound(LyapunovSpec("FT1", {"k": 1, "q": 0.5}, 1.0)) == 2.0
    assert settling_bound(LyapunovSpec("Fixed7", {"alpha": 1, "beta": 1, "gamma": 2},
                                       1.0)) == pytest.approx(2 * math.pi)
    assert settling_bound(LyapunovSpec("Fixed9", {"k1": 1, "k2": 1, "m": 3, "n": 1, "p": 1,
                                                   "q": 3}, 1.0)) == pytest.approx(2.0)


def test_inequality_runs():
    ft = simulate_inequality(LyapunovSpec("FT1", {"k": 1, "q": 0.5}, 1.0), dt=1e-4,
                             threshold=0.0)
    assert ft.settle_time == pytest.approx(2.0, abs=0.01)
    pt12 = simulate_inequality(LyapunovSpec("PT12", {"k": 2}, 1.0), d=0.1, horizon=H1)
    assert pt12.trajectory.states[-1] <= 1e-3
    pt11 = simulate_inequality(LyapunovSpec("PT11", {"k": 1, "theta": 1}, 1.0), d=0.0,
                               horizon=H1)
    assert np.all(np.diff(pt11.trajectory.states) <= 0)
    assert pt11.trajectory.states[-1] <= 1e-6


# -- scalar controllers -----------------------------------------------------------------

def zero_envelope(b=1.0, sign="positive"):
    return ScalarPlant(b=lambda x, t: b, f=lambda x, t: 0.0 * x, psi=lambda x: 0.0 * x,
                       psi_bar=lambda x: 0.0 * x, b_sign=sign, b_lower=abs(b))


def test_robust_values():
    plant = zero_envelope()
    assert robust_pt(0.0, 0.3, 1.0, 1.0, polynomial_plant(1.0, 1.0), H1) == 0.0
    assert robust_pt(1.0, 0.0, 1.0, 1.0, plant, H1) == -2.0
    assert robust_pt(1.0, 0.5, 1.0, 0.0, plant, H1) == -2.0


def test_adaptive_values():
    spec = ControllerSpec("adaptive_ti", k=2.0)
    u, d = adaptive_pt_ti(0.0, 0.2, AdaptiveState(), spec, polynomial_plant(1.0, 1.0), H1)
    assert u == 0 and d.theta_hat == 0 and d.rho_hat == 0
    u, d = adaptive_pt_ti(1.0, 0.0, AdaptiveState(0.0, 1.0), spec, zero_envelope(), H1)
    assert u == -2.0 and d.rho_hat == 2.0 * spec.gamma_rho
    one = ScalarPlant(b=lambda x, t: 1.0, f=lambda x, t: 0.0 * x, psi=lambda x: 1.0 * x,
                      psi_bar=lambda x: 1.0 + 0.0 * x)
    tv = ControllerSpec("adaptive_tv", k=0.0 + 1.0)
    u, d = adaptive_pt_tv(1.0, 0.0, AdaptiveState(0.0, 1.0, 2.0), tv, one, H1)
    # v = delta_hat * x * (1 + psi_bar^2) / 2 = 2, so u_bar = -(1 + 1/2 + 2)
    assert u == pytest.approx(-3.5)
    u, d = adaptive_pt_tv(0.0, 0.0, AdaptiveState(0.0, 1.0, 2.0), tv, one, H1)
    assert u == 0 and d.theta_hat == 0 and d.rho_hat == 0 and d.delta_hat == 0


def test_nussbaum_values():
    spec = ControllerSpec("nussbaum", k=1.0)
    plant = zero_envelope(-2.0, "unknown")
    u, d = nussbaum_pt(0.0, 0.0, AdaptiveState(0.0, 0.0, 0.0, 0.5), spec, plant, H1)
    assert u == 0 and d.xi == 0
    u, d = nussbaum_pt(1.0, 0.0, AdaptiveState(0.0, 0.0, 0.0, 0.0), spec, plant, H1)
    assert d.xi == 1.5 and u == 1.5


def test_adaptive_closed_loops():
    ti = simulate_scalar(ControllerSpec("adaptive_ti", k=3.0), polynomial_plant(2.0, 1.0),
                         0.5, H1, state0=AdaptiveState(0.0, 1.0, 0.0, 0.5))
    assert abs(ti.terminal) <= 1e-3
    est = ti.trajectory.estimates
    assert np.abs(est[-1] - est[-101]).max() < 1e-6
    th = lambda t: 1 + 0.5 * np.sin(5 * t)  # noqa: E731
    tv = simulate_scalar(ControllerSpec("adaptive_tv", k=3.0), polynomial_plant(1.0, th, b_lower=0.5),
                         0.5, H1, state0=AdaptiveState(0.0, 1.0, 0.0, 0.5))
    assert abs(tv.terminal) <= 1e-3
    assert np.all(np.isfinite(tv.trajectory.estimates))
    nu = simulate_scalar(ControllerSpec("nussbaum", k=1.0),
                         polynomial_plant(-2.0, th, b_sign="unknown", b_lower=2.0), 0.3, H1,
                         state0=AdaptiveState(0.0, 0.0, 0.0, 0.5))
    assert abs(nu.terminal) <= 1e-2
    assert np.abs(nu.trajectory.estimates[:, 3]).max() < 10


# -- MIMO ------------------------------------------------------------------------------------

def test_mimo_values():
    F, _ = polynomial_drift(0.2)
    zero = lambda X: 0.0 * X  # noqa: E731
    sq = MimoPlant(2, 2, F, zero, B=lambda X, t: np.eye(2))
    np.testing.assert_array_equal(square_pt(np.zeros(2), 0.2, 1.0, 1.0, sq, H1), [0.0, 0.0])
    np.testing.assert_allclose(square_pt(np.array([1.0, 0.0]), 0.0, 1.0, 0.0, sq, H1), [-1, 0])
    ns = MimoPlant(1, 2, F, zero, A=np.array([[1.0, 1.0]]), M=lambda X, t: np.eye(2))
    np.testing.assert_allclose(nonsquare_pt(np.array([0.5]), 0.0, 2.0, 0.0, ns, H1),
                               [-1 / math.sqrt(2)] * 2)
    np.testing.assert_array_equal(nonsquare_pt(np.zeros(1), 0.0, 2.0, 0.0, ns, H1), [0.0, 0.0])
    for B, value, ok in ((np.eye(2), 1.0, True), ([[0.0, 1.0], [-1.0, 0.0]], 0.0, False),
                         ([[2.0, 1.0], [-1.0, 2.0]], 2.0, True)):
        plant = MimoPlant(2, 2, F, zero, B=lambda X, t, B=np.array(B): B)
        rep = check_gain_assumption(plant, [(np.zeros(2), 0.0)])
        assert rep.value == pytest.approx(value, abs=1e-14) and rep.passed is ok


def test_mimo_closed_loop():
    F, Psi = polynomial_drift(0.2)
    B = np.array([[2.0, 1.0], [-1.0, 2.0]])
    plant = MimoPlant(2, 2, F, Psi, B=lambda X, t: B)
    tr = simulate_mimo(plant, np.array([0.4, -0.3]), H1, 1.0, 0.5)
    assert np.linalg.norm(tr.states[-1]) <= 1e-3
    assert np.all(np.isfinite(tr.controls))


# -- multi-agent -------------------------------------------------------------------------------

def test_graph_values():
    edge = mas.from_edges(2, [(0, 1, 1.0)])
    np.testing.assert_array_equal(mas.laplacian(edge), [[1, -1], [-1, 1]])
    np.testing.assert_array_equal(mas.laplacian(mas.complete(3)), 3 * np.eye(3) - 1)
    np.testing.assert_array_equal(mas.laplacian(mas.WeightedGraph(np.zeros((3, 3)))), 0)
    assert mas.lambda2(edge) == pytest.approx(2.0)
    assert mas.lambda2(mas.complete(3)) == pytest.approx(3.0)
    assert mas.lambda2(mas.WeightedGraph(np.zeros((2, 2)))) == 0.0


def test_protocol_values():
    edge = mas.from_edges(2, [(0, 1, 1.0)])
    np.testing.assert_array_equal(mas.protocol_general([0.3, 0.3], edge, 1.0, 0.5), [0, 0])
    np.testing.assert_allclose(mas.protocol_general([1.0, 0.0], edge, 1.0, 1.0), [-1, 1])
    np.testing.assert_allclose(mas.protocol_general([1.0, 0.0], edge, 1.0, 0.5), [-1, 1])
    np.testing.assert_allclose(mas.protocol_general([0.25, 0.0], edge, 1.0, 0.5), [-0.5, 0.5])
    np.testing.assert_array_equal(mas.pt_consensus(np.ones(2), 0.3, edge, 1.0, 1.0, H1), [0, 0])
    np.testing.assert_allclose(mas.pt_consensus(np.array([1.0, 0.0]), 0.0, edge, 1.0, 1.0, H1),
                               [-2, 2])


def test_linear_protocol_matches_expm_at_ten_points():
    from scipy.linalg import expm
    g = mas.cycle(5)
    x0 = np.array([1.0, -2.0, 0.5, 0.0, 3.0])
    tr = mas.simulate_general(g, x0, 0.7, 1.0, 2.0, 1e-3)
    lap = mas.laplacian(g)
    for idx in np.linspace(0, len(tr.times) - 1, 10).astype(int):
        exact = expm(-0.7 * tr.times[idx] * lap) @ x0
        assert np.linalg.norm(tr.states[idx] - exact) <= 1e-6 * np.linalg.norm(exact)


def test_consensus_closed_loop():
    g = mas.cycle(4)
    tr = mas.simulate_consensus(g, [1.0, 0.0, -1.0, 0.5], H1, 1.0, 1 / mas.lambda2(g))
    assert tr.extras["chi_norm"][-1] <= 1e-3
    assert tr.extras["bound_ok"].min() == 1.0
    chi = mas.disagreement(tr.states)
    assert np.abs(chi.sum(axis=1)).max() <= 1e-12


def test_containment_values():
    one = mas.containment_decompose(mas.chain(2))
    assert one.L1.tolist() == [[1.0]] and one.P.tolist() == [[1.0]]
    assert one.Q.tolist() == [[2.0]] and one.c_min == pytest.approx(1.0)
    dec = mas.containment_decompose(mas.chain(3))
    u = mas.pt_containment_step(np.array([0.0, 1.0, 2.0]), 0.0, mas.chain(3), 1.0, dec.c_min,
                                H1, dec)
    np.testing.assert_allclose(u, [0.0, -(1 + dec.c_min), -(1 + dec.c_min)])
    same = mas.pt_containment_step(np.full(3, 0.7), 0.4, mas.chain(3), 1.0, dec.c_min, H1, dec)
    np.testing.assert_array_equal(same, 0.0)
    with pytest.raises(Exception):
        mas.containment_decompose(mas.from_edges(3, [(0, 1, 1.0)], directed=True))
    tr, _ = mas.simulate_containment(mas.chain(3), [0.5, -1.0, 2.0], H1, 1.0)
    assert np.abs(tr.states[-1] - tr.states[-1, 0]).max() <= 1e-3


# -- benchmark -----------------------------------------------------------------------------------

def test_benchmark_values():
    assert bench.ft_first_order_settling(1.0, 1 / 3, 1.0) == pytest.approx(1.5)
    assert bench.ft_first_order_settling(1.0, 0.5, 4.0) == pytest.approx(4.0)
    assert bench.ft_first_order_settling(1.0, 0.5, 0.0) == 0.0
    assert bench.ft_equals_pt_gain(0.5) == 2.0
    assert bench.ft_equals_pt_gain(2 / 3) == pytest.approx(3.0)
    assert bench.ft_equals_pt_gain(1e-12) == pytest.approx(1.0)
    u = bench.double_integrator_controller("prescribed", (0.2, -0.2), 0.0, {"T": 1.0})
    assert u == pytest.approx(-0.8)
    assert bench.double_integrator_controller("prescribed", (0.0, 0.0), 0.0, {"T": 1.0}) == 0.0
    u = bench.double_integrator_controller("finite", (0.0, 1.0), 0.0, {})
    assert u == pytest.approx(-1 - 0.6 ** 0.2)
