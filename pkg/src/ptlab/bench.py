"""Finite-, fixed-, predefined- and prescribed-time controllers side by side.

Two benchmarks live here:

* the first-order integrator ``x' = u``, where the autonomous finite-time
  law ``-k x^[alpha]`` coincides along its own trajectory with the
  time-varying law ``-k_pt x / (T - t)`` for ``k_pt = 1/(1 - alpha)`` and
  ``T`` its settling time;
* the double integrator ``x1' = x2, x2' = u`` under one controller of each
  family, with settling statistics and the families' settling-time claims.

The fixed- and predefined-time laws contain ``sgn`` terms, so their closed
loops are discontinuous; fixed-step RK4 integrates them anyway and the
resulting chatter stays far below the settling threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import Trajectory, integrate, settling, write_csv
from .errors import ValidationError
from .scaling import TimeHorizon

FAMILIES = ("finite", "fixed", "predefined", "prescribed")
FIXED_TIME_BOUND = math.pi + math.pi / math.sqrt(2)
REFERENCE_INITIAL_STATES = ((0.2, -0.2), (0.4, 0.0))
DPHI_FLOOR = 1e-12


def signed_power(v, a):
    """``v^[a] = |v|^a sgn(v)``; odd in ``v``."""
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.abs(v) ** a


# -- first-order equivalence -------------------------------------------------------

def ft_first_order_settling(k, alpha, x0):
    """Settling time ``|x0|^(1 - alpha) / (k (1 - alpha))`` of ``x' = -k x^[alpha]``."""
    if not k > 0 or not 0 < alpha < 1:
        raise ValidationError(f"need k > 0 and 0 < alpha < 1 (got k={k}, alpha={alpha})")
    return abs(x0) ** (1 - alpha) / (k * (1 - alpha))


def ft_first_order_solution(t, k, alpha, x0):
    """Closed-form trajectory of ``x' = -k x^[alpha]``; zero after the settling time."""
    t = np.asarray(t, dtype=float)
    base = np.clip(abs(x0) ** (1 - alpha) - k * (1 - alpha) * t, 0.0, None)
    return np.sign(x0) * base ** (1 / (1 - alpha))


def ft_equals_pt_gain(alpha):
    """Gain ``1 / (1 - alpha)`` making ``-k x / (T - t)`` reproduce ``-x^[alpha]``."""
    if not 0 < alpha < 1:
        raise ValidationError(f"need 0 < alpha < 1 (got {alpha})")
    return 1.0 / (1.0 - alpha)


@dataclass(frozen=True)
class EquivalenceResult:
    alpha: float
    x0: float
    T_f: float
    max_deviation: float
    tolerance: float
    dt: float

    @property
    def ok(self):
        return self.max_deviation <= self.tolerance


def equivalence_check(alpha, x0, *, eps_fraction=1e-3, dt=None):
    """Integrate both first-order laws on ``[0, T_f - eps]`` and compare pointwise.

    The finite-time law uses ``k = 1``; the prescribed-time law uses
    ``k = 1/(1 - alpha)`` and ``T = T_f``. ``eps = eps_fraction * T_f`` and
    ``dt`` defaults to ``eps / 10``. The tolerance is ``1e-6 + 10 dt``.
    """
    tf = ft_first_order_settling(1.0, alpha, x0)
    h = TimeHorizon(tf, eps=eps_fraction * tf, mu_cap=math.inf)
    dt = h.eps / 10 if dt is None else dt
    kp = ft_equals_pt_gain(alpha)
    ft = integrate(lambda t, x: -math.copysign(abs(x) ** alpha, x) if x else 0.0,
                   float(x0), h.t_stop, dt, h)
    pt = integrate(lambda t, x: -kp * x / (tf - t), float(x0), h.t_stop, dt, h)
    dev = float(np.max(np.abs(ft.states - pt.states)))
    return EquivalenceResult(alpha=alpha, x0=x0, T_f=tf, max_deviation=dev,
                             tolerance=1e-6 + 10 * dt, dt=dt)


# -- double integrator ---------------------------------------------------------------

def _spow(v, a):
    return math.copysign(abs(v) ** a, v) if v else 0.0


def _sgn(v):
    return (v > 0) - (v < 0)


def pdt_phi(v, Ti):
    """``Phi(v, Ti) = (5 / (2 Ti)) exp(|v|^0.4) |v|^0.6 sgn(v)``."""
    av = abs(v)
    return 2.5 / Ti * math.exp(av ** 0.4) * av ** 0.6 * _sgn(v)


def pdt_dphi(v, Ti):
    """``dPhi/dv = (1 / Ti) exp(|v|^0.4)(1 + 1.5 |v|^-0.4)`` with ``|v|`` floored at 1e-12."""
    av = max(abs(v), DPHI_FLOOR)
    return math.exp(av ** 0.4) * (1.0 + 1.5 * av ** -0.4) / Ti


def double_integrator_controller(kind, x, t, params):
    """Control input for state ``x = (x1, x2)`` under family ``kind``.

    ``params``: ``T`` for prescribed, ``T1`` and ``T2`` for predefined; the
    finite and fixed laws have their gains built in. The prescribed law is
    ``-9 mu^2 x1 - 5 mu x2`` with ``mu = 1/(T - t)`` before ``T`` and 0 after.
    """
    x1, x2 = float(x[0]), float(x[1])
    if kind == "finite":
        return -_spow(x2, 1 / 3) - _spow(x1 + 0.6 * _spow(x2, 5 / 3), 0.2)
    if kind == "fixed":
        s = x2 + _spow(_spow(x2, 2) + x1 + x1 ** 3, 0.5)
        return -0.5 * (1 + 3 * x1 * x1) * _sgn(s) - _spow(s + s ** 3, 0.5)
    if kind == "predefined":
        T1, T2 = params["T1"], params["T2"]
        sigma = pdt_phi(x1, T1) + x2
        return -pdt_dphi(x1, T1) * x2 - pdt_phi(sigma, T2)
    if kind == "prescribed":
        T = params["T"]
        if t >= T:
            return 0.0
        m = 1.0 / (T - t)
        return -2 * m * (x2 + 3 * m * x1) - 3 * m * m * x1 - 3 * m * x2
    raise ValidationError(f"unknown controller family {kind!r}; choose from {FAMILIES}")


def _double_integrator(kind, params):
    def rhs(t, x):
        return (x[1], double_integrator_controller(kind, x, t, params))
    return rhs


@dataclass(frozen=True)
class ComparisonScenario:
    """One double-integrator run.

    ``horizon`` is the simulated span; ``params`` holds ``T`` (prescribed),
    ``T1``/``T2`` (predefined) and optionally ``eps`` (prescribed stop
    margin, default ``1e-4 T``). ``dt`` defaults to 1e-4, or ``eps / 10``
    up to the prescribed time.
    """

    kind: str
    x0: tuple
    horizon: float
    params: dict = field(default_factory=dict)
    dt: float = 1e-4

    def __post_init__(self):
        bad = []
        if self.kind not in FAMILIES:
            bad.append(f"controller_kind must be one of {FAMILIES} (got {self.kind!r})")
        if len(self.x0) != 2:
            bad.append("x0 must have two entries")
        if not self.dt > 0:
            bad.append(f"dt > 0 (got {self.dt})")
        need = {"prescribed": ("T",), "predefined": ("T1", "T2")}.get(self.kind, ())
        for name in need:
            if name not in self.params:
                bad.append(f"parameter {name!r} is required for {self.kind}")
            elif not self.params[name] > 0:
                bad.append(f"{name} > 0 (got {self.params[name]})")
        if not bad and self.bound is not None and self.horizon < self.bound:
            bad.append(f"horizon {self.horizon} does not cover the settling bound {self.bound:.6g}")
        if bad:
            raise ValidationError(bad)

    @property
    def bound(self):
        if self.kind == "fixed":
            return FIXED_TIME_BOUND
        if self.kind == "predefined":
            return self.params["T1"] + self.params["T2"]
        if self.kind == "prescribed":
            return self.params["T"]
        return None

    @property
    def threshold(self):
        return 1e-3 * (1 + math.hypot(*self.x0))

    @property
    def label(self):
        return f"{self.kind}_x1_{self.x0[0]:g}_x2_{self.x0[1]:g}"


def reference_scenarios():
    """The eight benchmark runs: four families times two initial states."""
    out = []
    for x0 in REFERENCE_INITIAL_STATES:
        out.append(ComparisonScenario("finite", x0, 8.0))
        out.append(ComparisonScenario("fixed", x0, 8.0))
        out.append(ComparisonScenario("predefined", x0, 8.0, {"T1": 0.2, "T2": 0.8}))
        out.append(ComparisonScenario("prescribed", x0, 2.0, {"T": 1.0}))
    return out


def simulate_scenario(sc):
    """Integrate one scenario; prescribed runs switch to ``u = 0`` at ``T - eps``."""
    x0 = tuple(float(v) for v in sc.x0)
    if sc.kind != "prescribed":
        rhs = _double_integrator(sc.kind, sc.params)
        traj = integrate(rhs, x0, sc.horizon, sc.dt,
                         control=lambda t, x: double_integrator_controller(sc.kind, x, t, sc.params))
    else:
        T = sc.params["T"]
        h = TimeHorizon(T, eps=sc.params.get("eps"), mu_cap=math.inf)
        dt_pt = min(sc.dt, h.eps / 10)
        rhs = _double_integrator("prescribed", sc.params)
        head = integrate(rhs, x0, h.t_stop, dt_pt, h,
                         control=lambda t, x: double_integrator_controller("prescribed", x, t,
                                                                           sc.params))
        # after the stop margin the input is switched off: x1' = x2, x2' = 0
        tail = integrate(lambda t, x: (x[1], 0.0), tuple(head.states[-1].tolist()), sc.horizon,
                         sc.dt, t0=h.t_stop)
        traj = Trajectory(
            times=np.concatenate([head.times, tail.times[1:]]),
            states=np.concatenate([head.states, tail.states[1:]]),
            controls=np.concatenate([head.controls, np.zeros(len(tail.times) - 1)]),
            events=head.events + tail.events)
    traj.state_labels = ["x1", "x2"]
    traj.control_labels = ["u"]
    return traj


@dataclass(frozen=True)
class ComparisonRow:
    kind: str
    x1_0: float
    x2_0: float
    settle_time: float | None
    bound: float | None
    within_bound: bool
    max_u: float
    terminal_norm: float
    threshold: float

    def csv_fields(self):
        def num(v):
            return "nan" if v is None else format(float(v), ".17g")
        return [self.kind, num(self.x1_0), num(self.x2_0), num(self.settle_time),
                num(self.bound), "true" if self.within_bound else "false", num(self.max_u)]


SUMMARY_HEADER = ["kind", "x1_0", "x2_0", "settle_time", "bound", "within_bound", "max_u"]


def summarize(sc, traj):
    rep = settling(traj, sc.threshold)
    bound = sc.bound
    if rep.settle_time is None:
        within = False
    elif bound is None:
        within = True
    else:
        # prescribed runs may land one grid step past T
        within = rep.settle_time <= bound + (sc.dt if sc.kind == "prescribed" else 0.0)
    return ComparisonRow(kind=sc.kind, x1_0=sc.x0[0], x2_0=sc.x0[1],
                         settle_time=rep.settle_time, bound=bound, within_bound=within,
                         max_u=rep.max_control, terminal_norm=rep.terminal_norm,
                         threshold=sc.threshold)


PLOT_SCRIPT = '''\
"""Plot the comparison trajectories written next to this file."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).parent
runs = [line.strip() for line in (here / "runs.txt").read_text().splitlines() if line.strip()]
fig, axes = plt.subplots(len(runs) // 2, 2, figsize=(10, 2.2 * len(runs) // 2), squeeze=False)
for ax, name in zip(axes.flat, runs):
    with open(here / name, newline="") as fh:
        rows = list(csv.DictReader(fh))
    t = [float(r["t"]) for r in rows]
    for key in ("x1", "x2"):
        ax.plot(t, [float(r[key]) for r in rows], label=key)
    ax.set_title(name[:-4], fontsize=8)
    ax.legend(fontsize=7)
fig.tight_layout()
fig.savefig(here / "comparison.png", dpi=120)
'''


def run_comparison(scenarios, out_dir=None, plot_script=False):
    """Simulate every scenario; optionally write per-run CSVs and ``summary.csv``.

    Returns the list of :class:`ComparisonRow` in scenario order.
    """
    rows, names = [], []
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for sc in scenarios:
        traj = simulate_scenario(sc)
        rows.append(summarize(sc, traj))
        if out is not None:
            name = f"{sc.label}.csv"
            write_csv(traj, out / name)
            names.append(name)
    if out is not None:
        lines = [",".join(SUMMARY_HEADER)] + [",".join(r.csv_fields()) for r in rows]
        (out / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        if plot_script:
            (out / "runs.txt").write_text("\n".join(names) + "\n", encoding="utf-8")
            (out / "plot_comparison.py").write_text(PLOT_SCRIPT, encoding="utf-8")
    return rows


def contrast(rows):
    """Relative spread of settling times between initial states, per family."""
    by_kind = {}
    for r in rows:
        by_kind.setdefault(r.kind, []).append(r.settle_time)
    spread = {}
    for kind, times in by_kind.items():
        if any(t is None for t in times) or len(times) < 2:
            spread[kind] = math.nan
        else:
            spread[kind] = (max(times) - min(times)) / max(times)
    return spread
