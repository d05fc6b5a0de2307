"""Prescribed-time controllers for the scalar plant ``x' = b(x, t) u + f(x, t)``.

Four laws are provided: a robust state-scaling law and three time-scaling
adaptive laws (known sign of ``b`` with constant or time-varying parameter,
and a Nussbaum-gain law for an unknown sign). Every controller is a pure
function of ``(x, t, state)`` that also broadcasts over an array of ``x``
values, so a batch of closed loops can be integrated in one pass.

Adaptive controllers return the derivatives of their estimates instead of
integrating them; :func:`simulate_scalar` stacks plant and estimator into one
RK4 state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .engine import Trajectory, integrate, settling
from .errors import ConfigurationError, NumericError, ValidationError
from .scaling import TimeHorizon, a_prime, mu

KINDS = ("robust", "adaptive_ti", "adaptive_tv", "nussbaum")
B_SIGNS = ("positive", "negative", "unknown")
ENVELOPE_RTOL = 1e-9


def sgn(v):
    """Sign with ``sgn(0) = 0`` (numpy's convention)."""
    return np.sign(v)


# -- disturbances -----------------------------------------------------------

@dataclass(frozen=True)
class Disturbance:
    """Named bounded signal ``d(t)``.

    ``constant`` is ``amplitude``; ``sinusoid`` is ``amplitude * sin(2 pi f t)``;
    ``square`` is ``amplitude * sgn(sin(2 pi f t))``. ``offset`` is added to
    all three.
    """

    kind: str = "constant"
    amplitude: float = 0.0
    frequency: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        bad = []
        if self.kind not in ("constant", "sinusoid", "square"):
            bad.append(f"unknown disturbance kind {self.kind!r}")
        if not math.isfinite(self.amplitude):
            bad.append("amplitude must be finite")
        if not self.frequency > 0:
            bad.append(f"frequency must be > 0 (got {self.frequency})")
        if bad:
            raise ValidationError(bad)

    @property
    def bound(self):
        """Supremum of ``|d(t)|``."""
        return abs(self.offset) + abs(self.amplitude)

    def __call__(self, t):
        if self.kind == "constant":
            return self.offset + self.amplitude + 0.0 * t
        sin = np.sin if np.ndim(t) else math.sin
        s = sin(2 * math.pi * self.frequency * t)
        if self.kind == "sinusoid":
            return self.offset + self.amplitude * s
        return self.offset + self.amplitude * ((s > 0) * 1.0 - (s < 0) * 1.0)


def disturbance_presets(amplitude=0.5):
    """The three standard profiles used in regulation sweeps."""
    return {
        "constant": Disturbance("constant", amplitude),
        "sinusoid": Disturbance("sinusoid", amplitude, 1.0),
        "square": Disturbance("square", amplitude, 2.0),
    }


class DisturbanceBank:
    """Several signals evaluated together, one per batch member.

    A scalar ``t`` gives shape ``(B,)``; a column of times ``(N, 1)`` gives ``(N, B)``.
    """

    def __init__(self, signals):
        self.signals = list(signals)
        self.bound = max(s.bound for s in self.signals)
        kinds = np.array([s.kind for s in self.signals])
        self._offset = np.array([s.offset for s in self.signals], dtype=float)
        amp = np.array([s.amplitude for s in self.signals], dtype=float)
        self._const = np.where(kinds == "constant", amp, 0.0) + self._offset
        self._sin_amp = np.where(kinds == "sinusoid", amp, 0.0)
        self._sq_amp = np.where(kinds == "square", amp, 0.0)
        self._omega = 2 * math.pi * np.array([s.frequency for s in self.signals], dtype=float)

    def __call__(self, t):
        s = np.sin(self._omega * t)
        return self._const + self._sin_amp * s + self._sq_amp * np.sign(s)


# -- plant ------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarPlant:
    """``x' = b(x, t) u + f(x, t)`` with its envelope data.

    ``psi`` bounds the drift: ``|f(x, t)| <= d * psi(x)`` for the level
    ``d_bound`` (checked after a run when given). ``psi_bar`` is the factor
    with ``psi(x) = psi_bar(x) * x`` needed by the adaptive laws.
    All callables must broadcast over numpy arrays of ``x``.
    """

    b: Callable
    f: Callable
    psi: Callable
    psi_bar: Callable | None = None
    b_sign: str = "positive"
    b_lower: float | None = None
    d_bound: float | None = None
    name: str = "custom"

    def __post_init__(self):
        bad = []
        if self.b_sign not in B_SIGNS:
            bad.append(f"b_sign must be one of {B_SIGNS} (got {self.b_sign!r})")
        if self.b_lower is not None and not self.b_lower > 0:
            bad.append(f"b_lower must be > 0 (got {self.b_lower})")
        if self.b_sign == "unknown" and self.b_lower is None:
            bad.append("an unknown-sign plant needs b_lower (|b| >= b_lower > 0)")
        if self.psi_bar is not None:
            bad += check_factorization(self.psi, self.psi_bar)
        if bad:
            raise ValidationError(bad)

    @property
    def sign(self):
        return {"positive": 1.0, "negative": -1.0, "unknown": 0.0}[self.b_sign]


def check_factorization(psi, psi_bar, samples=None):
    """Violations of ``psi(x) = psi_bar(x) * x`` (and ``psi(0) = 0``) at sample points."""
    xs = np.linspace(-3.0, 3.0, 61) if samples is None else np.asarray(samples, dtype=float)
    p = np.asarray(psi(xs), dtype=float)
    resid = np.abs(p - np.asarray(psi_bar(xs), dtype=float) * xs)
    bad = []
    worst = int(np.argmax(resid - ENVELOPE_RTOL * (1 + np.abs(p))))
    if resid[worst] > ENVELOPE_RTOL * (1 + abs(p[worst])):
        bad.append(f"psi_bar does not factor psi: |psi - psi_bar*x| = {resid[worst]:.3e} "
                   f"at x = {xs[worst]:.6g}")
    p0 = float(np.asarray(psi(np.zeros(1)))[0])
    if abs(p0) > ENVELOPE_RTOL:
        bad.append(f"psi(0) must be 0 when psi_bar is given (got {p0:.3e})")
    return bad


def robust_benchmark_plant(d):
    """Plant with hidden gain ``b = 1.25 + 0.75 sin(3t + x)`` in ``[0.5, 2]``.

    The drift is ``f = d(t) * psi(x)`` with ``psi = sqrt(1 + x^2)``; ``d`` may
    return an array (one value per batch member).
    """
    def b(x, t):
        return 1.25 + 0.75 * np.sin(3.0 * t + x)

    def psi(x):
        return np.sqrt(1.0 + np.square(x))

    bound = getattr(d, "bound", None)
    return ScalarPlant(b=b, f=lambda x, t: d(t) * psi(x), psi=psi,
                       b_sign="positive", b_lower=0.5, d_bound=bound, name="robust_benchmark")


def polynomial_plant(b, theta, b_sign=None, b_lower=None):
    """``x' = b u + theta(t) x^2`` with ``psi = x^2`` and ``psi_bar = x``.

    ``b`` is a constant; ``theta`` is a constant or a callable of ``t``.
    """
    b = float(b)
    th = theta if callable(theta) else (lambda t, c=float(theta): c)
    if b_sign is None:
        b_sign = "positive" if b > 0 else "negative"
    return ScalarPlant(
        b=lambda x, t: b + 0.0 * x,
        f=lambda x, t: th(t) * np.square(x),
        psi=np.square,
        psi_bar=lambda x: 1.0 * np.asarray(x),
        b_sign=b_sign,
        b_lower=abs(b) if b_lower is None else b_lower,
        name="polynomial")


def _on_samples(fn, traj):
    """Evaluate ``fn(x, t)`` on every sample, vectorized when ``fn`` broadcasts."""
    xs = np.asarray(traj.states, dtype=float)
    ts = traj.times.reshape((-1,) + (1,) * (xs.ndim - 1))
    try:
        out = np.asarray(fn(xs, ts), dtype=float)
        if out.shape == xs.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([fn(x, t) for t, x in zip(traj.times, xs)], dtype=float).reshape(xs.shape)


def check_envelope(plant, traj, d_bound=None):
    """Count sampled points violating ``|f(x, t)| <= d * psi(x)``."""
    d = plant.d_bound if d_bound is None else d_bound
    if d is None:
        return 0
    f = np.abs(_on_samples(plant.f, traj))
    lim = d * np.abs(np.asarray(plant.psi(np.asarray(traj.states, dtype=float)), dtype=float))
    return int(np.count_nonzero(f > lim * (1 + 1e-9) + 1e-15))


def check_gain_sign(plant, traj):
    """Count sampled points where ``b`` contradicts the declared sign or underbound."""
    b = _on_samples(plant.b, traj)
    bad = 0
    if plant.b_sign != "unknown":
        bad += int(np.count_nonzero(np.sign(b) != plant.sign))
    if plant.b_lower is not None:
        bad += int(np.count_nonzero(np.abs(b) < plant.b_lower * (1 - 1e-12)))
    return bad


# -- controller parameters and estimates --------------------------------------

def nussbaum_default(xi):
    """``N(xi) = exp(xi^2) cos(pi xi / 2)``."""
    return np.exp(np.square(xi)) * np.cos(0.5 * np.pi * xi)


@dataclass(frozen=True)
class ControllerSpec:
    """Static parameters of one controller.

    ``theta`` is the robust law's damping gain; the ``gamma_*`` fields are the
    adaptation rates of the adaptive laws; ``nussbaum`` is the gain function
    used by the unknown-sign law.
    """

    kind: str
    k: float
    theta: float = 0.0
    gamma_theta: float = 1.0
    gamma_rho: float = 1.0
    gamma_delta: float = 1.0
    nussbaum: Callable = nussbaum_default

    def __post_init__(self):
        bad = []
        if self.kind not in KINDS:
            bad.append(f"controller kind must be one of {KINDS} (got {self.kind!r})")
        if not self.k > 0:
            bad.append(f"k > 0 (got {self.k})")
        if self.kind == "robust" and not self.theta > 0:
            bad.append(f"theta > 0 (got {self.theta})")
        for name in ("gamma_theta", "gamma_rho", "gamma_delta"):
            if not getattr(self, name) > 0:
                bad.append(f"{name} > 0 (got {getattr(self, name)})")
        if bad:
            raise ValidationError(bad)


@dataclass(frozen=True)
class AdaptiveState:
    """Adaptive estimates ``(theta_hat, rho_hat, delta_hat, xi)``.

    Fields are floats or arrays broadcasting with ``x``. The same type carries
    the estimate derivatives returned by the controllers.
    """

    theta_hat: float = 0.0
    rho_hat: float = 1.0
    delta_hat: float = 0.0
    xi: float = 0.5

    def as_array(self, shape=()):
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), shape)
                         for v in (self.theta_hat, self.rho_hat, self.delta_hat, self.xi)])

    @classmethod
    def from_array(cls, arr):
        return cls(*arr)


ESTIMATE_LABELS = ("theta_hat", "rho_hat", "delta_hat", "xi")
_ZERO = AdaptiveState(0.0, 0.0, 0.0, 0.0)


# -- control laws -------------------------------------------------------------

def robust_pt(x, t, k, theta, plant, h):
    """Robust law ``u = -k z - theta z (psi(x) + |z| / T)^2`` with ``z = mu(t) x``.

    Needs only ``b > 0``; the magnitude of ``b`` and the drift level stay
    unknown to the controller.
    """
    z = mu(t, h) * x
    phi = plant.psi(x) + np.abs(z) / h.T
    return -k * z - theta * z * phi * phi


def _known_sign(plant, name):
    if plant.b_sign == "unknown":
        raise ConfigurationError(
            f"{name} needs a known sign of b; use the Nussbaum controller for unknown sign")
    return plant.sign


def adaptive_pt_ti(x, t, state, spec, plant, h):
    """Time-scaling adaptive law for a constant unknown parameter.

    Returns ``(u, derivatives)`` where ``u = rho_hat * u_bar`` with
    ``u_bar = -(k a'(t) x + theta_hat^2 x / 2 + psi_bar(x)^2 x / 2)``.
    """
    s = _known_sign(plant, "adaptive_pt_ti")
    pb = plant.psi_bar(x)
    ubar = -(spec.k * a_prime(t, h) * x + 0.5 * state.theta_hat ** 2 * x + 0.5 * pb * pb * x)
    u = state.rho_hat * ubar
    deriv = AdaptiveState(
        theta_hat=spec.gamma_theta * x * plant.psi(x),
        rho_hat=-spec.gamma_rho * s * x * ubar,
        delta_hat=0.0 * x,
        xi=0.0 * x)
    return u, deriv


def adaptive_pt_tv(x, t, state, spec, plant, h):
    """Adaptive law with the extra compensation ``v = delta_hat x (1 + psi_bar^2) / 2``
    for a time-varying parameter."""
    s = _known_sign(plant, "adaptive_pt_tv")
    pb2 = plant.psi_bar(x) ** 2
    v = 0.5 * state.delta_hat * x * (1 + pb2)
    ubar = -(spec.k * a_prime(t, h) * x + 0.5 * state.theta_hat ** 2 * x + 0.5 * pb2 * x + v)
    u = state.rho_hat * ubar
    deriv = AdaptiveState(
        theta_hat=spec.gamma_theta * x * plant.psi(x),
        rho_hat=-spec.gamma_rho * s * x * ubar,
        delta_hat=0.5 * spec.gamma_delta * x * x * (1 + pb2),
        xi=0.0 * x)
    return u, deriv


def nussbaum_pt(x, t, state, spec, plant, h):
    """Nussbaum-gain law ``u = N(xi) u_bar`` for a ``b`` of unknown sign.

    ``u_bar = k a'(t) x + (1 + theta_hat^2 psi_bar^2 + delta_hat (1 + psi_bar^2)) x / 2``
    carries no leading minus, so ``xi' = x u_bar`` is nonnegative.

    Raises
    ------
    NumericError
        When ``N(xi)`` is not finite.
    """
    pb2 = plant.psi_bar(x) ** 2
    ubar = (spec.k * a_prime(t, h) * x
            + 0.5 * (1 + state.theta_hat ** 2 * pb2 + state.delta_hat * (1 + pb2)) * x)
    n = spec.nussbaum(state.xi)
    if not np.all(np.isfinite(n)):
        raise NumericError(f"Nussbaum gain is not finite at xi={state.xi!r}", t=t, state=x)
    deriv = AdaptiveState(
        theta_hat=spec.gamma_theta * x * plant.psi(x),
        rho_hat=0.0 * x,
        delta_hat=spec.gamma_delta * x * x * (1 + pb2),
        xi=x * ubar)
    return n * ubar, deriv


ADAPTIVE_LAWS = {"adaptive_ti": adaptive_pt_ti, "adaptive_tv": adaptive_pt_tv,
                 "nussbaum": nussbaum_pt}


def check_gain_condition(spec, state0, plant):
    """Validate the initial-estimate and gain hypotheses of the known-sign laws."""
    if spec.kind not in ("adaptive_ti", "adaptive_tv"):
        return
    s = _known_sign(plant, spec.kind)
    rho0 = np.asarray(state0.rho_hat, dtype=float)
    bad = []
    if np.any(np.sign(rho0) != s):
        bad.append(f"rho_hat(0) must have the sign of b ({plant.b_sign})")
    elif plant.b_lower is None:
        bad.append("the gain condition needs b_lower")
    else:
        k_min = float(np.max(1.0 / (np.abs(rho0) * plant.b_lower)))
        if not spec.k > k_min:
            bad.append(f"controller.k must exceed 1/(|rho_hat(0)| b_lower) = {k_min:.6g} "
                       f"(got {spec.k})")
    if np.any(np.asarray(state0.theta_hat) < 0):
        bad.append("theta_hat(0) >= 0")
    if np.any(np.asarray(state0.delta_hat) < 0):
        bad.append("delta_hat(0) >= 0")
    if bad:
        raise ValidationError(bad)


# -- closed loop ----------------------------------------------------------------

@dataclass
class ScalarRun:
    """Closed-loop result with diagnostics.

    ``diagnostics`` holds the a-posteriori hypothesis checks
    (``envelope_violations``, ``gain_sign_violations``), ``max_abs_u`` per
    member, and for adaptive runs the monotonicity checks.
    """

    spec: ControllerSpec
    trajectory: Trajectory
    diagnostics: dict = field(default_factory=dict)

    @property
    def terminal(self):
        return self.trajectory.states[-1]


def simulate_scalar(spec, plant, x0, horizon, *, state0=None, dt=None, t_end=None):
    """Integrate one or a batch of closed loops up to ``T - eps``.

    Parameters
    ----------
    spec : ControllerSpec
    plant : ScalarPlant
        Its callables must broadcast when ``x0`` is an array.
    x0 : float or array_like
        Initial state(s); an array runs one closed loop per entry.
    horizon : TimeHorizon
    state0 : AdaptiveState, optional
        Initial estimates for the adaptive kinds.
    dt : float, optional
        Defaults to ``min(1e-3, eps / 10)``.
    """
    if not isinstance(horizon, TimeHorizon):
        raise ValidationError("a TimeHorizon is required")
    dt = min(1e-3, horizon.eps / 10) if dt is None else dt
    t_end = horizon.t_stop if t_end is None else t_end
    x0 = np.asarray(x0, dtype=float)
    shape = x0.shape
    if spec.kind == "robust":
        if plant.b_sign != "positive":
            raise ConfigurationError("the robust law assumes b > 0")

        def rhs(t, x):
            return plant.b(x, t) * robust_pt(x, t, spec.k, spec.theta, plant, horizon) + plant.f(x, t)

        traj = integrate(rhs, float(x0) if x0.ndim == 0 else x0, t_end, dt, horizon,
                         control=lambda t, x: robust_pt(x, t, spec.k, spec.theta, plant, horizon))
        traj.state_labels = ["x"] if x0.ndim == 0 else [f"x{i + 1}" for i in range(x0.size)]
    else:
        state0 = AdaptiveState() if state0 is None else state0
        if spec.kind == "nussbaum":
            if np.any(np.asarray(state0.xi) <= 0):
                raise ValidationError("xi(0) > 0")
            if np.any(np.asarray(state0.theta_hat) < 0) or np.any(np.asarray(state0.delta_hat) < 0):
                raise ValidationError("theta_hat(0) >= 0 and delta_hat(0) >= 0")
        else:
            check_gain_condition(spec, state0, plant)
        if plant.psi_bar is None:
            raise ConfigurationError(f"{spec.kind} needs psi_bar")
        law = ADAPTIVE_LAWS[spec.kind]
        y0 = np.concatenate([x0[None, ...], state0.as_array(shape)])

        def rhs(t, y):
            x = y[0]
            u, d = law(x, t, AdaptiveState.from_array(y[1:]), spec, plant, horizon)
            dx = plant.b(x, t) * u + plant.f(x, t)
            return np.stack([dx, d.theta_hat, d.rho_hat, d.delta_hat, d.xi])

        def control(t, y):
            return law(y[0], t, AdaptiveState.from_array(y[1:]), spec, plant, horizon)[0]

        full = integrate(rhs, y0, t_end, dt, horizon, control=control)
        traj = Trajectory(times=full.times, states=full.states[:, 0], controls=full.controls,
                          estimates=np.moveaxis(full.states[:, 1:], 1, -1) if shape else
                          full.states[:, 1:],
                          events=full.events)
        if not shape:
            traj.state_labels = ["x"]
            traj.estimate_labels = list(ESTIMATE_LABELS)
    diag = _diagnostics(spec, plant, traj)
    for name in ("envelope_violations", "gain_sign_violations"):
        if diag[name]:
            traj.add_event(traj.times[-1], "hypothesis_warning", f"{name}={diag[name]}")
    if spec.kind != "robust" and diag.get("xi_dot_min", 0.0) < -1e-12:
        traj.add_event(traj.times[-1], "hypothesis_warning",
                       f"xi decreased (min rate {diag['xi_dot_min']:.3e})")
    return ScalarRun(spec=spec, trajectory=traj, diagnostics=diag)


def _diagnostics(spec, plant, traj):
    diag = {
        "envelope_violations": check_envelope(plant, traj),
        "gain_sign_violations": check_gain_sign(plant, traj),
        "max_abs_u": np.max(np.abs(traj.controls), axis=0),
    }
    if traj.estimates is None:
        return diag
    est = traj.estimates
    # estimates are (N, 4) for one loop or (N, B, 4) for a batch
    rho, xi = est[..., 1], est[..., 3]
    if spec.kind in ("adaptive_ti", "adaptive_tv"):
        drho = np.diff(rho, axis=0) * plant.sign
        diag["rho_monotone"] = bool(np.all(drho >= 0))
    steps = np.diff(traj.times)
    steps = steps.reshape((-1,) + (1,) * (xi.ndim - 1))
    diag["xi_dot_min"] = float(np.min(np.diff(xi, axis=0) / steps)) if len(xi) > 1 else 0.0
    diag["delta_monotone"] = bool(np.all(np.diff(est[..., 2], axis=0) >= 0))
    return diag


def regulation_report(run, x0, tol=1e-3):
    """Per-member terminal check ``|x(T - eps)| <= tol * max(1, |x0|)``."""
    x0 = np.asarray(x0, dtype=float)
    term = np.abs(np.asarray(run.terminal, dtype=float))
    limit = tol * np.maximum(1.0, np.abs(x0))
    return {"terminal": term, "limit": limit, "ok": bool(np.all(term <= limit))}


def crossing_time(traj, level):
    """Settling time (stays-below rule) of ``|x|`` to ``level`` for each member."""
    states = np.asarray(traj.states, dtype=float)
    if states.ndim == 1:
        return settling(traj, level).settle_time
    out = []
    for i in range(states.shape[1]):
        sub = Trajectory(times=traj.times, states=states[:, i])
        out.append(settling(sub, level).settle_time)
    return out


__all__ = [
    "AdaptiveState", "ControllerSpec", "Disturbance", "ScalarPlant", "ScalarRun",
    "adaptive_pt_ti", "adaptive_pt_tv", "check_envelope", "check_factorization",
    "check_gain_condition", "check_gain_sign", "crossing_time", "DisturbanceBank",
    "disturbance_presets", "nussbaum_default", "nussbaum_pt", "polynomial_plant",
    "regulation_report", "robust_benchmark_plant", "robust_pt", "sgn", "simulate_scalar",
]
