"""Settling-time bounds for Lyapunov differential inequalities.

Each :class:`Kind` is one classical inequality ``V' <= g(V, t)`` (finite-,
fixed-, predefined- and prescribed-time families). :func:`settling_bound`
evaluates the closed-form settling time and :func:`simulate_inequality`
integrates the equality case ``V' = g(V, t)``, the extremal trajectory
consistent with the inequality, so it can serve as a brute-force check on
the closed forms.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .engine import Event, Trajectory, make_grid, settling
from .errors import NumericError, UndefinedBoundError, UnsupportedError, ValidationError
from .scaling import TimeHorizon, mu

# exponent cap for exp(V**p); beyond it the descent is instantaneous at double precision
_EXP_CAP = 700.0


class Kind(str, enum.Enum):
    FT1 = "FT1"
    FastFT2 = "FastFT2"
    SemiGlobal3 = "SemiGlobal3"
    PracticalFT4 = "PracticalFT4"
    PracticalFT5 = "PracticalFT5"
    Fixed6 = "Fixed6"
    Fixed7 = "Fixed7"
    Fixed8 = "Fixed8"
    Fixed9 = "Fixed9"
    Predefined10 = "Predefined10"
    PT11 = "PT11"
    PT12 = "PT12"


ROWS = {
    Kind.FT1: ("finite-time", "V' <= -k V^q"),
    Kind.FastFT2: ("fast finite-time", "V' <= -k1 V^p - k2 V^q"),
    Kind.SemiGlobal3: ("semi-global finite-time", "V' <= -k1 V^q + k2 V"),
    Kind.PracticalFT4: ("practical finite-time", "V' <= -k V^q + eta"),
    Kind.PracticalFT5: ("practical finite-time", "V' <= -k1 V^q - k2 V + eta"),
    Kind.Fixed6: ("fixed-time", "V' <= -(alpha V^p + beta V^q)^k"),
    Kind.Fixed7: ("fixed-time", "V' <= -alpha V^(1-1/(2 gamma)) - beta V^(1+1/(2 gamma))"),
    Kind.Fixed8: ("fixed-time", "V' <= -alpha V^(2-p/q) - beta V^(p/q)"),
    Kind.Fixed9: ("fixed-time", "V' <= -k1 V^(m/n) - k2 V^(p/q)"),
    Kind.Predefined10: ("predefined-time", "V' <= -exp(V^p) V^(1-p) / (p Tp)"),
    Kind.PT11: ("prescribed-time", "V' <= -2 k mu V + mu d^2 / (4 theta)"),
    Kind.PT12: ("prescribed-time", "V' <= -k mu V + |d|"),
}


COEFFICIENTS = {
    Kind.FT1: ("k", "q"),
    Kind.FastFT2: ("k1", "k2", "p", "q"),
    Kind.SemiGlobal3: ("k1", "k2", "q"),
    Kind.PracticalFT4: ("k", "q", "eta", "theta"),
    Kind.PracticalFT5: ("k1", "k2", "q", "eta", "theta"),
    Kind.Fixed6: ("alpha", "beta", "p", "q", "k"),
    Kind.Fixed7: ("alpha", "beta", "gamma"),
    Kind.Fixed8: ("alpha", "beta", "p", "q"),
    Kind.Fixed9: ("k1", "k2", "m", "n", "p", "q"),
    Kind.Predefined10: ("p", "Tp"),
    Kind.PT11: ("k", "theta"),
    Kind.PT12: ("k",),
}

PRESCRIBED = (Kind.PT11, Kind.PT12)
PRACTICAL = (Kind.PracticalFT4, Kind.PracticalFT5)


def _is_odd_int(v):
    return float(v).is_integer() and int(v) % 2 == 1


def _range_violations(kind, c):
    bad = []

    def need(cond, text):
        if not cond:
            bad.append(text)

    pos = lambda *names: [need(c[n] > 0, f"{n} > 0 (got {c[n]})") for n in names]  # noqa: E731
    unit = lambda n: need(0 < c[n] < 1, f"0 < {n} < 1 (got {c[n]})")  # noqa: E731
    if kind is Kind.FT1:
        pos("k"); unit("q")
    elif kind is Kind.FastFT2:
        pos("k1", "k2"); need(c["p"] >= 1, f"p >= 1 (got {c['p']})"); unit("q")
    elif kind is Kind.SemiGlobal3:
        pos("k1", "k2"); unit("q")
    elif kind is Kind.PracticalFT4:
        pos("k"); unit("q"); unit("theta")
        need(0 < c["eta"] < math.inf, f"0 < eta < inf (got {c['eta']})")
    elif kind is Kind.PracticalFT5:
        pos("k1", "k2"); unit("q"); unit("theta")
        need(0 < c["eta"] < math.inf, f"0 < eta < inf (got {c['eta']})")
    elif kind is Kind.Fixed6:
        pos("alpha", "beta", "p", "q", "k")
        need(c["p"] * c["k"] < 1, f"p*k < 1 (got {c['p'] * c['k']})")
        need(c["q"] * c["k"] > 1, f"q*k > 1 (got {c['q'] * c['k']})")
    elif kind is Kind.Fixed7:
        pos("alpha", "beta"); need(c["gamma"] > 1, f"gamma > 1 (got {c['gamma']})")
    elif kind is Kind.Fixed8:
        pos("alpha", "beta")
        need(c["q"] > c["p"] > 0, f"q > p > 0 (got p={c['p']}, q={c['q']})")
        need(_is_odd_int(c["p"]) and _is_odd_int(c["q"]), "p and q odd integers")
    elif kind is Kind.Fixed9:
        pos("k1", "k2")
        need(c["q"] > c["p"] > 0, f"q > p > 0 (got p={c['p']}, q={c['q']})")
        need(c["m"] > c["n"] > 0, f"m > n > 0 (got m={c['m']}, n={c['n']})")
        need(all(_is_odd_int(c[n]) for n in "pqmn"), "p, q, m, n odd integers")
    elif kind is Kind.Predefined10:
        need(0 < c["p"] <= 1, f"0 < p <= 1 (got {c['p']})"); pos("Tp")
    elif kind is Kind.PT11:
        pos("k", "theta")
    elif kind is Kind.PT12:
        pos("k")
    return bad


@dataclass(frozen=True)
class LyapunovSpec:
    """One differential inequality with its coefficients and ``V(0)``."""

    kind: Kind
    coefficients: dict
    V0: float

    def __post_init__(self):
        try:
            kind = Kind(self.kind)
        except ValueError:
            raise ValidationError(f"unknown inequality kind {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        names = COEFFICIENTS[kind]
        given = dict(self.coefficients)
        bad = [f"missing coefficient {n!r}" for n in names if n not in given]
        bad += [f"unexpected coefficient {n!r} for {kind.value}" for n in given if n not in names]
        coeffs = {}
        for n in names:
            if n in given:
                try:
                    coeffs[n] = float(given[n])
                except (TypeError, ValueError):
                    bad.append(f"coefficient {n!r} is not a number")
        if not bad:
            bad += [f"{kind.value}: {v}" for v in _range_violations(kind, coeffs)]
        if not self.V0 >= 0:
            bad.append(f"V0 >= 0 (got {self.V0})")
        if bad:
            raise ValidationError(bad)
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "V0", float(self.V0))

    def __getitem__(self, name):
        return self.coefficients[name]

    @property
    def row(self):
        family, expr = ROWS[self.kind]
        return f"{self.kind.value} ({family}): {expr}"


def settling_bound(spec):
    """Closed-form settling time (or its bound) for ``spec``.

    Practical kinds (4 and 5) bound the time to reach their residual set;
    a start already inside the set gives 0.

    Raises
    ------
    UnsupportedError
        For the prescribed-time kinds, whose settling time is the user's T.
    UndefinedBoundError
        For the semi-global kind when ``V0`` lies outside the region where
        the logarithm is defined.
    """
    kind, c, V0 = spec.kind, spec.coefficients, spec.V0
    if kind in PRESCRIBED:
        raise UnsupportedError(f"{kind.value}: the settling time is the prescribed T itself")
    if kind is Kind.FT1:
        k, q = c["k"], c["q"]
        return V0 ** (1 - q) / (k * (1 - q))
    if kind is Kind.FastFT2:
        k1, k2, p, q = c["k1"], c["k2"], c["p"], c["q"]
        if p == 1:
            return math.log1p(k1 / k2 * V0 ** (1 - q)) / (k1 * (1 - q))
        # the second term is the time spent above V = 1; it vanishes when V0 <= 1
        above = max(V0, 1.0)
        return 1 / (k2 * (1 - q)) + (above ** (1 - p) - 1) / (k1 * (1 - p))
    if kind is Kind.SemiGlobal3:
        k1, k2, q = c["k1"], c["k2"], c["q"]
        arg = 1 - k2 / k1 * V0 ** (1 - q)
        if arg <= 0:
            raise UndefinedBoundError(
                f"bound undefined for these parameters: V0^(1-q) = {V0 ** (1 - q):.6g} "
                f"is not below k1/k2 = {k1 / k2:.6g}")
        return -math.log(arg) / (k2 * (1 - q))
    if kind is Kind.PracticalFT4:
        k, q, eta, th = c["k"], c["q"], c["eta"], c["theta"]
        level = (eta / (k * (1 - th))) ** ((1 - q) / q)
        return max(V0 ** (1 - q) - level, 0.0) / (k * th * (1 - q))
    if kind is Kind.PracticalFT5:
        k1, k2, q, th = c["k1"], c["k2"], c["q"], c["theta"]
        w0 = V0 ** (1 - q)
        t1 = math.log((k2 * th * w0 + k1) / k1) / (k2 * th * (1 - q))
        t2 = math.log((k2 * w0 + th * k1) / (th * k1)) / (k2 * (1 - q))
        return max(t1, t2)
    if kind is Kind.Fixed6:
        a, b, p, q, k = c["alpha"], c["beta"], c["p"], c["q"], c["k"]
        return 1 / (a ** k * (1 - p * k)) + 1 / (b ** k * (q * k - 1))
    if kind is Kind.Fixed7:
        return math.pi * c["gamma"] / math.sqrt(c["alpha"] * c["beta"])
    if kind is Kind.Fixed8:
        p, q = c["p"], c["q"]
        return q * math.pi / (2 * math.sqrt(c["alpha"] * c["beta"]) * (q - p))
    if kind is Kind.Fixed9:
        return c["n"] / (c["k1"] * (c["m"] - c["n"])) + c["q"] / (c["k2"] * (c["q"] - c["p"]))
    if kind is Kind.Predefined10:
        return c["Tp"]
    raise UnsupportedError(kind.value)  # pragma: no cover


def semi_global_literal(spec):
    """The semi-global formula with the printed argument ``1 - (k1/k2) V0^(1-q)``.

    Kept for comparison only: wherever this logarithm is defined its value is
    negative, so it cannot bound a settling time.
    """
    if spec.kind is not Kind.SemiGlobal3:
        raise UnsupportedError("only defined for SemiGlobal3")
    k1, k2, q = spec["k1"], spec["k2"], spec["q"]
    arg = 1 - k1 / k2 * spec.V0 ** (1 - q)
    if arg <= 0:
        raise UndefinedBoundError(f"bound undefined for these parameters (log argument {arg:.6g})")
    return math.log(arg) / (k2 * (1 - q))


def residual_level(spec):
    """Upper level of the residual set reached by the practical kinds (0 otherwise)."""
    c = spec.coefficients
    if spec.kind is Kind.PracticalFT4:
        return (c["eta"] / (c["k"] * (1 - c["theta"]))) ** (1 / c["q"])
    if spec.kind is Kind.PracticalFT5:
        th = c["theta"]
        return min(c["eta"] / ((1 - th) * c["k2"]),
                   (c["eta"] / ((1 - th) * c["k1"])) ** (1 / c["q"]))
    return 0.0


def default_threshold(spec):
    """Settling level: ``1e-6 * max(1, V0)``, or 110% of the residual level."""
    if spec.kind in PRACTICAL:
        return 1.1 * residual_level(spec)
    return 1e-6 * max(1.0, spec.V0)


def _signal(d):
    if d is None:
        return lambda t: 0.0
    if callable(d):
        return d
    value = float(d)
    return lambda t: value


def equality_rhs(spec, d=None, horizon=None):
    """``g(V, t)`` for the equality case; ``V`` is clamped at 0 before powers."""
    kind, c = spec.kind, spec.coefficients
    pw = math.pow
    if kind is Kind.FT1:
        k, q = c["k"], c["q"]
        return lambda t, v: -k * pw(max(v, 0.0), q)
    if kind is Kind.FastFT2:
        k1, k2, p, q = c["k1"], c["k2"], c["p"], c["q"]
        return lambda t, v: -k1 * pw(max(v, 0.0), p) - k2 * pw(max(v, 0.0), q)
    if kind is Kind.SemiGlobal3:
        k1, k2, q = c["k1"], c["k2"], c["q"]
        return lambda t, v: -k1 * pw(max(v, 0.0), q) + k2 * max(v, 0.0)
    if kind is Kind.PracticalFT4:
        k, q, eta = c["k"], c["q"], c["eta"]
        return lambda t, v: -k * pw(max(v, 0.0), q) + eta
    if kind is Kind.PracticalFT5:
        k1, k2, q, eta = c["k1"], c["k2"], c["q"], c["eta"]
        return lambda t, v: -k1 * pw(max(v, 0.0), q) - k2 * max(v, 0.0) + eta
    if kind is Kind.Fixed6:
        a, b, p, q, k = c["alpha"], c["beta"], c["p"], c["q"], c["k"]
        return lambda t, v: -pw(a * pw(max(v, 0.0), p) + b * pw(max(v, 0.0), q), k)
    if kind is Kind.Fixed7:
        a, b, g = c["alpha"], c["beta"], c["gamma"]
        p, q = 1 - 1 / (2 * g), 1 + 1 / (2 * g)
        return lambda t, v: -a * pw(max(v, 0.0), p) - b * pw(max(v, 0.0), q)
    if kind is Kind.Fixed8:
        a, b = c["alpha"], c["beta"]
        r = c["p"] / c["q"]
        return lambda t, v: -a * pw(max(v, 0.0), 2 - r) - b * pw(max(v, 0.0), r)
    if kind is Kind.Fixed9:
        k1, k2 = c["k1"], c["k2"]
        e1, e2 = c["m"] / c["n"], c["p"] / c["q"]
        return lambda t, v: -k1 * pw(max(v, 0.0), e1) - k2 * pw(max(v, 0.0), e2)
    if kind is Kind.Predefined10:
        p, tp = c["p"], c["Tp"]

        def g(t, v):
            v = max(v, 0.0)
            return -math.exp(min(pw(v, p), _EXP_CAP)) * pw(v, 1 - p) / (p * tp)
        return g
    if horizon is None:
        raise ValidationError(f"{kind.value} needs a TimeHorizon")
    sig = _signal(d)
    if kind is Kind.PT11:
        k, th = c["k"], c["theta"]
        return lambda t, v: mu(t, horizon) * (-2 * k * v + sig(t) ** 2 / (4 * th))
    k = c["k"]
    return lambda t, v: -k * mu(t, horizon) * v + abs(sig(t))


@dataclass
class InequalityRun:
    spec: LyapunovSpec
    trajectory: Trajectory
    threshold: float
    settle_time: float | None
    dt: float
    bound: float | None = None
    clamps: int = 0
    events: list = field(default_factory=list)


def _refined_step(g, t, v, h, rel=0.05):
    """RK4 across ``[t, t+h]``, sub-stepped while the step would move V by more
    than ``rel * V`` (only where V > 1, the large-V stiff regime)."""
    end = t + h
    while True:
        k1 = g(t, v)
        left = end - t
        if v > 1.0 and abs(k1) * left > rel * v:
            s = rel * v / abs(k1)
        else:
            s = left
        k2 = g(t + s / 2, v + s / 2 * k1)
        k3 = g(t + s / 2, v + s / 2 * k2)
        k4 = g(t + s, v + s * k3)
        v = v + s / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if s == left:
            return v
        t = t + s
        if v < 0:
            return v


def simulate_inequality(spec, d=None, horizon=None, dt=None, *, threshold=None,
                        t_end=None, stop_when_settled=None):
    """Integrate the equality case of ``spec`` from ``V0``.

    Parameters
    ----------
    spec : LyapunovSpec
    d : float or callable, optional
        Perturbation ``d(t)`` for the prescribed-time kinds.
    horizon : TimeHorizon, optional
        Required for PT11/PT12; the run stops at ``T - eps``.
    dt : float, optional
        Grid step. Defaults to ``1e-5 * settling_bound(spec)`` for the
        autonomous kinds and ``min(1e-3, eps / 10)`` for PT11/PT12.
    threshold : float, optional
        Settling level (see :func:`default_threshold`). With ``threshold=0``
        the recorded time is the first exact zero.
    t_end : float, optional
        End of the run for the autonomous kinds (default ``1.25 * bound``).
    stop_when_settled : bool, optional
        Truncate once V is below the threshold. Defaults to True for the
        autonomous kinds, whose scalar solutions are monotone so they can never
        climb back above it.

    Negative values produced by a step are clamped to 0; clamps by more than
    ``1e-12 * max(1, V0)`` are logged as ``clamp`` events.
    """
    if dt is not None and not dt > 0:
        raise ValidationError(f"dt must be > 0 (got {dt})")
    prescribed = spec.kind in PRESCRIBED
    bound = None
    if prescribed:
        if not isinstance(horizon, TimeHorizon):
            raise ValidationError(f"{spec.kind.value} needs a TimeHorizon")
        dt = dt if dt is not None else min(1e-3, horizon.eps / 10)
        t_end = horizon.t_stop
        if stop_when_settled is None:
            stop_when_settled = False
    else:
        try:
            bound = settling_bound(spec)
        except UndefinedBoundError:
            if dt is None or t_end is None:
                raise
        if dt is None:
            dt = 1e-5 * bound if bound > 0 else 1e-5
        if t_end is None:
            t_end = 1.25 * bound + 100 * dt
        if stop_when_settled is None:
            stop_when_settled = True
    if threshold is None:
        threshold = default_threshold(spec)
    g = equality_rhs(spec, d, horizon)
    times = make_grid(0.0, t_end, dt)
    values = np.empty(len(times))
    v = spec.V0
    values[0] = v
    tol = 1e-12 * max(1.0, spec.V0)
    events, clamps = [], 0
    last = len(times) - 1
    settled = stop_when_settled and v <= threshold
    if settled:
        last = 0
    for i in range(len(times) - 1 if not settled else 0):
        t = times[i]
        v = _refined_step(g, t, v, times[i + 1] - t)
        if not math.isfinite(v):
            raise NumericError(f"non-finite V after step from t={t!r}", t=t, state=values[i])
        if v < 0:
            if v < -tol:
                clamps += 1
                events.append(Event(float(times[i + 1]), "clamp", f"V={v:.3e}"))
            v = 0.0
        values[i + 1] = v
        if stop_when_settled and v <= threshold:
            last = i + 1
            break
    traj = Trajectory(times=times[: last + 1].copy(), states=values[: last + 1].copy(),
                      events=events, state_labels=["V"])
    report = settling(traj, threshold)
    if report.settle_time is not None:
        traj.add_event(report.settle_time, "settled", f"threshold={threshold:.3e}")
    return InequalityRun(spec=spec, trajectory=traj, threshold=threshold,
                         settle_time=report.settle_time, dt=dt, bound=bound,
                         clamps=clamps, events=traj.events)


def sample_spec(kind, rng, V0=None):
    """Draw coefficients uniformly from inside the stated ranges.

    ``V0`` is log-uniform on ``[1e-2, 1e2]`` unless given. For the
    semi-global kind ``V0`` is drawn inside the region where its bound exists.
    """
    kind = Kind(kind)
    u = rng.uniform
    if V0 is None:
        V0 = float(10 ** u(-2, 2))
    odd = np.array([1, 3, 5, 7, 9, 11])
    if kind is Kind.FT1:
        c = dict(k=u(0.2, 5), q=u(0.05, 0.95))
    elif kind is Kind.FastFT2:
        p = 1.0 if rng.random() < 0.5 else u(1.05, 3)
        c = dict(k1=u(0.2, 5), k2=u(0.2, 5), p=p, q=u(0.05, 0.95))
    elif kind is Kind.SemiGlobal3:
        c = dict(k1=u(0.2, 5), k2=u(0.2, 5), q=u(0.05, 0.95))
        V0 = (u(0.05, 0.95) * c["k1"] / c["k2"]) ** (1 / (1 - c["q"]))
    elif kind is Kind.PracticalFT4:
        c = dict(k=u(0.2, 5), q=u(0.05, 0.95), eta=u(0.01, 1), theta=u(0.1, 0.9))
    elif kind is Kind.PracticalFT5:
        c = dict(k1=u(0.2, 5), k2=u(0.2, 5), q=u(0.05, 0.95), eta=u(0.01, 1), theta=u(0.1, 0.9))
    elif kind is Kind.Fixed6:
        k = u(0.5, 2)
        c = dict(alpha=u(0.2, 5), beta=u(0.2, 5), k=k, p=u(0.05, 0.95) / k, q=u(1.1, 3) / k)
    elif kind is Kind.Fixed7:
        c = dict(alpha=u(0.2, 5), beta=u(0.2, 5), gamma=u(1.05, 5))
    elif kind is Kind.Fixed8:
        p, q = sorted(rng.choice(odd, size=2, replace=False))
        c = dict(alpha=u(0.2, 5), beta=u(0.2, 5), p=float(p), q=float(q))
    elif kind is Kind.Fixed9:
        n, m = sorted(rng.choice(odd, size=2, replace=False))
        p, q = sorted(rng.choice(odd, size=2, replace=False))
        c = dict(k1=u(0.2, 5), k2=u(0.2, 5), m=float(m), n=float(n), p=float(p), q=float(q))
    elif kind is Kind.Predefined10:
        c = dict(p=u(0.05, 1.0), Tp=u(0.2, 5))
    elif kind is Kind.PT11:
        c = dict(k=u(0.5, 5), theta=u(0.1, 5))
    else:
        c = dict(k=u(0.5, 5))
    return LyapunovSpec(kind, {k: float(v) for k, v in c.items()}, float(V0))
