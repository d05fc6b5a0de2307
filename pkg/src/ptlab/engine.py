"""Fixed-step RK4 integration, settling detection and trajectory CSV output.

Prescribed-time gains grow without bound as ``t -> T``, so the step size is
tied to the stop margin instead of being error-controlled. Grids are
deterministic and reproducible, which the bound checks rely on.

States may be Python floats (fast scalar path) or arrays of any shape; an
array state with a trailing batch axis lets one integration advance many
independent closed loops at once.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericError, ValidationError

EVENT_KINDS = ("cap_engaged", "clamp", "settled", "hypothesis_warning")


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    detail: str = ""


@dataclass
class Trajectory:
    """Sampled closed-loop run.

    ``states`` has shape ``(N, ...)`` with one row per grid time. ``controls``
    and ``estimates`` (when present) share the leading grid axis. ``extras``
    holds derived per-sample columns appended to CSV output (for example a
    bound check).
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray | None = None
    estimates: np.ndarray | None = None
    events: list = field(default_factory=list)
    state_labels: list | None = None
    control_labels: list | None = None
    estimate_labels: list | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.times)
        for name in ("states", "controls", "estimates"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise ValidationError(f"{name} has {len(arr)} rows, grid has {n}")
        for name, col in self.extras.items():
            if len(col) != n:
                raise ValidationError(f"extra column {name!r} has {len(col)} rows, grid has {n}")

    @property
    def final_state(self):
        return self.states[-1]

    def add_event(self, t, kind, detail=""):
        self.events.append(Event(float(t), kind, detail))
        self.events.sort(key=lambda e: e.t)

    def state_norms(self):
        return _row_norms(self.states)

    def member(self, i, axis=-1):
        """Slice member ``i`` out of a batched run.

        ``axis`` indexes the stored arrays (axis 0 is the grid); scalar loops
        batch on the last axis, MIMO loops on axis 1.
        """
        def pick(arr):
            if arr is None:
                return None
            return np.take(np.asarray(arr), i, axis=axis)
        return Trajectory(
            times=self.times,
            states=pick(self.states),
            controls=pick(self.controls),
            estimates=pick(self.estimates),
            events=list(self.events),
            state_labels=self.state_labels,
            control_labels=self.control_labels,
            estimate_labels=self.estimate_labels,
            extras={k: (np.take(np.asarray(v), i, axis=-1) if np.ndim(v) > 1 else v)
                    for k, v in self.extras.items()},
        )


@dataclass(frozen=True)
class SettlingReport:
    threshold: float
    settle_time: float | None
    max_control: float
    terminal_norm: float

    @property
    def settled(self):
        return self.settle_time is not None


def _row_norms(arr):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        return np.abs(arr)
    return np.sqrt(np.sum(arr.reshape(len(arr), -1) ** 2, axis=1))


def make_grid(t0, t_end, dt):
    """Uniform grid from ``t0`` with spacing ``dt``, ending exactly at ``t_end``."""
    if not dt > 0:
        raise ValidationError(f"dt must be > 0 (got {dt})")
    if not t_end > t0:
        raise ValidationError(f"t_end must exceed t0 (got t0={t0}, t_end={t_end})")
    span = t_end - t0
    n = max(1, int(math.ceil(span / dt - 1e-9)))
    times = t0 + dt * np.arange(n + 1, dtype=float)
    times[-1] = t_end
    return times


def rk4_step(f, t, y, h, t_clamp=None):
    """One classical RK4 step; sub-step times are clamped to ``t_clamp``."""
    tm = t + 0.5 * h
    te = t + h
    if t_clamp is not None:
        tm = min(tm, t_clamp)
        te = min(te, t_clamp)
    k1 = f(t, y)
    k2 = f(tm, y + (0.5 * h) * k1)
    k3 = f(tm, y + (0.5 * h) * k2)
    k4 = f(te, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step_tuple(f, t, y, h, t_clamp=None):
    """RK4 on a tuple of floats; avoids numpy overhead for 2-4 dimensional states."""
    tm = t + 0.5 * h
    te = t + h
    if t_clamp is not None:
        tm = min(tm, t_clamp)
        te = min(te, t_clamp)
    hh = 0.5 * h
    k1 = f(t, y)
    k2 = f(tm, tuple(a + hh * b for a, b in zip(y, k1)))
    k3 = f(tm, tuple(a + hh * b for a, b in zip(y, k2)))
    k4 = f(te, tuple(a + h * b for a, b in zip(y, k3)))
    w = h / 6.0
    return tuple(a + w * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                 for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))


def integrate(dynamics, x0, t_end, dt, horizon=None, *, t0=0.0, control=None,
              post_step=None, stop=None):
    """Integrate ``y' = dynamics(t, y)`` with fixed-step RK4.

    Parameters
    ----------
    dynamics : callable
        ``dynamics(t, y) -> dy/dt`` with the same shape as ``y``.
    x0 : float, tuple or array_like
        Initial state. A Python float keeps the whole run on the scalar path
        and a tuple of floats on the small-vector path (``dynamics`` and
        ``control`` then receive tuples).
    t_end, dt : float
        End time and nominal step; the last step is shortened to land on
        ``t_end``.
    horizon : TimeHorizon, optional
        When given, ``t_end`` must not exceed ``horizon.t_stop`` and every
        sub-step time is clamped to it, so the dynamics are never evaluated
        at or past ``T``. The first grid time past the gain cap is logged as
        a ``cap_engaged`` event.
    control : callable, optional
        ``control(t, y) -> u`` evaluated on the grid after integration and
        stored in ``Trajectory.controls``.
    post_step : callable, optional
        ``post_step(t, y) -> (y, event_kind or None)`` applied after every
        step (used for clamping).
    stop : callable, optional
        ``stop(t, y) -> bool``; the run is truncated at the first grid point
        where it returns True.

    Raises
    ------
    NumericError
        If a step produces a non-finite state.
    """
    t_clamp = None
    if horizon is not None:
        if t_end > horizon.t_stop * (1 + 1e-12):
            raise ValidationError(
                f"t_end={t_end} exceeds the guarded stop time T-eps={horizon.t_stop}")
        t_end = min(t_end, horizon.t_stop)
        t_clamp = horizon.t_stop
    times = make_grid(t0, t_end, dt)
    scalar = np.ndim(x0) == 0
    small = isinstance(x0, tuple)
    if small:
        y = tuple(float(v) for v in x0)
        step = rk4_step_tuple
        isfinite = lambda v: all(map(math.isfinite, v))  # noqa: E731
    else:
        y = float(x0) if scalar else np.array(x0, dtype=float)
        step = rk4_step
        isfinite = math.isfinite if scalar else (lambda v: bool(np.all(np.isfinite(v))))
    out = np.empty((len(times),) + np.shape(y))
    out[0] = y
    events = []
    cap_t = horizon.cap_time if horizon is not None else math.inf
    last = len(times) - 1
    for i in range(last):
        t = times[i]
        h = times[i + 1] - t
        y_new = step(dynamics, t, y, h, t_clamp)
        if not isfinite(y_new):
            raise NumericError(
                f"non-finite state after step from t={t!r}; state was {y!r}", t=t, state=y)
        if post_step is not None:
            y_new, kind = post_step(times[i + 1], y_new)
            if kind is not None:
                events.append(Event(float(times[i + 1]), kind))
        y = y_new
        out[i + 1] = y
        if times[i + 1] >= cap_t and t < cap_t:
            events.append(Event(float(times[i + 1]), "cap_engaged"))
        if stop is not None and stop(times[i + 1], y):
            last = i + 1
            break
    times = times[: last + 1]
    out = out[: last + 1]
    controls = None
    if control is not None:
        rows = (tuple(r) for r in out.tolist()) if small else iter(out)
        first = np.asarray(control(times[0], next(rows)), dtype=float)
        controls = np.empty((len(times),) + first.shape)
        controls[0] = first
        for j, row in enumerate(rows, 1):
            controls[j] = control(times[j], row)
    return Trajectory(times=times, states=out, controls=controls, events=events)


def settling(traj, threshold):
    """Settling statistics using the "stays below through the end" rule.

    ``settle_time`` is the earliest grid time ``t_k`` with
    ``||x(t_j)|| <= threshold`` for every ``j >= k``, or None.
    """
    norms = traj.state_norms()
    above = norms > threshold
    if not above.any():
        settle = float(traj.times[0])
    elif above[-1]:
        settle = None
    else:
        settle = float(traj.times[np.flatnonzero(above)[-1] + 1])
    if traj.controls is not None:
        max_u = float(np.max(_row_norms(traj.controls)))
    else:
        max_u = math.nan
    return SettlingReport(threshold=float(threshold), settle_time=settle,
                          max_control=max_u, terminal_norm=float(norms[-1]))


def _fmt(v):
    return format(float(v), ".17g")


def _columns(arr, n_rows):
    if arr is None:
        return np.zeros((n_rows, 0))
    return np.asarray(arr, dtype=float).reshape(n_rows, -1)


def csv_text(traj):
    """Render ``t, x1..xn, u1..um, estimates..., extras...`` at full precision."""
    n = len(traj.times)
    xs = _columns(traj.states, n)
    us = _columns(traj.controls, n)
    es = _columns(traj.estimates, n)
    extra_names = list(traj.extras)
    ex = (np.column_stack([np.asarray(traj.extras[k], dtype=float).reshape(n)
                           for k in extra_names]) if extra_names else np.zeros((n, 0)))
    header = ["t"]
    header += traj.state_labels or [f"x{i + 1}" for i in range(xs.shape[1])]
    header += traj.control_labels or [f"u{i + 1}" for i in range(us.shape[1])]
    header += traj.estimate_labels or [f"est{i + 1}" for i in range(es.shape[1])]
    header += extra_names
    body = np.column_stack([traj.times, xs, us, es, ex])
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in body:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_csv(traj, path):
    path = Path(path)
    path.write_text(csv_text(traj), encoding="utf-8", newline="")
    return path
