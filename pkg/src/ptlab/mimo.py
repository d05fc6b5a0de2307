"""Prescribed-time control of ``X' = B(X, t) U + F(X, t)``.

Two laws share the scaled state ``Z = mu(t) X`` and the shift
``Phi = Psi(X) + ||Z|| / T`` (the scalar shift is added to every component):

* square gain matrix, ``U = -k Z - theta Z ||Phi||^2``;
* factored ``B = A M`` with a known wide ``A``,
  ``U = -(A^T / ||A||)(k Z + theta Z ||Phi||^2)``, ``||A||`` the spectral norm.

States may carry a leading batch axis: ``X`` of shape ``(P, n)`` with ``B``
returning ``(P, n, m)`` advances ``P`` independent plants together.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import linalg
from .engine import integrate
from .errors import ValidationError
from .scaling import TimeHorizon, mu


@dataclass(frozen=True)
class MimoPlant:
    """Plant data for either law.

    Square case: give ``B``. Non-square case: give ``A`` (array, ``(n, m)`` or
    batched ``(P, n, m)``) and ``M``; ``B = A M`` is then implied.
    ``Psi`` is the drift envelope, ``||F|| <= d * ||Psi||`` for ``d = d_bound``.
    """

    n: int
    m: int
    F: Callable
    Psi: Callable
    B: Callable | None = None
    A: np.ndarray | None = None
    M: Callable | None = None
    d_bound: float | None = None
    name: str = "custom"

    def __post_init__(self):
        bad = []
        if self.n < 1 or self.m < 1:
            bad.append(f"dimensions must be positive (n={self.n}, m={self.m})")
        if self.A is None:
            if self.B is None:
                bad.append("give B (square case) or A and M (non-square case)")
            elif self.m != self.n:
                bad.append(f"square case needs m == n (got n={self.n}, m={self.m})")
        else:
            A = np.asarray(self.A, dtype=float)
            if A.shape[-2:] != (self.n, self.m):
                bad.append(f"A has shape {A.shape}, expected (..., {self.n}, {self.m})")
            elif self.M is None:
                bad.append("non-square case needs M")
            else:
                for a in A.reshape(-1, self.n, self.m):
                    if not linalg.row_rank_ok(a):
                        bad.append("A must have full row rank")
                        break
            object.__setattr__(self, "A", A)
        if bad:
            raise ValidationError(bad)

    @property
    def square(self):
        return self.A is None

    def A_norm(self):
        """Spectral norm of ``A`` (one per batch member)."""
        A = self.A.reshape(-1, self.n, self.m)
        norms = np.array([linalg.spectral_norm(a) for a in A])
        return norms.reshape(self.A.shape[:-2])

    def gain(self, X, t):
        """The input matrix ``B(X, t)``."""
        if self.square:
            return np.asarray(self.B(X, t), dtype=float)
        return self.A @ self.M(X, t)


def _check_state(X, n):
    X = np.asarray(X, dtype=float)
    if X.shape[-1:] != (n,):
        raise ValidationError(f"state has shape {X.shape}, expected (..., {n})")
    return X


def _scaled(X, t, plant, h):
    z = mu(t, h) * X
    znorm = np.linalg.norm(z, axis=-1, keepdims=True)
    phi = np.asarray(plant.Psi(X), dtype=float) + znorm / h.T
    return z, np.sum(phi * phi, axis=-1, keepdims=True)


def square_pt(X, t, k, theta, plant, h):
    """Square-gain law ``U = -k Z - theta Z ||Phi||^2``."""
    if not plant.square:
        raise ValidationError("square_pt needs a square plant (m == n, B given)")
    X = _check_state(X, plant.n)
    z, phi2 = _scaled(X, t, plant, h)
    return -k * z - theta * z * phi2


def nonsquare_pt(X, t, k, theta, plant, h, a_norm=None):
    """Factored-gain law ``U = -(A^T / ||A||)(k Z + theta Z ||Phi||^2)``.

    ``a_norm`` may be passed to skip recomputing the spectral norm.
    """
    if plant.square:
        raise ValidationError("nonsquare_pt needs A and M")
    X = _check_state(X, plant.n)
    z, phi2 = _scaled(X, t, plant, h)
    v = k * z + theta * z * phi2
    norm = plant.A_norm() if a_norm is None else a_norm
    at = np.swapaxes(plant.A, -1, -2)
    return -(at @ v[..., None])[..., 0] / np.asarray(norm)[..., None]


@dataclass(frozen=True)
class GainReport:
    value: float
    passed: bool


def check_gain_assumption(plant, samples):
    """Minimum over samples of the symmetrized-gain margin.

    Square plants report ``lambda_min(B + B^T) / 2``; factored plants report
    ``lambda_min(A (M + M^T) A^T) / ||A||``. ``samples`` is a list of
    ``(X, t)`` pairs (unbatched). Passes iff the minimum is positive.
    """
    samples = list(samples)
    if not samples:
        raise ValidationError("at least one sample point is needed")
    worst = np.inf
    for X, t in samples:
        X = np.asarray(X, dtype=float)
        if plant.square:
            b = np.asarray(plant.B(X, t), dtype=float)
            s = linalg.symmetrize(b + b.T, "B + B^T")
            val = linalg.lambda_min_sym(s) / 2
        else:
            a = plant.A
            m = np.asarray(plant.M(X, t), dtype=float)
            s = linalg.symmetrize(a @ (m + m.T) @ a.T, "A (M + M^T) A^T")
            val = linalg.lambda_min_sym(s) / linalg.spectral_norm(a)
        worst = min(worst, val)
    # roundoff in the eigen-solver should not flip a marginal verdict
    if abs(worst) < 1e-12:
        worst = 0.0
    return GainReport(value=float(worst), passed=bool(worst > 0))


def skew_residual(B, Z):
    """``|Z^T (B - B^T) Z|``, which vanishes identically for real ``Z``."""
    B = np.asarray(B, dtype=float)
    Z = np.asarray(Z, dtype=float)
    return abs(float(Z @ (B - B.T) @ Z))


def simulate_mimo(plant, X0, horizon, k, theta, *, dt=None, t_end=None):
    """Closed loop up to ``T - eps``; batched when ``X0`` is ``(P, n)``."""
    if not isinstance(horizon, TimeHorizon):
        raise ValidationError("a TimeHorizon is required")
    if not k > 0 or not theta > 0:
        raise ValidationError([f"k > 0 (got {k})", f"theta > 0 (got {theta})"])
    X0 = _check_state(X0, plant.n)
    dt = min(1e-3, horizon.eps / 10) if dt is None else dt
    t_end = horizon.t_stop if t_end is None else t_end
    if plant.square:
        def law(t, X):
            return square_pt(X, t, k, theta, plant, horizon)
    else:
        a_norm = plant.A_norm()

        def law(t, X):
            return nonsquare_pt(X, t, k, theta, plant, horizon, a_norm)

    def rhs(t, X):
        return (plant.gain(X, t) @ law(t, X)[..., None])[..., 0] + plant.F(X, t)

    traj = integrate(rhs, X0, t_end, dt, horizon, control=law)
    if X0.ndim == 1:
        traj.state_labels = [f"x{i + 1}" for i in range(plant.n)]
        traj.control_labels = [f"u{i + 1}" for i in range(plant.m)]
    return traj


def terminal_norms(traj):
    """``||X(t_end)||`` per batch member."""
    return np.linalg.norm(traj.states[-1], axis=-1)


def max_control_norms(traj):
    return np.max(np.linalg.norm(traj.controls, axis=-1), axis=0)


# -- plant generators -----------------------------------------------------------

def _pd_matrix(rng, size, margin):
    """``S + K + delta I`` with ``lambda_min`` of the symmetric part equal to ``margin``."""
    g = rng.standard_normal((size, size))
    s = 0.5 * (g + g.T)
    h = rng.standard_normal((size, size))
    skew = 0.5 * (h - h.T)
    delta = margin - linalg.lambda_min_sym(s)
    return s + skew + delta * np.eye(size)


def polynomial_drift(amplitude=0.2):
    """``F = amplitude sin(t) X^2`` (componentwise) with envelope ``Psi = X^2``."""
    def F(X, t):
        return amplitude * np.sin(t) * np.square(X)
    return F, np.square


def random_square_plants(rng, count, n=2, margin=0.5, drift=0.2):
    """``count`` square plants batched on a leading axis.

    ``B(X, t) = B0 (1 + 0.3 sin 2t)`` with ``B0 = S + K + delta I`` drawn so the
    symmetric part of ``B0`` has smallest eigenvalue ``margin``.
    """
    B0 = np.stack([_pd_matrix(rng, n, margin) for _ in range(count)])
    F, Psi = polynomial_drift(drift)

    def B(X, t):
        return B0 * (1.0 + 0.3 * np.sin(2.0 * t))

    plant = MimoPlant(n=n, m=n, F=F, Psi=Psi, B=B, d_bound=drift, name="random_square")
    return plant, B0


def random_nonsquare_plants(rng, count, n=2, m=3, margin=0.5, drift=0.2):
    """``count`` factored plants ``B = A M`` batched on a leading axis.

    ``A`` is Gaussian (redrawn until well conditioned) and
    ``M(X, t) = M0 (1 + 0.3 sin 2t)`` with ``M0 + M0^T`` positive definite.
    """
    As, Ms = [], []
    while len(As) < count:
        a = rng.standard_normal((n, m))
        sv = np.sqrt(np.clip(linalg.eigvalsh(linalg.symmetrize(a @ a.T)), 0, None))
        if sv[0] < 0.2 * sv[-1]:
            continue
        As.append(a)
        Ms.append(_pd_matrix(rng, m, margin))
    A, M0 = np.stack(As), np.stack(Ms)
    F, Psi = polynomial_drift(drift)

    def M(X, t):
        return M0 * (1.0 + 0.3 * np.sin(2.0 * t))

    plant = MimoPlant(n=n, m=m, F=F, Psi=Psi, A=A, M=M, d_bound=drift, name="random_nonsquare")
    return plant, M0


def member_plant(plant, i):
    """Unbatched view of member ``i`` of a batched plant (for per-plant checks)."""
    if plant.square:
        return MimoPlant(n=plant.n, m=plant.m, F=plant.F, Psi=plant.Psi,
                         B=lambda X, t: plant.B(X, t)[i], d_bound=plant.d_bound, name=plant.name)
    return MimoPlant(n=plant.n, m=plant.m, F=plant.F, Psi=plant.Psi, A=plant.A[i],
                     M=lambda X, t: plant.M(X, t)[i], d_bound=plant.d_bound, name=plant.name)
