"""Time-varying gain kernels for prescribed-time feedback.

Two scaling styles are supported:

* state scaling, ``mu(t) = T / (T - t)``, used as ``z = mu(t) * x``;
* time scaling, ``tau = ln(T / (T - t))`` with rate ``a'(t) = 1 / (T - t)``.

Both blow up at ``t = T``. A :class:`TimeHorizon` carries the two guards used
in practice: simulations stop at ``T - eps`` and every gain is saturated at
``mu_cap``. All functions here are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DomainError, ValidationError

DEFAULT_EPS_FRACTION = 1e-4
DEFAULT_MU_CAP = 1e6


@dataclass(frozen=True)
class TimeHorizon:
    """Prescribed terminal time plus singularity guards.

    Parameters
    ----------
    T : float
        Prescribed settling time (> 0).
    eps : float, optional
        Stop margin; runs halt at ``T - eps``. Defaults to ``1e-4 * T``.
    mu_cap : float, optional
        Saturation level for ``mu`` and ``a'`` (>= 1). ``math.inf`` disables it.
    """

    T: float
    eps: float | None = None
    mu_cap: float = DEFAULT_MU_CAP
    t_stop: float = field(init=False, repr=False)

    def __post_init__(self):
        problems = []
        if not (self.T > 0 and math.isfinite(self.T)):
            problems.append(f"T must be finite and > 0 (got {self.T})")
        eps = self.eps
        if eps is None and not problems:
            eps = DEFAULT_EPS_FRACTION * self.T
            object.__setattr__(self, "eps", eps)
        if eps is not None and not problems and not (0 < eps < self.T):
            problems.append(f"eps must satisfy 0 < eps < T (got eps={eps}, T={self.T})")
        if not self.mu_cap >= 1:
            problems.append(f"mu_cap must be >= 1 (got {self.mu_cap})")
        if problems:
            raise ValidationError(problems)
        object.__setattr__(self, "t_stop", self.T - self.eps)

    @property
    def cap_time(self):
        """Earliest time at which either ``mu`` or ``a'`` saturates."""
        if math.isinf(self.mu_cap):
            return math.inf
        return min(self.T * (1.0 - 1.0 / self.mu_cap), self.T - 1.0 / self.mu_cap)


def _check(t, h):
    if not (0.0 <= t < h.T):
        raise DomainError(f"t={t!r} is outside [0, T) for T={h.T}")


def mu(t, h):
    """State-scaling gain ``min(T / (T - t), mu_cap)``; ``mu(0) = 1``."""
    _check(t, h)
    return min(h.T / (h.T - t), h.mu_cap)


def mu_dot_over_mu_sq(h):
    """The constant ``mu' / mu**2 = 1 / T``."""
    return 1.0 / h.T


def a_prime(t, h):
    """Time-scaling rate ``a'(t) = 1 / (T - t)``, capped.

    This is also ``mu'(t) / mu(t)``, the gain growth rate used by the
    consensus protocols.
    """
    _check(t, h)
    return min(1.0 / (h.T - t), h.mu_cap)


def time_scale(t, h):
    """Return ``(tau, a')`` for the map ``tau = ln(T / (T - t))``.

    ``tau`` itself is not capped; it is a clock, not a gain.
    """
    _check(t, h)
    return -math.log1p(-t / h.T), min(1.0 / (h.T - t), h.mu_cap)


def alpha_of_tau(tau, h):
    """``a'`` expressed on the scaled clock: ``alpha(tau) = exp(tau) / T``."""
    return math.exp(tau) / h.T


def inverse_time_scale(tau, h):
    """Physical time for scaled time ``tau``: ``t = T (1 - exp(-tau))``."""
    return -h.T * math.expm1(-tau)
