"""Single-integrator multi-agent networks.

Graphs, Laplacians and spectral accessors; the general signed-power
consensus protocol; prescribed-time consensus with the time-varying gain
``k + c mu'/mu``; and single-root prescribed-time containment over a directed
spanning tree.

Edge-list text format: one ``i j w`` triple per line with 1-based agent ids,
``#`` starts a comment. For a directed graph ``i j w`` means agent ``j``
listens to agent ``i`` (``a_ji = w``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import linalg
from .engine import integrate
from .errors import HypothesisWarning, UnsupportedError, ValidationError
from .scaling import TimeHorizon, a_prime, mu

SPECTRAL_TOL = 1e-10


@dataclass(frozen=True)
class WeightedGraph:
    """Adjacency weights ``a[i, j] >= 0``: agent ``i`` uses the state of agent ``j``."""

    weights: np.ndarray
    directed: bool = False

    def __post_init__(self):
        a = np.array(self.weights, dtype=float)
        bad = []
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationError(f"weights must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            bad.append("weights must be finite")
        if np.any(a < 0):
            bad.append("weights must be >= 0")
        if np.any(np.diag(a) != 0):
            bad.append("self-loops are not allowed (a_ii = 0)")
        if not self.directed and not np.array_equal(a, a.T):
            bad.append("undirected graph needs symmetric weights")
        if bad:
            raise ValidationError(bad)
        a.setflags(write=False)
        object.__setattr__(self, "weights", a)

    @property
    def n(self):
        return self.weights.shape[0]

    def neighbors(self, i):
        return [int(j) for j in np.flatnonzero(self.weights[i])]


def from_edges(n, edges, directed=False):
    """Graph from 0-based ``(i, j, w)`` triples (see module docstring for direction)."""
    a = np.zeros((n, n))
    bad = []
    for i, j, w in edges:
        if not (0 <= i < n and 0 <= j < n):
            bad.append(f"edge ({i + 1}, {j + 1}) references an agent outside 1..{n}")
            continue
        if i == j:
            bad.append(f"self-loop at agent {i + 1}")
            continue
        if directed:
            a[j, i] = w
        else:
            a[i, j] = a[j, i] = w
    if bad:
        raise ValidationError(bad)
    return WeightedGraph(a, directed)


def parse_edge_list(text, directed=False, n=None):
    """Parse ``i j w`` lines (1-based ids); ``n`` defaults to the largest id seen."""
    edges, bad = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            bad.append(f"line {lineno}: expected 'i j w', got {raw.strip()!r}")
            continue
        try:
            i, j = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            bad.append(f"line {lineno}: cannot parse {raw.strip()!r}")
            continue
        if i < 1 or j < 1:
            bad.append(f"line {lineno}: agent ids are 1-based")
            continue
        edges.append((i - 1, j - 1, w))
    if bad:
        raise ValidationError(bad)
    size = n if n is not None else max((max(i, j) + 1 for i, j, _ in edges), default=0)
    return from_edges(size, edges, directed)


def load_edge_list(path, directed=False, n=None):
    return parse_edge_list(Path(path).read_text(encoding="utf-8"), directed, n)


def cycle(n, w=1.0):
    return from_edges(n, [(i, (i + 1) % n, w) for i in range(n)] if n > 2 else
                      [(0, 1, w)] if n == 2 else [])


def path(n, w=1.0):
    return from_edges(n, [(i, i + 1, w) for i in range(n - 1)])


def complete(n, w=1.0):
    return from_edges(n, [(i, j, w) for i in range(n) for j in range(i + 1, n)])


def star(n, w=1.0):
    return from_edges(n, [(0, j, w) for j in range(1, n)])


def chain(n, w=1.0):
    """Directed chain ``1 -> 2 -> ... -> n`` rooted at agent 1."""
    return from_edges(n, [(i, i + 1, w) for i in range(n - 1)], directed=True)


PRESETS = {"cycle": cycle, "path": path, "complete": complete, "star": star, "chain": chain}


def preset(name, n, w=1.0):
    if name not in PRESETS:
        raise ValidationError(f"unknown graph preset {name!r}; choose from {sorted(PRESETS)}")
    if n < 2:
        raise ValidationError(f"a graph preset needs n >= 2 (got {n})")
    return PRESETS[name](n, w)


def laplacian(g):
    """``L = D - A`` with ``D`` the weighted in-degree (row sums)."""
    a = g.weights
    return np.diag(a.sum(axis=1)) - a


def spectrum(g):
    """Ascending Laplacian eigenvalues of an undirected graph."""
    if g.directed:
        raise UnsupportedError("symmetric spectrum requested for a directed graph")
    return linalg.eigvalsh(laplacian(g))


def lambda2(g):
    """Algebraic connectivity (second-smallest Laplacian eigenvalue)."""
    if g.n < 2:
        raise ValidationError("lambda2 needs at least two agents")
    w = spectrum(g)[1]
    return 0.0 if abs(w) < SPECTRAL_TOL * max(1.0, float(g.weights.sum())) else float(w)


def disagreement(x):
    """``chi = x - mean(x)`` along the last axis."""
    x = np.asarray(x, dtype=float)
    return x - x.mean(axis=-1, keepdims=True)


def protocol_general(x, g, k, alpha):
    """General protocol ``u_i = -k sum_j a_ij (x_i - x_j)^[alpha_ij]``.

    ``v^[a] = |v|^a sgn(v)``, with ``0^[0] = 0``. ``alpha`` is a scalar or an
    ``n x n`` matrix with entries in ``[0, 1]``; ``alpha = 1`` gives ``-k L x``.
    """
    al = np.broadcast_to(np.asarray(alpha, dtype=float), g.weights.shape)
    if np.any(al < 0) or np.any(al > 1):
        raise ValidationError("alpha entries must lie in [0, 1]")
    x = np.asarray(x, dtype=float)
    diff = x[..., :, None] - x[..., None, :]
    mag = np.abs(diff)
    powered = np.where(mag > 0, np.power(np.where(mag > 0, mag, 1.0), al), 0.0)
    return -k * np.sum(g.weights * np.sign(diff) * powered, axis=-1)


def local_errors(x, g):
    """``e_i = sum_j a_ij (x_i - x_j)``, i.e. ``L x``."""
    return np.asarray(x, dtype=float) @ laplacian(g).T


def pt_consensus(x, t, g, k, c, h, lap=None):
    """Prescribed-time protocol ``u = -(k + c mu'/mu) L x`` with ``mu'/mu = 1/(T - t)``."""
    lap = laplacian(g) if lap is None else lap
    return -(k + c * a_prime(t, h)) * (np.asarray(x, dtype=float) @ lap.T)


def consensus_gain_ok(g, c):
    """The gain hypothesis ``c >= 1 / lambda2``."""
    l2 = lambda2(g)
    return l2 > 0 and c >= 1.0 / l2 * (1 - 1e-12)


def consensus_bound(t, chi0_norm, k, l2, h):
    """``||chi(t)|| <= ||chi(0)|| exp(-k lambda2 t) / mu(t)``."""
    return chi0_norm * math.exp(-k * l2 * t) / mu(t, h)


def simulate_linear(g, x0, k, t_end, dt):
    """``x' = -k L x`` via :func:`protocol_general` with ``alpha = 1``."""
    return simulate_general(g, x0, k, 1.0, t_end, dt)


def simulate_general(g, x0, k, alpha, t_end, dt):
    x0 = np.asarray(x0, dtype=float)
    return integrate(lambda t, x: protocol_general(x, g, k, alpha), x0, t_end, dt,
                     control=lambda t, x: protocol_general(x, g, k, alpha))


def simulate_consensus(g, x0, horizon, k, c, *, dt=None, slack=1e-6):
    """Prescribed-time consensus run with the bound check as extra columns.

    Extras: ``chi_norm``, ``bound`` (``(1 + slack)`` times the displayed bound),
    ``bound_ok`` (1/0) and ``sum_drift`` (``sum(x) - sum(x0)``). A gain below
    ``1 / lambda2`` is recorded as a ``hypothesis_warning`` event.
    """
    if g.directed:
        raise UnsupportedError("prescribed-time consensus needs an undirected graph")
    if not isinstance(horizon, TimeHorizon):
        raise ValidationError("a TimeHorizon is required")
    if not k > 0:
        raise ValidationError(f"k > 0 (got {k})")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (g.n,):
        raise ValidationError(f"x0 must have {g.n} entries (got shape {x0.shape})")
    l2 = lambda2(g)
    if l2 <= 0:
        raise ValidationError("the graph is disconnected (lambda2 = 0)")
    dt = min(1e-3, horizon.eps / 10) if dt is None else dt
    lap = laplacian(g)
    traj = integrate(lambda t, x: pt_consensus(x, t, g, k, c, horizon, lap), x0,
                     horizon.t_stop, dt, horizon,
                     control=lambda t, x: pt_consensus(x, t, g, k, c, horizon, lap))
    if not consensus_gain_ok(g, c):
        msg = f"c = {c} is below 1/lambda2 = {1 / l2:.6g}"
        warnings.warn(msg, HypothesisWarning, stacklevel=2)
        traj.add_event(0.0, "hypothesis_warning", msg)
    chi = np.linalg.norm(disagreement(traj.states), axis=1)
    chi0 = chi[0]
    bound = np.array([consensus_bound(t, chi0, k, l2, horizon) for t in traj.times])
    bound *= 1 + slack
    traj.extras.update({
        "chi_norm": chi,
        "bound": bound,
        "bound_ok": (chi <= bound).astype(float),
        "sum_drift": traj.states.sum(axis=1) - x0.sum(),
    })
    traj.state_labels = [f"x{i + 1}" for i in range(g.n)]
    traj.control_labels = [f"u{i + 1}" for i in range(g.n)]
    return traj


# -- containment -------------------------------------------------------------

@dataclass(frozen=True)
class ContainmentDecomposition:
    """Root-first partition ``L = [[0, 0], [L2, L1]]`` and the gain constants.

    ``order`` maps partition position to agent id (root first, then the
    followers ascending).
    """

    order: tuple
    L1: np.ndarray
    L2: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    c_min: float
    lambda_Q: float
    q_positive: bool

    @property
    def root(self):
        return self.order[0]


def _reachable(g, root):
    """Agents reachable from ``root`` following information flow ``j -> i`` when ``a_ij > 0``."""
    seen = {root}
    stack = [root]
    a = g.weights
    while stack:
        j = stack.pop()
        for i in np.flatnonzero(a[:, j] > 0):
            if int(i) not in seen:
                seen.add(int(i))
                stack.append(int(i))
    return seen


def containment_decompose(g, root=0):
    """Partition a directed graph around ``root`` and compute ``P, Q, c_min``.

    ``P = diag((L1^T)^-1 1)``, ``Q = P L1 + L1^T P`` and
    ``c_min = 2 lambda_max(P) / lambda_min(Q)``.

    Raises
    ------
    ValidationError
        If ``root`` listens to another agent or does not reach every agent
        (no directed spanning tree rooted there).
    """
    if not g.directed:
        raise UnsupportedError("containment needs a directed graph")
    n = g.n
    if not 0 <= root < n:
        raise ValidationError(f"root {root + 1} is outside 1..{n}")
    bad = []
    if np.any(g.weights[root] > 0):
        bad.append(f"root agent {root + 1} must not listen to other agents")
    missing = sorted(set(range(n)) - _reachable(g, root))
    if missing:
        bad.append("no directed spanning tree from the root: agents "
                   + ", ".join(str(i + 1) for i in missing) + " are unreachable")
    if bad:
        raise ValidationError(bad)
    order = (root,) + tuple(i for i in range(n) if i != root)
    lp = laplacian(g)[np.ix_(order, order)]
    L1, L2 = lp[1:, 1:].copy(), lp[1:, :1].copy()
    re = linalg.eig_real_parts(L1)
    if re[0] <= SPECTRAL_TOL:
        raise ValidationError(f"follower sub-Laplacian is not Hurwitz-stable (min Re = {re[0]:.3e})")
    p = np.linalg.solve(L1.T, np.ones(n - 1))
    if np.any(p <= 0):
        raise ValidationError("(L1^T)^-1 1 has a nonpositive entry")
    P = np.diag(p)
    Q = linalg.symmetrize(P @ L1 + L1.T @ P, "Q")
    lq = float(linalg.lambda_min_sym(Q))
    positive = lq > SPECTRAL_TOL
    c_min = 2 * float(p.max()) / lq if positive else math.inf
    if not positive:
        warnings.warn("Q is not positive definite; the containment gain bound does not apply",
                      HypothesisWarning, stacklevel=2)
    return ContainmentDecomposition(order=order, L1=L1, L2=L2, P=P, Q=Q, c_min=c_min,
                                    lambda_Q=lq, q_positive=positive)


def pt_containment_step(x, t, g, k, c, h, dec, lap=None):
    """Followers apply ``-(k + c mu'/mu) e_i``; the root has no in-edges so its input is 0."""
    u = pt_consensus(x, t, g, k, c, h, lap)
    u[..., dec.root] = 0.0
    return u


def containment_bound_factor(dec):
    """``sqrt(lambda_max(P) / lambda_min(P)) ||L1^-1||``."""
    p = np.diag(dec.P)
    return math.sqrt(p.max() / p.min()) * linalg.spectral_norm(np.linalg.inv(dec.L1))


def simulate_containment(g, x0, horizon, k, c=None, *, root=0, dt=None, slack=1e-6):
    """Prescribed-time containment run with a bound check.

    ``c`` defaults to ``c_min``. Extras: ``z_norm`` (follower offsets from the
    root), ``bound`` and ``bound_ok``, where the bound is
    ``factor ||e(0)|| exp(-k lambda_min(Q) t / (2 lambda_max(P))) / mu(t)``.
    """
    if not isinstance(horizon, TimeHorizon):
        raise ValidationError("a TimeHorizon is required")
    if not k > 0:
        raise ValidationError(f"k > 0 (got {k})")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (g.n,):
        raise ValidationError(f"x0 must have {g.n} entries (got shape {x0.shape})")
    dec = containment_decompose(g, root)
    c = dec.c_min if c is None else c
    dt = min(1e-3, horizon.eps / 10) if dt is None else dt
    lap = laplacian(g)
    traj = integrate(lambda t, x: pt_containment_step(x, t, g, k, c, horizon, dec, lap), x0,
                     horizon.t_stop, dt, horizon,
                     control=lambda t, x: pt_containment_step(x, t, g, k, c, horizon, dec, lap))
    if c < dec.c_min * (1 - 1e-12):
        msg = f"c = {c} is below c_min = {dec.c_min:.6g}"
        warnings.warn(msg, HypothesisWarning, stacklevel=2)
        traj.add_event(0.0, "hypothesis_warning", msg)
    followers = list(dec.order[1:])
    z = traj.states[:, followers] - traj.states[:, [dec.root]]
    e0 = dec.L1 @ z[0]
    pmax = float(np.diag(dec.P).max())
    rate = k * dec.lambda_Q / (2 * pmax)
    factor = containment_bound_factor(dec) * float(np.linalg.norm(e0))
    bound = np.array([factor * math.exp(-rate * t) / mu(t, horizon) for t in traj.times])
    bound *= 1 + slack
    zn = np.linalg.norm(z, axis=1)
    traj.extras.update({"z_norm": zn, "bound": bound, "bound_ok": (zn <= bound).astype(float)})
    traj.state_labels = [f"x{i + 1}" for i in range(g.n)]
    traj.control_labels = [f"u{i + 1}" for i in range(g.n)]
    return traj, dec


__all__ = [
    "ContainmentDecomposition", "WeightedGraph", "chain", "complete", "consensus_bound",
    "consensus_gain_ok", "containment_bound_factor", "containment_decompose", "cycle",
    "disagreement", "from_edges", "lambda2", "laplacian", "load_edge_list", "local_errors",
    "parse_edge_list", "path", "preset", "protocol_general", "pt_consensus",
    "pt_containment_step", "simulate_consensus", "simulate_containment", "simulate_general",
    "simulate_linear", "spectrum", "star",
]
