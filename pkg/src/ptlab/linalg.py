"""Small dense eigenvalue kernels.

Matrices in this package are tiny (at most a few dozen rows), so the
symmetric solver is a plain cyclic Jacobi iteration: slow asymptotically,
but unconditionally convergent and accurate to the last few ulps.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InternalError

JACOBI_TOL = 1e-12
SYMMETRY_TOL = 1e-9


def jacobi_eigh(a, tol=JACOBI_TOL, max_sweeps=100):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi.

    Parameters
    ----------
    a : array_like, shape (n, n)
        Symmetric matrix. Only symmetry up to ``SYMMETRY_TOL`` (relative) is
        accepted; the matrix is symmetrized before rotating.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm is below
        ``tol * ||a||_F``.
    max_sweeps : int
        Hard limit on full sweeps.

    Returns
    -------
    w : ndarray, shape (n,)
        Eigenvalues in ascending order.
    v : ndarray, shape (n, n)
        Orthonormal eigenvectors, column ``v[:, i]`` pairs with ``w[i]``.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    scale = np.linalg.norm(a)
    if np.linalg.norm(a - a.T) > SYMMETRY_TOL * max(scale, 1.0):
        raise InternalError("jacobi_eigh called on a non-symmetric matrix")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    if n == 0:
        return np.zeros(0), v
    target = tol * scale
    for _ in range(max_sweeps):
        # direct norm; ||a||^2 - ||diag||^2 cancels and stalls near sqrt(eps) ||a||
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # rotation angle zeroing a[p, q] (Golub & Van Loan, sym.schur2)
                gap = a[q, q] - a[p, p]
                if abs(apq) < 1e-18 * abs(gap):
                    t = apq / gap          # tau would overflow; t ~ 1/(2 tau)
                else:
                    tau = gap / (2.0 * apq)
                    t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise InternalError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eigvalsh(a, tol=JACOBI_TOL):
    """Ascending eigenvalues of a symmetric matrix."""
    return jacobi_eigh(a, tol)[0]


def symmetrize(s, what="matrix"):
    """Return ``(s + s.T) / 2`` after checking the asymmetry is roundoff."""
    s = np.asarray(s, dtype=float)
    resid = np.linalg.norm(s - s.T)
    if resid > SYMMETRY_TOL * max(np.linalg.norm(s), 1.0):
        raise InternalError(f"{what} is not symmetric (residual {resid:.3e})")
    return 0.5 * (s + s.T)


def lambda_min_sym(s):
    return eigvalsh(s)[0]


def lambda_max_sym(s):
    return eigvalsh(s)[-1]


def spectral_norm(a):
    """Largest singular value, from the smaller Gram matrix."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    gram = a @ a.T if a.shape[0] <= a.shape[1] else a.T @ a
    return math.sqrt(max(lambda_max_sym(symmetrize(gram, "Gram matrix")), 0.0))


def row_rank_ok(a, rtol=1e-10):
    """True when ``a`` has full row rank (smallest singular value not negligible)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[0] > a.shape[1]:
        return False
    w = eigvalsh(symmetrize(a @ a.T, "Gram matrix"))
    return w[0] > rtol * max(w[-1], np.finfo(float).tiny)


def eig_real_parts(m):
    """Real parts of the eigenvalues of a general square matrix, ascending.

    Delegates to LAPACK's Hessenberg reduction + shifted QR (``numpy.linalg``).
    """
    return np.sort(np.linalg.eigvals(np.asarray(m, dtype=float)).real)
