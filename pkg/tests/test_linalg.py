import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ptlab import linalg
from ptlab.errors import InternalError

entries = st.floats(-10, 10, allow_nan=False)


@st.composite
def symmetric(draw):
    n = draw(st.integers(1, 8))
    a = draw(arrays(float, (n, n), elements=entries))
    return a + a.T


@given(symmetric())
def test_jacobi_matches_lapack(a):
    w, v = linalg.jacobi_eigh(a)
    ref = np.linalg.eigvalsh(a)
    scale = max(1.0, np.abs(ref).max())
    np.testing.assert_allclose(w, ref, atol=1e-10 * scale)
    np.testing.assert_allclose(v.T @ v, np.eye(len(a)), atol=1e-10)
    np.testing.assert_allclose(a @ v, v * w, atol=1e-9 * scale)


def test_known_spectrum():
    a = np.array([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(linalg.eigvalsh(a), [1.0, 3.0], atol=1e-14)
    assert linalg.jacobi_eigh(np.zeros((0, 0)))[0].size == 0


def test_rejects_nonsymmetric():
    with pytest.raises(InternalError):
        linalg.jacobi_eigh([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(InternalError):
        linalg.symmetrize([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        linalg.jacobi_eigh(np.ones(3))


@given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
def test_spectral_norm(r, c, seed):
    a = np.random.default_rng(seed).standard_normal((r, c))
    assert linalg.spectral_norm(a) == pytest.approx(np.linalg.norm(a, 2), rel=1e-10)


def test_row_rank():
    assert linalg.row_rank_ok([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    assert not linalg.row_rank_ok([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
    assert not linalg.row_rank_ok(np.ones((3, 2)))


def test_eig_real_parts():
    m = np.array([[0.0, 1.0], [-2.0, -3.0]])
    np.testing.assert_allclose(linalg.eig_real_parts(m), [-2.0, -1.0])
