"""In-repo eigensolver against the LAPACK oracle."""

import numpy as np
import pytest

from rcclt.eigh import symmetric_eigh
from rcclt.errors import UsageError


@pytest.mark.parametrize("n", [1, 2, 3, 4, 7, 16, 33, 100, 250])
def test_matches_lapack(n):
    rng = np.random.default_rng(n)
    a = rng.standard_normal((n, n))
    a = a + a.T
    w, v = symmetric_eigh(a)
    w_ref = np.linalg.eigh(a)[0]
    scale = max(1.0, np.abs(a).max()) * n
    assert np.abs(w - w_ref).max() <= 1e-11 * scale
    assert np.abs(v.T @ v - np.eye(n)).max() <= 1e-12 * n
    assert np.abs(a @ v - v * w).max() <= 1e-10 * scale
    assert np.all(np.diff(w) >= -1e-12 * scale)


def test_degenerate_matrices():
    for a in [np.zeros((3, 3)), np.eye(5), np.diag([3.0, 1.0, 2.0]), np.array([[4.0]])]:
        w, v = symmetric_eigh(a)
        assert np.abs(a @ v - v * w).max() <= 1e-12


def test_generator_like_matrix_has_zero_mode():
    rng = np.random.default_rng(0)
    n = 32
    q = rng.uniform(1, 4, size=(n, n))
    q = np.triu(q, 1)
    q = q + q.T
    np.fill_diagonal(q, 0.0)
    q[np.arange(n), np.arange(n)] = -q.sum(axis=1)
    w, v = symmetric_eigh(-q)
    assert abs(w[0]) <= 1e-10 * abs(w).max()
    assert w[1] > 0


def test_rejects_bad_input():
    with pytest.raises(UsageError):
        symmetric_eigh(np.zeros((2, 3)))
    with pytest.raises(UsageError):
        symmetric_eigh(np.array([[0.0, 1.0], [2.0, 0.0]]))
