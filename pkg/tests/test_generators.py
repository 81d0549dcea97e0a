import numpy as np
import pytest
from hypothesis import given, strategies as st

from autokrylov.generators import (
    banded,
    convdiff2d,
    laplacian1d,
    poisson2d,
    policy_suite,
    skewed_rows,
    stiff_diag,
)
from autokrylov.krylov import KrylovConfig, gmres_m
from autokrylov.sparse import SymCsrMatrix


def test_laplacian_small():
    a = laplacian1d(5)
    assert isinstance(a, SymCsrMatrix) and a.nnz == 9
    np.testing.assert_array_equal(a.to_dense(), 2 * np.eye(5) - np.eye(5, k=1) - np.eye(5, k=-1))


def test_poisson_shape():
    a = poisson2d(4)
    assert a.n == 16 and a.nnz_full == 16 + 2 * 24


def test_banded_dominant():
    d = banded(20, 3).to_dense()
    assert np.all(np.diag(d) > np.abs(d - np.diag(np.diag(d))).sum(axis=1))


def test_convdiff_unsymmetric():
    a = convdiff2d(5)
    assert not a.is_numerically_symmetric()


@given(st.integers(4, 3000), st.integers(0, 100))
def test_skewed_rows_one_heavy_row(n, seed):
    a = skewed_rows(n, seed=seed)
    assert a.row_nnz[0] == n
    assert a.row_nnz.max() / a.row_nnz.mean() >= min(10, n / 2.5)
    d = a.to_dense() if n <= 200 else None
    if d is not None:
        assert np.all(np.abs(np.diag(d)) > np.abs(d - np.diag(np.diag(d))).sum(axis=1))


def test_skewed_rows_half_of_nonzeros():
    a = skewed_rows(10_000)
    assert 0.4 <= a.row_nnz[0] / a.nnz <= 0.5


def test_stiff_diag_faults():
    a = stiff_diag(64)
    res = gmres_m(a, np.ones(64), KrylovConfig(tol=1e-8))
    assert res.converged and res.iterations == 2
    assert res.recurrence_residual == 0.0 and res.true_residual > 1e-8
    assert res.fault_convergence


def test_policy_suite():
    suite = policy_suite()
    assert len(suite) == 10 and len({p.name for p in suite}) == 10
    for p in suite:
        assert p.b.shape == (p.matrix.n,)


@pytest.mark.parametrize("fn", [laplacian1d, poisson2d, convdiff2d, skewed_rows, stiff_diag])
def test_rejects_tiny(fn):
    with pytest.raises(ValueError):
        fn(1)
