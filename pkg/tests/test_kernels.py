import numpy as np
import pytest
from hypothesis import given, strategies as st

from autokrylov.generators import banded
from autokrylov.kernels import (
    Kernel,
    KernelChoice,
    KernelMismatch,
    SpmvOperator,
    WorkerPool,
    build_plan,
    reduction_work,
    spmv_ref,
    spmv_sym,
    spmv_unsym,
)
from autokrylov.sparse import CsrMatrix, SymCsrMatrix, build_row_partition, expand_symmetric, from_coo

from conftest import random_csr, random_sym

UNSYM = [KernelChoice(Kernel.U1), KernelChoice(Kernel.U2),
         KernelChoice(Kernel.U3, 8), KernelChoice(Kernel.U4, 8),
         KernelChoice(Kernel.U3, 64), KernelChoice(Kernel.U4, 64)]
SYM = [KernelChoice(k) for k in (Kernel.S1, Kernel.S2, Kernel.S3)]


@pytest.fixture(scope="module", params=[1, 2, 4, 8])
def pool(request):
    with WorkerPool(request.param) as p:
        yield p


def _bound(a, x):
    full = expand_symmetric(a) if isinstance(a, SymCsrMatrix) else a
    norm1 = np.abs(full.to_dense()).sum(axis=0).max()
    return 1e-13 * norm1 * np.abs(x).max() * a.n


def test_ref_identity():
    np.testing.assert_array_equal(spmv_ref(CsrMatrix.from_dense(np.eye(3)), [1, 2, 3]), [1, 2, 3])


def test_ref_small_dense():
    np.testing.assert_array_equal(spmv_ref(CsrMatrix.from_dense([[2, 1], [0, 3]]), [1, 1]), [3, 3])


def test_ref_empty_row():
    a = from_coo(3, [0, 2], [1, 2], [1.0, 1.0])
    assert spmv_ref(a, np.ones(3))[1] == 0.0


def test_ref_rejects_symmetric_storage():
    with pytest.raises(TypeError):
        spmv_ref(SymCsrMatrix.from_dense(np.eye(2)), np.ones(2))


@pytest.mark.parametrize("choice", UNSYM + SYM, ids=lambda c: c.label)
def test_identity(choice, pool):
    n = 20
    a = SymCsrMatrix.from_dense(np.eye(n)) if choice.kernel.symmetric else CsrMatrix.from_dense(np.eye(n))
    x = np.arange(n, dtype=float)
    np.testing.assert_array_equal(SpmvOperator(a, choice, pool)(x), x)


@pytest.mark.parametrize("choice", UNSYM, ids=lambda c: c.label)
def test_unsym_matches_reference(choice, pool, rng):
    for _ in range(3):
        a = random_csr(rng, int(rng.integers(5, 200)), 0.05, empty_rows=0.1)
        x = rng.standard_normal(a.n)
        y = SpmvOperator(a, choice, pool)(x)
        assert np.abs(y - spmv_ref(a, x)).max() <= _bound(a, x)


@pytest.mark.parametrize("choice", SYM, ids=lambda c: c.label)
def test_sym_matches_reference(choice, pool, rng):
    for _ in range(3):
        a = random_sym(rng, int(rng.integers(5, 200)), 0.05)
        x = rng.standard_normal(a.n)
        y = SpmvOperator(a, choice, pool)(x)
        assert np.abs(y - spmv_ref(expand_symmetric(a), x)).max() <= _bound(a, x)


def test_u2_skewed_example():
    rows = np.repeat(np.arange(4), [10, 1, 1, 10])
    cols = np.concatenate([np.arange(10), [0], [0], np.arange(10)])
    a = from_coo(10, rows, cols, np.arange(1.0, 23.0))
    x = np.linspace(-1, 1, 10)
    with WorkerPool(2) as pool:
        part = build_plan(KernelChoice(Kernel.U2), a, 2)
        np.testing.assert_array_equal(part.boundaries, [0, 2, 10])
        np.testing.assert_array_equal(part.loads(a.row_ptr), [11, 11])
        y = spmv_unsym(KernelChoice(Kernel.U2), a, part, x, pool)
    np.testing.assert_allclose(y, spmv_ref(a, x), rtol=1e-13)


@pytest.mark.parametrize("jl", [8, 16, 32, 64, 128, 256])
def test_u3_random_sparse(jl):
    rng = np.random.default_rng(jl)
    a = random_csr(rng, 200, 0.01)
    x = rng.standard_normal(200)
    ref = spmv_ref(a, x)
    with WorkerPool(4) as pool:
        y = SpmvOperator(a, KernelChoice(Kernel.U3, jl), pool)(x)
    np.testing.assert_allclose(y, ref, rtol=1e-13, atol=1e-13 * np.abs(ref).max())


def test_sym_small_example():
    s = SymCsrMatrix(2, np.array([0, 2, 3]), np.array([0, 1, 1]), np.array([2.0, 1.0, 2.0]))
    for choice in SYM:
        with WorkerPool(2) as pool:
            np.testing.assert_array_equal(SpmvOperator(s, choice, pool)([1.0, 2.0]), [4.0, 5.0])


def test_sym_diagonal_no_reduction():
    d = np.arange(1.0, 11.0)
    s = SymCsrMatrix.from_dense(np.diag(d))
    x = np.linspace(0, 1, 10)
    with WorkerPool(4) as pool:
        for choice in SYM:
            op = SpmvOperator(s, choice, pool)
            np.testing.assert_array_equal(op(x), d * x)
        part, regions = build_plan(SYM[2], s, 4)
        assert reduction_work(SYM[2], s.n, 4, regions) == 0


def test_banded_region_accounting():
    s = banded(1000, 3)
    x = np.random.default_rng(0).standard_normal(1000)
    with WorkerPool(8) as pool:
        y1 = SpmvOperator(s, SYM[0], pool)(x)
        op3 = SpmvOperator(s, SYM[2], pool)
        y3 = op3(x)
    np.testing.assert_allclose(y3, y1, rtol=1e-13)
    _, regions = op3.plan
    work = reduction_work(SYM[2], 1000, 8, regions)
    assert work <= 1000 + 8 * 3
    assert work < reduction_work(SYM[1], 1000, 8) / 7


@given(st.integers(0, 10_000), st.sampled_from([1, 3, 8, 50]))
def test_u3_equals_u4_bitwise(seed, jl):
    rng = np.random.default_rng(seed)
    a = random_csr(rng, 60, 0.05, empty_rows=0.2)
    x = rng.standard_normal(60)
    with WorkerPool(3) as pool:
        y3 = SpmvOperator(a, KernelChoice(Kernel.U3, jl), pool)(x)
        y4 = SpmvOperator(a, KernelChoice(Kernel.U4, jl), pool)(x)
    assert y3.tobytes() == y4.tobytes()


@given(st.integers(0, 10_000), st.integers(1, 8))
def test_s3_equals_s2_bitwise(seed, P):
    rng = np.random.default_rng(seed)
    a = random_sym(rng, 50, 0.08)
    x = rng.standard_normal(50)
    with WorkerPool(P) as pool:
        y2 = SpmvOperator(a, SYM[1], pool)(x)
        y3 = SpmvOperator(a, SYM[2], pool)(x)
    assert y2.tobytes() == y3.tobytes()


@pytest.mark.parametrize("choice", UNSYM + SYM, ids=lambda c: c.label)
def test_deterministic(choice, rng):
    a = random_sym(rng, 80, 0.1) if choice.kernel.symmetric else random_csr(rng, 80, 0.1)
    x = rng.standard_normal(80)
    with WorkerPool(4) as pool:
        op = SpmvOperator(a, choice, pool)
        first = op(x).copy()
        for _ in range(5):
            assert op(x).tobytes() == first.tobytes()


@given(st.integers(0, 10_000), st.floats(-10, 10), st.floats(-10, 10))
def test_linearity(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    a = random_csr(rng, 40, 0.1)
    x, z = rng.standard_normal((2, 40))
    with WorkerPool(2) as pool:
        op = SpmvOperator(a, KernelChoice(Kernel.U3, 4), pool)
        lhs = op(alpha * x + beta * z)
        rhs = alpha * op(x) + beta * op(z)
    scale = np.abs(a.to_dense()).sum(axis=1).max() * (abs(alpha) * np.abs(x).max() + abs(beta) * np.abs(z).max())
    assert np.abs(lhs - rhs).max() <= 1e-12 * max(scale, 1e-300)


def test_mismatches_raise(rng):
    a = random_csr(rng, 10, 0.3)
    s = random_sym(rng, 10, 0.3)
    with WorkerPool(2) as pool:
        with pytest.raises(KernelMismatch):
            SpmvOperator(a, SYM[0], pool)
        with pytest.raises(KernelMismatch):
            SpmvOperator(s, UNSYM[0], pool)
        part = build_row_partition(a.row_ptr, 2)
        with pytest.raises(KernelMismatch):
            spmv_unsym(UNSYM[0], a, part, np.ones(10), pool)
        with pytest.raises(KernelMismatch):
            spmv_sym(SYM[2], s, build_row_partition(s.row_ptr, 2), None, np.ones(10), pool)
        with pytest.raises(KernelMismatch):
            SpmvOperator(a, UNSYM[0], pool)(np.ones(9))
    with pytest.raises(ValueError):
        KernelChoice(Kernel.U3)
    with pytest.raises(ValueError):
        KernelChoice(Kernel.U1, 8)


def test_operator_counts_calls():
    a = CsrMatrix.from_dense(np.eye(4))
    op = SpmvOperator.default(a)
    for _ in range(3):
        op(np.ones(4))
    assert op.calls == 3 and op.flops_per_call == 8
    s = SymCsrMatrix.from_dense(np.eye(4) * 2 + np.eye(4, k=1) + np.eye(4, k=-1))
    assert SpmvOperator.default(s).flops_per_call == 4 * s.nnz - 2 * 4
