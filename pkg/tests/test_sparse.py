import math

import numpy as np
import pytest
import scipy.io
import scipy.sparse
from hypothesis import given, strategies as st

from autokrylov.sparse import (
    CsrMatrix,
    PartitionScheme,
    SymCsrMatrix,
    build_bss_plan,
    build_reduction_regions,
    build_row_partition,
    expand_symmetric,
    from_coo,
    load_matrix_market,
    write_matrix_market,
)

from conftest import random_csr, random_sym


def _write(tmp_path, text, name="a.mtx"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _matrix_with_row_nnz(counts):
    n = len(counts)
    rows = np.repeat(np.arange(n), counts)
    cols = np.concatenate([np.arange(c) for c in counts]) if n else np.array([], int)
    return from_coo(max(n, max(counts)), rows, cols, np.ones(len(rows)))


# ---------------------------------------------------------------- storage

def test_invalid_storage_rejected():
    with pytest.raises(ValueError):
        CsrMatrix(2, np.array([0, 1]), np.array([0]), np.array([1.0]))
    with pytest.raises(ValueError):
        CsrMatrix(2, np.array([0, 2, 2]), np.array([1, 0]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        CsrMatrix(2, np.array([0, 1, 1]), np.array([2]), np.array([1.0]))
    with pytest.raises(ValueError):
        SymCsrMatrix(2, np.array([0, 1, 2]), np.array([0, 0]), np.array([1.0, 1.0]))


def test_from_coo_sums_duplicates():
    a = from_coo(2, [0, 0, 1], [1, 1, 0], [1.0, 2.5, 4.0])
    np.testing.assert_array_equal(a.to_dense(), [[0, 3.5], [4, 0]])


# ---------------------------------------------------------------- Matrix Market

def test_load_general_2x2(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real general\n"
                         "2 2 3\n1 1 2.0\n1 2 1.0\n2 2 3.0\n")
    a = load_matrix_market(p)
    assert isinstance(a, CsrMatrix)
    np.testing.assert_array_equal(a.row_ptr, [0, 2, 3])
    np.testing.assert_array_equal(a.to_dense(), [[2.0, 1.0], [0.0, 3.0]])


def test_load_symmetric_identity(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real symmetric\n"
                         "% identity\n3 3 3\n1 1 1\n2 2 1\n3 3 1\n")
    a = load_matrix_market(p, want_symmetric=True)
    assert isinstance(a, SymCsrMatrix)
    assert a.nnz == 3
    np.testing.assert_array_equal(a.col_idx, a.row_of)
    full = load_matrix_market(p)
    assert isinstance(full, CsrMatrix) and full.nnz == 3


def test_load_out_of_range(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real general\n3 3 1\n5 1 1.0\n")
    with pytest.raises(ValueError):
        load_matrix_market(p)


def test_load_duplicates_summed(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real general\n"
                         "2 2 3\n1 1 1.0\n1 1 2.0\n2 1 4.0\n")
    np.testing.assert_array_equal(load_matrix_market(p).to_dense(), [[3.0, 0], [4.0, 0]])


@pytest.mark.parametrize("seed", range(5))
def test_round_trip_bitwise(tmp_path, seed):
    rng = np.random.default_rng(seed)
    a = random_csr(rng, 40, 0.08, empty_rows=0.2)
    p = tmp_path / "a.mtx"
    write_matrix_market(p, a, comment="random")
    b = load_matrix_market(p)
    np.testing.assert_array_equal(a.row_ptr, b.row_ptr)
    np.testing.assert_array_equal(a.col_idx, b.col_idx)
    assert a.values.tobytes() == b.values.tobytes()


@pytest.mark.parametrize("seed", range(3))
def test_symmetric_round_trip_and_scipy_oracle(tmp_path, seed):
    rng = np.random.default_rng(seed)
    s = random_sym(rng, 30, 0.15)
    p = tmp_path / "s.mtx"
    write_matrix_market(p, s)
    back = load_matrix_market(p, want_symmetric=True)
    np.testing.assert_array_equal(back.col_idx, s.col_idx)
    assert back.values.tobytes() == s.values.tobytes()
    oracle = scipy.io.mmread(str(p)).toarray()
    np.testing.assert_array_equal(load_matrix_market(p).to_dense(), oracle)


# ---------------------------------------------------------------- expansion

def test_expand_symmetric_2x2():
    s = SymCsrMatrix(2, np.array([0, 2, 3]), np.array([0, 1, 1]), np.array([2.0, 1.0, 2.0]))
    np.testing.assert_array_equal(expand_symmetric(s).to_dense(), [[2, 1], [1, 2]])


def test_expand_diagonal_is_identity_op():
    s = SymCsrMatrix.from_dense(np.diag([1.0, 2.0, 3.0]))
    e = expand_symmetric(s)
    np.testing.assert_array_equal(e.row_ptr, s.row_ptr)
    np.testing.assert_array_equal(e.values, s.values)


def test_expand_random_is_exactly_symmetric(rng):
    s = random_sym(rng, 30, 0.2)
    e = expand_symmetric(s)
    assert e.is_numerically_symmetric()
    np.testing.assert_array_equal(e.to_dense(), s.to_dense())


# ---------------------------------------------------------------- partitions

def test_partition_balanced_example():
    a = _matrix_with_row_nnz([10, 1, 1, 10])
    part = build_row_partition(a.row_ptr[:5], 2, PartitionScheme.NNZ_BALANCED)
    np.testing.assert_array_equal(part.boundaries, [0, 2, 4])
    np.testing.assert_array_equal(part.loads(a.row_ptr[:5]), [11, 11])


def test_partition_balanced_matches_prefix_oracle():
    row_ptr = np.array([0, 10, 11, 12, 22])
    nnz, P = 22, 2
    # brute force: smallest r with prefix >= p*nnz/P
    expect = [0] + [min(r for r in range(5) if row_ptr[r] * P >= p * nnz) for p in range(1, P)] + [4]
    part = build_row_partition(row_ptr, P)
    np.testing.assert_array_equal(part.boundaries, expect)


def test_partition_single_worker(rng):
    a = random_csr(rng, 17, 0.2)
    for scheme in PartitionScheme:
        np.testing.assert_array_equal(build_row_partition(a.row_ptr, 1, scheme).boundaries, [0, 17])


def test_partition_row_based_example():
    part = build_row_partition(np.array([0, 1, 2, 3, 4]), 2, PartitionScheme.ROW_BASED)
    np.testing.assert_array_equal(part.boundaries, [0, 2, 4])


row_lengths = st.lists(st.integers(0, 60), min_size=1, max_size=80)


@given(row_lengths, st.integers(1, 16), st.sampled_from(list(PartitionScheme)))
def test_partition_coverage(lengths, P, scheme):
    row_ptr = np.concatenate([[0], np.cumsum(lengths)])
    b = build_row_partition(row_ptr, P, scheme).boundaries
    assert b[0] == 0 and b[-1] == len(lengths)
    assert np.all(np.diff(b) >= 0)
    owners = np.concatenate([np.full(b[p + 1] - b[p], p) for p in range(P)])
    assert len(owners) == len(lengths)


@given(row_lengths, st.integers(1, 16))
def test_partition_balanced_bound(lengths, P):
    row_ptr = np.concatenate([[0], np.cumsum(lengths)])
    part = build_row_partition(row_ptr, P)
    nnz = int(row_ptr[-1])
    assert part.loads(row_ptr).max() <= math.ceil(nnz / P) + max(lengths)


# ---------------------------------------------------------------- reduction regions

def test_regions_tridiagonal():
    n = 8
    a = np.diag(np.full(n, 2.0)) + np.diag(np.full(n - 1, -1.0), 1)
    s = SymCsrMatrix.from_dense(a + np.triu(a, 1).T)
    part = build_row_partition(s.row_ptr, 2, PartitionScheme.ROW_BASED)
    np.testing.assert_array_equal(part.boundaries, [0, 4, 8])
    reg = build_reduction_regions(s, part)
    np.testing.assert_array_equal(reg.region_lo, [1, 5])
    np.testing.assert_array_equal(reg.region_hi, [5, 8])


def test_regions_diagonal_empty():
    s = SymCsrMatrix.from_dense(np.diag(np.arange(1.0, 7.0)))
    reg = build_reduction_regions(s, build_row_partition(s.row_ptr, 3))
    assert reg.total_work == 0


def test_regions_dense_first_row():
    n = 6
    a = np.eye(n)
    a[0, :] = a[:, 0] = 1.0
    s = SymCsrMatrix.from_dense(a)
    reg = build_reduction_regions(s, build_row_partition(s.row_ptr, 2, PartitionScheme.ROW_BASED))
    assert reg.region_hi[0] == n


@given(st.integers(0, 10_000), st.integers(2, 60), st.integers(1, 8))
def test_regions_sound_and_minimal(seed, n, P):
    s = random_sym(np.random.default_rng(seed), n, 0.1)
    part = build_row_partition(s.row_ptr, P)
    reg = build_reduction_regions(s, part)
    for p in range(P):
        # checked scatter: every transpose target of worker p lies inside its region
        targets = [int(j) for i in part.rows(p)
                   for j in s.col_idx[s.row_ptr[i]:s.row_ptr[i + 1]] if j > i]
        for j in targets:
            assert reg.region_lo[p] <= j < reg.region_hi[p]
        if targets:
            assert reg.region_lo[p] == min(targets) and reg.region_hi[p] == max(targets) + 1
        else:
            assert reg.region_lo[p] == reg.region_hi[p]


# ---------------------------------------------------------------- segmented-scan plans

def test_bss_diagonal_one_lane():
    plan = build_bss_plan(CsrMatrix.from_dense(np.diag([1.0, 2.0, 3.0])), 1)
    assert plan.num_slices == 3
    assert plan.slices == [(0, 0, 1), (1, 1, 1), (2, 2, 1)]
    np.testing.assert_array_equal(plan.lane_ptr, [0, 3])


def test_bss_dense_row_two_lanes():
    a = np.zeros((8, 8))
    a[0] = np.arange(1.0, 9.0)
    plan = build_bss_plan(CsrMatrix.from_dense(a), 2)
    assert plan.slices == [(0, 0, 4), (0, 4, 4)]


def _execute_plan(plan, a: CsrMatrix, x):
    y = np.zeros(a.n)
    for row, start, length in plan.slices:
        y[row] += a.values[start:start + length] @ x[a.col_idx[start:start + length]]
    return y


@given(st.integers(0, 10_000), st.integers(1, 300))
def test_bss_coverage_and_execution(seed, jl):
    rng = np.random.default_rng(seed)
    a = random_csr(rng, 50, 0.05, empty_rows=0.1)
    plan = build_bss_plan(a, jl)
    assert plan.slice_len.sum() == a.nnz
    np.testing.assert_array_equal(plan.slice_start[1:], (plan.slice_start + plan.slice_len)[:-1])
    rp = a.row_ptr
    assert np.all(rp[plan.carry_map] <= plan.slice_start)
    assert np.all(plan.slice_start + plan.slice_len <= rp[plan.carry_map + 1])
    x = rng.standard_normal(50)
    ref = a.to_dense() @ x
    np.testing.assert_allclose(_execute_plan(plan, a, x), ref, rtol=1e-13,
                               atol=1e-13 * np.abs(ref).max())


def test_scipy_agrees_on_random_dense(rng):
    a = random_csr(rng, 30, 0.2)
    sp = scipy.sparse.csr_matrix((a.values, a.col_idx, a.row_ptr), shape=a.shape)
    np.testing.assert_array_equal(sp.toarray(), a.to_dense())
