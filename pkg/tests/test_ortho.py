import numpy as np
import pytest
from hypothesis import given, strategies as st

from autokrylov.krylov import ortho
from autokrylov.krylov.ortho import BCGS, CGS, DGKS, MGS, OrthoKind, OrthoVariant, bcgs_blocks, orthogonalize

ALL = [CGS, MGS, DGKS, BCGS]


def random_basis(rng, n, k):
    q, _ = np.linalg.qr(rng.standard_normal((n, k)))
    return q


def test_empty_basis_normalizes():
    q, h, brk = orthogonalize(MGS, np.zeros((2, 0)), np.array([3.0, 4.0]))
    np.testing.assert_allclose(q, [0.6, 0.8])
    np.testing.assert_allclose(h, [5.0])
    assert not brk


@pytest.mark.parametrize("variant", ALL, ids=lambda v: v.name)
def test_vector_in_span_breaks_down(variant):
    q, h, brk = orthogonalize(variant, np.eye(3)[:, :1], np.array([1.0, 0.0, 0.0]))
    assert brk and q is None


@pytest.mark.parametrize("variant", ALL, ids=lambda v: v.name)
def test_hand_example(variant):
    q, h, brk = orthogonalize(variant, np.eye(3)[:, :1], np.array([1.0, 1.0, 0.0]))
    np.testing.assert_allclose(q, [0.0, 1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(h, [1.0, 1.0], atol=1e-12)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        orthogonalize(MGS, np.eye(3)[:, :1], np.ones(4))


def test_parse_and_validation():
    assert OrthoVariant.parse("DGKS") == DGKS
    with pytest.raises(ValueError):
        OrthoVariant(OrthoKind.BCGS, 0)


def test_bcgs_block_length_is_four(monkeypatch):
    assert BCGS.block_len == 4
    assert [len(b) for b in bcgs_blocks(BCGS, 10)] == [4, 4, 2]
    widths = []
    real = ortho._classical

    def spy(Q, w, h):
        widths.append(Q.shape[1])
        real(Q, w, h)

    monkeypatch.setattr(ortho, "_classical", spy)
    rng = np.random.default_rng(0)
    orthogonalize(BCGS, random_basis(rng, 30, 10), rng.standard_normal(30))
    assert widths == [4, 4, 2]


@given(st.integers(0, 10_000), st.integers(1, 50))
def test_dgks_mgs_orthogonality(seed, k):
    rng = np.random.default_rng(seed)
    n = k + 20
    Q = random_basis(rng, n, k)
    v = rng.standard_normal(n)
    for variant in (MGS, DGKS):
        q, h, brk = orthogonalize(variant, Q, v)
        assert not brk
        assert np.abs(Q.T @ q).max() <= 1e-10
        assert abs(np.linalg.norm(q) - 1.0) <= 1e-12


@given(st.integers(0, 10_000), st.integers(1, 50))
def test_cgs_bcgs_orthogonality(seed, k):
    rng = np.random.default_rng(seed)
    Q = random_basis(rng, k + 20, k)
    for variant in (CGS, BCGS):
        q, _, _ = orthogonalize(variant, Q, rng.standard_normal(k + 20))
        assert np.abs(Q.T @ q).max() <= 1e-7


@given(st.integers(0, 10_000), st.integers(1, 30))
def test_variants_agree(seed, k):
    rng = np.random.default_rng(seed)
    Q = random_basis(rng, 60, k)
    v = rng.standard_normal(60)
    ref_q, ref_h, _ = orthogonalize(DGKS, Q, v)
    for variant in ALL:
        q, h, _ = orthogonalize(variant, Q, v)
        np.testing.assert_allclose(q, ref_q, atol=1e-12)
        np.testing.assert_allclose(h, ref_h, atol=1e-12)


@given(st.integers(0, 10_000), st.integers(0, 20))
def test_reconstruction(seed, k):
    rng = np.random.default_rng(seed)
    Q = random_basis(rng, 40, k)
    v = rng.standard_normal(40)
    q, h, _ = orthogonalize(MGS, Q, v)
    np.testing.assert_allclose(Q @ h[:k] + h[k] * q, v, atol=1e-12)


def test_dgks_beats_cgs_on_ill_conditioned_input():
    rng = np.random.default_rng(3)
    Q = random_basis(rng, 100, 20)
    v = Q @ rng.standard_normal(20) + 1e-9 * rng.standard_normal(100)
    cgs = orthogonalize(CGS, Q, v)[0]
    dgks = orthogonalize(DGKS, Q, v)[0]
    assert np.abs(Q.T @ dgks).max() < 1e-12
    assert np.abs(Q.T @ dgks).max() < np.abs(Q.T @ cgs).max()
