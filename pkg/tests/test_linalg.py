import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rismimo.linalg import (
    BlockDiag,
    Partition,
    SingularMatrixError,
    RCOND_FLOOR,
    as_cmatrix,
    blkdiag,
    block2x2_inverse,
    block3x3_inverse,
    extract_diag_block,
    hermitian_inverse,
    is_hermitian,
    woodbury_inverse,
)

RNG = np.random.default_rng(1234)


def crand(m, n, rng=RNG):
    return rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))


def well_conditioned(n, rng=RNG):
    a = crand(n, n, rng)
    return a + 2.0 * n * np.eye(n)


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestWoodbury:
    def test_scalar_identity(self):
        out = woodbury_inverse([[2.0]], [[1.0]], [[1.0]], [[1.0]])
        assert abs(out[0, 0] - 1.0 / 3.0) < 1e-15

    def test_zero_update_reduces_to_plain_inverse(self):
        A = well_conditioned(5)
        out = woodbury_inverse(A, np.zeros((5, 3)), np.eye(3), np.zeros((3, 5)))
        assert rel_err(out, np.linalg.inv(A)) < 1e-12

    def test_matches_direct_inverse(self):
        for _ in range(20):
            A = well_conditioned(6)
            D = well_conditioned(3)
            B = crand(6, 3)
            C = crand(3, 6)
            out = woodbury_inverse(A, B, D, C)
            direct = np.linalg.inv(A + B @ D @ C)
            assert rel_err(out, direct) < 1e-10

    def test_singular_names_pivot(self):
        with pytest.raises(SingularMatrixError, match="pivot A"):
            woodbury_inverse(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2))


class TestBlock2x2:
    def test_decoupled(self):
        A = well_conditioned(4)
        D = well_conditioned(3)
        tl, tr, bl, br = block2x2_inverse(A, np.zeros((4, 3)), np.zeros((3, 4)), D)
        assert rel_err(tl, np.linalg.inv(A)) < 1e-12
        assert rel_err(br, np.linalg.inv(D)) < 1e-12
        assert np.linalg.norm(tr) == 0 and np.linalg.norm(bl) == 0

    def test_closed_form_half_identity(self):
        I = np.eye(2)
        tl, tr, bl, br = block2x2_inverse(I, 0.5 * I, 0.5 * I, I)
        full = np.block([[I, 0.5 * I], [0.5 * I, I]])
        direct = np.linalg.inv(full)
        assert rel_err(np.block([[tl, tr], [bl, br]]), direct) < 1e-12

    def test_matches_direct_inverse(self):
        for _ in range(20):
            A = well_conditioned(5)
            D = well_conditioned(3)
            B = crand(5, 3)
            C = crand(3, 5)
            tl, tr, bl, br = block2x2_inverse(A, B, C, D)
            direct = np.linalg.inv(np.block([[A, B], [C, D]]))
            assert rel_err(np.block([[tl, tr], [bl, br]]), direct) < 1e-10

    def test_second_displayed_form(self):
        # With D invertible the top-left block equals (A - B D^-1 C)^-1.
        A = well_conditioned(5)
        D = well_conditioned(3)
        B = crand(5, 3)
        C = crand(3, 5)
        tl, *_ = block2x2_inverse(A, B, C, D)
        alt = np.linalg.inv(A - B @ np.linalg.inv(D) @ C)
        assert rel_err(tl, alt) < 1e-10

    def test_schur_failure_named(self):
        A = np.eye(2)
        with pytest.raises(SingularMatrixError, match="Schur complement"):
            block2x2_inverse(A, np.eye(2), np.eye(2), np.eye(2))


class TestBlock3x3:
    def test_decoupled(self):
        E, J, N = well_conditioned(3), well_conditioned(2), well_conditioned(4)
        z32 = np.zeros((3, 2))
        z34 = np.zeros((3, 4))
        z24 = np.zeros((2, 4))
        blocks = block3x3_inverse(E, z32, z34, z32.T, J, z24, z34.T, z24.T, N)
        assert rel_err(blocks[0], np.linalg.inv(E)) < 1e-12
        assert rel_err(blocks[4], np.linalg.inv(J)) < 1e-12
        assert rel_err(blocks[8], np.linalg.inv(N)) < 1e-12

    def test_scalar_tridiagonal(self):
        X = np.array([[2.0, 1, 0], [1, 2, 1], [0, 1, 2]])
        parts = [[[X[i, j]]] for i in range(3) for j in range(3)]
        blocks = block3x3_inverse(*parts)
        out = np.array([[blocks[3 * i + j][0, 0] for j in range(3)] for i in range(3)])
        assert rel_err(out, np.linalg.inv(X)) < 1e-12

    def test_matches_direct_inverse(self):
        n = (3, 3, 3)
        for _ in range(20):
            X = well_conditioned(9)
            p = Partition(n)
            parts = [X[p.block_slice(i), p.block_slice(j)] for i in range(3) for j in range(3)]
            blocks = block3x3_inverse(*parts)
            out = np.block([[blocks[3 * i + j] for j in range(3)] for i in range(3)])
            assert rel_err(out, np.linalg.inv(X)) < 1e-10

    def test_failure_names_intermediate(self):
        with pytest.raises(SingularMatrixError, match="pivot E"):
            block3x3_inverse(*[np.zeros((2, 2))] * 9)


class TestExtractDiagBlock:
    def test_identity(self):
        p = Partition((2, 3, 4))
        for k, s in enumerate(p.sizes):
            assert np.array_equal(extract_diag_block(np.eye(9), p, k), np.eye(s))

    def test_definition(self):
        p = Partition((2, 3))
        A = np.arange(25).reshape(5, 5).astype(complex)
        assert np.array_equal(extract_diag_block(A, p, 1), A[2:, 2:])

    def test_roundtrip(self):
        p = Partition((2, 3, 1))
        blocks = [crand(s, s) for s in p.sizes]
        dense = blkdiag(blocks)
        for k, b in enumerate(blocks):
            assert np.array_equal(extract_diag_block(dense, p, k), b)

    def test_block_diag_tiles_reconstruct(self):
        p = Partition((3, 2))
        blocks = [crand(3, 3), crand(2, 2)]
        dense = blkdiag(blocks)
        rebuilt = blkdiag([extract_diag_block(dense, p, k) for k in range(2)])
        assert np.array_equal(rebuilt, dense)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            extract_diag_block(np.eye(5), Partition((2, 3)), 2)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            extract_diag_block(np.eye(4), Partition((2, 3)), 0)


class TestHermitianInverse:
    def test_identity(self):
        assert rel_err(hermitian_inverse(np.eye(4)), np.eye(4)) < 1e-15

    def test_diagonal(self):
        out = hermitian_inverse(np.diag([2.0, 4.0]))
        assert np.allclose(out, np.diag([0.5, 0.25]), rtol=0, atol=1e-15)

    def test_residual_large(self):
        A = well_conditioned(100)
        out = hermitian_inverse(A)
        assert np.linalg.norm(A @ out - np.eye(100)) < 1e-11 * np.linalg.norm(A)

    def test_hermitian_in_hermitian_out(self):
        A = crand(30, 30)
        A = A + A.conj().T + 20 * np.eye(30)
        out = hermitian_inverse(A)
        assert np.linalg.norm(out - out.conj().T) < 1e-12 * np.linalg.norm(out)

    def test_singular_raises_with_rcond(self):
        A = np.ones((3, 3))
        with pytest.raises(SingularMatrixError) as exc:
            hermitian_inverse(A)
        assert exc.value.rcond is not None and exc.value.rcond < RCOND_FLOOR

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            hermitian_inverse(np.array([[np.inf, 0], [0, 1.0]]))


class TestTypes:
    def test_partition_requires_positive_sizes(self):
        with pytest.raises(ValueError):
            Partition((0, 2))
        p = Partition((2, 3))
        assert p.total == 5 and p.offsets == (0, 2)

    def test_block_diag_shape_check(self):
        p = Partition((2, 3))
        with pytest.raises(ValueError):
            BlockDiag(p, [np.eye(2), np.eye(2)])
        bd = BlockDiag(p, [np.eye(2), np.eye(3)])
        assert bd.is_hermitian()
        assert np.array_equal(bd.to_dense(), np.eye(5))

    def test_block_diag_from_dense_keeps_diagonal(self):
        p = Partition((2, 2))
        A = crand(4, 4)
        bd = BlockDiag.from_dense(A, p)
        assert np.array_equal(bd.blocks[0], A[:2, :2])

    def test_hermitian_flag_tolerance(self):
        A = np.eye(3) + 1e-14 * crand(3, 3)
        assert is_hermitian(A, tol=1e-12)
        assert not is_hermitian(np.triu(np.ones((3, 3))))

    def test_as_cmatrix_rejects_bad_input(self):
        with pytest.raises(ValueError):
            as_cmatrix(np.zeros((0, 2)))
        with pytest.raises(ValueError):
            as_cmatrix([1.0, 2.0])


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 6), st.integers(1, 4), st.integers(0, 2 ** 31 - 1))
def test_lemmas_agree_with_direct_inverse(m, k, seed):
    rng = np.random.default_rng(seed)
    A = crand(m, m, rng) + 2 * m * np.eye(m)
    D = crand(k, k, rng) + 2 * k * np.eye(k)
    B = crand(m, k, rng)
    C = crand(k, m, rng)
    assert rel_err(woodbury_inverse(A, B, D, C), np.linalg.inv(A + B @ D @ C)) < 1e-10
    tl, tr, bl, br = block2x2_inverse(A, B, C, D)
    direct = np.linalg.inv(np.block([[A, B], [C, D]]))
    assert rel_err(np.block([[tl, tr], [bl, br]]), direct) < 1e-10
