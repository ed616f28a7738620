import numpy as np
import pytest

from heatbem.lowrank import (
    BlockEvaluator, LowRankBlock, aca, beneficial_rank, lr_matvec, lr_storage,
)


def test_rank_one_exact(rng):
    u, v = rng.standard_normal(20), rng.standard_normal(15)
    A = np.outer(u, v)
    lr = aca(A, 1e-12)
    assert lr.rank == 1
    assert np.allclose(lr.to_dense(), A, atol=1e-14 * np.abs(A).max())
    assert lr.certified


def test_zero_block():
    lr = aca(np.zeros((6, 9)), 1e-6)
    assert lr.rank == 0
    assert lr.certified
    assert np.array_equal(lr_matvec(lr, np.ones(9)), np.zeros(6))


def test_gaussian_kernel_against_svd(rng):
    x = rng.random((32, 3))
    y = rng.random((32, 3)) + np.array([3.0, 0, 0])
    A = np.exp(-((x[:, None] - y[None]) ** 2).sum(axis=2))
    tol = 1e-6
    lr = aca(A, tol)
    err = np.linalg.norm(A - lr.to_dense())
    assert err <= tol * np.linalg.norm(A)
    s = np.linalg.svd(A, compute_uv=False)
    tail = np.sqrt(np.cumsum(s[::-1] ** 2))[::-1]
    r_svd = int(np.argmax(tail <= tol * np.linalg.norm(A)))
    assert lr.rank <= 2 * max(r_svd, 1)


def test_callback_evaluator_matches_compiled(rng):
    x = rng.random(25)
    A = 1.0 / (3.0 + x[:, None] - x[None, :20])
    ev = BlockEvaluator(A.shape, lambda i: A[i], lambda j: A[:, j])
    a1 = aca(A, 1e-8)
    a2 = aca(ev, 1e-8)
    assert a1.rank == a2.rank
    assert np.allclose(a1.to_dense(), a2.to_dense(), rtol=0, atol=1e-13)


def test_absolute_mode(rng):
    x = rng.random(30)
    A = 1e-3 / (2.0 + x[:, None] + x[None, :])
    lr = aca(A, 1e-9, absolute=True)
    assert np.linalg.norm(A - lr.to_dense()) < 1e-8


def test_max_rank_uncertified(rng):
    A = rng.standard_normal((12, 12))
    lr = aca(A, 1e-12, max_rank=3)
    assert lr.rank == 3
    assert not lr.certified


def test_bad_tolerance():
    with pytest.raises(ValueError):
        aca(np.ones((2, 2)), 0.0)


def test_lr_matvec_cases(rng):
    u, v, x = rng.standard_normal(5), rng.standard_normal(4), rng.standard_normal(4)
    blk = LowRankBlock(u[:, None], v[:, None])
    assert np.allclose(lr_matvec(blk, x), u * (v @ x))
    U, V = rng.standard_normal((30, 4)), rng.standard_normal((20, 4))
    blk = LowRankBlock(U, V)
    X = rng.standard_normal((20, 3))
    ref = (U @ V.T) @ X
    assert np.linalg.norm(lr_matvec(blk, X) - ref) <= 1e-13 * np.linalg.norm(ref)


def test_storage_counts(rng):
    assert lr_storage(LowRankBlock(np.ones((10, 2)), np.ones((7, 2)))) == 34
    assert lr_storage(LowRankBlock.dense(np.ones((3, 4)))) == 12
    assert beneficial_rank(10, 10) == 5
    assert beneficial_rank(10, 10, factor=2.0) == 2
