import numpy as np
import pytest
import scipy.sparse as sp

from mflab import matcore
from mflab.matcore import (DimensionError, MatTuple, direct_sum, haar_unitary, kron, op_norm, parallel_map,
                           psd_sqrt, rank1_projection, sparse_norm_bracket, task_rng, unitarity_residual)
from mflab.ncpoly import evaluate, parse, random_poly


def test_op_norm_examples():
    assert op_norm(np.eye(3)) == pytest.approx(1)
    assert op_norm(np.diag([3, -4j])) == pytest.approx(4)
    assert op_norm([[0, 2], [0, 0]]) == pytest.approx(2)


def test_op_norm_rejects_nan():
    with pytest.raises(ValueError):
        op_norm([[np.nan]])


def test_op_norm_large_path_matches_svd():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((600, 600))
    assert op_norm(a) == pytest.approx(np.linalg.svd(a, compute_uv=False)[0], rel=1e-10)


def test_psd_sqrt_examples():
    assert np.allclose(psd_sqrt(np.eye(3)), np.eye(3))
    assert np.allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    a = np.array([[2.0, 1.0], [1.0, 2.0]])
    r = psd_sqrt(a)
    assert np.abs(r @ r - a).max() < 1e-10


def test_psd_sqrt_rejects_negative():
    with pytest.raises(ValueError):
        psd_sqrt(np.diag([1.0, -1e-3]))
    # tiny negative round-off is clamped
    assert np.allclose(psd_sqrt(np.diag([1.0, -1e-12])), np.diag([1.0, 0.0]))


def test_haar_small_and_deterministic():
    u = haar_unitary(1, 5)
    assert u.shape == (1, 1) and abs(abs(u[0, 0]) - 1) < 1e-14
    assert np.array_equal(haar_unitary(6, 42), haar_unitary(6, 42))
    assert unitarity_residual(haar_unitary(40, 1)) < 1e-12


def test_haar_trace_moment():
    rng = np.random.default_rng(2024)
    vals = np.array([abs(np.trace(haar_unitary(8, rng))) ** 2 for _ in range(1000)])
    # E|tr U|^2 = 1, Var = 1 for d >= 2
    assert abs(vals.mean() - 1) < 3 * vals.std() / np.sqrt(len(vals))


def test_kron_examples():
    assert np.array_equal(kron(np.eye(2), np.eye(3)), np.eye(6))
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal((3, 3)), rng.standard_normal((4, 4))
    x, y = kron(a, np.eye(4)), kron(np.eye(3), b)
    assert np.array_equal(x @ y, y @ x)
    assert op_norm(kron(a, b)) == pytest.approx(op_norm(a) * op_norm(b), abs=1e-9)


def test_direct_sum_examples():
    d = direct_sum([[[2]], [[5]]])
    assert np.array_equal(d, np.diag([2, 5]))
    assert op_norm(d) == pytest.approx(5)
    rng = np.random.default_rng(4)
    blocks = [rng.standard_normal((k, k)) for k in (2, 3, 5)]
    assert op_norm(direct_sum(blocks)) == pytest.approx(max(op_norm(b) for b in blocks))


def test_direct_sum_blockwise_evaluation():
    rng = np.random.default_rng(5)
    models = [MatTuple((haar_unitary(k, rng), haar_unitary(k, rng))) for k in (2, 3, 4)]
    big = matcore.blockwise_sum(models)
    for _ in range(10):
        p = random_poly(rng, 2, 3)
        lhs = evaluate(p, big)
        rhs = direct_sum([evaluate(p, m) for m in models])
        assert np.abs(lhs - rhs).max() < 1e-12


def test_entry_cap():
    old = matcore.set_entry_cap(100)
    try:
        with pytest.raises(DimensionError):
            kron(np.eye(4), np.eye(4))
    finally:
        matcore.set_entry_cap(old)


def test_rank1_projection():
    assert np.allclose(rank1_projection([1, 0]), np.diag([1, 0]))
    assert np.allclose(rank1_projection(np.array([1, 1]) / np.sqrt(2)), 0.5 * np.ones((2, 2)))
    rng = np.random.default_rng(6)
    v = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    p = rank1_projection(v)
    assert np.abs(p @ p - p).max() < 1e-14 and np.abs(p - p.conj().T).max() < 1e-14
    with pytest.raises(ValueError):
        rank1_projection([0, 0])


def test_mattuple_validation_and_json():
    with pytest.raises(ValueError):
        MatTuple((np.eye(2), np.eye(3)))
    mt = MatTuple((haar_unitary(3, 1), np.diag([1j, 2, 3])))
    back = MatTuple.from_json(mt.to_json())
    assert all(np.array_equal(a, b) for a, b in zip(mt, back))


def test_sparse_bracket_contains_norm():
    rng = np.random.default_rng(7)
    m = sp.random(800, 700, density=0.01, random_state=rng, format="csr")
    br = sparse_norm_bracket(m)
    exact = np.linalg.svd(m.toarray(), compute_uv=False)[0]
    assert br.lower <= exact * (1 + 1e-12) and exact <= br.upper * (1 + 1e-12)
    assert br.lower == pytest.approx(exact, rel=1e-9)


def test_parallel_map_is_deterministic(monkeypatch):
    fn = lambda i: float(task_rng(9, i).standard_normal())
    serial = parallel_map(fn, range(20))
    monkeypatch.setenv("MF_LAB_THREADS", "4")
    assert parallel_map(fn, range(20)) == serial
