import numpy as np
import pytest

from pgvba.solver import CgError, CgParams, SpdSystem, cg_solve


def spd(n, rng, cond=50.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q @ np.diag(np.geomspace(1.0, cond, n)) @ q.T


def test_matches_dense_solve(rng):
    A = spd(40, rng)
    b = rng.standard_normal(40)
    res = cg_solve(SpdSystem(lambda x: A @ x), b, CgParams(1e-12, 200))
    assert res.converged
    np.testing.assert_allclose(res.solution, np.linalg.solve(A, b), rtol=1e-9, atol=1e-10)
    assert np.linalg.norm(b - A @ res.solution) <= 1e-12 * np.linalg.norm(b) * 1.0001


def test_image_shaped_unknowns(rng):
    A = spd(12, rng)
    b = rng.standard_normal((3, 4))
    res = cg_solve(SpdSystem(lambda x: (A @ x.ravel()).reshape(3, 4)), b, CgParams(1e-12, 100))
    np.testing.assert_allclose(res.solution.ravel(), np.linalg.solve(A, b.ravel()), atol=1e-9)


def test_jacobi_preconditioning_helps(rng):
    d = np.geomspace(1, 1e4, 60)
    A = np.diag(d) + 0.01 * spd(60, rng, 2.0)
    b = rng.standard_normal(60)
    plain = cg_solve(SpdSystem(lambda x: A @ x), b, CgParams(1e-10, 1000))
    pre = cg_solve(SpdSystem(lambda x: A @ x, np.diag(A)), b, CgParams(1e-10, 1000))
    assert pre.converged and plain.converged
    assert pre.iterations < plain.iterations
    np.testing.assert_allclose(pre.solution, np.linalg.solve(A, b), rtol=1e-7)


def test_batch_matches_columnwise(rng):
    A = spd(25, rng)
    B = rng.standard_normal((6, 25))
    B[2] = 0.0
    sys_ = SpdSystem(lambda x: x @ A.T)
    res = cg_solve(sys_, B, CgParams(1e-11, 200), core_ndim=1)
    assert res.converged
    for i in range(6):
        np.testing.assert_allclose(res.solution[i], np.linalg.solve(A, B[i]), atol=1e-8)
    np.testing.assert_array_equal(res.solution[2], 0.0)


def test_warm_start_at_solution(rng):
    A = spd(10, rng)
    b = rng.standard_normal(10)
    x = np.linalg.solve(A, b)
    res = cg_solve(SpdSystem(lambda v: A @ v), b, CgParams(1e-8, 50), x0=x)
    assert res.iterations == 0
    np.testing.assert_array_equal(res.solution, x)


def test_zero_rhs():
    res = cg_solve(SpdSystem(lambda v: 2 * v), np.zeros(5))
    assert res.iterations == 0 and res.converged
    np.testing.assert_array_equal(res.solution, 0.0)


def test_iteration_cap_reports_failure(rng):
    A = spd(50, rng, 1e6)
    res = cg_solve(SpdSystem(lambda v: A @ v), rng.standard_normal(50), CgParams(1e-14, 3))
    assert res.iterations == 3
    assert not res.converged


def test_indefinite_raises():
    A = np.diag([1.0, -1.0, 2.0])
    with pytest.raises(CgError):
        cg_solve(SpdSystem(lambda v: A @ v), np.array([0.0, 1.0, 0.0]))


def test_bad_preconditioner():
    with pytest.raises(CgError):
        cg_solve(SpdSystem(lambda v: v, np.array([1.0, 0.0])), np.ones(2))


def test_params_validation():
    with pytest.raises(ValueError):
        CgParams(0.0, 10)
    with pytest.raises(ValueError):
        CgParams(1e-6, 0)
