import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rnnpress import linalg
from rnnpress.errors import ArgumentError, ConvergenceError, SingularMatrixError
from rnnpress.linalg import frobenius_norm, least_squares_rowspace, matmul, svd, truncate


def check_svd_invariants(a, res):
    k = min(a.shape)
    assert res.u.shape == (a.shape[0], k)
    assert res.v.shape == (a.shape[1], k)
    assert np.all(np.diff(res.sigma) <= 0)
    assert np.all(res.sigma >= 0)
    assert frobenius_norm(res.u.T @ res.u - np.eye(k)) <= 1e-10 * k
    assert frobenius_norm(res.v.T @ res.v - np.eye(k)) <= 1e-10 * k
    assert frobenius_norm(res.reconstruct() - a) <= 1e-10 * max(1.0, frobenius_norm(a))


def test_matmul_identity(rng):
    a = rng.standard_normal((3, 5))
    np.testing.assert_array_equal(matmul(np.eye(3), a), a)


def test_matmul_dimension_mismatch():
    with pytest.raises(ArgumentError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_frobenius_norm():
    assert frobenius_norm(np.diag([3.0, 4.0])) == 5.0
    assert frobenius_norm(np.zeros((2, 2))) == 0.0


def test_svd_diagonal():
    res = svd(np.diag([3.0, 2.0, 1.0]))
    np.testing.assert_array_equal(res.sigma, [3.0, 2.0, 1.0])
    np.testing.assert_allclose(res.u, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(res.v, np.eye(3), atol=1e-15)


def test_svd_unsorted_diagonal_is_sorted():
    res = svd(np.diag([1.0, 3.0, 2.0]))
    np.testing.assert_allclose(res.sigma, [3.0, 2.0, 1.0], rtol=1e-15)
    check_svd_invariants(np.diag([1.0, 3.0, 2.0]), res)


def test_svd_rank_one_outer_product():
    a = np.outer([1.0, 2.0], [2.0, 1.0])
    res = svd(a)
    assert res.sigma[0] == pytest.approx(5.0, rel=1e-14)
    assert res.sigma[1] == 0.0
    check_svd_invariants(a, res)


def test_svd_random_residual(rng):
    a = rng.standard_normal((50, 40))
    res = svd(a)
    assert frobenius_norm(res.reconstruct() - a) / frobenius_norm(a) <= 1e-12
    check_svd_invariants(a, res)


@pytest.mark.parametrize("shape", [(1, 1), (1, 7), (7, 1), (5, 5), (8, 2), (2, 8), (40, 50), (256, 64)])
def test_svd_invariants_shapes(rng, shape):
    a = rng.standard_normal(shape)
    res = svd(a)
    check_svd_invariants(a, res)
    np.testing.assert_allclose(res.sigma, np.linalg.svd(a, compute_uv=False), rtol=1e-12, atol=1e-13)


def test_svd_zero_matrix():
    res = svd(np.zeros((4, 3)))
    np.testing.assert_array_equal(res.sigma, np.zeros(3))
    check_svd_invariants(np.zeros((4, 3)), res)


def test_svd_rank_deficient_completes_basis(rng):
    a = rng.standard_normal((12, 3)) @ rng.standard_normal((3, 9))
    res = svd(a)
    assert np.count_nonzero(res.sigma) == 3
    check_svd_invariants(a, res)


def test_svd_clamps_tiny_values():
    a = np.diag([1.0, 1e-13, 1e-11])
    res = svd(a)
    np.testing.assert_allclose(res.sigma, [1.0, 1e-11, 0.0], rtol=1e-12)


def test_svd_sign_convention(rng):
    res = svd(rng.standard_normal((9, 6)))
    rows = np.argmax(np.abs(res.u), axis=0)
    assert np.all(res.u[rows, np.arange(6)] >= 0)


def test_svd_deterministic(rng):
    a = rng.standard_normal((30, 20))
    r1, r2 = svd(a), svd(a.copy())
    for x, y in [(r1.u, r2.u), (r1.sigma, r2.sigma), (r1.v, r2.v)]:
        assert x.tobytes() == y.tobytes()


def test_svd_permutation_invariant(rng):
    a = rng.standard_normal((20, 15))
    pa = a[rng.permutation(20)][:, rng.permutation(15)]
    np.testing.assert_allclose(svd(pa).sigma, svd(a).sigma, rtol=1e-10, atol=1e-10)


def test_svd_rejects_nonfinite():
    with pytest.raises(ArgumentError):
        svd(np.array([[1.0, np.nan]]))


def test_svd_iteration_cap(rng, monkeypatch):
    monkeypatch.setattr(linalg, "MAX_SWEEPS", 1)
    with pytest.raises(ConvergenceError):
        svd(rng.standard_normal((10, 10)))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)),
              elements=st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)))
def test_svd_invariants_property(a):
    check_svd_invariants(a, svd(a))


def test_truncate_diagonal():
    a = np.diag([3.0, 2.0, 1.0])
    left, proj = truncate(svd(a), 2)
    np.testing.assert_allclose(left @ proj, np.diag([3.0, 2.0, 0.0]), atol=1e-15)
    assert frobenius_norm(left @ proj - a) == pytest.approx(1.0, rel=1e-14)


def test_truncate_full_rank_lossless(rng):
    a = rng.standard_normal((8, 6))
    res = svd(a)
    left, proj = truncate(res, res.k)
    assert frobenius_norm(left @ proj - a) <= 1e-10 * frobenius_norm(a)


def test_truncate_exact_rank_one():
    a = np.diag([5.0, 0.0])
    left, proj = truncate(svd(a), 1)
    np.testing.assert_allclose(left @ proj, a, atol=1e-15)


def test_truncate_orthonormal_rows(rng):
    _, proj = truncate(svd(rng.standard_normal((20, 10))), 4)
    np.testing.assert_allclose(proj @ proj.T, np.eye(4), atol=1e-13)


@pytest.mark.parametrize("r", [0, 4, -1, 1.5, True])
def test_truncate_rank_out_of_range(r):
    with pytest.raises(ArgumentError):
        truncate(svd(np.eye(3)), r)


def test_eckart_young_random(rng):
    for _ in range(10):
        a = rng.standard_normal((15, 9))
        res = svd(a)
        for r in range(1, res.k):
            left, proj = truncate(res, r)
            err = frobenius_norm(a - left @ proj) ** 2
            assert err == pytest.approx(np.sum(res.sigma[r:] ** 2), rel=1e-8)


def test_lstsq_coordinate_projection():
    p = np.array([[1.0, 0, 0], [0, 1, 0]])
    w = np.array([[1.0, 2, 3], [4, 5, 6]])
    z = least_squares_rowspace(p, w)
    np.testing.assert_array_equal(z, [[1, 2], [4, 5]])
    assert frobenius_norm(z @ p - w) ** 2 == pytest.approx(45.0)


def normal_equation_oracle(p, w):
    return w @ p.T @ np.linalg.inv(p @ p.T)


def test_lstsq_orthonormal_path_matches_general(rng):
    _, p = truncate(svd(rng.standard_normal((12, 8))), 3)
    w = rng.standard_normal((5, 8))
    z = least_squares_rowspace(p, w)
    # force the general path by scaling, then undo the scaling
    z_general = least_squares_rowspace(2.0 * p, w) * 2.0
    np.testing.assert_allclose(z, z_general, rtol=1e-10, atol=1e-12)
    np.testing.assert_array_equal(z, w @ p.T)


def test_lstsq_general_path_matches_oracle(rng):
    for _ in range(20):
        p = rng.standard_normal((2, 4))
        w = rng.standard_normal((3, 4))
        np.testing.assert_allclose(least_squares_rowspace(p, w), normal_equation_oracle(p, w), atol=1e-9)


def test_lstsq_residual_orthogonal_to_rowspace(rng):
    p = rng.standard_normal((3, 7))
    w = rng.standard_normal((4, 7))
    z = least_squares_rowspace(p, w)
    assert frobenius_norm((w - z @ p) @ p.T) <= 1e-8 * frobenius_norm(w) * frobenius_norm(p)


def test_lstsq_global_minimizer(rng):
    p = rng.standard_normal((3, 6))
    w = rng.standard_normal((5, 6))
    z = least_squares_rowspace(p, w)
    base = frobenius_norm(z @ p - w)
    for _ in range(100):
        d = rng.standard_normal(z.shape)
        d *= 1e-3 / frobenius_norm(d)
        assert frobenius_norm((z + d) @ p - w) >= base


def test_lstsq_singular_reports_layer():
    p = np.array([[1.0, 0, 0], [2.0, 0, 0]])
    with pytest.raises(SingularMatrixError) as info:
        least_squares_rowspace(p, np.ones((2, 3)), layer=4)
    assert info.value.layer == 4
    assert "layer 4" in str(info.value)


def test_lstsq_shape_errors():
    with pytest.raises(ArgumentError):
        least_squares_rowspace(np.ones((3, 2)), np.ones((2, 2)))
    with pytest.raises(ArgumentError):
        least_squares_rowspace(np.eye(2), np.ones((2, 3)))
