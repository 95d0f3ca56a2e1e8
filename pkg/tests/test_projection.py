import numpy as np
import pytest

from regbn.linalg import frobenius_norm, thin_svd
from regbn.projection import project_direct, project_svd, residual
from regbn.verify import dense_solve_projection, rel_fro


def test_self_regression_recovers_identity():
    rng = np.random.default_rng(20)
    g = rng.standard_normal((20, 5))
    w = project_direct(g, g, 1e-10)
    np.testing.assert_allclose(w, np.eye(5), atol=1e-6)


def test_zero_conditioning_modality_gives_zero_weights():
    rng = np.random.default_rng(21)
    f = rng.standard_normal((8, 3))
    g = np.zeros((8, 4))
    np.testing.assert_array_equal(project_direct(f, g, 0.5), np.zeros((4, 3)))
    np.testing.assert_array_equal(project_svd(f, g, 0.5), np.zeros((4, 3)))


def test_direct_matches_dense_solve():
    rng = np.random.default_rng(22)
    f = rng.standard_normal((16, 4))
    g = rng.standard_normal((16, 6))
    w = project_direct(f, g, 0.5)
    np.testing.assert_allclose(w, dense_solve_projection(f, g, 0.5), atol=1e-8)


def test_svd_form_matches_direct_form():
    rng = np.random.default_rng(23)
    for _ in range(200):
        b = int(rng.integers(4, 65))
        m = int(rng.integers(2, 33))
        n = int(rng.integers(2, 33))
        f = rng.standard_normal((b, n))
        g = rng.standard_normal((b, m))
        lam = float(10.0 ** rng.uniform(-4, 4))
        assert rel_fro(project_svd(f, g, lam), project_direct(f, g, lam)) <= 1e-8


def test_huge_lambda_shrinks_weights_to_zero():
    rng = np.random.default_rng(24)
    f = rng.standard_normal((10, 3))
    g = rng.standard_normal((10, 4))
    lam = 1e12
    w = project_svd(f, g, lam)
    bound = thin_svd(g).sigma[0] * frobenius_norm(f) / lam
    assert np.max(np.abs(w)) <= bound
    assert frobenius_norm(w) <= 1e-9


def test_rank_deficient_conditioning_is_fine():
    rng = np.random.default_rng(25)
    col = rng.standard_normal((12, 1))
    g = np.hstack([col, col, col])  # rank 1
    f = rng.standard_normal((12, 2))
    w = project_svd(f, g, 0.1)
    assert np.all(np.isfinite(w))
    np.testing.assert_allclose(w, dense_solve_projection(f, g, 0.1), atol=1e-8)


def test_zero_sigma_columns_do_not_change_projection_action():
    rng = np.random.default_rng(26)
    f = rng.standard_normal((10, 3))
    g = rng.standard_normal((10, 4))
    g_padded = np.hstack([g, np.zeros((10, 2))])
    lam = 0.7
    act = g @ project_svd(f, g, lam)
    act_padded = g_padded @ project_svd(f, g_padded, lam)
    np.testing.assert_allclose(act, act_padded, atol=1e-10)


# -- residual ------------------------------------------------------------------


def test_residual_zero_weights_passthrough():
    rng = np.random.default_rng(27)
    f = rng.standard_normal((6, 3))
    g = rng.standard_normal((6, 2))
    np.testing.assert_array_equal(residual(f, g, np.zeros((2, 3))), f)


def test_residual_exact_fit_is_zero():
    rng = np.random.default_rng(28)
    g = rng.standard_normal((6, 2))
    w = rng.standard_normal((2, 3))
    f = g @ w
    np.testing.assert_allclose(residual(f, g, w), np.zeros_like(f), atol=1e-12)


def test_ridge_residual_identity():
    # g^T (f - g W(lam)) == lam W(lam)
    rng = np.random.default_rng(29)
    for _ in range(100):
        b = int(rng.integers(4, 65))
        m = int(rng.integers(2, 33))
        n = int(rng.integers(2, 33))
        f = rng.standard_normal((b, n))
        g = rng.standard_normal((b, m))
        lam = float(10.0 ** rng.uniform(-4, 4))
        w = project_svd(f, g, lam)
        assert rel_fro(g.T @ residual(f, g, w), lam * w) <= 1e-8


def test_residual_shape_preserved():
    rng = np.random.default_rng(30)
    f = rng.standard_normal((9, 5))
    g = rng.standard_normal((9, 3))
    out = residual(f, g, project_svd(f, g, 1.0))
    assert out.shape == f.shape


def test_residual_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        residual(np.ones((4, 3)), np.ones((4, 2)), np.ones((3, 3)))


# -- preconditions ---------------------------------------------------------------


def test_single_row_batch_rejected():
    with pytest.raises(ValueError, match="at least 2 rows"):
        project_direct(np.ones((1, 3)), np.ones((1, 2)), 1.0)


def test_batch_mismatch_rejected():
    with pytest.raises(ValueError, match="batch size mismatch"):
        project_direct(np.ones((4, 3)), np.ones((5, 2)), 1.0)


def test_non_positive_lambda_rejected():
    f, g = np.ones((4, 3)), np.ones((4, 2))
    for lam in (0.0, -1.0):
        with pytest.raises(ValueError):
            project_direct(f, g, lam)
        with pytest.raises(ValueError):
            project_svd(f, g, lam)
