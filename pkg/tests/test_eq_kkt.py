import numpy as np
import pytest

from solvers import eq_kkt
from solvers.eq_kkt import EqQp
from solvers.errors import DimensionMismatch, NotPositiveDefinite, RankDeficientA, SingularKkt, SingularSchur
from oracles import dense_kkt, random_spd


def _random_eq(rng, n, m):
    return EqQp(random_spd(rng, n), rng.standard_normal((m, n)), rng.standard_normal(n), rng.standard_normal(m))


def test_small_example_all_backends():
    """min 1/2 |x|^2 s.t. x1 + x2 = 1 gives x = (1/2, 1/2), lam = -1/2 on every backend."""
    eq = EqQp(np.eye(2), [[1.0, 1.0]], np.zeros(2), [1.0])
    for backend in eq_kkt.BACKENDS:
        x, lam = eq_kkt.solve(eq, backend)
        np.testing.assert_allclose(x, [0.5, 0.5], atol=1e-14)
        np.testing.assert_allclose(lam, [-0.5], atol=1e-14)


def test_backends_agree_on_random_problems(rng):
    """Full LDL^T, Schur complement and null-space solutions coincide."""
    for _ in range(50):
        n = int(rng.integers(1, 9))
        m = int(rng.integers(0, min(n, 4) + 1))
        eq = _random_eq(rng, n, m)
        x_ref, lam_ref = dense_kkt(eq.Q, eq.A, eq.d, eq.c)
        scale = 1.0 + np.abs(np.concatenate([x_ref, lam_ref])).max()
        for backend in eq_kkt.BACKENDS:
            x, lam = eq_kkt.solve(eq, backend)
            np.testing.assert_allclose(x, x_ref, atol=1e-8 * scale)
            np.testing.assert_allclose(lam, lam_ref, atol=1e-8 * scale)
            np.testing.assert_allclose(eq.Q @ x + eq.d + eq.A.T @ lam, 0.0, atol=1e-8 * scale)


def test_inertia_of_kkt_matrix(rng):
    """With Z^T Q Z > 0 and A full rank, inertia(K) = (n, m, 0), even for indefinite Q."""
    for _ in range(20):
        n = int(rng.integers(2, 9))
        m = int(rng.integers(1, n + 1))
        A = rng.standard_normal((m, n))
        _, Z, _, _ = eq_kkt.nullspace_basis(A)
        # indefinite on range(A^T), positive definite on null(A)
        Q = Z @ Z.T * 3.0 - (np.eye(n) - Z @ Z.T) * 2.0
        K, _ = eq_kkt.assemble_kkt(EqQp(Q, A, np.zeros(n), np.zeros(m)), np.zeros(n))
        assert eq_kkt.inertia(K, m=m) == (n, m, 0)


def test_inertia_zero_band_uses_larger_block():
    """The zero threshold scales with max(n, m), not n + m."""
    eps = np.finfo(float).eps
    # n = 3, m = 2: an eigenvalue of 4 eps sits between 3 eps and 5 eps
    K = np.diag([1.0, 1.0, 4.0 * eps, -1.0, -1.0])
    assert eq_kkt.inertia(K, m=2) == (3, 2, 0)
    assert eq_kkt.inertia(K) == (2, 2, 1)
    with pytest.raises(DimensionMismatch):
        eq_kkt.inertia(K, m=6)


def test_step_system_sign():
    """factorize().solve_step returns p with Q (x + p) + d + A^T lam = 0 from any x."""
    eq = EqQp(np.diag([2.0, 4.0]), [[1.0, -1.0]], [1.0, 1.0], [0.5])
    x0 = np.array([3.0, -2.0])
    K, rhs = eq_kkt.assemble_kkt(eq, x0)
    factors = eq_kkt.factorize(eq, 'full')
    p, lam_hat = factors.solve_step(rhs[:2], rhs[2:])
    x_ref, lam_ref = dense_kkt(eq.Q, eq.A, eq.d, eq.c)
    np.testing.assert_allclose(x0 + p, x_ref, atol=1e-12)
    np.testing.assert_allclose(-lam_hat, lam_ref, atol=1e-12)


def test_nullspace_handles_indefinite_q():
    """The null-space backend needs only Z^T Q Z > 0; Schur needs Q > 0."""
    eq = EqQp(np.diag([1.0, -1.0]), [[0.0, 1.0]], [-1.0, 0.0], [2.0])
    x, lam = eq_kkt.solve_nullspace(eq)
    np.testing.assert_allclose(x, [1.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(lam, [2.0], atol=1e-12)
    with pytest.raises(NotPositiveDefinite):
        eq_kkt.solve_schur(eq)


def test_singular_cases_raise():
    """Dependent rows break the full and Schur backends and the null-space basis."""
    A = np.array([[1.0, 1.0], [2.0, 2.0]])
    eq = EqQp(np.eye(2), A, np.zeros(2), [1.0, 2.0])
    with pytest.raises(SingularKkt):
        eq_kkt.solve_full_kkt(eq)
    with pytest.raises(SingularSchur):
        eq_kkt.solve_schur(eq)
    with pytest.raises(RankDeficientA):
        eq_kkt.nullspace_basis(A)


def test_unknown_backend():
    eq = EqQp(np.eye(1), np.zeros((0, 1)), [1.0], np.zeros(0))
    with pytest.raises(ValueError):
        eq_kkt.solve(eq, 'cholesky')


def test_no_constraints():
    """m = 0 reduces to Q x = -d on every backend."""
    eq = EqQp(np.diag([2.0, 5.0]), np.zeros((0, 2)), [2.0, -5.0], np.zeros(0))
    for backend in eq_kkt.BACKENDS:
        x, lam = eq_kkt.solve(eq, backend)
        np.testing.assert_allclose(x, [-1.0, 1.0], atol=1e-14)
        assert lam.size == 0


def test_nullspace_step_multipliers(rng):
    """nullspace_step returns Q p + g = A_W^T lam_hat with A_W p = 0."""
    n, m = 5, 2
    Q = random_spd(rng, n)
    A = rng.standard_normal((m, n))
    Qf, Rf = np.linalg.qr(A.T, mode='complete')
    Y, Z, R = Qf[:, :m], Qf[:, m:], Rf[:m, :m]
    g = rng.standard_normal(n)
    p, lam_hat = eq_kkt.nullspace_step(Q, g, Y, Z, R)
    np.testing.assert_allclose(A @ p, 0.0, atol=1e-12)
    np.testing.assert_allclose(Q @ p + g, A.T @ lam_hat, atol=1e-10)
