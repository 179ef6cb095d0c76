import numpy as np
import pytest

from models.problem import QpProblem, kkt_residual
from solvers import ipm
from solvers.errors import MaxIterations
from solvers.ipm import InequalityQp, IpmOptions, LpProblem
from oracles import enumerate_active_sets, lp_vertices, random_spd


def _random_lp(rng, n=20, m=10):
    """Feasible, bounded standard-form LP: b = A x_feas, c = A^T y + z with z > 0."""
    A = rng.standard_normal((m, n))
    b = A @ rng.uniform(0.5, 1.5, n)
    c = A.T @ rng.standard_normal(m) + rng.uniform(0.5, 1.5, n)
    return LpProblem(A, b, c)


def test_max_step():
    """Ratio test over decreasing components, capped at one."""
    v = np.array([1.0, 2.0, 3.0])
    assert ipm.max_step(v, np.array([-2.0, 1.0, -1.0])) == pytest.approx(0.5)
    assert ipm.max_step(v, np.array([1.0, 1.0, 1.0])) == 1.0
    assert ipm.max_step(v, np.array([1.0, 1.0, 1.0]), cap=False) == np.inf
    assert ipm.max_step(v, np.array([-0.1, 0.0, 0.0]), cap=False) == pytest.approx(10.0)


def test_step_back_factors():
    """eta and tau tend to their upper limits as mu -> 0."""
    opts = IpmOptions()
    assert opts.eta(0.5) == pytest.approx(0.9)
    assert opts.eta(1e-8) == pytest.approx(0.9999)
    assert opts.tau(10.0) == pytest.approx(0.995)
    assert opts.tau(1e-3) == pytest.approx(0.999)


def test_lp_starting_point_is_interior(rng):
    lp = _random_lp(rng)
    it = ipm.lp_starting_point(lp)
    assert np.all(it.x > 0) and np.all(it.s > 0)


def test_lp_matches_vertex_enumeration(rng):
    """Small LPs reach the best basic feasible solution's objective."""
    for _ in range(5):
        lp = _random_lp(rng, n=6, m=3)
        sol, report = ipm.lp_solve(lp)
        _, value = lp_vertices(lp.A, lp.b, lp.c)
        assert report.converged
        assert lp.c @ sol.x == pytest.approx(value, rel=1e-6, abs=1e-6)


def test_primal_residual_contracts_by_step_length(rng):
    """
    r_b(k+1) = (1 - alpha_pri) r_b(k) on every iteration.

    The identity is exact up to the normal-equation solve, whose round-off
    grows with x/s near the optimum, so the bound is 1e-8 relative to
    1 + |b| rather than an absolute 1e-12.
    """
    for _ in range(10):
        lp = _random_lp(rng)
        _, report = ipm.lp_solve(lp)
        scale = 1.0 + np.abs(lp.b).max()
        for row in report.history:
            assert row['rb_contraction'] <= 1e-8 * scale


def test_affine_and_combined_steps_share_the_factor(rng):
    lp = _random_lp(rng)
    it = ipm.lp_starting_point(lp)
    aff = ipm.lp_affine_step(it, lp)
    sigma, _ = ipm.lp_sigma(it, aff)
    assert 0.0 <= sigma <= 1.0
    step = ipm.lp_combined_step(it, aff, sigma)
    assert step.factor is aff.factor
    # the affine step solves the linearized equations exactly
    np.testing.assert_allclose(lp.A @ aff.dx, -it.r_b, atol=1e-9)
    np.testing.assert_allclose(lp.A.T @ aff.dlam + aff.ds, -it.r_c, atol=1e-9)


def test_lp_iteration_limit_attaches_best(rng):
    lp = _random_lp(rng)
    with pytest.raises(MaxIterations) as info:
        ipm.lp_solve(lp, IpmOptions(max_iter=1))
    assert info.value.best is not None
    assert info.value.report.status == 'max_iter'


def test_qp_matches_active_set_enumeration(rng):
    """Inequality-form QPs agree with the subset-enumeration oracle."""
    for _ in range(50):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, 6))
        Q = random_spd(rng, n)
        d = rng.standard_normal(n)
        A = rng.standard_normal((m, n))
        # x = 0 strictly feasible keeps the instance feasible
        c = -rng.uniform(0.1, 1.0, m)
        qp = InequalityQp(Q, d, A, c)
        sol, report = ipm.qp_solve(qp)
        _, value = enumerate_active_sets(Q, d, A, c)
        assert report.converged
        assert qp.objective(sol.x) == pytest.approx(value, rel=1e-6, abs=1e-7)
        assert np.all(sol.lam >= -1e-8)


def test_step_grid_skips_zero_pair(rng):
    """The chosen step lengths never leave the iterate in place."""
    qp = InequalityQp(random_spd(rng, 3), rng.standard_normal(3), rng.standard_normal((4, 3)), -np.ones(4))
    it = ipm.qp_starting_point(qp)
    step = ipm.qp_newton_step(it, qp, 0.1)
    a_pri, a_dual = ipm.qp_step_lengths(it, qp, step, IpmOptions())
    assert a_pri > 0 or a_dual > 0
    assert np.all(it.s + a_pri * step.ds > 0)
    assert np.all(it.lam + a_dual * step.dlam > 0)


def test_general_problem_with_equalities_and_bounds():
    """
    min 1/2 |x|^2 - x1 s.t. x1 + x2 + x3 = 1, x >= 0, x2 <= 0.1.

    The optimum (1, 0, 0) has zero multipliers on its active bounds, so the
    iterate only approaches it at the square root of the tolerance; the
    objective and the KKT residual are what the stopping rule controls.
    """
    p = QpProblem(np.eye(3), [-1.0, 0.0, 0.0], E=[[1, 1, 1]], c_eq=[1.0], lb=np.zeros(3), ub=[np.inf, 0.1, np.inf])
    sol, report = ipm.solve_problem(p)
    assert report.converged
    assert p.objective(sol.x) == pytest.approx(-0.5, abs=1e-7)
    np.testing.assert_allclose(sol.x, [1.0, 0.0, 0.0], atol=1e-3)
    assert kkt_residual(p, sol) < 1e-6


def test_strictly_complementary_problem_is_accurate():
    """min 1/2 |x|^2 - 2 x1 s.t. x1 + x2 + x3 = 1, x >= 0: the bounds on x2, x3 carry s = -1."""
    p = QpProblem(np.eye(3), [-2.0, 0.0, 0.0], E=[[1, 1, 1]], c_eq=[1.0], lb=np.zeros(3))
    sol, report = ipm.solve_problem(p)
    assert report.converged
    np.testing.assert_allclose(sol.x, [1.0, 0.0, 0.0], atol=1e-6)
    np.testing.assert_allclose(sol.lam, [1.0], atol=1e-6)
    np.testing.assert_allclose(sol.s, [0.0, -1.0, -1.0], atol=1e-6)


def test_lp_problem_through_standard_form():
    """min -x1 - x2 s.t. x1 + 2 x2 <= 4, 3 x1 + x2 <= 6, x >= 0 has optimum (1.6, 1.2)."""
    p = QpProblem(np.zeros((2, 2)), [-1.0, -1.0], G=[[1, 2], [3, 1]], c_in=[4, 6], lb=[0, 0])
    sol, _ = ipm.solve_lp_problem(p)
    assert p.objective(sol.x) == pytest.approx(-2.8, rel=1e-6)
    np.testing.assert_allclose(sol.x, [1.6, 1.2], atol=1e-5)
    assert kkt_residual(p, sol) < 1e-5


def test_unconstrained_qp():
    qp = InequalityQp(np.diag([2.0, 4.0]), [-2.0, -4.0], np.zeros((0, 2)), np.zeros(0))
    sol, report = ipm.qp_solve(qp)
    np.testing.assert_allclose(sol.x, [1.0, 1.0])
    assert report.converged


def test_lp_starting_point_degenerate_shift():
    """A = I, b = c = (1, 1) gives s = 0 before the shifts, so both shifts fall back to one."""
    lp = LpProblem(np.eye(2), [1.0, 1.0], [1.0, 1.0])
    it = ipm.lp_starting_point(lp)
    np.testing.assert_allclose(it.x, [2.0, 2.0])
    np.testing.assert_allclose(it.lam, [1.0, 1.0])
    np.testing.assert_allclose(it.s, [1.0, 1.0])
    assert it.mu == pytest.approx(2.0)


def test_lp_sigma_is_cube_of_mu_ratio():
    """x = s = (1, 1) and dx = (-1/2, -1/2) halve mu: sigma = 1/8."""
    lp = LpProblem([[1.0, 1.0]], [2.0], [1.0, 1.0])
    it = ipm.IpmIterate.at(lp, [1.0, 1.0], [0.0], [1.0, 1.0])
    step = ipm.LpStep(dx=np.array([-0.5, -0.5]), dlam=np.zeros(1), ds=np.zeros(2), factor=None)
    sigma, mu_aff = ipm.lp_sigma(it, step)
    assert mu_aff == pytest.approx(0.5)
    assert sigma == pytest.approx(0.125)


def test_lp_single_feasible_point():
    """min x s.t. x = 1, x >= 0."""
    sol, report = ipm.lp_solve(LpProblem([[1.0]], [1.0], [1.0]))
    assert report.converged
    np.testing.assert_allclose(sol.x, [1.0], atol=1e-7)
    assert report.objective == pytest.approx(1.0, abs=1e-7)


def test_lp_degenerate_optimal_face():
    """min -x1 - x2 s.t. x1 + x2 = 1, x >= 0: every point of the face is optimal."""
    lp = LpProblem([[1.0, 1.0]], [1.0], [-1.0, -1.0])
    sol, report = ipm.lp_solve(lp)
    assert report.converged
    assert lp.c @ sol.x == pytest.approx(-1.0, abs=1e-7)
    assert np.all(sol.x > 0)
    # mu goes to zero along with x^T s
    assert abs(sol.x @ sol.s) < 1e-7
    assert report.history[-1]['mu'] < report.history[0]['mu']


def test_qp_bound_active_optimum():
    """min 1/2 x^2 + x s.t. x >= 0: x = 0 with lam = 1."""
    sol, report = ipm.qp_solve(InequalityQp([[1.0]], [1.0], [[1.0]], [0.0]))
    assert report.converged
    np.testing.assert_allclose(sol.x, [0.0], atol=1e-6)
    np.testing.assert_allclose(sol.lam, [1.0], atol=1e-6)


def test_qp_interior_optimum():
    """min 1/2 x^2 - x s.t. x >= 0: x = 1 with lam = 0."""
    sol, report = ipm.qp_solve(InequalityQp([[1.0]], [-1.0], [[1.0]], [0.0]))
    assert report.converged
    np.testing.assert_allclose(sol.x, [1.0], atol=1e-6)
    np.testing.assert_allclose(sol.lam, [0.0], atol=1e-6)


def test_qp_newton_step_third_block(rng):
    """Lam ds + S dlam = -Lam S e + sigma mu e, and the first two blocks hold too."""
    for _ in range(10):
        n, m = 3, 5
        qp = InequalityQp(random_spd(rng, n), rng.standard_normal(n), rng.standard_normal((m, n)), -np.ones(m))
        it = ipm.QpIterate.at(qp, rng.standard_normal(n), rng.uniform(0.5, 2.0, m), rng.uniform(0.5, 2.0, m))
        sigma = 0.3
        step = ipm.qp_newton_step(it, qp, sigma)
        np.testing.assert_allclose(it.lam * step.ds + it.s * step.dlam, -it.lam * it.s + sigma * it.mu, atol=1e-10)
        np.testing.assert_allclose(qp.Q @ step.dx - qp.A.T @ step.dlam, -it.r_d, atol=1e-10)
        np.testing.assert_allclose(qp.A @ step.dx - step.ds, -it.r_c, atol=1e-10)


def test_qp_newton_step_vanishes_at_the_solution():
    """At x = 1, s = 1, lam = 0 of min 1/2 x^2 - x, x >= 0 every residual is zero."""
    qp = InequalityQp([[1.0]], [-1.0], [[1.0]], [0.0])
    it = ipm.QpIterate.at(qp, [1.0], [1.0], [0.0])
    step = ipm.qp_newton_step(it, qp, 0.0)
    np.testing.assert_allclose(step.dx, 0.0, atol=1e-15)
    np.testing.assert_allclose(step.ds, 0.0, atol=1e-15)
    np.testing.assert_allclose(step.dlam, 0.0, atol=1e-15)
