import numpy as np
import pytest

from models.problem import QpProblem, kkt_residual
from solvers import active_set
from solvers.active_set import ActiveSetOptions, AsIterate, WorkingSet
from solvers.errors import DependentConstraint, InfeasibleStart, NotInWorkingSet, PresumedInfeasible
from oracles import enumerate_active_sets, random_spd


def _projector(ws: WorkingSet) -> np.ndarray:
    return ws.Z @ ws.Z.T


def test_qr_updates_match_fresh_factorization(rng):
    """Random add/remove sequences keep Z Z^T and Y R equal to a from-scratch QR."""
    n = 6
    A = rng.standard_normal((10, n))
    for _ in range(100):
        ws = WorkingSet.empty(n)
        for _ in range(8):
            outside = [i for i in range(A.shape[0]) if i not in ws]
            if ws.size and (ws.size == n - 1 or rng.random() < 0.4):
                ws = active_set.qr_remove(ws, int(rng.choice(ws.indices)))
            else:
                i = int(rng.choice(outside))
                ws = active_set.qr_append(ws, A[i], i)
            fresh = WorkingSet.from_rows(A, ws.indices)
            np.testing.assert_allclose(_projector(ws), _projector(fresh), atol=1e-10)
            if ws.size:
                np.testing.assert_allclose(ws.Y @ ws.R, A[list(ws.indices)].T, atol=1e-10)
                np.testing.assert_allclose(np.triu(ws.R), ws.R, atol=1e-12)


def test_dependent_constraint_is_rejected():
    """A gradient already spanned by the working set cannot be added."""
    A = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
    ws = WorkingSet.from_rows(A, [0, 1])
    with pytest.raises(DependentConstraint):
        active_set.qr_append(ws, A[2], 2)


def test_removing_an_absent_constraint():
    ws = WorkingSet.from_rows(np.eye(3), [0, 2])
    with pytest.raises(NotInWorkingSet):
        active_set.qr_remove(ws, 1)


def test_step_length_reports_the_blocking_constraint():
    """From x = (1/2, 1/2) along p = (1, 1/4) the row x1 <= 1 blocks at alpha = 1/2."""
    p = QpProblem(np.eye(2), np.zeros(2), lb=[0, 0], ub=[1, 1])
    form = active_set.active_set_form(p)
    it = AsIterate(x=np.array([0.5, 0.5]), working=WorkingSet.empty(2))
    alpha, blocking = active_set.as_step_length(it, np.array([1.0, 0.25]), form)
    assert alpha == pytest.approx(0.5)
    assert blocking == 2


def test_box_optimum_has_upper_multipliers():
    """min 1/2 |x|^2 - 2 x1 - 2 x2 on [0, 1]^2 ends at x = (1, 1) with t = (1, 1)."""
    p = QpProblem(np.eye(2), [-2.0, -2.0], lb=[0, 0], ub=[1, 1])
    sol, report = active_set.solve_problem(p)
    assert report.converged
    np.testing.assert_allclose(sol.x, [1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(sol.t, [1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(sol.s, 0.0, atol=1e-12)
    assert report.count('adds') == 2


def test_matches_enumeration_oracle(rng):
    """Inequality QPs with x = 0 feasible agree with subset enumeration."""
    for _ in range(50):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, 7))
        Q = random_spd(rng, n)
        d = rng.standard_normal(n)
        G = rng.standard_normal((m, n))
        c = -rng.uniform(0.1, 1.0, m)
        p = QpProblem(Q, d, G=G, c_in=c, sense=['ge'] * m)
        sol, report = active_set.solve_problem(p)
        _, value = enumerate_active_sets(Q, d, G, c)
        assert report.converged
        assert p.objective(sol.x) == pytest.approx(value, rel=1e-8, abs=1e-9)
        assert np.all(sol.lam <= 1e-9)
        assert kkt_residual(p, sol) < 1e-7


def test_phase_one_finds_a_feasible_start(rng):
    """An equality that x = 0 violates goes through the big-M phase first."""
    for _ in range(10):
        n = 4
        Q = random_spd(rng, n)
        d = rng.standard_normal(n)
        E = rng.standard_normal((1, n))
        G = rng.standard_normal((3, n))
        c_in = -rng.uniform(0.1, 1.0, 3)
        # x_feas satisfies the inequalities strictly
        x_feas = 0.05 * rng.standard_normal(n)
        c_in = np.minimum(c_in, G @ x_feas - 0.05)
        c_eq = E @ x_feas
        p = QpProblem(Q, d, E=E, c_eq=c_eq, G=G, c_in=c_in, sense=['ge'] * 3)
        x0 = active_set.phase1_bigm(p, np.zeros(n))
        assert abs(E[0] @ x0 - c_eq[0]) < 1e-8
        assert np.all(G @ x0 - c_in >= -1e-8)
        sol, report = active_set.solve_problem(p)
        A = np.vstack([E, G])
        _, value = enumerate_active_sets(Q, d, A, np.concatenate([c_eq, c_in]), n_eq=1)
        assert report.converged
        assert p.objective(sol.x) == pytest.approx(value, rel=1e-8, abs=1e-9)


def test_report_counts_phase_one_work():
    """x1 + x2 >= 1 from x = 0: the big-M phase lands on the optimum (1/2, 1/2) itself."""
    p = QpProblem(np.eye(2), np.zeros(2), G=[[1.0, 1.0]], c_in=[1.0], sense=['ge'], lb=[0, 0])
    sol, report = active_set.solve_problem(p)
    assert report.converged
    np.testing.assert_allclose(sol.x, [0.5, 0.5], atol=1e-10)
    phase1 = report.count('phase1_iterations')
    assert phase1 > 0
    assert report.iterations >= phase1
    assert report.count('adds') > 0
    assert any(e.startswith('phase I attempt 0') for e in report.events)
    assert [row['iter'] for row in report.history] == sorted(row['iter'] for row in report.history)


def test_feasible_start_skips_phase_one():
    p = QpProblem(np.eye(2), [-2.0, -2.0], lb=[0, 0], ub=[1, 1])
    _, report = active_set.solve_problem(p)
    assert report.count('phase1_iterations') == 0
    assert not any('phase I' in e for e in report.events)


def test_infeasible_start_is_rejected():
    p = QpProblem(np.eye(2), np.zeros(2), lb=[0, 0])
    with pytest.raises(InfeasibleStart):
        active_set.as_solve(p, [-1.0, 0.0])


def test_phase_one_gives_up_on_infeasible_rows():
    """x >= 1 together with x <= 0 keeps eta* = 1/2 for every M."""
    p = QpProblem(np.eye(1), np.zeros(1), G=[[1.0], [1.0]], c_in=[1.0, 0.0], sense=['ge', 'le'])
    with pytest.raises(PresumedInfeasible):
        active_set.phase1_bigm(p, opts=ActiveSetOptions(max_doublings=3))


def test_options_read_environment(monkeypatch):
    monkeypatch.setenv('ACTIVE_SET_MAX_ITER', '7')
    opts = ActiveSetOptions.from_env(tol=1e-6)
    assert opts.max_iter == 7
    assert opts.tol == 1e-6
    assert opts.iteration_cap(3, 4) == 7
    assert ActiveSetOptions().iteration_cap(3, 4) == 450
