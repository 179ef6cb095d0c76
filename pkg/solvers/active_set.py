"""
Feasible primal active-set method.

Internally every problem is brought to

    min 1/2 x^T Q x + d^T x   s.t.  a_i^T x = c_i (i < n_eq),  a_i^T x >= c_i (i >= n_eq)

and working-set multipliers follow Q x + d - sum_W lam_i a_i = 0 with
lam_i >= 0 on inequalities. The working-set matrix A_W^T = [Y Z][R; 0] is
kept factored and updated one column at a time.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg as sla

from utils.config import env_float, env_int
from utils.logger import log
from models.problem import KktSolution, QpProblem, bounds_to_rows, split_row_multipliers
from models.report import SolveReport
from solvers.eq_kkt import nullspace_step
from solvers.errors import (CycleDetected, DependentConstraint, InfeasibleStart, MaxIterations,
                            NotInWorkingSet, PresumedInfeasible)

EPS = np.finfo(float).eps
DEPENDENCE_TOL = 1e-10


@dataclass
class ActiveSetOptions:
    tol: float = 1e-9
    max_iter: Optional[int] = None
    big_m: Optional[float] = None
    max_doublings: int = 20

    @classmethod
    def from_env(cls, **overrides) -> 'ActiveSetOptions':
        max_iter = env_int('ACTIVE_SET_MAX_ITER', 0)
        values = {
            'tol': env_float('ACTIVE_SET_TOL', cls.tol),
            'max_iter': max_iter if max_iter > 0 else None,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def iteration_cap(self, n: int, m: int) -> int:
        return self.max_iter if self.max_iter else 50 * (n + m) + 100


# ------------------------------------------------------------ problem ---

@dataclass(frozen=True)
class ActiveSetForm:
    """Equalities first, then '>=' rows; row_sign maps back to bounds_to_rows(problem)."""
    problem: QpProblem
    Q: np.ndarray
    d: np.ndarray
    A: np.ndarray
    c: np.ndarray
    n_eq: int
    row_sign: np.ndarray

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, x) -> float:
        return float(0.5 * x @ self.Q @ x + self.d @ x)

    def violation(self, x) -> float:
        r = self.A @ x - self.c
        eq = np.max(np.abs(r[:self.n_eq]), initial=0.0)
        ineq = np.max(np.maximum(-r[self.n_eq:], 0.0), initial=0.0)
        return float(max(eq, ineq))

    def to_solution(self, x: np.ndarray, lam_hat: np.ndarray) -> KktSolution:
        lam_rows = -self.row_sign * lam_hat
        rows_sol = KktSolution(x=x.copy(), lam=lam_rows, s=np.zeros(self.n), t=np.zeros(self.n))
        return split_row_multipliers(self.problem, rows_sol)


def active_set_form(p: QpProblem) -> ActiveSetForm:
    rows = bounds_to_rows(p)
    sign_in = np.where(rows.ge_mask, 1.0, -1.0)
    row_sign = np.concatenate([np.ones(rows.meq), sign_in])
    A = np.vstack([rows.E, rows.G * sign_in[:, None]])
    c = np.concatenate([rows.c_eq, rows.c_in * sign_in])
    return ActiveSetForm(problem=p, Q=np.asarray(p.Q), d=np.asarray(p.d), A=A, c=c,
                         n_eq=rows.meq, row_sign=row_sign)


# -------------------------------------------------------- working set ---

@dataclass(frozen=True)
class WorkingSet:
    """
    Constraint ids treated as equalities, with the full QR factors
    A_W^T = Qf Rf (Qf = [Y Z] orthogonal n x n, Rf = [R; 0]).
    """
    indices: Tuple[int, ...]
    Qf: np.ndarray = field(repr=False)
    Rf: np.ndarray = field(repr=False)
    equalities: frozenset = frozenset()

    @classmethod
    def empty(cls, n: int, equalities=frozenset()) -> 'WorkingSet':
        return cls(indices=(), Qf=np.eye(n), Rf=np.zeros((n, 0)), equalities=frozenset(equalities))

    @classmethod
    def from_rows(cls, A: np.ndarray, indices, equalities=frozenset()) -> 'WorkingSet':
        """From-scratch factorization (no column pivoting) of A[indices]^T."""
        indices = tuple(int(i) for i in indices)
        n = A.shape[1]
        if not indices:
            return cls.empty(n, equalities)
        Qf, Rf = sla.qr(A[list(indices)].T, mode='full')
        Qf, Rf = _positive_diagonal(Qf, Rf)
        return cls(indices=indices, Qf=Qf, Rf=Rf, equalities=frozenset(equalities))

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def Y(self) -> np.ndarray:
        return self.Qf[:, :self.size]

    @property
    def Z(self) -> np.ndarray:
        return self.Qf[:, self.size:]

    @property
    def R(self) -> np.ndarray:
        return self.Rf[:self.size, :self.size]

    def __contains__(self, index) -> bool:
        return index in self.indices


def _positive_diagonal(Qf: np.ndarray, Rf: np.ndarray):
    k = Rf.shape[1]
    signs = np.sign(np.diag(Rf[:k, :k]))
    signs[signs == 0] = 1.0
    Qf = Qf.copy()
    Rf = Rf.copy()
    Qf[:, :k] *= signs
    Rf[:k] *= signs[:, None]
    return Qf, Rf


def qr_append(ws: WorkingSet, a: np.ndarray, index: int = -1) -> WorkingSet:
    """
    Adds gradient a as the last working column. Y and R keep their leading
    block; the new column of R is (Y^T a, gamma) with gamma = ||Z^T a||.
    """
    a = np.asarray(a, dtype=float)
    norm_a = float(np.linalg.norm(a))
    gamma = float(np.linalg.norm(ws.Z.T @ a))
    if gamma <= DEPENDENCE_TOL * max(norm_a, EPS):
        raise DependentConstraint(f"constraint {index} depends on the working set (gamma = {gamma:.3e})")
    if ws.size == 0:
        Qf, Rf = sla.qr(a[:, None], mode='full')
    else:
        Qf, Rf = sla.qr_insert(ws.Qf, ws.Rf, a, ws.size, which='col')
    Qf, Rf = _positive_diagonal(Qf, Rf)
    return WorkingSet(indices=ws.indices + (index,), Qf=Qf, Rf=Rf, equalities=ws.equalities)


def qr_remove(ws: WorkingSet, index: int) -> WorkingSet:
    """Drops a working constraint; Givens rotations restore the triangle of R."""
    if index not in ws.indices:
        raise NotInWorkingSet(f"constraint {index} is not in the working set {list(ws.indices)}")
    if index in ws.equalities:
        raise ValueError(f"equality constraint {index} cannot leave the working set")
    pos = ws.indices.index(index)
    indices = ws.indices[:pos] + ws.indices[pos + 1:]
    if not indices:
        return WorkingSet(indices=(), Qf=ws.Qf.copy(), Rf=np.zeros((ws.Qf.shape[0], 0)), equalities=ws.equalities)
    Qf, Rf = sla.qr_delete(ws.Qf, ws.Rf, pos, 1, which='col')
    Qf, Rf = _positive_diagonal(Qf, Rf)
    return WorkingSet(indices=indices, Qf=Qf, Rf=Rf, equalities=ws.equalities)


# ---------------------------------------------------------- iteration ---

@dataclass
class AsIterate:
    x: np.ndarray
    working: WorkingSet
    multipliers: Dict[int, float] = field(default_factory=dict)


def as_subproblem(it: AsIterate, q: ActiveSetForm) -> np.ndarray:
    """Step p minimizing the model over {p : a_i^T p = 0, i in W}."""
    g = q.Q @ it.x + q.d
    p, _ = nullspace_step(q.Q, g, it.working.Y, it.working.Z)
    return p


def as_step_length(it: AsIterate, p: np.ndarray, q: ActiveSetForm) -> Tuple[float, Optional[int]]:
    """Longest feasible step along p, at most 1; the first constraint hit blocks (lowest index on ties)."""
    Ap = q.A @ p
    slack = q.A @ it.x - q.c
    alpha, blocking = 1.0, None
    pnorm = float(np.linalg.norm(p))
    for i in range(q.n_eq, q.m):
        if i in it.working:
            continue
        if Ap[i] >= -EPS * 16 * max(np.linalg.norm(q.A[i]) * pnorm, EPS):
            continue
        # slightly negative slack (rounding) gives a zero step
        ratio = max(-slack[i] / Ap[i], 0.0)
        if ratio < alpha:
            alpha, blocking = ratio, i
    return alpha, blocking


def _working_multipliers(q: ActiveSetForm, it: AsIterate) -> np.ndarray:
    g = q.Q @ it.x + q.d
    _, lam_w = nullspace_step(q.Q, g, it.working.Y, it.working.Z, it.working.R)
    return lam_w


def _initial_working_set(q: ActiveSetForm, x: np.ndarray, tol: float) -> WorkingSet:
    ws = WorkingSet.empty(q.n, equalities=range(q.n_eq))
    for i in range(q.n_eq):
        ws = qr_append(ws, q.A[i], i)
    slack = q.A @ x - q.c
    for i in range(q.n_eq, q.m):
        if abs(slack[i]) <= tol and ws.size < q.n:
            try:
                ws = qr_append(ws, q.A[i], i)
            except DependentConstraint:
                continue
    return ws


def as_solve(q, x0, opts: Optional[ActiveSetOptions] = None,
             report: Optional[SolveReport] = None) -> Tuple[KktSolution, SolveReport]:
    """
    Primal active-set iteration from a feasible x0. `q` is a QpProblem or an
    already normalized ActiveSetForm. A given report is continued: its
    iteration count and events carry on from earlier phases.
    """
    opts = opts or ActiveSetOptions.from_env()
    form = q if isinstance(q, ActiveSetForm) else active_set_form(q)
    report = report if report is not None else SolveReport(method='active-set')
    base = report.iterations
    x = np.array(x0, dtype=float, copy=True)
    scale = 1.0 + max(np.max(np.abs(form.c), initial=0.0), np.max(np.abs(form.d), initial=0.0))
    feas_tol = opts.tol * scale
    if form.violation(x) > feas_tol:
        raise InfeasibleStart(f"starting point violates the constraints by {form.violation(x):.3e}")

    it = AsIterate(x=x, working=_initial_working_set(form, x, feas_tol))
    cap = opts.iteration_cap(form.n, form.m)
    visited: Dict[frozenset, float] = {}
    prev_key = None
    log.info(f"Active set: n={form.n}, m={form.m} ({form.n_eq} equalities), start with |W|={it.working.size}")

    for k in range(cap):
        report.iterations = base + k
        J = form.objective(it.x)
        key = frozenset(it.working.indices)
        # only a return to an earlier working set counts as a revisit
        if key != prev_key and key in visited and J >= visited[key] - opts.tol * (1.0 + abs(J)):
            report.finish('cycle', objective=J)
            lam_hat = np.zeros(form.m)
            raise CycleDetected(f"working set {sorted(key)} revisited without objective decrease",
                                best=form.to_solution(it.x, lam_hat), report=report)
        visited[key] = min(J, visited.get(key, np.inf))
        prev_key = key

        p = as_subproblem(it, form)
        violation = form.violation(it.x)
        if np.linalg.norm(p, np.inf) <= opts.tol * (1.0 + np.linalg.norm(it.x, np.inf)):
            lam_w = _working_multipliers(form, it)
            it.multipliers = dict(zip(it.working.indices, lam_w))
            ineq = [(lam, i) for i, lam in it.multipliers.items() if i >= form.n_eq]
            lam_min, drop = min(ineq) if ineq else (0.0, None)
            report.record(iter=base + k, objective=J, step=0.0, working=it.working.size, violation=violation)
            if drop is None or lam_min >= -opts.tol * scale:
                lam_hat = np.zeros(form.m)
                for i, lam in it.multipliers.items():
                    lam_hat[i] = lam
                sol = form.to_solution(it.x, lam_hat)
                report.finish('converged', objective=J, kkt_residual=_residual(form, it.x, lam_hat))
                return sol, report
            it.working = qr_remove(it.working, drop)
            report.bump('drops')
            report.event(f"drop {drop} (lambda = {lam_min:.3e})")
            continue

        alpha, blocking = as_step_length(it, p, form)
        it.x = it.x + alpha * p
        report.record(iter=base + k, objective=J, step=alpha, working=it.working.size, violation=violation)
        if blocking is not None:
            it.working = qr_append(it.working, form.A[blocking], blocking)
            report.bump('adds')
            report.event(f"add {blocking} (alpha = {alpha:.3e})")

    report.iterations = base + cap
    report.finish('max_iter', objective=form.objective(it.x))
    raise MaxIterations(f"active set did not converge in {cap} iterations",
                        best=form.to_solution(it.x, np.zeros(form.m)), report=report)


def _residual(form: ActiveSetForm, x: np.ndarray, lam_hat: np.ndarray) -> float:
    stat = form.Q @ x + form.d - form.A.T @ lam_hat
    r = form.A @ x - form.c
    comp = lam_hat[form.n_eq:] * r[form.n_eq:]
    sign = np.maximum(-lam_hat[form.n_eq:], 0.0)
    return float(max(np.max(np.abs(stat), initial=0.0), form.violation(x),
                     np.max(np.abs(comp), initial=0.0), np.max(sign, initial=0.0)))


# ------------------------------------------------------------ Phase I ---

def default_big_m(p: QpProblem) -> float:
    return 100.0 * (1.0 + np.linalg.norm(p.d, np.inf) + np.linalg.norm(p.Q, np.inf))


def phase1_bigm(q: QpProblem, xguess=None, opts: Optional[ActiveSetOptions] = None,
                report: Optional[SolveReport] = None) -> np.ndarray:
    """
    Feasible point by the big-M problem in (x, eta):

        min 1/2 x^T Q x + d^T x + M eta + 1/2 eta^2
        s.t. a_i^T x + eta >= c_i (inequalities, both signs for equalities), eta >= 0

    started from (xguess, max violation of xguess). M doubles while eta* > tol.
    Iterations and add/drop events go to `report` when one is given.
    """
    opts = opts or ActiveSetOptions.from_env()
    report = report if report is not None else SolveReport(method='active-set')
    start = report.iterations
    form = active_set_form(q)
    n, k = form.n, form.n_eq
    x = np.zeros(n) if xguess is None else np.asarray(xguess, dtype=float)
    rows = np.vstack([form.A[:k], -form.A[:k], form.A[k:]])
    rhs = np.concatenate([form.c[:k], -form.c[:k], form.c[k:]])
    G = np.hstack([rows, np.ones((rows.shape[0], 1))])
    Q_ext = np.zeros((n + 1, n + 1))
    Q_ext[:n, :n] = form.Q
    Q_ext[n, n] = 1.0
    eta0 = max(float(np.max(rhs - rows @ x, initial=0.0)), 0.0)
    z = np.append(x, eta0)
    M = opts.big_m if opts.big_m else default_big_m(q)
    scale = 1.0 + np.max(np.abs(form.c), initial=0.0)
    log.info(f"Phase I: eta0 = {eta0:.3e}, M = {M:.3e}")

    for attempt in range(opts.max_doublings + 1):
        ext = QpProblem(Q_ext, np.append(form.d, M), G=G, c_in=rhs,
                        sense=np.full(rows.shape[0], 'ge'),
                        lb=np.append(np.full(n, -np.inf), 0.0))
        report.event(f"phase I attempt {attempt}: M = {M:.3e}")
        sol, _ = as_solve(ext, z, opts, report=report)
        z = sol.x
        eta = z[n]
        log.debug(f"Phase I attempt {attempt}: M = {M:.3e}, eta* = {eta:.3e}")
        if eta <= opts.tol * scale:
            report.bump('phase1_iterations', report.iterations - start)
            report.event(f"phase I done: eta* = {eta:.3e}")
            return z[:n].copy()
        M *= 2.0
    report.bump('phase1_iterations', report.iterations - start)
    raise PresumedInfeasible(f"no feasible point found: eta* = {z[n]:.3e} after {opts.max_doublings} doublings of M")


def solve_problem(p: QpProblem, xguess=None, opts: Optional[ActiveSetOptions] = None) -> Tuple[KktSolution, SolveReport]:
    """
    Phase I from xguess (default: zero clipped to the bounds), then as_solve.
    The returned report covers both phases.
    """
    opts = opts or ActiveSetOptions.from_env()
    if xguess is None:
        xguess = np.clip(np.zeros(p.n), p.lb, p.ub)
    form = active_set_form(p)
    scale = 1.0 + max(np.max(np.abs(form.c), initial=0.0), np.max(np.abs(form.d), initial=0.0))
    x0 = np.asarray(xguess, dtype=float)
    report = SolveReport(method='active-set')
    if form.violation(x0) > opts.tol * scale:
        x0 = phase1_bigm(p, x0, opts, report=report)
        report.status = 'running'
    return as_solve(form, x0, opts, report=report)
