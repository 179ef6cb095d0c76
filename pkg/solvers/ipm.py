"""
Infeasible primal-dual predictor-corrector interior point methods.

LP (standard form):      min c^T x   s.t.  A x = b, x >= 0
QP (inequality form):    min 1/2 x^T Q x + d^T x   s.t.  A x >= c

Newton systems are reduced to their positive definite Schur complement
(A diag(x/s) A^T for LP, Q + A^T diag(lam/s) A for QP) and factored once per
iteration; the predictor and corrector share that factor.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as sla

from utils.config import env_float, env_int
from utils.logger import log
from models.problem import (KktSolution, QpProblem, StandardFormQp, bounds_to_rows, split_row_multipliers,
                            to_standard_form, recover_solution)
from models.report import SolveReport
from solvers.eq_kkt import nullspace_basis
from solvers.errors import (DimensionMismatch, MaxIterations, NotPositiveDefinite,
                            SingularNewtonMatrix, SingularNormalEquations)

EPS = np.finfo(float).eps


@dataclass
class IpmOptions:
    tol: float = 1e-8
    max_iter: int = 100
    eta_min: float = 0.9
    eta_max: float = 0.9999
    tau_min: float = 0.995
    grid: int = 7

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not 0.9 <= self.eta_min <= self.eta_max <= 1.0:
            raise ValueError(f"need 0.9 <= eta_min <= eta_max <= 1, got {self.eta_min}, {self.eta_max}")
        if not 0.0 < self.tau_min < 1.0:
            raise ValueError(f"tau_min must lie in (0, 1), got {self.tau_min}")
        if self.grid < 2:
            raise ValueError(f"grid needs at least 2 points, got {self.grid}")

    @classmethod
    def from_env(cls, **overrides) -> 'IpmOptions':
        values = {
            'tol': env_float('SOLVER_TOL', cls.tol),
            'max_iter': env_int('SOLVER_MAX_ITER', cls.max_iter),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def eta(self, mu: float) -> float:
        """Step-back factor, tending to eta_max as mu -> 0."""
        return min(self.eta_max, max(self.eta_min, 1.0 - mu))

    def tau(self, mu: float) -> float:
        return min(1.0 - EPS, max(self.tau_min, 1.0 - mu))


def max_step(v: np.ndarray, dv: np.ndarray, cap: bool = True) -> float:
    """
    Largest alpha with v + alpha dv >= 0 (ratios over dv < 0 only), capped at 1
    unless cap=False, in which case an all-nonnegative dv gives inf.
    """
    neg = dv < 0
    if not np.any(neg):
        return 1.0 if cap else np.inf
    alpha = float(np.min(-v[neg] / dv[neg]))
    return min(1.0, alpha) if cap else alpha


def _cho_factor_pd(M: np.ndarray, what: str, exc=SingularNewtonMatrix):
    """Cholesky with one tiny diagonal shift retry for late-iteration ill-conditioning."""
    M = 0.5 * (M + M.T)
    try:
        return sla.cho_factor(M, lower=True)
    except sla.LinAlgError:
        pass
    shift = M.shape[0] * EPS * max(np.max(np.abs(np.diag(M))), 1.0)
    log.debug(f"{what}: Cholesky failed, retrying with diagonal shift {shift:.3e}")
    try:
        return sla.cho_factor(M + shift * np.eye(M.shape[0]), lower=True)
    except sla.LinAlgError:
        raise exc(f"{what} is singular or not positive definite")


# ---------------------------------------------------------------- LP ---

@dataclass(frozen=True)
class LpProblem:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if A.shape != (b.shape[0], c.shape[0]):
            raise DimensionMismatch(f"LP with A{A.shape}, b[{b.shape[0]}], c[{c.shape[0]}]")
        object.__setattr__(self, 'A', A)
        object.__setattr__(self, 'b', b)
        object.__setattr__(self, 'c', c)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class IpmIterate:
    x: np.ndarray
    lam: np.ndarray
    s: np.ndarray
    mu: float
    r_b: np.ndarray
    r_c: np.ndarray

    @classmethod
    def at(cls, lp: LpProblem, x, lam, s) -> 'IpmIterate':
        """Builds an iterate with mu and residuals recomputed from (x, lam, s)."""
        x, lam, s = (np.asarray(v, dtype=float) for v in (x, lam, s))
        return cls(x=x, lam=lam, s=s, mu=float(x @ s) / x.shape[0],
                   r_b=lp.A @ x - lp.b, r_c=lp.A.T @ lam + s - lp.c)

    def residual(self) -> float:
        return float(max(np.max(np.abs(self.r_b), initial=0.0),
                         np.max(np.abs(self.r_c), initial=0.0),
                         np.max(np.abs(self.x * self.s), initial=0.0)))


@dataclass(frozen=True)
class NewtonFactor:
    """Cholesky factor of A diag(x/s) A^T for one iterate."""
    A: np.ndarray
    x: np.ndarray
    s: np.ndarray
    cho: tuple = field(repr=False)


@dataclass(frozen=True)
class LpStep:
    dx: np.ndarray
    dlam: np.ndarray
    ds: np.ndarray
    factor: NewtonFactor = field(repr=False)


def lp_starting_point(lp: LpProblem) -> IpmIterate:
    A = lp.A
    try:
        AAT = sla.cho_factor(A @ A.T, lower=True)
    except sla.LinAlgError:
        raise SingularNormalEquations("A A^T is singular; A must have full row rank")
    x = A.T @ sla.cho_solve(AAT, lp.b)
    lam = sla.cho_solve(AAT, A @ lp.c)
    s = lp.c - A.T @ lam

    x = x + max(-1.5 * np.min(x), 0.0)
    s = s + max(-1.5 * np.min(s), 0.0)
    xs = float(x @ s)
    if xs > 0.0:
        x_shift = 0.5 * xs / np.sum(s)
        s_shift = 0.5 * xs / np.sum(x)
    else:
        # x^T s = 0 leaves the second shift undefined
        x_shift = s_shift = 1.0
    return IpmIterate.at(lp, x + x_shift, lam, s + s_shift)


def _lp_factor(it: IpmIterate, A: np.ndarray) -> NewtonFactor:
    D = it.x / it.s
    return NewtonFactor(A=A, x=it.x, s=it.s, cho=_cho_factor_pd((A * D) @ A.T, "LP normal matrix"))


def _lp_newton_solve(f: NewtonFactor, r1, r2, r3) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Solves [0 A^T I; A 0 0; S 0 X] (dx, dlam, ds) = (r1, r2, r3)."""
    A, D = f.A, f.x / f.s
    dlam = sla.cho_solve(f.cho, r2 - A @ (r3 / f.s) + A @ (D * r1))
    ds = r1 - A.T @ dlam
    dx = (r3 - f.x * ds) / f.s
    return dx, dlam, ds


def lp_affine_step(it: IpmIterate, lp: LpProblem) -> LpStep:
    factor = _lp_factor(it, lp.A)
    dx, dlam, ds = _lp_newton_solve(factor, -it.r_c, -it.r_b, -it.x * it.s)
    return LpStep(dx, dlam, ds, factor)


def lp_sigma(it: IpmIterate, step_aff: LpStep) -> Tuple[float, float]:
    """Centering parameter sigma = (mu_aff / mu)^3 and mu_aff."""
    a_pri = max_step(it.x, step_aff.dx)
    a_dual = max_step(it.s, step_aff.ds)
    mu_aff = float((it.x + a_pri * step_aff.dx) @ (it.s + a_dual * step_aff.ds)) / it.x.shape[0]
    sigma = 0.0 if it.mu <= 0 else float(np.clip((mu_aff / it.mu) ** 3, 0.0, 1.0))
    return sigma, mu_aff


def lp_combined_step(it: IpmIterate, step_aff: LpStep, sigma: float) -> LpStep:
    """Corrector plus centering, reusing the affine step's factor."""
    factor = step_aff.factor
    r3 = -it.x * it.s - step_aff.dx * step_aff.ds + sigma * it.mu
    dx, dlam, ds = _lp_newton_solve(factor, -it.r_c, -it.r_b, r3)
    return LpStep(dx, dlam, ds, factor)


def _lp_solution(it: IpmIterate) -> KktSolution:
    # c - A^T lam - s = 0 in the suite's sign convention
    return KktSolution(x=it.x.copy(), lam=-it.lam, s=-it.s, t=np.zeros_like(it.x))


def lp_solve(lp: LpProblem, opts: Optional[IpmOptions] = None) -> Tuple[KktSolution, SolveReport]:
    opts = opts or IpmOptions.from_env()
    report = SolveReport(method='ipm-lp')
    scale = 1.0 + max(np.max(np.abs(lp.b), initial=0.0), np.max(np.abs(lp.c), initial=0.0))
    it = lp_starting_point(lp)
    best = it
    log.info(f"LP interior point: n={lp.n}, m={lp.m}, tol={opts.tol:.1e}")

    for k in range(opts.max_iter + 1):
        res = it.residual()
        if res < best.residual():
            best = it
        if res <= opts.tol * scale:
            sol = _lp_solution(it)
            report.iterations = k
            report.finish('converged', objective=float(lp.c @ it.x), kkt_residual=res)
            return sol, report
        if k == opts.max_iter:
            break

        aff = lp_affine_step(it, lp)
        sigma, mu_aff = lp_sigma(it, aff)
        step = lp_combined_step(it, aff, sigma)
        eta = opts.eta(it.mu)
        a_pri = min(1.0, eta * max_step(it.x, step.dx, cap=False))
        a_dual = min(1.0, eta * max_step(it.s, step.ds, cap=False))
        nxt = IpmIterate.at(lp, it.x + a_pri * step.dx, it.lam + a_dual * step.dlam, it.s + a_dual * step.ds)
        contraction = float(np.max(np.abs(nxt.r_b - (1.0 - a_pri) * it.r_b), initial=0.0))
        report.record(iter=k, mu=it.mu, mu_aff=mu_aff, sigma=sigma, alpha_pri=a_pri, alpha_dual=a_dual,
                      r_b=float(np.linalg.norm(it.r_b, np.inf)), r_c=float(np.linalg.norm(it.r_c, np.inf)),
                      rb_contraction=contraction)
        it = nxt
        report.iterations = k + 1

    report.finish('max_iter', objective=float(lp.c @ best.x), kkt_residual=best.residual())
    raise MaxIterations(f"LP interior point did not converge in {opts.max_iter} iterations",
                        best=_lp_solution(best), report=report)


# ---------------------------------------------------------------- QP ---

@dataclass(frozen=True)
class InequalityQp:
    """min 1/2 x^T Q x + d^T x  s.t.  A x >= c."""
    Q: np.ndarray
    d: np.ndarray
    A: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        n = Q.shape[0]
        A = np.asarray(self.A, dtype=float)
        A = A.reshape(0, n) if A.size == 0 else np.atleast_2d(A)
        d = np.asarray(self.d, dtype=float).reshape(-1)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if Q.shape != (n, n) or A.shape[1] != n or d.shape[0] != n or c.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"inequality QP with Q{Q.shape}, A{A.shape}, d[{d.shape[0]}], c[{c.shape[0]}]")
        for name, value in (('Q', Q), ('d', d), ('A', A), ('c', c)):
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, x) -> float:
        return float(0.5 * x @ self.Q @ x + self.d @ x)


@dataclass(frozen=True)
class QpIterate:
    x: np.ndarray
    s: np.ndarray
    lam: np.ndarray
    mu: float
    r_d: np.ndarray
    r_c: np.ndarray

    @classmethod
    def at(cls, qp: InequalityQp, x, s, lam) -> 'QpIterate':
        x, s, lam = (np.asarray(v, dtype=float) for v in (x, s, lam))
        return cls(x=x, s=s, lam=lam, mu=float(s @ lam) / max(qp.m, 1),
                   r_d=qp.Q @ x - qp.A.T @ lam + qp.d, r_c=qp.A @ x - s - qp.c)

    def residual(self) -> float:
        return float(max(np.max(np.abs(self.r_d), initial=0.0),
                         np.max(np.abs(self.r_c), initial=0.0),
                         np.max(np.abs(self.s * self.lam), initial=0.0)))


@dataclass(frozen=True)
class QpStep:
    dx: np.ndarray
    ds: np.ndarray
    dlam: np.ndarray
    factor: tuple = field(repr=False)


def _qp_factor(it: QpIterate, qp: InequalityQp):
    D = it.lam / it.s
    return _cho_factor_pd(qp.Q + (qp.A.T * D) @ qp.A, "QP Newton matrix")


def _qp_newton_solve(factor, it: QpIterate, qp: InequalityQp, r1, r2, r3):
    """Solves [Q 0 -A^T; A -I 0; 0 Lam S] (dx, ds, dlam) = (r1, r2, r3)."""
    D = it.lam / it.s
    dx = sla.cho_solve(factor, r1 + qp.A.T @ (r3 / it.s + D * r2))
    ds = qp.A @ dx - r2
    dlam = (r3 - it.lam * ds) / it.s
    return dx, ds, dlam


def qp_newton_step(it: QpIterate, qp: InequalityQp, sigma: float, factor=None) -> QpStep:
    """Newton step toward the point on the central path with target sigma * mu."""
    factor = factor if factor is not None else _qp_factor(it, qp)
    r3 = -it.lam * it.s + sigma * it.mu
    dx, ds, dlam = _qp_newton_solve(factor, it, qp, -it.r_d, -it.r_c, r3)
    return QpStep(dx, ds, dlam, factor)


def qp_corrector_step(it: QpIterate, qp: InequalityQp, step_aff: QpStep, sigma: float) -> QpStep:
    r3 = -it.lam * it.s - step_aff.dlam * step_aff.ds + sigma * it.mu
    dx, ds, dlam = _qp_newton_solve(step_aff.factor, it, qp, -it.r_d, -it.r_c, r3)
    return QpStep(dx, ds, dlam, step_aff.factor)


def optimality_measure(qp: InequalityQp, x, s, lam) -> float:
    """||Q x - A^T lam + d||^2 + ||A x - s - c||^2 + s^T lam."""
    r_d = qp.Q @ x - qp.A.T @ lam + qp.d
    r_c = qp.A @ x - s - qp.c
    return float(r_d @ r_d + r_c @ r_c + s @ lam)


def qp_step_lengths(it: QpIterate, qp: InequalityQp, step: QpStep, opts: IpmOptions) -> Tuple[float, float]:
    """
    Picks (alpha_pri, alpha_dual) on a grid inside the fraction-to-boundary
    limits, minimizing the optimality measure. The (0, 0) pair is skipped.
    """
    tau = opts.tau(it.mu)
    a_pri_max = min(1.0, tau * max_step(it.s, step.ds, cap=False))
    a_dual_max = min(1.0, tau * max_step(it.lam, step.dlam, cap=False))
    fractions = np.linspace(0.0, 1.0, opts.grid)
    best, best_pair = np.inf, (a_pri_max, a_dual_max)
    for fp in fractions:
        a_p = fp * a_pri_max
        x = it.x + a_p * step.dx
        s = it.s + a_p * step.ds
        for fd in fractions:
            if fp == 0.0 and fd == 0.0:
                continue
            a_d = fd * a_dual_max
            value = optimality_measure(qp, x, s, it.lam + a_d * step.dlam)
            if value < best:
                best, best_pair = value, (a_p, a_d)
    return best_pair


def qp_starting_point(qp: InequalityQp, x_bar=None, s_bar=None, lam_bar=None) -> QpIterate:
    """
    One affine step from a user guess (default x = 0, s = e, lam = e), then
    s0 = max(1, |s + ds|) and lam0 = max(1, |lam + dlam|) componentwise.
    """
    x_bar = np.zeros(qp.n) if x_bar is None else np.asarray(x_bar, dtype=float)
    s_bar = np.ones(qp.m) if s_bar is None else np.asarray(s_bar, dtype=float)
    lam_bar = np.ones(qp.m) if lam_bar is None else np.asarray(lam_bar, dtype=float)
    guess = QpIterate.at(qp, x_bar, s_bar, lam_bar)
    aff = qp_newton_step(guess, qp, 0.0)
    s0 = np.maximum(1.0, np.abs(s_bar + aff.ds))
    lam0 = np.maximum(1.0, np.abs(lam_bar + aff.dlam))
    return QpIterate.at(qp, x_bar, s0, lam0)


def _unconstrained(qp: InequalityQp, report: SolveReport) -> Tuple[KktSolution, SolveReport]:
    try:
        cho = sla.cho_factor(qp.Q, lower=True)
    except sla.LinAlgError:
        raise NotPositiveDefinite("Q is not positive definite and there are no inequality rows")
    x = sla.cho_solve(cho, -qp.d)
    res = float(np.max(np.abs(qp.Q @ x + qp.d), initial=0.0))
    report.finish('converged', objective=qp.objective(x), kkt_residual=res)
    return KktSolution.from_primal(x, lam=np.zeros(0)), report


def qp_solve(qp: InequalityQp, opts: Optional[IpmOptions] = None,
             x_bar=None, s_bar=None, lam_bar=None) -> Tuple[KktSolution, SolveReport]:
    """
    Predictor-corrector for  min 1/2 x^T Q x + d^T x  s.t.  A x >= c.

    The returned multipliers satisfy Q x + d - A^T lam = 0 with lam >= 0.
    """
    opts = opts or IpmOptions.from_env()
    report = SolveReport(method='ipm')
    log.info(f"QP interior point: n={qp.n}, m={qp.m}, tol={opts.tol:.1e}")
    if qp.m == 0:
        return _unconstrained(qp, report)

    scale = 1.0 + max(np.max(np.abs(qp.d), initial=0.0), np.max(np.abs(qp.c), initial=0.0))
    it = qp_starting_point(qp, x_bar, s_bar, lam_bar)
    best = it

    for k in range(opts.max_iter + 1):
        res = it.residual()
        if res < best.residual():
            best = it
        if res <= opts.tol * scale:
            report.iterations = k
            report.finish('converged', objective=qp.objective(it.x), kkt_residual=res)
            return KktSolution.from_primal(it.x.copy(), lam=it.lam.copy()), report
        if k == opts.max_iter:
            break

        aff = qp_newton_step(it, qp, 0.0)
        a_aff = min(max_step(it.s, aff.ds), max_step(it.lam, aff.dlam))
        mu_aff = float((it.s + a_aff * aff.ds) @ (it.lam + a_aff * aff.dlam)) / qp.m
        sigma = 0.0 if it.mu <= 0 else float(np.clip((mu_aff / it.mu) ** 3, 0.0, 1.0))
        step = qp_corrector_step(it, qp, aff, sigma)
        a_pri, a_dual = qp_step_lengths(it, qp, step, opts)

        report.record(iter=k, mu=it.mu, mu_aff=mu_aff, sigma=sigma, alpha_pri=a_pri, alpha_dual=a_dual,
                      residual=res)
        it = QpIterate.at(qp, it.x + a_pri * step.dx, it.s + a_pri * step.ds, it.lam + a_dual * step.dlam)
        report.iterations = k + 1

    report.finish('max_iter', objective=qp.objective(best.x), kkt_residual=best.residual())
    raise MaxIterations(f"QP interior point did not converge in {opts.max_iter} iterations",
                        best=KktSolution.from_primal(best.x, lam=best.lam), report=report)


# ------------------------------------------------- problem conversion ---

@dataclass(frozen=True)
class InequalityForm:
    """
    `qp` in the reduced variable y, with x = x_p + Z y; rows of `qp.A` are
    the rows of bounds_to_rows(problem).G multiplied by `row_sign`.
    """
    problem: QpProblem
    qp: InequalityQp
    x_p: np.ndarray
    Z: np.ndarray
    row_sign: np.ndarray
    eq_factors: tuple = field(repr=False)

    def recover(self, sol: KktSolution) -> KktSolution:
        """Maps a qp_solve solution back to the original problem's multipliers."""
        p = self.problem
        rows = bounds_to_rows(p)
        x = self.x_p + self.Z @ sol.x
        lam_rows = -self.row_sign * np.asarray(sol.lam, dtype=float)
        lam_E = np.zeros(p.meq)
        if p.meq:
            Y, R, piv = self.eq_factors
            r = p.Q @ x + p.d + rows.G.T @ lam_rows
            lam_E[piv] = sla.solve_triangular(R, -Y.T @ r, lower=False)
        rows_sol = KktSolution(x=x, lam=np.concatenate([lam_E, lam_rows]), s=np.zeros(p.n), t=np.zeros(p.n))
        return split_row_multipliers(p, rows_sol)


def to_inequality_form(p: QpProblem) -> InequalityForm:
    """
    Bounds become rows, 'le' rows are negated into A x >= c, and equality
    rows are eliminated through x = x_p + Z y with E Z = 0.
    """
    rows = bounds_to_rows(p)
    row_sign = np.where(rows.ge_mask, 1.0, -1.0)
    A = rows.G * row_sign[:, None]
    c = rows.c_in * row_sign
    Y, Z, R, piv = nullspace_basis(p.E)
    if p.meq:
        x_p = Y @ sla.solve_triangular(R.T, p.c_eq[piv], lower=True)
    else:
        x_p = np.zeros(p.n)
    Q_y = Z.T @ p.Q @ Z
    qp = InequalityQp(Q=0.5 * (Q_y + Q_y.T), d=Z.T @ (p.Q @ x_p + p.d), A=A @ Z, c=c - A @ x_p)
    return InequalityForm(problem=p, qp=qp, x_p=x_p, Z=Z, row_sign=row_sign, eq_factors=(Y, R, piv))


def solve_problem(p: QpProblem, opts: Optional[IpmOptions] = None) -> Tuple[KktSolution, SolveReport]:
    """QP interior point on a general QpProblem via its inequality form."""
    form = to_inequality_form(p)
    try:
        sol, report = qp_solve(form.qp, opts)
    except MaxIterations as e:
        if e.best is not None:
            e.best = form.recover(e.best)
        raise
    return form.recover(sol), report


def solve_lp_problem(p: QpProblem, opts: Optional[IpmOptions] = None) -> Tuple[KktSolution, SolveReport]:
    """LP interior point on a QpProblem with Q = 0, through its standard form."""
    if np.any(p.Q != 0.0):
        raise ValueError("solve_lp_problem needs Q = 0")
    sf = to_standard_form(p)
    try:
        sol, report = lp_solve(LpProblem(A=sf.B, b=sf.c, c=sf.dbar), opts)
    except MaxIterations as e:
        if e.best is not None:
            e.best = _recover_lp(p, sf, e.best)
        raise
    return _recover_lp(p, sf, sol), report


def _recover_lp(p: QpProblem, sf: StandardFormQp, sol: KktSolution) -> KktSolution:
    rows = bounds_to_rows(p)
    k = p.meq
    # 'ge' rows were negated before their slack was added
    lam_rows = sol.lam[k:] * np.where(rows.ge_mask, -1.0, 1.0)
    x = recover_solution(sf, sol.x)
    rows_sol = KktSolution(x=x, lam=np.concatenate([sol.lam[:k], lam_rows]), s=np.zeros(p.n), t=np.zeros(p.n))
    return split_row_multipliers(p, rows_sol)
