"""
Lagrangian infeasible active-set method for

    min 1/2 x^T Q x + d^T x   s.t.  B x = c,  b <= x <= a

An augmented Lagrangian outer loop removes B x = c; each bound-constrained
subproblem is solved by an infeasible (primal-dual) active-set iteration,
and after every multiplier update a direct attempt tries to solve the full
KKT system on the current active sets.

KKT convention: B^T lam + Q x + d + s + t = 0, s <= 0 (lower), t >= 0 (upper).
"""
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from utils.config import env_float, env_int
from utils.logger import log
from models.problem import BoxEqQp, KktSolution, box_kkt_residuals
from models.report import SolveReport
from solvers import eq_kkt
from solvers.errors import (MaxInnerIterations, MaxOuterIterations, NotPositiveDefinite,
                            PartitionViolation, QpError, SingularSchur)

EPS = np.finfo(float).eps
DENSE_EIG_LIMIT = 64

CONVERGED = 'converged'
OSCILLATION = 'oscillation'
SCHUR_SINGULAR = 'schur_singular'
ITERATIONS_EXHAUSTED = 'iterations_exhausted'


@dataclass
class LiasmOptions:
    sigma: float = 1e4
    tol: float = 1e-8
    max_outer: int = 30
    max_inner: int = 50
    max_direct: int = 20
    dense_limit: int = 2000
    lambda0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")

    @classmethod
    def from_env(cls, **overrides) -> 'LiasmOptions':
        values = {
            'sigma': env_float('LIASM_SIGMA', cls.sigma),
            'tol': env_float('SOLVER_TOL', cls.tol),
            'max_outer': env_int('LIASM_MAX_OUTER', cls.max_outer),
            'max_inner': env_int('LIASM_MAX_INNER', cls.max_inner),
            'max_direct': env_int('LIASM_MAX_DIRECT', cls.max_direct),
            'dense_limit': env_int('LIASM_DENSE_LIMIT', cls.dense_limit),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class ActiveSets:
    """A1: variables fixed at the lower bound, A2: fixed at the upper bound."""
    A1: frozenset = frozenset()
    A2: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, 'A1', frozenset(int(i) for i in self.A1))
        object.__setattr__(self, 'A2', frozenset(int(i) for i in self.A2))
        if self.A1 & self.A2:
            raise ValueError(f"active sets overlap on {sorted(self.A1 & self.A2)}")

    def inactive(self, n: int) -> np.ndarray:
        mask = np.ones(n, dtype=bool)
        mask[list(self.A1 | self.A2)] = False
        return np.flatnonzero(mask)

    def lower(self) -> np.ndarray:
        return np.array(sorted(self.A1), dtype=int)

    def upper(self) -> np.ndarray:
        return np.array(sorted(self.A2), dtype=int)

    @classmethod
    def from_masks(cls, lower: np.ndarray, upper: np.ndarray) -> 'ActiveSets':
        return cls(frozenset(np.flatnonzero(lower).tolist()), frozenset(np.flatnonzero(upper).tolist()))

    def restricted_to(self, b: np.ndarray, a: np.ndarray) -> 'ActiveSets':
        """Drops indices whose bound is infinite."""
        return ActiveSets(frozenset(i for i in self.A1 if np.isfinite(b[i])),
                          frozenset(i for i in self.A2 if np.isfinite(a[i])))


@dataclass(frozen=True)
class AugmentedData:
    """1/2 x^T Qt x + dt^T x + const_term equals the augmented Lagrangian for all x."""
    Qt: object
    dt: np.ndarray
    const_term: float
    sigma: float
    lam: np.ndarray

    @property
    def n(self) -> int:
        return self.Qt.shape[0]

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.Qt @ x) + self.dt @ x + self.const_term)


@dataclass(frozen=True)
class MeritState:
    c_w: float
    d_w: float
    value: float


@dataclass(frozen=True)
class InnerIterate:
    """(x, s, t) computed on `sets`."""
    x: np.ndarray
    s: np.ndarray
    t: np.ndarray
    sets: ActiveSets


@dataclass
class InnerResult:
    x: np.ndarray
    s: np.ndarray
    t: np.ndarray
    sets: ActiveSets
    iterations: int
    status: str
    history: List[InnerIterate] = field(default_factory=list)
    merit: Optional[MeritState] = None


# ------------------------------------------------------- linear algebra ---

def _sub(M, rows: np.ndarray, cols: np.ndarray):
    if sp.issparse(M):
        return M[rows][:, cols]
    return M[np.ix_(rows, cols)]


def _block_solver(M_II, what: str) -> Callable[[np.ndarray], np.ndarray]:
    """
    Dense Cholesky, or for sparse blocks a symmetric-mode sparse LU with
    diagonal pivots only; its U diagonal holds the LDL^T pivots, all positive
    exactly when the block is positive definite. Raises NotPositiveDefinite.
    """
    if sp.issparse(M_II):
        try:
            lu = spla.splu(sp.csc_matrix(M_II), permc_spec='MMD_AT_PLUS_A', diag_pivot_thresh=0.0,
                           options=dict(SymmetricMode=True))
        except RuntimeError:
            raise NotPositiveDefinite(f"{what} is singular")
        pivots = lu.U.diagonal()
        if np.min(pivots) <= 10 * M_II.shape[0] * EPS * max(abs(M_II).max(), EPS):
            raise NotPositiveDefinite(f"{what} is not positive definite")
        return lu.solve
    try:
        cho = sla.cho_factor(M_II, lower=True)
    except sla.LinAlgError:
        raise NotPositiveDefinite(f"{what} is not positive definite")
    if np.min(np.diag(cho[0])) ** 2 <= 10 * M_II.shape[0] * EPS * max(np.abs(M_II).max(), EPS):
        raise NotPositiveDefinite(f"{what} is numerically singular")
    return lambda rhs: sla.cho_solve(cho, rhs)


def _working_matrix(M, dense_limit: int):
    """Sparse matrices at or below dense_limit are densified for the partitioned solves."""
    if sp.issparse(M) and M.shape[0] <= dense_limit:
        return M.toarray()
    if sp.issparse(M):
        return M.tocsr()
    return np.asarray(M)


# ------------------------------------------------------------ operations ---

def augment(p: BoxEqQp, lam, sigma: float) -> AugmentedData:
    """
    Quadratic form of L_A(x, lam; sigma) = J(x) + lam^T (B x - c) + sigma/2 ||B x - c||^2:

        Qt = Q + sigma B^T B,   dt = d + B^T (lam - sigma c),   const = sigma/2 c^T c - lam^T c
    """
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    lam = np.zeros(p.m) if lam is None else np.asarray(lam, dtype=float).reshape(-1)
    if p.m == 0:
        return AugmentedData(Qt=p.Q, dt=np.asarray(p.d, dtype=float).copy(), const_term=0.0,
                             sigma=float(sigma), lam=lam)
    B = p.B
    BtB = (B.T @ B) if sp.issparse(B) else B.T @ B
    Qt = p.Q + sigma * BtB
    if sp.issparse(Qt):
        Qt = sp.csr_matrix(Qt)
    dt = p.d + B.T @ (lam - sigma * p.c)
    const = 0.5 * sigma * float(p.c @ p.c) - float(lam @ p.c)
    return AugmentedData(Qt=Qt, dt=np.asarray(dt, dtype=float).reshape(-1), const_term=const,
                         sigma=float(sigma), lam=lam)


def lambda_update(lam, sigma: float, B, c, x) -> np.ndarray:
    """lam - sigma (B x - c)."""
    return np.asarray(lam, dtype=float) - sigma * (B @ x - c)


def _next_sets(x, s, t, b, a) -> ActiveSets:
    return ActiveSets.from_masks((x < b) | (s < 0), (x > a) | (t > 0))


def _solve_on_sets(Qt, dt, b, a, sets: ActiveSets):
    n = Qt.shape[0]
    lo, hi, I = sets.lower(), sets.upper(), sets.inactive(n)
    x = np.zeros(n)
    x[lo] = b[lo]
    x[hi] = a[hi]
    if I.size:
        fixed = np.concatenate([lo, hi])
        rhs = -dt[I]
        if fixed.size:
            rhs = rhs - _sub(Qt, I, fixed) @ x[fixed]
        x[I] = _block_solver(_sub(Qt, I, I), "inactive block of Q~")(rhs)
    r = -(Qt @ x + dt)
    s = np.zeros(n)
    t = np.zeros(n)
    s[lo] = r[lo]
    t[hi] = r[hi]
    return x, s, t


def smallest_eigenvalue(M, tol: float = 1e-6) -> float:
    """
    lambda_min of a symmetric M: exact below DENSE_EIG_LIMIT, otherwise
    shift-invert Lanczos around one below the Gershgorin lower bound.
    """
    n = M.shape[0]
    if n <= DENSE_EIG_LIMIT:
        dense = M.toarray() if sp.issparse(M) else np.asarray(M)
        return float(sla.eigvalsh(dense, subset_by_index=[0, 0])[0])
    M = sp.csc_matrix(M)
    diag = M.diagonal()
    radius = np.asarray(abs(M).sum(axis=1)).ravel() - np.abs(diag)
    shift = float(np.min(diag - radius)) - 1.0
    return float(spla.eigsh(M, k=1, sigma=shift, which='LM', tol=tol,
                            v0=np.ones(n), return_eigenvectors=False)[0])


def merit_weights(aug: AugmentedData) -> Tuple[float, float]:
    """c_w = d_w = ||Qt||_2 + lambda_min(Qt)."""
    Qt = aug.Qt
    if sp.issparse(Qt) and Qt.shape[0] > DENSE_EIG_LIMIT:
        top = spla.eigsh(Qt, k=1, which='LA', return_eigenvectors=False, v0=np.ones(Qt.shape[0]))[0]
        low = smallest_eigenvalue(Qt)
    else:
        eig = sla.eigvalsh(Qt.toarray() if sp.issparse(Qt) else Qt)
        top, low = eig[-1], eig[0]
    w = float(abs(top) + low)
    return w, w


def merit_eval(aug: AugmentedData, bounds, x, s, t, weights, half_quadratic: bool = False) -> float:
    """
    x^T Qt x + dt^T x + c_w/2 ||max(b - x, 0)||^2 + d_w/2 ||max(x - a, 0)||^2.

    half_quadratic=True puts 1/2 on the quadratic term, the form in which
    consecutive-iterate differences obey merit_delta_check's identity.
    """
    a, b = bounds
    c_w, d_w = weights
    if c_w <= 0 or d_w <= 0:
        raise ValueError(f"merit weights must be positive, got {c_w}, {d_w}")
    x = np.asarray(x, dtype=float)
    quad = float(x @ (aug.Qt @ x))
    if half_quadratic:
        quad *= 0.5
    g = np.maximum(b - x, 0.0)
    h = np.maximum(x - a, 0.0)
    return quad + float(aug.dt @ x) + 0.5 * c_w * float(g @ g) + 0.5 * d_w * float(h @ h)


def merit_partitions(prev: InnerIterate, nxt: InnerIterate, bounds, tol: float = 0.0) -> dict:
    """
    Index partition of two consecutive inner iterates:
    S, T (multipliers about to release), U, V (bound violations of x),
    K, L (bound violations of y), W = U | V. Raises PartitionViolation when
    the iterates are not consecutive or the sign table does not hold.
    """
    a, b = bounds
    x, s, t = prev.x, prev.s, prev.t
    y, u, v = nxt.x, nxt.s, nxt.t
    n = x.shape[0]
    A, B = prev.sets.lower(), prev.sets.upper()
    I = prev.sets.inactive(n)

    expected = _next_sets(x, s, t, b, a)
    if expected != nxt.sets:
        raise PartitionViolation("second iterate was not computed on the sets the first one induces")

    S = A[s[A] >= 0]
    T = B[t[B] <= 0]
    U = I[x[I] < b[I]]
    V = I[x[I] > a[I]]
    rest = np.setdiff1d(I, np.concatenate([U, V]))
    W = np.concatenate([U, V])
    K = np.flatnonzero(y < b)
    L = np.flatnonzero(y > a)

    def zero(vec, idx):
        return np.all(np.abs(vec[idx]) <= tol)

    A_S, B_T = np.setdiff1d(A, S), np.setdiff1d(B, T)
    checks = [
        ('S', zero(t, S) and zero(u, S) and zero(v, S)),
        ('T', zero(s, T) and zero(u, T) and zero(v, T)),
        ('A\\S', np.all(s[A_S] < 0) and zero(t, A_S) and zero(v, A_S) and np.all(np.abs(y[A_S] - b[A_S]) <= tol)),
        ('B\\T', np.all(t[B_T] > 0) and zero(s, B_T) and zero(u, B_T) and np.all(np.abs(y[B_T] - a[B_T]) <= tol)),
        ('U', zero(s, U) and zero(t, U) and zero(v, U) and np.all(np.abs(y[U] - b[U]) <= tol)),
        ('V', zero(s, V) and zero(t, V) and zero(u, V) and np.all(np.abs(y[V] - a[V]) <= tol)),
        ('I\\W', zero(s, rest) and zero(t, rest) and zero(u, rest) and zero(v, rest)
         and np.all(x[rest] >= b[rest] - tol) and np.all(x[rest] <= a[rest] + tol)),
    ]
    for name, ok in checks:
        if not ok:
            raise PartitionViolation(f"sign table violated on partition {name}")
    allowed = np.concatenate([S, T, rest])
    if np.setdiff1d(K, allowed).size or np.setdiff1d(L, allowed).size:
        raise PartitionViolation("y violates a bound outside S, T and I\\W")
    return {'S': S, 'T': T, 'U': U, 'V': V, 'W': W, 'K': K, 'L': L}


def merit_delta_check(aug: AugmentedData, bounds, prev: InnerIterate, nxt: InnerIterate,
                      weights=None, tol: float = 0.0) -> float:
    """
    |LHS - RHS| of the merit change identity for consecutive inner iterates:

        L(y) - L(x) = 1/2 z_W^T Qt_W z_W - 1/2 z_Wc^T Qt_Wc z_Wc
                      + c_w/2 sum_K (y - b)^2 + d_w/2 sum_L (y - a)^2
                      - c_w/2 sum_U (x - b)^2 - d_w/2 sum_V (x - a)^2
    """
    a, b = bounds
    weights = weights or merit_weights(aug)
    c_w, d_w = weights
    parts = merit_partitions(prev, nxt, bounds, tol)
    x, y = prev.x, nxt.x
    z = y - x
    n = x.shape[0]
    W = np.sort(parts['W'])
    Wc = np.setdiff1d(np.arange(n), W)
    Qt = aug.Qt
    quad = 0.0
    if W.size:
        quad += 0.5 * float(z[W] @ (_sub(Qt, W, W) @ z[W]))
    if Wc.size:
        quad -= 0.5 * float(z[Wc] @ (_sub(Qt, Wc, Wc) @ z[Wc]))
    K, L, U, V = parts['K'], parts['L'], parts['U'], parts['V']
    rhs = (quad
           + 0.5 * c_w * float(np.sum((y[K] - b[K]) ** 2)) + 0.5 * d_w * float(np.sum((y[L] - a[L]) ** 2))
           - 0.5 * c_w * float(np.sum((x[U] - b[U]) ** 2)) - 0.5 * d_w * float(np.sum((x[V] - a[V]) ** 2)))
    lhs = (merit_eval(aug, bounds, y, nxt.s, nxt.t, weights, half_quadratic=True)
           - merit_eval(aug, bounds, x, prev.s, prev.t, weights, half_quadratic=True))
    return abs(lhs - rhs)


def _best_by_merit(aug: AugmentedData, bounds, history: List[InnerIterate]) -> Tuple[InnerIterate, MeritState]:
    weights = merit_weights(aug)
    values = [merit_eval(aug, bounds, it.x, it.s, it.t, weights) for it in history]
    k = int(np.argmin(values))
    return history[k], MeritState(c_w=weights[0], d_w=weights[1], value=values[k])


def inner_solve(aug: AugmentedData, bounds, init: Optional[ActiveSets] = None, max_iter: int = 50,
                dense_limit: int = 2000, record: bool = False) -> InnerResult:
    """
    Infeasible active-set iteration for min 1/2 x^T Qt x + dt^T x, b <= x <= a.

    Each iterate solves the KKT system on (A1, A2) exactly; the next sets are
    A1 = {x < b or s < 0}, A2 = {x > a or t > 0}. Stops when the sets repeat
    the previous ones; a set pair seen earlier ends with status 'oscillation'.
    """
    a, b = (np.asarray(v, dtype=float) for v in bounds)
    Qt = _working_matrix(aug.Qt, dense_limit)
    sets = (init or ActiveSets()).restricted_to(b, a)
    seen = {sets}
    history: List[InnerIterate] = []

    for k in range(1, max_iter + 1):
        x, s, t = _solve_on_sets(Qt, aug.dt, b, a, sets)
        history.append(InnerIterate(x, s, t, sets))
        nxt = _next_sets(x, s, t, b, a)
        log.debug(f"inner {k}: |A1|={len(sets.A1)} |A2|={len(sets.A2)} -> |A1+|={len(nxt.A1)} |A2+|={len(nxt.A2)}")
        if nxt == sets:
            return InnerResult(x, s, t, sets, k, CONVERGED, history if record else [])
        if nxt in seen:
            best, merit = _best_by_merit(aug, (a, b), history)
            log.warning(f"inner active sets oscillate after {k} iterations; keeping the best-merit iterate")
            return InnerResult(best.x, best.s, best.t, best.sets, k, OSCILLATION,
                               history if record else [], merit)
        seen.add(nxt)
        sets = nxt

    best, merit = _best_by_merit(aug, (a, b), history)
    result = InnerResult(best.x, best.s, best.t, best.sets, max_iter, ITERATIONS_EXHAUSTED,
                         history if record else [], merit)
    raise MaxInnerIterations(f"inner active-set solve did not settle in {max_iter} iterations", best=result)


def _direct_step(p: BoxEqQp, Q, B, sets: ActiveSets):
    """Stationarity and B x = c on the given sets; returns (x, lam, s, t)."""
    n = p.n
    lo, hi, I = sets.lower(), sets.upper(), sets.inactive(n)
    fixed = np.concatenate([lo, hi])
    x = np.zeros(n)
    x[lo] = p.b[lo]
    x[hi] = p.a[hi]
    if I.size == 0:
        raise SingularSchur("no inactive variables: the Schur complement is empty")
    w = p.d[I].copy()
    eq_rhs = p.c.copy()
    if fixed.size:
        w = w + _sub(Q, I, fixed) @ x[fixed]
        eq_rhs = eq_rhs - _sub(B, np.arange(p.m), fixed) @ x[fixed]
    Q_I = _sub(Q, I, I)
    B_I = _sub(B, np.arange(p.m), I)
    try:
        solve_QI = _block_solver(Q_I, "Q on the inactive set")
    except NotPositiveDefinite:
        # slack variables carry no curvature: fall back to the indefinite KKT system
        dense = lambda M: M.toarray() if sp.issparse(M) else M
        try:
            x_I, lam = eq_kkt.solve_full_kkt(eq_kkt.EqQp(dense(Q_I), dense(B_I), w, eq_rhs))
        except QpError as e:
            raise SingularSchur(str(e))
    else:
        QinvBt = solve_QI(B_I.T.toarray() if sp.issparse(B_I) else B_I.T)
        Qinv_w = solve_QI(w)
        S = np.asarray(B_I @ QinvBt)
        S = 0.5 * (S + S.T)
        try:
            S_cho = sla.cho_factor(S, lower=True)
        except sla.LinAlgError:
            raise SingularSchur("B_I Q_I^-1 B_I^T is singular")
        if np.min(np.diag(S_cho[0])) ** 2 <= 10 * p.m * EPS * max(np.abs(S).max(), EPS):
            raise SingularSchur("B_I Q_I^-1 B_I^T is numerically singular")
        lam = sla.cho_solve(S_cho, -(B_I @ Qinv_w) - eq_rhs)
        x_I = -(Qinv_w + QinvBt @ lam)
    x[I] = x_I
    r = -(Q @ x + p.d + B.T @ lam)
    s = np.zeros(n)
    t = np.zeros(n)
    s[lo] = r[lo]
    t[hi] = r[hi]
    return x, np.asarray(lam, dtype=float), s, t


def direct_attempt(p: BoxEqQp, init: ActiveSets, max_iter: int = 20, tol: float = 1e-8,
                   dense_limit: int = 2000):
    """
    Active-set iteration on the full KKT system: every iterate satisfies
    stationarity and B x = c; the sets move as in inner_solve.

    Returns (KktSolution or None, ActiveSets, status, iterations).
    """
    Q = _working_matrix(p.Q, dense_limit)
    B = _working_matrix(p.B, dense_limit)
    sets = init.restricted_to(p.b, p.a)
    sol = None
    scale = 1.0 + max(np.max(np.abs(p.d), initial=0.0), np.max(np.abs(p.c), initial=0.0))
    for k in range(1, max_iter + 1):
        try:
            x, lam, s, t = _direct_step(p, Q, B, sets)
        except SingularSchur as e:
            log.debug(f"direct attempt {k}: {e}")
            return sol, sets, SCHUR_SINGULAR, k
        sol = KktSolution(x=x, lam=lam, s=s, t=t)
        I = sets.inactive(p.n)
        inside = np.all(x[I] >= p.b[I] - tol * scale) and np.all(x[I] <= p.a[I] + tol * scale)
        signs = np.all(s <= tol * scale) and np.all(t >= -tol * scale)
        log.debug(f"direct {k}: |A1|={len(sets.A1)} |A2|={len(sets.A2)} feasible={inside} signs={signs}")
        if inside and signs:
            return sol, sets, CONVERGED, k
        sets = _next_sets(x, s, t, p.b, p.a)
    return sol, sets, ITERATIONS_EXHAUSTED, max_iter


def _better_key(p: BoxEqQp, sol: KktSolution, tol: float) -> Tuple[float, float]:
    res = box_kkt_residuals(p, sol)
    eq = res['equality'] if res['equality'] > tol else 0.0
    rest = max(res['stationarity'], res['bounds'], res['sign'], res['complementarity'])
    return eq, rest


def liasm_solve(p: BoxEqQp, opts: Optional[LiasmOptions] = None,
                init: Optional[ActiveSets] = None) -> Tuple[KktSolution, SolveReport]:
    opts = opts or LiasmOptions.from_env()
    report = SolveReport(method='liasm')
    for counter in ('lambda_updates', 'inner_iters', 'direct_iters'):
        report.counters[counter] = 0
    scale = 1.0 + max(np.max(np.abs(p.d), initial=0.0), np.max(np.abs(p.c), initial=0.0))
    tol = opts.tol * scale
    bounds = (p.a, p.b)
    B = p.B
    # nu follows lambda_update's convention; the KKT multiplier is -nu
    nu = np.zeros(p.m) if opts.lambda0 is None else -np.asarray(opts.lambda0, dtype=float)
    sets = init or ActiveSets()
    last_direct_sets = None
    best, best_key = None, None
    log.info(f"LIASM: n={p.n}, m={p.m}, sigma={opts.sigma:.1e}, tol={opts.tol:.1e}")

    for outer in range(1, opts.max_outer + 1):
        report.iterations = outer
        aug = augment(p, -nu, opts.sigma if p.m else 0.0)
        try:
            inner = inner_solve(aug, bounds, sets, opts.max_inner, opts.dense_limit)
        except MaxInnerIterations as e:
            inner = e.best
            report.event(f"outer {outer}: inner solve hit {opts.max_inner} iterations")
        report.bump('inner_iters', inner.iterations)

        if p.m == 0:
            sol = KktSolution(x=inner.x, lam=np.zeros(0), s=inner.s, t=inner.t)
            residual = max(box_kkt_residuals(p, sol).values())
            status = 'converged' if inner.status == CONVERGED and residual <= tol else inner.status
            report.finish(status, objective=p.objective(sol.x), kkt_residual=residual)
            if status != 'converged':
                raise MaxOuterIterations(f"bound-constrained solve ended with status {status}",
                                         best=sol, report=report)
            return sol, report

        nu = lambda_update(nu, opts.sigma, B, p.c, inner.x)
        report.bump('lambda_updates')
        candidate = KktSolution(x=inner.x, lam=-nu, s=inner.s, t=inner.t)
        key = _better_key(p, candidate, tol)
        next_sets = inner.sets

        if outer == 1 or inner.sets != last_direct_sets:
            last_direct_sets = inner.sets
            direct, direct_sets, status, iters = direct_attempt(p, inner.sets, opts.max_direct, opts.tol,
                                                                opts.dense_limit)
            report.bump('direct_iters', iters)
            report.event(f"outer {outer}: direct attempt {status} after {iters} iterations")
            if status == CONVERGED:
                direct_key = _better_key(p, direct, tol)
                if direct_key < key:
                    candidate, key, next_sets = direct, direct_key, direct_sets

        residual = max(box_kkt_residuals(p, candidate).values())
        report.record(outer=outer, inner=inner.iterations, residual=residual,
                      eq_residual=box_kkt_residuals(p, candidate)['equality'])
        if best_key is None or key < best_key:
            best, best_key = candidate, key
        if residual <= tol:
            report.finish('converged', objective=p.objective(candidate.x), kkt_residual=residual)
            return candidate, report
        sets = next_sets

    residual = max(box_kkt_residuals(p, best).values())
    report.finish('max_iter', objective=p.objective(best.x), kkt_residual=residual)
    raise MaxOuterIterations(f"LIASM did not converge in {opts.max_outer} outer iterations", best=best, report=report)
