"""
Problem representations and the equivalence-preserving conversions between them.

Multiplier convention used across the whole suite (stationarity):

    Q x + d + E^T lam_E + G^T lam_G + s + t = 0

with lam_G >= 0 on 'le' rows, lam_G <= 0 on 'ge' rows, s <= 0 (lower bounds)
and t >= 0 (upper bounds).
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from utils.logger import log
from solvers.errors import DimensionMismatch, InvalidProblem

SYMMETRY_TOL = 1e-12
SENSES = ('le', 'ge')


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _vector(value, size: int, name: str, fill: float = 0.0) -> np.ndarray:
    if value is None:
        return np.full(size, fill, dtype=float)
    vec = np.asarray(value, dtype=float).reshape(-1).copy()
    if vec.shape[0] != size:
        raise DimensionMismatch(f"{name} has length {vec.shape[0]}, expected {size}")
    return vec


def _matrix(value, rows: Optional[int], cols: int, name: str) -> np.ndarray:
    if value is None:
        return np.zeros((0 if rows is None else rows, cols))
    mat = np.atleast_2d(np.asarray(value, dtype=float)).copy()
    if mat.size == 0:
        mat = mat.reshape(0, cols)
    if mat.shape[1] != cols or (rows is not None and mat.shape[0] != rows):
        raise DimensionMismatch(f"{name} has shape {mat.shape}, expected ({rows if rows is not None else '*'}, {cols})")
    return mat


def symmetrize(Q, name: str = 'Q'):
    """Returns (Q + Q^T)/2, warning when the input was noticeably asymmetric."""
    if sp.issparse(Q):
        asym = abs(Q - Q.T).max() if Q.nnz else 0.0
        scale = abs(Q).max() if Q.nnz else 0.0
        sym = ((Q + Q.T) * 0.5).tocsr()
    else:
        asym = np.max(np.abs(Q - Q.T)) if Q.size else 0.0
        scale = np.max(np.abs(Q)) if Q.size else 0.0
        sym = 0.5 * (Q + Q.T)
    if asym > SYMMETRY_TOL * max(scale, 1.0):
        log.warning(f"{name} is not symmetric (max |{name} - {name}^T| = {asym:.3e}); using ({name} + {name}^T)/2.")
    return sym


@dataclass(frozen=True)
class QpProblem:
    """
    General convex QP:  min 1/2 x^T Q x + d^T x
    s.t. E x = c_eq,  G x (<= or >=) c_in row by row,  lb <= x <= ub.

    Infinite bounds are stored as +-np.inf, never as large finite numbers.
    """
    Q: np.ndarray
    d: np.ndarray
    E: Optional[np.ndarray] = None
    c_eq: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None
    c_in: Optional[np.ndarray] = None
    sense: Optional[np.ndarray] = None
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None

    def __post_init__(self):
        Q = self.Q.toarray() if sp.issparse(self.Q) else self.Q
        Q = _matrix(Q, None, np.shape(Q)[-1] if np.ndim(Q) else 1, 'Q')
        n = Q.shape[1]
        if Q.shape[0] != n:
            raise DimensionMismatch(f"Q must be square, got {Q.shape}")
        d = _vector(self.d, n, 'd')
        E = self.E.toarray() if sp.issparse(self.E) else self.E
        E = _matrix(E, None, n, 'E')
        k = E.shape[0]
        c_eq = _vector(self.c_eq, k, 'c_eq')
        G = self.G.toarray() if sp.issparse(self.G) else self.G
        G = _matrix(G, None, n, 'G')
        mi = G.shape[0]
        c_in = _vector(self.c_in, mi, 'c_in')
        if self.sense is None:
            sense = np.array(['le'] * mi, dtype='<U2')
        else:
            sense = np.asarray(self.sense, dtype='<U2').reshape(-1).copy()
            if sense.shape[0] != mi:
                raise DimensionMismatch(f"sense has length {sense.shape[0]}, expected {mi}")
            bad = [s for s in sense if s not in SENSES]
            if bad:
                raise InvalidProblem(f"unknown row sense {bad[0]!r}, expected 'le' or 'ge'")
        lb = _vector(self.lb, n, 'lb', fill=-np.inf)
        ub = _vector(self.ub, n, 'ub', fill=np.inf)
        if np.any(lb > ub):
            i = int(np.argmax(lb > ub))
            raise InvalidProblem(f"lb[{i}] = {lb[i]} exceeds ub[{i}] = {ub[i]}")
        if np.any(lb == np.inf) or np.any(ub == -np.inf):
            raise InvalidProblem("lb must be < +inf and ub must be > -inf")
        for name, arr in (('Q', Q), ('d', d), ('E', E), ('c_eq', c_eq), ('G', G), ('c_in', c_in)):
            if not np.all(np.isfinite(arr)):
                raise InvalidProblem(f"{name} contains non-finite entries")

        for name, arr in (('Q', symmetrize(Q)), ('d', d), ('E', E), ('c_eq', c_eq), ('G', G),
                          ('c_in', c_in), ('sense', sense), ('lb', lb), ('ub', ub)):
            object.__setattr__(self, name, _readonly(arr))

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def meq(self) -> int:
        return self.E.shape[0]

    @property
    def mineq(self) -> int:
        return self.G.shape[0]

    @property
    def m(self) -> int:
        return self.meq + self.mineq

    @property
    def ge_mask(self) -> np.ndarray:
        return self.sense == 'ge'

    @property
    def has_bounds(self) -> bool:
        return bool(np.any(np.isfinite(self.lb)) or np.any(np.isfinite(self.ub)))

    @property
    def is_box_eq(self) -> bool:
        """True when there are no general inequality rows (equalities plus box only)."""
        return self.mineq == 0

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.d @ x)

    def max_violation(self, x) -> float:
        """Largest violation of any constraint at x (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        viol = [0.0]
        if self.meq:
            viol.append(np.max(np.abs(self.E @ x - self.c_eq)))
        if self.mineq:
            r = self.G @ x - self.c_in
            r = np.where(self.ge_mask, -r, r)
            viol.append(np.max(np.maximum(r, 0.0)))
        viol.append(np.max(np.maximum(self.lb - x, 0.0), initial=0.0))
        viol.append(np.max(np.maximum(x - self.ub, 0.0), initial=0.0))
        return float(max(viol))

    def to_box_eq(self) -> 'BoxEqQp':
        """Equality-plus-box view of the problem; inequality rows get slack variables."""
        if self.is_box_eq:
            return BoxEqQp(self.Q, self.d, self.E, self.c_eq, a=self.ub, b=self.lb)
        return rows_to_slacks(self)


@dataclass(frozen=True)
class BoxEqQp:
    """
    min 1/2 x^T Q x + d^T x  s.t.  B x = c,  b <= x <= a.

    Q and B may be scipy.sparse matrices (the sparse benchmark family).
    n_orig marks how many leading variables belong to the user's problem
    when trailing slack variables were introduced by rows_to_slacks.
    """
    Q: object
    d: np.ndarray
    B: object
    c: np.ndarray
    a: np.ndarray
    b: np.ndarray
    n_orig: Optional[int] = None

    def __post_init__(self):
        Q = self.Q
        if not sp.issparse(Q):
            Q = np.atleast_2d(np.asarray(Q, dtype=float)).copy()
        n = Q.shape[0]
        if Q.shape != (n, n):
            raise DimensionMismatch(f"Q must be square, got {Q.shape}")
        B = self.B
        if B is None:
            B = np.zeros((0, n))
        elif sp.issparse(B):
            B = B.tocsr()
        else:
            B = np.asarray(B, dtype=float).copy()
            if B.size == 0:
                B = B.reshape(0, n)
            B = np.atleast_2d(B)
        if B.shape[1] != n:
            raise DimensionMismatch(f"B has {B.shape[1]} columns, expected {n}")
        m = B.shape[0]
        d = _vector(self.d, n, 'd')
        c = _vector(self.c, m, 'c')
        a = _vector(self.a, n, 'a', fill=np.inf)
        b = _vector(self.b, n, 'b', fill=-np.inf)
        if np.any(b > a):
            i = int(np.argmax(b > a))
            raise InvalidProblem(f"lower bound b[{i}] = {b[i]} exceeds upper bound a[{i}] = {a[i]}")
        n_orig = n if self.n_orig is None else int(self.n_orig)
        Q = symmetrize(Q)
        if not sp.issparse(Q):
            Q = _readonly(Q)
        if not sp.issparse(B):
            B = _readonly(B)
        object.__setattr__(self, 'Q', Q)
        object.__setattr__(self, 'B', B)
        for name, arr in (('d', d), ('c', c), ('a', a), ('b', b)):
            object.__setattr__(self, name, _readonly(arr))
        object.__setattr__(self, 'n_orig', n_orig)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.Q) or sp.issparse(self.B)

    def dense_Q(self) -> np.ndarray:
        return self.Q.toarray() if sp.issparse(self.Q) else np.asarray(self.Q)

    def dense_B(self) -> np.ndarray:
        return self.B.toarray() if sp.issparse(self.B) else np.asarray(self.B)

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.Q @ x) + self.d @ x)

    def to_qp_problem(self) -> QpProblem:
        return QpProblem(self.dense_Q(), self.d, E=self.dense_B(), c_eq=self.c, lb=self.b, ub=self.a)


@dataclass(frozen=True)
class KktSolution:
    """Primal point with equality/row multipliers and lower (s) / upper (t) bound multipliers."""
    x: np.ndarray
    lam: np.ndarray
    s: np.ndarray
    t: np.ndarray

    @classmethod
    def from_primal(cls, x, lam=None, s=None, t=None) -> 'KktSolution':
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        return cls(
            x=x,
            lam=np.zeros(0) if lam is None else np.asarray(lam, dtype=float),
            s=np.zeros(n) if s is None else np.asarray(s, dtype=float),
            t=np.zeros(n) if t is None else np.asarray(t, dtype=float),
        )


@dataclass(frozen=True)
class RecoverMap:
    """Layout of a standard-form vector: [x_plus (n), x_minus (n), slack (q)]."""
    n: int
    q: int
    layout: Tuple[str, ...] = ('x_plus', 'x_minus', 'slack')

    @property
    def size(self) -> int:
        return 2 * self.n + self.q


@dataclass(frozen=True)
class StandardFormQp:
    """min 1/2 xb^T Qbar xb + dbar^T xb  s.t.  B xb = c,  xb >= 0."""
    Qbar: np.ndarray
    dbar: np.ndarray
    B: np.ndarray
    c: np.ndarray
    recover_map: RecoverMap
    nonneg: bool = field(default=True)

    def objective(self, xbar) -> float:
        xbar = np.asarray(xbar, dtype=float)
        return float(0.5 * xbar @ self.Qbar @ xbar + self.dbar @ xbar)

    def to_qp_problem(self) -> QpProblem:
        size = self.recover_map.size
        return QpProblem(self.Qbar, self.dbar, E=self.B, c_eq=self.c, lb=np.zeros(size))


def bounds_to_rows(p: QpProblem) -> QpProblem:
    """
    Moves every finite bound into an inequality row.

    Rows are appended after the existing G rows: finite lower bounds as 'ge'
    rows in index order, then finite upper bounds as 'le' rows.
    """
    if not p.has_bounds:
        return p
    n = p.n
    eye = np.eye(n)
    lo = np.flatnonzero(np.isfinite(p.lb))
    hi = np.flatnonzero(np.isfinite(p.ub))
    G = np.vstack([p.G, eye[lo], eye[hi]])
    c_in = np.concatenate([p.c_in, p.lb[lo], p.ub[hi]])
    sense = np.concatenate([p.sense, np.full(lo.size, 'ge'), np.full(hi.size, 'le')])
    return QpProblem(p.Q, p.d, E=p.E, c_eq=p.c_eq, G=G, c_in=c_in, sense=sense)


def split_row_multipliers(p: QpProblem, rows_solution: KktSolution) -> KktSolution:
    """Maps a solution of bounds_to_rows(p) back to p's (lam, s, t) layout."""
    n, k, mi = p.n, p.meq, p.mineq
    lo = np.flatnonzero(np.isfinite(p.lb))
    hi = np.flatnonzero(np.isfinite(p.ub))
    lam_rows = np.asarray(rows_solution.lam, dtype=float)
    if lam_rows.shape[0] != k + mi + lo.size + hi.size:
        raise DimensionMismatch(f"expected {k + mi + lo.size + hi.size} row multipliers, got {lam_rows.shape[0]}")
    s = np.array(rows_solution.s, dtype=float, copy=True)
    t = np.array(rows_solution.t, dtype=float, copy=True)
    start = k + mi
    s[lo] += lam_rows[start:start + lo.size]
    t[hi] += lam_rows[start + lo.size:]
    return KktSolution(x=np.asarray(rows_solution.x, dtype=float), lam=lam_rows[:start].copy(), s=s, t=t)


def to_standard_form(p: QpProblem) -> StandardFormQp:
    """
    Splits x = x_plus - x_minus and adds one slack per inequality row so that
    every constraint becomes an equality over nonnegative variables.

    Finite bounds are first turned into rows; 'ge' rows are negated to 'le'
    before the slack is added (a x + z = c, z >= 0).
    """
    rows = bounds_to_rows(p)
    n, k, q = rows.n, rows.meq, rows.mineq
    sign = np.where(rows.ge_mask, -1.0, 1.0)
    A = rows.G * sign[:, None]
    c_in = rows.c_in * sign
    Q = np.asarray(rows.Q)
    Qbar = np.zeros((2 * n + q, 2 * n + q))
    Qbar[:n, :n] = Q
    Qbar[n:2 * n, n:2 * n] = Q
    # off-diagonal coupling keeps 1/2 x^T Q x exact at x = x_plus - x_minus
    Qbar[:n, n:2 * n] = -Q
    Qbar[n:2 * n, :n] = -Q
    dbar = np.concatenate([rows.d, -rows.d, np.zeros(q)])
    B = np.block([
        [rows.E, -rows.E, np.zeros((k, q))],
        [A, -A, np.eye(q)],
    ])
    c = np.concatenate([rows.c_eq, c_in])
    log.debug(f"Standard form: n={n} -> {2 * n + q} variables, {k + q} equality rows.")
    return StandardFormQp(Qbar=Qbar, dbar=dbar, B=B, c=c, recover_map=RecoverMap(n=n, q=q))


def split_point(sf: StandardFormQp, x) -> np.ndarray:
    """Image of an original point under the split/slack map."""
    x = np.asarray(x, dtype=float)
    rm = sf.recover_map
    if x.shape[0] != rm.n:
        raise DimensionMismatch(f"x has length {x.shape[0]}, expected {rm.n}")
    xp = np.maximum(x, 0.0)
    xm = np.maximum(-x, 0.0)
    k = sf.B.shape[0] - rm.q
    A = sf.B[k:, :rm.n]
    z = sf.c[k:] - A @ x
    return np.concatenate([xp, xm, z])


def recover_solution(sf: StandardFormQp, xbar) -> np.ndarray:
    """x = x_plus - x_minus."""
    xbar = np.asarray(xbar, dtype=float).reshape(-1)
    rm = sf.recover_map
    if xbar.shape[0] != rm.size:
        raise DimensionMismatch(f"standard-form vector has length {xbar.shape[0]}, expected {rm.size}")
    return xbar[:rm.n] - xbar[rm.n:2 * rm.n]


def rows_to_slacks(p: QpProblem) -> BoxEqQp:
    """
    Equality-plus-box form of a general QP: every inequality row becomes
    g^T x - w = c with w >= 0 ('ge') or w <= 0 ('le').

    The slack multipliers equal the row multipliers, so the original KKT
    solution is read off with slack_solution().
    """
    n, k, mi = p.n, p.meq, p.mineq
    Q = np.zeros((n + mi, n + mi))
    Q[:n, :n] = p.Q
    d = np.concatenate([p.d, np.zeros(mi)])
    B = np.block([
        [p.E, np.zeros((k, mi))],
        [p.G, -np.eye(mi)],
    ])
    c = np.concatenate([p.c_eq, p.c_in])
    ge = p.ge_mask
    b = np.concatenate([p.lb, np.where(ge, 0.0, -np.inf)])
    a = np.concatenate([p.ub, np.where(ge, np.inf, 0.0)])
    return BoxEqQp(Q, d, B, c, a=a, b=b, n_orig=n)


def slack_solution(box: BoxEqQp, sol: KktSolution) -> KktSolution:
    """Drops slack variables from a solution of rows_to_slacks(p)."""
    n = box.n_orig
    return KktSolution(x=sol.x[:n].copy(), lam=np.asarray(sol.lam, dtype=float).copy(),
                       s=sol.s[:n].copy(), t=sol.t[:n].copy())


def _complementarity(mult: np.ndarray, gap: np.ndarray) -> np.ndarray:
    """|mult * gap| with infinite gaps counting the whole multiplier as violation."""
    finite = np.isfinite(gap)
    out = np.abs(mult).astype(float)
    out[finite] = np.abs(mult[finite] * gap[finite])
    return out


def kkt_residuals(p: QpProblem, sol: KktSolution) -> dict:
    """Infinity norms of each block of the KKT conditions of p at sol."""
    x = np.asarray(sol.x, dtype=float)
    lam = np.asarray(sol.lam, dtype=float)
    if x.shape[0] != p.n or lam.shape[0] != p.m:
        raise DimensionMismatch(f"solution has x[{x.shape[0]}], lam[{lam.shape[0]}]; problem needs x[{p.n}], lam[{p.m}]")
    k = p.meq
    lam_E, lam_G = lam[:k], lam[k:]
    s, t = np.asarray(sol.s, dtype=float), np.asarray(sol.t, dtype=float)
    stat = p.Q @ x + p.d + p.E.T @ lam_E + p.G.T @ lam_G + s + t
    ge = p.ge_mask
    row = p.G @ x - p.c_in
    row_viol = np.maximum(np.where(ge, -row, row), 0.0)
    sign_viol = np.concatenate([
        np.maximum(np.where(ge, lam_G, -lam_G), 0.0),
        np.maximum(s, 0.0),
        np.maximum(-t, 0.0),
    ])
    comp = np.concatenate([
        np.abs(lam_G * row),
        _complementarity(s, x - p.lb),
        _complementarity(t, p.ub - x),
    ])
    norm = lambda v: float(np.max(np.abs(v))) if v.size else 0.0
    return {
        'stationarity': norm(stat),
        'equality': norm(p.E @ x - p.c_eq),
        'inequality': norm(row_viol),
        'bounds': norm(np.concatenate([np.maximum(p.lb - x, 0.0), np.maximum(x - p.ub, 0.0)])),
        'sign': norm(sign_viol),
        'complementarity': norm(comp),
    }


def kkt_residual(p: QpProblem, sol: KktSolution) -> float:
    return max(kkt_residuals(p, sol).values())


def box_kkt_residuals(p: BoxEqQp, sol: KktSolution) -> dict:
    """Residual blocks of B^T lam + Q x + d + s + t = 0, B x = c, bounds, signs, complementarity."""
    x = np.asarray(sol.x, dtype=float)
    s, t = np.asarray(sol.s, dtype=float), np.asarray(sol.t, dtype=float)
    lam = np.asarray(sol.lam, dtype=float)
    stat = p.Q @ x + p.d + s + t
    if p.m:
        stat = stat + p.B.T @ lam
    eq = p.B @ x - p.c if p.m else np.zeros(0)
    norm = lambda v: float(np.max(np.abs(v))) if v.size else 0.0
    return {
        'stationarity': norm(stat),
        'equality': norm(eq),
        'bounds': norm(np.concatenate([np.maximum(p.b - x, 0.0), np.maximum(x - p.a, 0.0)])),
        'sign': norm(np.concatenate([np.maximum(s, 0.0), np.maximum(-t, 0.0)])),
        'complementarity': norm(np.concatenate([_complementarity(s, x - p.b), _complementarity(t, p.a - x)])),
    }


def box_kkt_residual(p: BoxEqQp, sol: KktSolution) -> float:
    return max(box_kkt_residuals(p, sol).values())
