"""
Direct solvers for equality-constrained QPs

    min 1/2 x^T Q x + d^T x   s.t.  A x = c

through the saddle-point system K = [Q A^T; A 0]. Three interchangeable
backends share one contract: they return (x, lam) with

    Q x + d + A^T lam = 0,   A x = c.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as sla

from utils.logger import log
from solvers.errors import (DimensionMismatch, NotPositiveDefinite, RankDeficientA,
                            ReducedHessianNotPd, SingularKkt, SingularSchur)

EPS = np.finfo(float).eps
BACKENDS = ('full', 'schur', 'nullspace')


@dataclass(frozen=True)
class EqQp:
    Q: np.ndarray
    A: np.ndarray
    d: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        n = Q.shape[0]
        A = np.asarray(self.A, dtype=float)
        A = A.reshape(0, n) if A.size == 0 else np.atleast_2d(A)
        d = np.asarray(self.d, dtype=float).reshape(-1)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if Q.shape != (n, n) or A.shape[1] != n or d.shape[0] != n or c.shape[0] != A.shape[0]:
            raise DimensionMismatch(
                f"inconsistent equality QP: Q{Q.shape}, A{A.shape}, d[{d.shape[0]}], c[{c.shape[0]}]")
        object.__setattr__(self, 'Q', Q)
        object.__setattr__(self, 'A', A)
        object.__setattr__(self, 'd', d)
        object.__setattr__(self, 'c', c)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class KktFactors:
    """Factorization of one KKT matrix; `payload` depends on the backend."""
    backend: str
    n: int
    m: int
    payload: dict = field(repr=False)

    def solve_step(self, g: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Solves K [-p; lam_hat] = [g; h] and returns (p, lam_hat)."""
        if self.backend == 'full':
            y = _ldl_solve(self.payload, np.concatenate([g, h]))
            return -y[:self.n], y[self.n:]
        if self.backend == 'schur':
            return _schur_solve(self.payload, g, h)
        return _nullspace_solve(self.payload, g, h)


def assemble_kkt(eq: EqQp, x) -> Tuple[np.ndarray, np.ndarray]:
    """
    K = [Q A^T; A 0] and rhs = (g, h) with g = d + Q x, h = A x - c,
    the right-hand side of the step system K [-p; lam_hat] = [g; h].
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != eq.n:
        raise DimensionMismatch(f"x has length {x.shape[0]}, expected {eq.n}")
    K = np.block([[eq.Q, eq.A.T], [eq.A, np.zeros((eq.m, eq.m))]])
    g = eq.d + eq.Q @ x
    h = eq.A @ x - eq.c
    return K, np.concatenate([g, h])


def inertia(K, m: int = 0) -> Tuple[int, int, int]:
    """
    (n_plus, n_minus, n_zero) of a symmetric K. For a saddle-point matrix
    pass its constraint count m; zero means |eig| <= max(n, m) * eps * ||K||_2.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.size == 0:
        return 0, 0, 0
    size = K.shape[0]
    if not 0 <= m <= size:
        raise DimensionMismatch(f"m={m} does not fit a {size}x{size} matrix")
    eig = sla.eigvalsh(K)
    tol = max(size - m, m) * EPS * np.max(np.abs(eig))
    return int(np.sum(eig > tol)), int(np.sum(eig < -tol)), int(np.sum(np.abs(eig) <= tol))


# --- symmetric indefinite (Bunch-Kaufman) backend ---

def _diagonal_blocks(D: np.ndarray):
    i, size = 0, D.shape[0]
    while i < size:
        if i + 1 < size and D[i + 1, i] != 0.0:
            yield slice(i, i + 2)
            i += 2
        else:
            yield slice(i, i + 1)
            i += 1


def factor_full(K: np.ndarray) -> dict:
    """
    P^T K P = L B L^T by LAPACK's Bunch-Kaufman routine (1x1/2x2 pivots,
    growth bound alpha = (1 + sqrt(17))/8).
    """
    lu, D, perm = sla.ldl(K, lower=True, hermitian=True)
    scale = max(np.abs(K).max(), 1.0) if K.size else 1.0
    tol = max(K.shape[0], 1) * EPS * scale
    for blk in _diagonal_blocks(D):
        block = D[blk, blk]
        det = abs(np.linalg.det(block))
        # a 2x2 determinant carries two factors of the matrix scale
        limit = tol if block.shape[0] == 1 else tol * scale
        if det <= limit:
            raise SingularKkt(f"pivot block at {blk.start} is numerically singular (|det| = {det:.3e})")
    return {'L': lu[perm], 'D': D, 'perm': perm}


def _ldl_solve(payload: dict, rhs: np.ndarray) -> np.ndarray:
    L, D, perm = payload['L'], payload['D'], payload['perm']
    # 1. permute
    z = rhs[perm]
    # 2. unit lower triangular solve
    z = sla.solve_triangular(L, z, lower=True, unit_diagonal=True)
    # 3. block diagonal solve
    u = np.empty_like(z)
    for blk in _diagonal_blocks(D):
        u[blk] = np.linalg.solve(D[blk, blk], z[blk])
    # 4. unit upper triangular solve, undo permutation
    w = sla.solve_triangular(L.T, u, lower=False, unit_diagonal=True)
    y = np.empty_like(w)
    y[perm] = w
    return y


def solve_full_kkt(eq: EqQp) -> Tuple[np.ndarray, np.ndarray]:
    return solve(eq, 'full')


# --- Schur complement backend ---

def factor_schur(eq: EqQp) -> dict:
    try:
        Q_cho = sla.cho_factor(eq.Q, lower=True)
    except sla.LinAlgError:
        raise NotPositiveDefinite("Q is not positive definite")
    QinvAT = sla.cho_solve(Q_cho, eq.A.T)
    S = eq.A @ QinvAT
    S = 0.5 * (S + S.T)
    if eq.m == 0:
        return {'Q': Q_cho, 'S': None, 'A': eq.A}
    try:
        S_cho = sla.cho_factor(S, lower=True)
    except sla.LinAlgError:
        raise SingularSchur("A Q^-1 A^T is singular (A rank deficient?)")
    pivot_tol = 10 * eq.m * EPS * max(np.abs(S).max(), EPS)
    if np.min(np.diag(S_cho[0])) ** 2 <= pivot_tol:
        raise SingularSchur("A Q^-1 A^T is numerically singular (A rank deficient?)")
    return {'Q': Q_cho, 'S': S_cho, 'A': eq.A}


def _schur_solve(payload: dict, g: np.ndarray, h: np.ndarray):
    Q_cho, S_cho, A = payload['Q'], payload['S'], payload['A']
    Qinv_g = sla.cho_solve(Q_cho, g)
    if S_cho is None:
        return -Qinv_g, np.zeros(0)
    lam_hat = sla.cho_solve(S_cho, A @ Qinv_g - h)
    p = sla.cho_solve(Q_cho, A.T @ lam_hat - g)
    return p, lam_hat


def solve_schur(eq: EqQp) -> Tuple[np.ndarray, np.ndarray]:
    """Eliminates x through Q^-1; needs Q positive definite."""
    return solve(eq, 'schur')


# --- null-space backend ---

def nullspace_basis(A: np.ndarray):
    """
    Column-pivoted QR  A^T P = [Y Z] [R; 0].

    Returns (Y, Z, R, piv) with R upper triangular m x m; raises
    RankDeficientA when |R_ii| <= n * eps * ||A||.
    """
    m, n = A.shape
    if m == 0:
        return np.zeros((n, 0)), np.eye(n), np.zeros((0, 0)), np.zeros(0, dtype=int)
    if m > n:
        raise RankDeficientA(f"{m} equality rows cannot be independent in {n} variables")
    Qf, R, piv = sla.qr(A.T, pivoting=True, mode='full')
    tol = n * EPS * max(np.linalg.norm(A, 2), EPS)
    rdiag = np.abs(np.diag(R[:m, :m]))
    if np.min(rdiag) <= tol:
        raise RankDeficientA(f"A has numerical rank {int(np.sum(rdiag > tol))} < {m}")
    return Qf[:, :m], Qf[:, m:], R[:m, :m], piv


def reduced_hessian_factor(Q: np.ndarray, Z: np.ndarray):
    """Cholesky factor of Z^T Q Z (None when Z has no columns)."""
    if Z.shape[1] == 0:
        return None
    H = Z.T @ Q @ Z
    H = 0.5 * (H + H.T)
    try:
        H_cho = sla.cho_factor(H, lower=True)
    except sla.LinAlgError:
        raise ReducedHessianNotPd("reduced Hessian Z^T Q Z is not positive definite")
    if np.min(np.diag(H_cho[0])) ** 2 <= 10 * H.shape[0] * EPS * max(np.abs(H).max(), EPS):
        raise ReducedHessianNotPd("reduced Hessian Z^T Q Z is numerically singular")
    return H_cho


def factor_nullspace(eq: EqQp) -> dict:
    Y, Z, R, piv = nullspace_basis(eq.A)
    return {'Q': eq.Q, 'Y': Y, 'Z': Z, 'R': R, 'piv': piv, 'H': reduced_hessian_factor(eq.Q, Z)}


def _nullspace_solve(payload: dict, g: np.ndarray, h: np.ndarray):
    Q, Y, Z, R, piv, H = (payload[k] for k in ('Q', 'Y', 'Z', 'R', 'piv', 'H'))
    m = R.shape[0]
    # (A Y) p_y = -h  with  (A Y)[piv] = R^T
    p_y = sla.solve_triangular(R.T, -h[piv], lower=True) if m else np.zeros(0)
    p = Y @ p_y
    if H is not None:
        p_z = sla.cho_solve(H, -Z.T @ (Q @ p) - Z.T @ g)
        p = p + Z @ p_z
    lam_hat = np.zeros(m)
    if m:
        w = sla.solve_triangular(R, Y.T @ (g + Q @ p), lower=False)
        lam_hat[piv] = w
    return p, lam_hat


def solve_nullspace(eq: EqQp) -> Tuple[np.ndarray, np.ndarray]:
    """Needs only Z^T Q Z positive definite, not Q itself."""
    return solve(eq, 'nullspace')


def nullspace_step(Q: np.ndarray, g: np.ndarray, Y: np.ndarray, Z: np.ndarray,
                   R: Optional[np.ndarray] = None):
    """
    Step of min 1/2 p^T Q p + g^T p  s.t.  A_W p = 0 for externally maintained
    factors A_W^T = Y R (no pivoting). Returns (p, lam_hat) where
    Q p + g = A_W^T lam_hat; lam_hat is None when R is not given.
    """
    H = reduced_hessian_factor(Q, Z)
    p = np.zeros(Q.shape[0]) if H is None else Z @ sla.cho_solve(H, -Z.T @ g)
    if R is None:
        return p, None
    if R.shape[0] == 0:
        return p, np.zeros(0)
    return p, sla.solve_triangular(R, Y.T @ (g + Q @ p), lower=False)


def factorize(eq: EqQp, backend: str = 'full') -> KktFactors:
    if backend == 'full':
        K, _ = assemble_kkt(eq, np.zeros(eq.n))
        return KktFactors('full', eq.n, eq.m, factor_full(K))
    if backend == 'schur':
        return KktFactors('schur', eq.n, eq.m, factor_schur(eq))
    if backend == 'nullspace':
        return KktFactors('nullspace', eq.n, eq.m, factor_nullspace(eq))
    raise ValueError(f"unknown KKT backend {backend!r}, expected one of {BACKENDS}")


def solve(eq: EqQp, backend: str = 'full') -> Tuple[np.ndarray, np.ndarray]:
    """Solves the equality QP with the named backend; returns (x, lam)."""
    factors = factorize(eq, backend)
    p, lam_hat = factors.solve_step(eq.d, -eq.c)
    log.debug(f"eq_kkt[{backend}]: n={eq.n}, m={eq.m}, |x|={np.linalg.norm(p):.3e}")
    return p, -lam_hat
