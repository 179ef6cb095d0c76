"""
Random box-equality test problems:

    min 1/2 x^T Q x + d^T x   s.t.  B x = c,  0 <= x <= 1

with c = B x_feas for a random x_feas in [0, 1]^n, so every instance is
feasible. Each matrix draws from its own PCG64 stream spawned from
SeedSequence(seed); the same GenSpec always yields the same problem.
"""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from utils.logger import log
from models.problem import BoxEqQp
from solvers.errors import NotPositiveDefinite, UsageError
from solvers.liasm import DENSE_EIG_LIMIT, smallest_eigenvalue

FAMILIES = ('dense', 'sparse')
EIG_TOL = 1e-6


@dataclass(frozen=True)
class GenSpec:
    family: str
    n: int
    m: int
    nz: int = 10
    seed: Optional[int] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UsageError(f"unknown family {self.family!r}, expected one of {', '.join(FAMILIES)}")
        if not 1 <= self.m <= self.n:
            raise UsageError(f"need 1 <= m <= n, got n={self.n}, m={self.m}")
        if self.family == 'sparse' and not 1 <= self.nz <= self.n:
            raise UsageError(f"need 1 <= nz <= n, got nz={self.nz}")
        if self.seed is None:
            object.__setattr__(self, 'seed', self.n + self.m)
        elif self.seed < 0:
            raise UsageError(f"seed must be non-negative, got {self.seed}")

    def with_seed(self, seed: int) -> 'GenSpec':
        return GenSpec(self.family, self.n, self.m, self.nz, int(seed))


def run_seeds(spec: GenSpec, runs: int) -> List[int]:
    """Independent 64-bit seeds for `runs` repetitions of spec."""
    children = np.random.SeedSequence(spec.seed).spawn(runs)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def _streams(seed: int, count: int) -> List[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(child))
            for child in np.random.SeedSequence(seed).spawn(count)]


def certify_pd(Q, what: str = 'Q'):
    """Cholesky certificate that Q is positive definite."""
    dense = Q.toarray() if sp.issparse(Q) else Q
    try:
        sla.cho_factor(dense, lower=True)
    except sla.LinAlgError:
        raise NotPositiveDefinite(f"generated {what} failed its Cholesky certificate")


def min_eigenvalue(Q) -> float:
    """
    Lower estimate of lambda_min(Q): exact for n <= 64, otherwise shift-invert
    Lanczos around a Gershgorin lower bound, less its tolerance.
    """
    value = smallest_eigenvalue(Q, tol=EIG_TOL)
    if Q.shape[0] <= DENSE_EIG_LIMIT:
        return value
    return value - EIG_TOL * max(1.0, abs(value))


def gen_dense(spec: GenSpec) -> BoxEqQp:
    if spec.family != 'dense':
        raise UsageError(f"gen_dense needs family 'dense', got {spec.family!r}")
    n, m = spec.n, spec.m
    rx, rB, rd, rZ = _streams(spec.seed, 4)
    x_feas = rx.random(n)
    B = rB.random((m, n))
    c = B @ x_feas
    d = rd.random(n)
    Z = rZ.random((n, n)) - 0.5
    Q = Z.T @ Z + np.eye(n)
    certify_pd(Q)
    log.debug(f"gen_dense: n={n}, m={m}, seed={spec.seed}")
    return BoxEqQp(Q, d, B, c, a=np.ones(n), b=np.zeros(n))


def gen_sparse(spec: GenSpec) -> BoxEqQp:
    """
    B keeps each entry with probability nz/n; Q = Z^T Z + I for a 10% dense Z
    is masked symmetrically the same way and shifted by |lambda_min| + 1.
    """
    if spec.family != 'sparse':
        raise UsageError(f"gen_sparse needs family 'sparse', got {spec.family!r}")
    n, m, nz = spec.n, spec.m, spec.nz
    rx, rB, rBmask, rd, rZ, rQmask = _streams(spec.seed, 6)
    keep = nz / n
    x_feas = rx.random(n)
    B = rB.random((m, n))
    B[rBmask.random((m, n)) > keep] = 0.0
    B = sp.csr_matrix(B)
    c = B @ x_feas
    d = rd.random(n)
    Z = sp.random(n, n, density=0.1, format='csr', random_state=rZ)
    Q = (Z.T @ Z).toarray() + np.eye(n)
    upper = np.triu(rQmask.random((n, n)) <= keep)
    Q = sp.csr_matrix(Q * (upper | upper.T))
    lam_min = min_eigenvalue(Q)
    Q = (Q + (abs(lam_min) + 1.0) * sp.identity(n, format='csr')).tocsr()
    certify_pd(Q)
    log.debug(f"gen_sparse: n={n}, m={m}, nz={nz}, seed={spec.seed}, nnz(Q)={Q.nnz}, nnz(B)={B.nnz}")
    return BoxEqQp(Q, d, B, c, a=np.ones(n), b=np.zeros(n))


def generate(spec: GenSpec) -> BoxEqQp:
    return gen_dense(spec) if spec.family == 'dense' else gen_sparse(spec)
