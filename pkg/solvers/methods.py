from abc import ABC, abstractmethod
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg as sla

from utils.logger import log
from models.problem import BoxEqQp, KktSolution, QpProblem, slack_solution
from models.report import SolveReport
from solvers import active_set, ipm, liasm
from solvers.errors import UsageError


class QpMethod(ABC):
    """Abstract base class for every solver the cli and bench can dispatch to."""
    name: str = ''

    def __init__(self, tol: Optional[float] = None, max_iter: Optional[int] = None):
        self.tol = tol
        self.max_iter = max_iter

    @abstractmethod
    def solve(self, p: QpProblem) -> Tuple[KktSolution, SolveReport]:
        pass

    def solve_box(self, box: BoxEqQp) -> Tuple[KktSolution, SolveReport]:
        """Equality-plus-box input; the default goes through the general QpProblem."""
        return self.solve(box.to_qp_problem())


class IpmMethod(QpMethod):
    """Interior point: the LP variant when Q = 0, the QP variant on the inequality form otherwise."""
    name = 'ipm'

    def solve(self, p: QpProblem) -> Tuple[KktSolution, SolveReport]:
        opts = ipm.IpmOptions.from_env(tol=self.tol, max_iter=self.max_iter)
        if not np.any(p.Q != 0.0) and p.m + np.isfinite(p.lb).sum() + np.isfinite(p.ub).sum() > 0:
            log.debug("Q = 0, using the LP interior point on the standard form.")
            return ipm.solve_lp_problem(p, opts)
        return ipm.solve_problem(p, opts)


class ActiveSetMethod(QpMethod):
    """Primal active set with big-M Phase I."""
    name = 'active-set'

    def solve(self, p: QpProblem) -> Tuple[KktSolution, SolveReport]:
        opts = active_set.ActiveSetOptions.from_env(tol=self.tol, max_iter=self.max_iter)
        return active_set.solve_problem(p, opts=opts)


class LiasmMethod(QpMethod):
    """LIASM; general inequality rows are first turned into slack variables."""
    name = 'liasm'

    def __init__(self, tol: Optional[float] = None, max_iter: Optional[int] = None,
                 sigma: Optional[float] = None):
        super().__init__(tol, max_iter)
        self.sigma = sigma

    def _options(self) -> liasm.LiasmOptions:
        return liasm.LiasmOptions.from_env(tol=self.tol, max_outer=self.max_iter, sigma=self.sigma)

    def solve(self, p: QpProblem) -> Tuple[KktSolution, SolveReport]:
        box = p.to_box_eq()
        sol, report = self.solve_box(box)
        return slack_solution(box, sol), report

    def solve_box(self, box: BoxEqQp) -> Tuple[KktSolution, SolveReport]:
        return liasm.liasm_solve(box, self._options())


METHODS: Dict[str, type] = {
    IpmMethod.name: IpmMethod,
    ActiveSetMethod.name: ActiveSetMethod,
    LiasmMethod.name: LiasmMethod,
}


def get_method(name: str, **kwargs) -> QpMethod:
    try:
        return METHODS[name](**kwargs)
    except KeyError:
        raise UsageError(f"unknown method {name!r}, expected one of {', '.join(METHODS)}")


def default_method(p: QpProblem) -> str:
    """liasm for equality-plus-box problems with positive definite Q, ipm otherwise."""
    if not p.is_box_eq:
        return IpmMethod.name
    try:
        sla.cho_factor(p.Q, lower=True)
    except sla.LinAlgError:
        return IpmMethod.name
    return LiasmMethod.name
