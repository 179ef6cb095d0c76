import sys
from itertools import combinations

from utils.logger import log
from models import qplite
from models.problem import kkt_residual
from solvers.errors import IterationLimit, QpError
from solvers.methods import default_method, get_method
from commands._common import METHOD_CHOICES, CliConfig, fmt, fmt_vector, report_error


class SolveCommand:
    """`qps solve`: read a QPLite problem and solve it with one or all methods."""
    name = 'solve'

    def __init__(self, subparsers):
        parser = subparsers.add_parser(self.name, help="solve a QPLite problem file")
        parser.add_argument('--method', choices=METHOD_CHOICES, default=None,
                            help="solver (default: liasm for equality+box problems with Q > 0, else ipm)")
        parser.add_argument('--problem', required=True, help="QPLite v1 problem file")
        parser.add_argument('--tol', type=float, default=None)
        parser.add_argument('--max-iter', dest='max_iter', type=int, default=None)
        parser.set_defaults(handler=self.run)

    def _solve_one(self, method: str, parsed: qplite.QpliteFile, cfg: CliConfig):
        """Prints one result block; returns (exit code, objective of a converged run or None)."""
        problem = parsed.problem
        solver = get_method(method, tol=cfg.tol, max_iter=cfg.max_iter)
        code, sol, report = 0, None, None
        try:
            sol, report = solver.solve(problem)
        except IterationLimit as e:
            code = report_error(e)
            sol, report = e.best, e.report
        except QpError as e:
            code = report_error(e)

        print(f"[{method}]")
        if sol is None:
            print("status: failed")
            return code, None
        objective = problem.objective(sol.x)
        print(f"status: {report.status if report is not None else 'failed'}")
        print(f"objective: {fmt(objective)}")
        print(f"kkt_residual: {fmt(kkt_residual(problem, sol))}")
        if report is not None:
            print(f"iterations: {report.iterations}")
            for counter, value in sorted(report.counters.items()):
                print(f"{counter}: {value}")
        print(f"x: {fmt_vector(sol.x)}")
        rm = parsed.recover_map
        if rm is not None:
            print(f"x_original: {fmt_vector(sol.x[:rm.n] - sol.x[rm.n:2 * rm.n])}")
        return code, (objective if code == 0 else None)

    def run(self, args) -> int:
        cfg = CliConfig.from_args(args)
        try:
            parsed = qplite.load(cfg.problem_path)
        except OSError as e:
            log.error(f"Could not read {cfg.problem_path}: {e}")
            print(f"qps: error: {e}", file=sys.stderr)
            return 1
        except QpError as e:
            return report_error(e)

        methods = cfg.methods(default_method(parsed.problem))
        codes, objectives = [], {}
        for method in methods:
            code, objective = self._solve_one(method, parsed, cfg)
            codes.append(code)
            if objective is not None:
                objectives[method] = objective

        if len(methods) > 1:
            print("[objective deltas]")
            for a, b in combinations(methods, 2):
                delta = fmt(objectives[a] - objectives[b]) if a in objectives and b in objectives else 'n/a'
                print(f"{a} - {b}: {delta}")
        return max(codes)


def setup(subparsers):
    SolveCommand(subparsers)
