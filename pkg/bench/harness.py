"""
Benchmark harness: every (GenSpec, method) pair is solved on `runs`
independently seeded instances and summarised as mean (sample stddev) per
metric, the layout of the classic "key performance features" tables.
"""
import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from utils.config import env_int
from utils.logger import log
from utils.table_builder import TableBuilder
from models.problem import KktSolution, kkt_residual
from solvers.errors import IterationLimit, QpError, UsageError
from solvers.methods import get_method
from bench.generators import GenSpec, generate, run_seeds

METRICS = ('lambda_updates', 'inner_iters', 'direct_iters', 'iterations', 'kkt_residual', 'wall_seconds')
CSV_FIELDS = ('family', 'n', 'm', 'nz', 'seed', 'method', 'run', 'status', 'objective', 'kkt_residual',
              'lambda_updates', 'inner_iters', 'direct_iters', 'iterations', 'wall_seconds', 'error')


@dataclass
class BenchRun:
    spec: GenSpec
    method: str
    run: int
    status: str
    objective: Optional[float] = None
    kkt_residual: Optional[float] = None
    lambda_updates: int = 0
    inner_iters: int = 0
    direct_iters: int = 0
    iterations: int = 0
    wall_seconds: float = 0.0
    error: str = ''

    @property
    def converged(self) -> bool:
        return self.status == 'converged'


@dataclass
class BenchRow:
    spec: GenSpec
    method: str
    runs: int
    records: List[BenchRun] = field(default_factory=list)
    mean: Dict[str, float] = field(default_factory=dict)
    stddev: Dict[str, float] = field(default_factory=dict)
    median_seconds: float = 0.0
    objective_spread: float = 0.0

    @property
    def converged(self) -> int:
        return sum(r.converged for r in self.records)

    @property
    def failures(self) -> List[BenchRun]:
        return [r for r in self.records if not r.converged]

    @property
    def lambda_updates(self) -> float:
        return self.mean.get('lambda_updates', 0.0)

    @property
    def inner_iters(self) -> float:
        return self.mean.get('inner_iters', 0.0)

    @property
    def direct_iters(self) -> float:
        return self.mean.get('direct_iters', 0.0)

    @property
    def wall_seconds(self) -> float:
        return self.mean.get('wall_seconds', 0.0)

    @property
    def kkt_residual(self) -> float:
        return self.mean.get('kkt_residual', 0.0)


def _solve_once(spec: GenSpec, method: str, run: int, tol: Optional[float]) -> BenchRun:
    box = generate(spec)
    qp = box.to_qp_problem()
    solver = get_method(method, tol=tol)
    started = time.perf_counter()
    report = None
    sol: Optional[KktSolution] = None
    status, error = 'converged', ''
    try:
        sol, report = solver.solve_box(box)
    except IterationLimit as e:
        sol, report = e.best, e.report
        status, error = 'max_iter', str(e)
        log.warning(f"{method} on {spec.family} n={spec.n} m={spec.m} run {run}: {e}")
    except QpError as e:
        status, error = type(e).__name__, str(e)
        log.warning(f"{method} on {spec.family} n={spec.n} m={spec.m} run {run}: {e}")
    except Exception as e:
        status, error = 'error', str(e)
        log.error(f"{method} on {spec.family} n={spec.n} m={spec.m} run {run} crashed: {e}", exc_info=True)
    elapsed = time.perf_counter() - started

    rec = BenchRun(spec=spec, method=method, run=run, status=status, wall_seconds=elapsed, error=error)
    if sol is not None:
        rec.objective = qp.objective(sol.x)
        rec.kkt_residual = kkt_residual(qp, sol)
    if report is not None:
        rec.lambda_updates = report.count('lambda_updates')
        rec.inner_iters = report.count('inner_iters')
        rec.direct_iters = report.count('direct_iters')
        rec.iterations = report.iterations
    return rec


def _summarise(row: BenchRow):
    for metric in METRICS:
        values = np.array([getattr(r, metric) for r in row.records
                           if getattr(r, metric) is not None], dtype=float)
        row.mean[metric] = float(values.mean()) if values.size else float('nan')
        row.stddev[metric] = float(values.std(ddof=1)) if values.size > 1 else 0.0
    row.median_seconds = float(np.median([r.wall_seconds for r in row.records])) if row.records else 0.0


def _objective_spreads(rows: List[BenchRow]):
    """Largest relative objective disagreement between methods, per GenSpec, over run indices."""
    by_spec: Dict[GenSpec, List[BenchRow]] = {}
    for row in rows:
        by_spec.setdefault(row.spec, []).append(row)
    for group in by_spec.values():
        spread = 0.0
        for run in range(group[0].runs):
            values = [r.records[run].objective for r in group
                      if r.records[run].converged and r.records[run].objective is not None]
            if len(values) > 1:
                spread = max(spread, (max(values) - min(values)) / max(1.0, max(abs(v) for v in values)))
        for row in group:
            row.objective_spread = spread


def run_bench(specs: Sequence[GenSpec], methods: Sequence[str], runs: int,
              jobs: Optional[int] = None, tol: Optional[float] = None) -> List[BenchRow]:
    """Per-run failures are recorded in the rows, never raised."""
    if runs < 1:
        raise UsageError(f"runs must be at least 1, got {runs}")
    jobs = jobs or env_int('BENCH_JOBS', 1)
    for method in methods:
        get_method(method)

    tasks = []
    for spec in specs:
        seeds = run_seeds(spec, runs)
        for method in methods:
            for run, seed in enumerate(seeds):
                tasks.append((spec.with_seed(seed), method, run, tol))
    log.info(f"Benchmark: {len(specs)} problem sizes x {len(methods)} methods x {runs} runs, jobs={jobs}")

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(lambda task: _solve_once(*task), tasks))
    else:
        records = [_solve_once(*task) for task in tasks]

    rows = []
    it = iter(records)
    for spec in specs:
        for method in methods:
            row = BenchRow(spec=spec, method=method, runs=runs, records=[next(it) for _ in range(runs)])
            _summarise(row)
            rows.append(row)
    _objective_spreads(rows)
    return rows


def _cell(row: BenchRow, metric: str, digits: int = 3) -> str:
    mean, std = row.mean.get(metric), row.stddev.get(metric, 0.0)
    if mean is None or np.isnan(mean):
        return '-'
    return f"{mean:.{digits}g}({std:.2g})"


def format_table(rows: List[BenchRow]) -> str:
    table = (TableBuilder(title="Benchmark: mean (sample stddev) over runs")
             .add_column('family', 'left')
             .add_column('n')
             .add_column('m')
             .add_column('method', 'left')
             .add_column('ok')
             .add_column('lambda-updates')
             .add_column('inner iter')
             .add_column('direct iter')
             .add_column('iterations')
             .add_column('residual')
             .add_column('median s')
             .add_column('obj spread'))
    for row in rows:
        table.add_row(row.spec.family, row.spec.n, row.spec.m, row.method, f"{row.converged}/{row.runs}",
                      _cell(row, 'lambda_updates'), _cell(row, 'inner_iters'), _cell(row, 'direct_iters'),
                      _cell(row, 'iterations'), f"{row.mean.get('kkt_residual', float('nan')):.2e}",
                      f"{row.median_seconds:.3g}", f"{row.objective_spread:.1e}")
    failures = sum(len(r.failures) for r in rows)
    if failures:
        table.set_footer(f"{failures} run(s) did not converge")
    return table.build()


def format_csv(rows: List[BenchRow]) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=CSV_FIELDS, lineterminator='\n')
    writer.writeheader()
    for row in rows:
        for rec in row.records:
            writer.writerow({
                'family': rec.spec.family, 'n': rec.spec.n, 'm': rec.spec.m, 'nz': rec.spec.nz,
                'seed': rec.spec.seed, 'method': rec.method, 'run': rec.run, 'status': rec.status,
                'objective': '' if rec.objective is None else format(rec.objective, '.12g'),
                'kkt_residual': '' if rec.kkt_residual is None else format(rec.kkt_residual, '.12g'),
                'lambda_updates': rec.lambda_updates, 'inner_iters': rec.inner_iters,
                'direct_iters': rec.direct_iters, 'iterations': rec.iterations,
                'wall_seconds': format(rec.wall_seconds, '.6f'), 'error': rec.error,
            })
    return out.getvalue()
