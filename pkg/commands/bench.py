from utils.config import env_int
from utils.logger import log
from bench.generators import FAMILIES, GenSpec
from bench.harness import format_csv, format_table, run_bench
from solvers.errors import QpError, UsageError
from commands._common import METHOD_CHOICES, CliConfig, report_error


class BenchCommand:
    """`qps bench`: random dense or sparse families, summarised per method."""
    name = 'bench'

    def __init__(self, subparsers):
        parser = subparsers.add_parser(self.name, help="benchmark the solvers on random problems")
        parser.add_argument('--family', choices=FAMILIES, required=True)
        parser.add_argument('--n', type=int, required=True)
        parser.add_argument('--m', type=int, required=True)
        parser.add_argument('--nz', type=int, default=None, help="average nonzeros per row (sparse family)")
        parser.add_argument('--runs', type=int, default=None)
        parser.add_argument('--seed', type=int, default=None, help="base seed (default n + m)")
        parser.add_argument('--jobs', type=int, default=None)
        parser.add_argument('--method', choices=METHOD_CHOICES, default='liasm')
        parser.add_argument('--tol', type=float, default=None)
        parser.add_argument('--format', choices=('text', 'csv'), default='text')
        parser.add_argument('--out', default=None, help="also write the per-run CSV to this file")
        parser.set_defaults(handler=self.run)

    def run(self, args) -> int:
        try:
            cfg = CliConfig.from_args(args)
            runs = args.runs if args.runs is not None else env_int('BENCH_RUNS', 10)
            if runs < 1:
                raise UsageError(f"--runs must be at least 1, got {runs}")
            jobs = args.jobs if args.jobs is not None else env_int('BENCH_JOBS', 1)
            if jobs < 1:
                raise UsageError(f"--jobs must be at least 1, got {jobs}")
            nz = args.nz if args.nz is not None else env_int('BENCH_NZ', 10)
            spec = GenSpec(args.family, args.n, args.m, nz=nz, seed=cfg.seed)
            rows = run_bench([spec], cfg.methods('liasm'), runs, jobs=jobs, tol=cfg.tol)
        except QpError as e:
            return report_error(e)

        csv_text = format_csv(rows)
        print(csv_text if cfg.format == 'csv' else format_table(rows), end='')
        if cfg.output_path:
            try:
                with open(cfg.output_path, 'w') as f:
                    f.write(csv_text)
                log.info(f"Wrote {cfg.output_path}")
            except OSError as e:
                log.error(f"Could not write {cfg.output_path}: {e}")
                return 1

        failed = [rec for row in rows for rec in row.failures]
        if not failed:
            return 0
        return 2 if all(rec.status == 'max_iter' for rec in failed) else 3


def setup(subparsers):
    BenchCommand(subparsers)
