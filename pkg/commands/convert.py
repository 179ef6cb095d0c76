import sys

from utils.logger import log
from models import qplite
from models.problem import bounds_to_rows, to_standard_form
from solvers.errors import QpError
from commands._common import CliConfig, report_error

TARGETS = ('standard', 'rows')


class ConvertCommand:
    """`qps convert`: rewrite a problem in standard form or with bounds as rows."""
    name = 'convert'

    def __init__(self, subparsers):
        parser = subparsers.add_parser(self.name, help="convert a QPLite problem to an equivalent form")
        parser.add_argument('--problem', required=True)
        parser.add_argument('--to', dest='target', choices=TARGETS, required=True)
        parser.add_argument('--out', required=True)
        parser.set_defaults(handler=self.run)

    def run(self, args) -> int:
        cfg = CliConfig.from_args(args)
        try:
            parsed = qplite.load(cfg.problem_path)
            if args.target == 'standard':
                sf = to_standard_form(parsed.problem)
                qplite.dump(cfg.output_path, sf.to_qp_problem(), sf.recover_map)
            else:
                qplite.dump(cfg.output_path, bounds_to_rows(parsed.problem))
        except OSError as e:
            log.error(f"Conversion failed: {e}")
            print(f"qps: error: {e}", file=sys.stderr)
            return 1
        except QpError as e:
            return report_error(e)
        print(f"wrote {cfg.output_path} ({args.target} form)")
        return 0


def setup(subparsers):
    ConvertCommand(subparsers)
