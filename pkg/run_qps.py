import os
import sys
import importlib

# Add the project root to the Python path
project_root = os.path.abspath(os.path.dirname(__file__))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from utils.logger import log
from utils.config import setup_os
from solvers.errors import QpError
from commands._common import QpsArgumentParser, report_error


def build_parser() -> QpsArgumentParser:
    parser = QpsArgumentParser(prog='qps', description="Convex quadratic programming solver suite.")
    subparsers = parser.add_subparsers(dest='command', metavar='{solve,bench,convert}')
    subparsers.required = True

    # Dynamically load every command module from the 'commands' directory
    commands_dir = os.path.join(project_root, 'commands')
    for filename in sorted(os.listdir(commands_dir)):
        if filename.endswith('.py') and not filename.startswith('_'):
            try:
                module = importlib.import_module(f'commands.{filename[:-3]}')
                module.setup(subparsers)
                log.debug(f"Loaded command: commands.{filename[:-3]}")
            except Exception as e:
                log.error(f"Failed to load command commands.{filename[:-3]}: {e}", exc_info=True)
    return parser


def main(argv=None) -> int:
    """
    Entry point; returns the process exit code:
    0 converged, 1 I/O, parse or usage error, 2 iteration limit, 3 infeasible or singular.
    """
    if not setup_os():
        log.critical("Could not load configuration.")
        return 1

    try:
        args = build_parser().parse_args(argv)
    except QpError as e:
        return report_error(e)

    try:
        return args.handler(args)
    except QpError as e:
        return report_error(e)
    except Exception as e:
        log.error(f"An unhandled error occurred in '{args.command}': {e}", exc_info=True)
        return 1


if __name__ == '__main__':
    sys.exit(main())
