"""
Reader and writer for the line-oriented "QPLite v1" problem format.

    qplite 1
    n 2
    meq 1
    mineq 1
    origin standard 1 0        (optional, written by `qps convert --to standard`)
    Q
    1 0
    0 1
    d
    0 0
    E
    1 1
    c_eq
    1
    G sense(ge)                (one sense for all rows, or a comma list per row)
    sparse
    0 0 1
    c_in
    0.25
    lb
    -inf -inf
    ub
    inf 1

Matrices are dense rows or a `sparse` marker followed by 0-based `i j v`
triplets. Vectors may wrap across lines. `#` starts a comment.
"""
import re
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from utils.logger import log
from solvers.errors import ProblemFormatError, QpError
from models.problem import QpProblem, RecoverMap

HEADER = ('qplite', '1')
SECTIONS = ('Q', 'd', 'E', 'c_eq', 'G', 'c_in', 'lb', 'ub')
SENSE_RE = re.compile(r'^sense\(([^)]*)\)$')


@dataclass
class QpliteFile:
    problem: QpProblem
    recover_map: Optional[RecoverMap] = None


def _number(token: str, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ProblemFormatError(f"expected a number, got {token!r}", lineno)


def _integer(token: str, lineno: int, name: str) -> int:
    try:
        value = int(token)
    except ValueError:
        raise ProblemFormatError(f"{name} must be a non-negative integer, got {token!r}", lineno)
    if value < 0:
        raise ProblemFormatError(f"{name} must be a non-negative integer, got {value}", lineno)
    return value


class QpliteReader:
    """Single-pass parser over (line number, tokens) pairs."""

    def __init__(self, text: str):
        self.lines: List[Tuple[int, List[str]]] = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            content = raw.split('#', 1)[0].strip()
            if content:
                self.lines.append((lineno, content.split()))
        self.pos = 0
        self.dims = {}
        self.recover_map = None

    def _peek(self):
        return self.lines[self.pos] if self.pos < len(self.lines) else None

    def _next(self, what: str):
        if self.pos >= len(self.lines):
            last = self.lines[-1][0] if self.lines else 1
            raise ProblemFormatError(f"unexpected end of file while reading {what}", last)
        item = self.lines[self.pos]
        self.pos += 1
        return item

    def _at_section(self) -> bool:
        nxt = self._peek()
        return nxt is not None and nxt[1][0] in SECTIONS

    def parse(self) -> QpliteFile:
        lineno, tokens = self._next('header')
        if tuple(tokens) != HEADER:
            raise ProblemFormatError(f"expected header 'qplite 1', got {' '.join(tokens)!r}", lineno)

        while self._peek() is not None and self._peek()[1][0] in ('n', 'meq', 'mineq', 'origin'):
            lineno, tokens = self._next('dimensions')
            key = tokens[0]
            if key == 'origin':
                if len(tokens) != 4 or tokens[1] != 'standard':
                    raise ProblemFormatError("origin line must read 'origin standard <n> <q>'", lineno)
                self.recover_map = RecoverMap(n=_integer(tokens[2], lineno, 'origin n'),
                                              q=_integer(tokens[3], lineno, 'origin q'))
                continue
            if len(tokens) != 2:
                raise ProblemFormatError(f"dimension line must read '{key} <int>'", lineno)
            if key in self.dims:
                raise ProblemFormatError(f"duplicate dimension line {key!r}", lineno)
            self.dims[key] = _integer(tokens[1], lineno, key)

        if 'n' not in self.dims:
            nxt = self._peek()
            raise ProblemFormatError("missing dimension line 'n <int>'", nxt[0] if nxt else 1)
        n = self.dims['n']
        meq = self.dims.get('meq', 0)
        mineq = self.dims.get('mineq', 0)

        data = {}
        sense = None
        while self._peek() is not None:
            lineno, tokens = self._next('section')
            name = tokens[0]
            if name not in SECTIONS:
                raise ProblemFormatError(f"unknown section {name!r}", lineno)
            if name in data:
                raise ProblemFormatError(f"duplicate section {name!r}", lineno)
            if name == 'G':
                sense = self._parse_sense(tokens[1:], mineq, lineno)
            elif len(tokens) > 1:
                raise ProblemFormatError(f"unexpected tokens after section name {name!r}", lineno)
            if name == 'Q':
                data[name] = self._matrix(n, n, name, lineno)
            elif name == 'E':
                data[name] = self._matrix(meq, n, name, lineno)
            elif name == 'G':
                data[name] = self._matrix(mineq, n, name, lineno)
            else:
                size = {'d': n, 'c_eq': meq, 'c_in': mineq, 'lb': n, 'ub': n}[name]
                data[name] = self._vector(size, name, lineno)

        if 'Q' not in data:
            raise ProblemFormatError("missing section 'Q'", self.lines[-1][0])
        for name, rows in (('E', meq), ('c_eq', meq), ('G', mineq), ('c_in', mineq)):
            if rows and name not in data:
                raise ProblemFormatError(f"missing section {name!r} ({rows} rows declared)", self.lines[-1][0])

        try:
            problem = QpProblem(
                data['Q'], data.get('d'),
                E=data.get('E'), c_eq=data.get('c_eq'),
                G=data.get('G'), c_in=data.get('c_in'), sense=sense,
                lb=data.get('lb'), ub=data.get('ub'),
            )
        except QpError as e:
            raise ProblemFormatError(str(e), self.lines[-1][0])
        if self.recover_map is not None and self.recover_map.size != problem.n:
            raise ProblemFormatError(
                f"origin line describes {self.recover_map.size} variables but n = {problem.n}", 1)
        return QpliteFile(problem=problem, recover_map=self.recover_map)

    def _parse_sense(self, rest: List[str], rows: int, lineno: int) -> np.ndarray:
        if not rest:
            return np.array(['le'] * rows, dtype='<U2')
        match = SENSE_RE.match(''.join(rest))
        if not match:
            raise ProblemFormatError("G section must read 'G sense(<le|ge>[,...])'", lineno)
        senses = [s for s in re.split(r'[,\s]+', match.group(1)) if s]
        if any(s not in ('le', 'ge') for s in senses):
            raise ProblemFormatError(f"unknown sense in {match.group(0)!r}", lineno)
        if len(senses) == 1:
            senses = senses * rows
        if len(senses) != rows:
            raise ProblemFormatError(f"{len(senses)} senses given for {rows} inequality rows", lineno)
        return np.array(senses, dtype='<U2')

    def _matrix(self, rows: int, cols: int, name: str, section_line: int) -> np.ndarray:
        out = np.zeros((rows, cols))
        nxt = self._peek()
        if nxt is not None and nxt[1] == ['sparse']:
            self._next(name)
            while self._peek() is not None and not self._at_section():
                lineno, tokens = self._next(name)
                if len(tokens) != 3:
                    raise ProblemFormatError(f"{name}: sparse entry must be 'i j v'", lineno)
                i = _integer(tokens[0], lineno, f"{name} row index")
                j = _integer(tokens[1], lineno, f"{name} column index")
                if i >= rows or j >= cols:
                    raise ProblemFormatError(f"{name}: entry ({i}, {j}) outside {rows}x{cols}", lineno)
                out[i, j] += _number(tokens[2], lineno)
            return out
        for i in range(rows):
            lineno, tokens = self._next(name)
            if tokens[0] in SECTIONS:
                raise ProblemFormatError(f"{name}: expected {rows} rows, found {i} (section began on line {section_line})", lineno)
            if len(tokens) != cols:
                raise ProblemFormatError(f"{name}: row {i} has {len(tokens)} entries, expected {cols}", lineno)
            out[i] = [_number(tok, lineno) for tok in tokens]
        if self._peek() is not None and not self._at_section():
            lineno, _ = self._peek()
            raise ProblemFormatError(f"{name}: more than the declared {rows} rows", lineno)
        return out

    def _vector(self, size: int, name: str, section_line: int) -> np.ndarray:
        values: List[float] = []
        lineno = section_line
        while len(values) < size:
            if self._peek() is None or self._at_section():
                raise ProblemFormatError(f"{name}: expected {size} entries, found {len(values)}", lineno)
            lineno, tokens = self._next(name)
            values.extend(_number(tok, lineno) for tok in tokens)
        if len(values) != size:
            raise ProblemFormatError(f"{name}: expected {size} entries, found {len(values)}", lineno)
        if self._peek() is not None and not self._at_section():
            lineno, _ = self._peek()
            raise ProblemFormatError(f"{name}: more than the declared {size} entries", lineno)
        return np.array(values)


def loads(text: str) -> QpliteFile:
    return QpliteReader(text).parse()


def load(path: str) -> QpliteFile:
    """Reads a QPLite file; I/O errors propagate as OSError."""
    with open(path, 'r') as f:
        text = f.read()
    parsed = loads(text)
    log.info(f"Loaded {path}: n={parsed.problem.n}, meq={parsed.problem.meq}, mineq={parsed.problem.mineq}")
    return parsed


def _fmt(value: float) -> str:
    if np.isposinf(value):
        return 'inf'
    if np.isneginf(value):
        return '-inf'
    return format(float(value), '.17g')


def _dump_matrix(lines: List[str], mat: np.ndarray):
    rows, cols = mat.shape
    nnz = int(np.count_nonzero(mat))
    if rows * cols > 16 and nnz <= rows * cols // 4:
        lines.append('sparse')
        for i, j in zip(*np.nonzero(mat)):
            lines.append(f"{i} {j} {_fmt(mat[i, j])}")
    else:
        for row in mat:
            lines.append(' '.join(_fmt(v) for v in row))


def dumps(p: QpProblem, recover_map: Optional[RecoverMap] = None) -> str:
    lines = ['qplite 1', f"n {p.n}", f"meq {p.meq}", f"mineq {p.mineq}"]
    if recover_map is not None:
        lines.append(f"origin standard {recover_map.n} {recover_map.q}")
    lines.append('Q')
    _dump_matrix(lines, p.Q)
    lines += ['d', ' '.join(_fmt(v) for v in p.d)]
    if p.meq:
        lines.append('E')
        _dump_matrix(lines, p.E)
        lines += ['c_eq', ' '.join(_fmt(v) for v in p.c_eq)]
    if p.mineq:
        senses = sorted(set(p.sense))
        lines.append(f"G sense({senses[0] if len(senses) == 1 else ','.join(p.sense)})")
        _dump_matrix(lines, p.G)
        lines += ['c_in', ' '.join(_fmt(v) for v in p.c_in)]
    if np.any(np.isfinite(p.lb)):
        lines += ['lb', ' '.join(_fmt(v) for v in p.lb)]
    if np.any(np.isfinite(p.ub)):
        lines += ['ub', ' '.join(_fmt(v) for v in p.ub)]
    return '\n'.join(lines) + '\n'


def dump(path: str, p: QpProblem, recover_map: Optional[RecoverMap] = None):
    with open(path, 'w') as f:
        f.write(dumps(p, recover_map))
    log.info(f"Wrote {path}: n={p.n}, meq={p.meq}, mineq={p.mineq}")
