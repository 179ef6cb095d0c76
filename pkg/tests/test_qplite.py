import numpy as np
import pytest

from models import qplite
from models.problem import QpProblem, RecoverMap
from solvers.errors import ProblemFormatError

SAMPLE = """\
qplite 1
# two variables, one equality, one inequality
n 2
meq 1
mineq 1
Q
2 0
0 2
d
-1
-1
E
1 1
c_eq
1
G sense(ge)
sparse
0 0 1
c_in
0.25
lb
-inf -inf
ub
inf 1
"""


def test_sample_file_parses():
    """Sections, wrapped vectors, sparse triplets, comments and inf tokens."""
    parsed = qplite.loads(SAMPLE)
    p = parsed.problem
    assert (p.n, p.meq, p.mineq) == (2, 1, 1)
    np.testing.assert_allclose(p.Q, 2 * np.eye(2))
    np.testing.assert_allclose(p.d, [-1, -1])
    np.testing.assert_allclose(p.G, [[1, 0]])
    np.testing.assert_array_equal(p.sense, ['ge'])
    np.testing.assert_allclose(p.ub, [np.inf, 1])
    assert parsed.recover_map is None


def test_malformed_dimension_line_names_the_line():
    """'n two' on line 2 is reported as line 2."""
    with pytest.raises(ProblemFormatError) as info:
        qplite.loads("qplite 1\nn two\nQ\n1\n")
    assert info.value.line == 2
    assert str(info.value).startswith("line 2:")


def test_bad_header_and_unknown_section():
    """The header is mandatory and unknown section names are rejected."""
    with pytest.raises(ProblemFormatError, match="header"):
        qplite.loads("qp 1\nn 1\nQ\n1\n")
    with pytest.raises(ProblemFormatError, match="unknown section") as info:
        qplite.loads("qplite 1\nn 1\nH\n1\n")
    assert info.value.line == 3


def test_short_matrix_row_is_reported():
    """A dense row with too few entries names its line."""
    with pytest.raises(ProblemFormatError, match="row 1 has 1 entries") as info:
        qplite.loads("qplite 1\nn 2\nQ\n1 0\n1\n")
    assert info.value.line == 5


def test_missing_equality_data():
    """Declared equality rows need E and c_eq."""
    with pytest.raises(ProblemFormatError, match="missing section 'E'"):
        qplite.loads("qplite 1\nn 1\nmeq 1\nQ\n1\n")


def test_per_row_senses():
    """A comma list gives one sense per row."""
    text = "qplite 1\nn 1\nmineq 2\nQ\n1\nG sense(le,ge)\n1\n1\nc_in\n1 0\n"
    p = qplite.loads(text).problem
    np.testing.assert_array_equal(p.sense, ['le', 'ge'])


def test_dumps_then_loads_preserves_problem_and_origin():
    """Written problems parse back to the same data and RecoverMap."""
    p = QpProblem(np.diag(np.arange(1.0, 7.0)), np.linspace(-1, 1, 6), E=np.ones((1, 6)), c_eq=[0.1],
                  G=np.eye(6)[:2], c_in=[0.5, -0.5], sense=['le', 'ge'], lb=np.full(6, -1.0))
    text = qplite.dumps(p, RecoverMap(n=2, q=2))
    assert 'sparse' in text
    back = qplite.loads(text)
    assert back.recover_map == RecoverMap(n=2, q=2)
    for name in ('Q', 'd', 'E', 'c_eq', 'G', 'c_in', 'lb', 'ub'):
        np.testing.assert_array_equal(getattr(back.problem, name), getattr(p, name))
    np.testing.assert_array_equal(back.problem.sense, p.sense)


def test_load_reads_a_file(tmp_path):
    """load() reads from disk; missing files raise OSError."""
    path = tmp_path / 'p.qp'
    path.write_text(SAMPLE)
    assert qplite.load(str(path)).problem.n == 2
    with pytest.raises(OSError):
        qplite.load(str(tmp_path / 'missing.qp'))
