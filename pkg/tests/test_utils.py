import json

import pytest

from utils.config import env_float, env_int, env_str, setup_os
from utils.table_builder import TableBuilder


def test_setup_os_flattens_nested_keys(tmp_path, monkeypatch):
    # registered so monkeypatch restores them afterwards
    monkeypatch.setenv('LIASM_SIGMA', '')
    monkeypatch.setenv('SOLVER_TOL', '')
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({'liasm': {'sigma': 250.0}, 'solver': {'tol': 1e-9}}))
    assert setup_os(str(path)) is True
    assert env_float('LIASM_SIGMA', 1.0) == 250.0
    assert env_float('SOLVER_TOL', 1.0) == pytest.approx(1e-9)


def test_setup_os_missing_and_malformed(tmp_path):
    assert setup_os(str(tmp_path / 'absent.json')) is True
    bad = tmp_path / 'bad.json'
    bad.write_text('{"liasm": ')
    assert setup_os(str(bad)) is False
    listing = tmp_path / 'list.json'
    listing.write_text('[1, 2]')
    assert setup_os(str(listing)) is False


def test_env_accessors_fall_back(monkeypatch):
    monkeypatch.setenv('QPS_TEST_FLOAT', 'abc')
    monkeypatch.setenv('QPS_TEST_INT', '40.0')
    monkeypatch.setenv('QPS_TEST_STR', '')
    assert env_float('QPS_TEST_FLOAT', 2.5) == 2.5
    assert env_int('QPS_TEST_INT', 1) == 40
    assert env_str('QPS_TEST_STR', 'info') == 'info'
    assert env_int('QPS_TEST_UNSET', 7) == 7


def test_table_builder_alignment():
    text = (TableBuilder(title='bench')
            .add_column('family', align='left')
            .add_column('n')
            .add_row('dense', 100)
            .add_row('sparse', 5)
            .set_footer('2 rows')
            .build())
    lines = text.splitlines()
    assert lines[0] == 'bench'
    assert lines[1] == 'family |   n'
    assert lines[2] == '-------+----'
    assert lines[3] == 'dense  | 100'
    assert lines[4] == 'sparse |   5'
    assert lines[-1] == '2 rows'


def test_table_builder_rejects_ragged_rows():
    table = TableBuilder().add_column('a').add_column('b')
    with pytest.raises(ValueError):
        table.add_row(1)
    with pytest.raises(ValueError):
        table.add_column('c', align='center')
