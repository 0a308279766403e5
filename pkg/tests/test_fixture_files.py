from pathlib import Path

from tractable import fixtures
from tractable.core import parse_cnf, parse_nnf, parse_vtree
from tractable.bn import parse_bn

SHIPPED = Path(__file__).resolve().parent.parent / "fixtures"


def test_shipped_files_match_generator(tmp_path):
    written = fixtures.write_fixture_files(tmp_path)
    for path in written:
        assert (SHIPPED / path.name).read_text() == path.read_text(), path.name


def test_shipped_files_parse():
    assert parse_cnf((SHIPPED / "delta.cnf").read_text()) == fixtures.DELTA_CNF
    assert parse_nnf((SHIPPED / "delta.nnf").read_text()).var_count == 4
    assert parse_vtree((SHIPPED / "delta.vtree").read_text()).vars_of(parse_vtree((SHIPPED / "delta.vtree").read_text()).root) == frozenset({1, 2, 3, 4})
    assert [v.name for v in parse_bn((SHIPPED / "abc.net").read_text()).vars] == ["A", "B", "C"]
