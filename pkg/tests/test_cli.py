import json

import pytest

from edgecolor_lab.cli import build_digest, main, to_jsonable
from edgecolor_lab.instance import dump_instance
from fractions import Fraction


@pytest.fixture
def p3_file(tmp_path, path3):
    f = tmp_path / "p3.json"
    dump_instance(path3, f)
    return str(f)


def test_count_prints_twelve(p3_file, capsys):
    assert main(["count", "--instance", p3_file]) == 0
    assert capsys.readouterr().out.strip() == "12"


def test_worst_case_prints_closed_form(capsys):
    assert main(["worst-case", "--delta", "3", "--q", "9"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "1/15"


def test_hardness_exit_zero(tmp_path, capsys):
    out = tmp_path / "h.json"
    assert main(["hardness", "--delta", "3", "--depth", "2", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["root_tv"] == "1" and rep["passed"] and rep["build"] == build_digest()


def test_input_errors_exit_two(tmp_path):
    assert main(["count", "--instance", str(tmp_path / "missing.json")]) == 2
    assert main(["count"]) == 2
    assert main(["worst-case", "--delta", "3", "--q", "4"]) == 2
    assert main(["jacobian", "--mode", "exact"]) == 2
    assert main(["no-such-command"]) == 2


def test_assertion_failure_exits_one():
    assert main(["trickledown", "--seed", "7"]) == 1
    assert main(["trickledown", "--seed", "7", "--constraint", "derived"]) == 0


def test_reports_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for f in (a, b):
        assert main(["wsm", "--delta", "3", "--q", "5", "--depth", "4", "--out", str(f)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_rationals_serialise_as_strings():
    assert to_jsonable({"x": Fraction(3, 4), "y": 0.1}) == {"x": "3/4", "y": 0.1}


def test_version_flag(capsys):
    assert main(["--version"]) == 0
    assert build_digest() in capsys.readouterr().out
