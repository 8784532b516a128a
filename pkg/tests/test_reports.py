import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from santalo_lab.reports import SCHEMA_VERSION, Check, Report, to_jsonable


def test_inequality_checks():
    assert Check.leq("a", 1.0, 2.0).passed
    assert not Check.leq("a", 2.0, 1.0).passed
    assert Check.leq("a", 1.0 + 1e-10, 1.0, tol=1e-9).passed
    assert Check.geq("b", 2.0, 1.0).residual == pytest.approx(1.0)
    c = Check.close("c", 1.0, 1.001, rtol=1e-2)
    assert c.passed and c.residual == pytest.approx(1e-3)


def test_witness_is_kept_only_on_failure():
    assert Check.leq("a", 1.0, 2.0, witness={"x": 1}).witnesses == []
    assert Check.leq("a", 3.0, 2.0, witness={"x": 1}).witnesses == [{"x": 1}]
    assert Check.truth("t", False, witness=[0.5]).witnesses == [[0.5]]


def test_non_finite_values_serialize():
    assert to_jsonable({"a": np.inf, "b": -np.inf, "c": np.nan, "d": np.float32(0.5)}) == \
        {"a": "inf", "b": "-inf", "c": "nan", "d": 0.5}
    assert to_jsonable(np.arange(3)) == [0, 1, 2]
    c = Check.leq("inf", math.inf, 0.0)
    back = Check.from_dict(json.loads(json.dumps(to_jsonable(c.to_dict()))))
    assert back.lhs == math.inf and not back.passed


@given(st.lists(st.booleans(), min_size=1, max_size=20))
def test_overall_pass_is_the_conjunction(flags):
    r = Report("e", "k", [Check.truth(f"c{i}", f) for i, f in enumerate(flags)])
    assert r.passed == all(flags)
    assert r.to_dict()["n_failed"] == flags.count(False)


def test_empty_or_errored_reports_fail():
    assert not Report("e", "k").passed
    r = Report("e", "k", [Check.truth("ok", True)])
    r.error = "trial 3 raised"
    assert not r.passed
    assert "error" in r.to_dict() and "trial 3" in r.summary()


def test_written_files(tmp_path):
    r = Report("exp", "kind", [Check.leq("good", 0.0, 1.0), Check.geq("bad", 0.0, 1.0, witness={"p": [1, 2]})],
               environment={"seed": 7})
    jpath, cpath = r.write(tmp_path / "out")
    d = json.loads(jpath.read_text())
    assert d["schema_version"] == SCHEMA_VERSION
    assert d["pass"] is False and d["environment"]["seed"] == 7
    assert "timestamp" in d
    rows = list(csv.DictReader(cpath.open()))
    assert [row["name"] for row in rows] == ["good", "bad"]
    assert json.loads(rows[1]["witnesses"]) == [{"p": [1, 2]}]


def test_json_without_timestamp_is_stable():
    r = Report("exp", "kind", [Check.leq("x", 0.1, 1.0)])
    assert r.to_json(timestamp=False) == r.to_json(timestamp=False)
    assert "timestamp" not in r.to_json(timestamp=False)
