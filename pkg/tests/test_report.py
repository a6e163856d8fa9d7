import json
import math

import pytest

from bsds.config import RunConfig
from bsds.datasets import load_pool, load_scores
from bsds.experiments import cmd_evaluate
from bsds.proposers import ProposerConfig
from bsds.report import ReportBundle, emit_report, read_dqs_table, read_table

from conftest import FIXTURES


def minimal_bundle():
    b = ReportBundle(meta={"seeds": "0", "lam": 1.0, "gamma": 0.3, "config_hash": "abc123", "command": "evaluate"})
    b.table("rates", ("proposer", "fraction", "budget", "hr", "fdr", "cov", "bsds")).add(
        "Greedy", 0.1, 10, 0.8, 0.2, 1.0, 0.6)
    b.table("dqs", ("proposer", "dqs")).add("Greedy", 0.6)
    return b


def test_minimal_bundle_matches_golden_files(tmp_path):
    paths = emit_report(minimal_bundle(), tmp_path)
    assert [p.rsplit("/", 1)[1] for p in paths] == ["rates.csv", "dqs.csv"]
    for name in ("rates.csv", "dqs.csv"):
        assert (tmp_path / name).read_bytes() == (FIXTURES / "report_minimal" / name).read_bytes()


def test_same_bundle_twice_is_byte_identical(tmp_path):
    for fmt in ("tabular", "structured"):
        a, b = tmp_path / f"a_{fmt}", tmp_path / f"b_{fmt}"
        pa = emit_report(minimal_bundle(), a, fmt)
        pb = emit_report(minimal_bundle(), b, fmt)
        for x, y in zip(pa, pb):
            assert open(x, "rb").read() == open(y, "rb").read()


def test_cells_none_nan_and_round_trip(tmp_path):
    b = ReportBundle(meta={"n": 3})
    t = b.table("dqs", ("proposer", "dqs", "lo", "hi"))
    t.add("A", 0.1 + 0.2, None, math.nan)
    t.add("B", -1e-300, 1 / 3, 2.0)
    b.table("series/curve", ("x", "y")).add(1, 2.5)
    b.notes.append("B: something happened")
    emit_report(b, tmp_path)
    rows = read_dqs_table(tmp_path / "dqs.csv")
    assert rows == [{"proposer": "A", "dqs": 0.1 + 0.2, "lo": None, "hi": None},
                    {"proposer": "B", "dqs": -1e-300, "lo": 1 / 3, "hi": 2.0}]
    meta, columns, data = read_table(tmp_path / "series" / "curve.csv")
    assert meta == {"n": "3"} and columns == ("x", "y") and data == [["1", "2.5"]]
    assert (tmp_path / "notes.txt").read_text() == "B: something happened\n"


def test_structured_form_is_valid_json_with_nulls(tmp_path):
    b = minimal_bundle()
    b.tables["dqs"].add("Empty", math.inf)
    (path,) = emit_report(b, tmp_path, "structured")
    doc = json.loads(open(path).read())
    assert doc["meta"]["config_hash"] == "abc123"
    assert doc["tables"]["dqs"]["rows"] == [["Greedy", 0.6], ["Empty", None]]
    with pytest.raises(ValueError):
        emit_report(b, tmp_path, "xml")


def test_emitted_dqs_equals_in_memory_bundle(tmp_path):
    data = load_pool(FIXTURES / "pool_golden.csv")
    scores = {"ml": load_scores(FIXTURES / "scores_golden.csv", data.pool)}
    cfg = RunConfig(proposers=(ProposerConfig("Greedy", "greedy_ml"), ProposerConfig("Random", "random")),
                    budgets=(0.2, 0.4, 1.0))
    bundle = cmd_evaluate(data, scores, cfg)
    emit_report(bundle, tmp_path)
    rows = read_dqs_table(tmp_path / "dqs.csv")
    assert [(r["proposer"], r["dqs"]) for r in rows] == bundle.tables["dqs"].rows
    meta, _, _ = read_table(tmp_path / "dqs.csv")
    assert meta["config_hash"] == cfg.config_hash()
