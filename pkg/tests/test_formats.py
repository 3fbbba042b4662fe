import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvi_engine.formats import (SCHEMA_VERSION, DataError, ResultsDocument, read_score_csv, read_signal_csv,
                                svg_line_chart, write_signal_csv)


def write(tmp_path, text, name="s.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_signal_round_trip(tmp_path):
    p = tmp_path / "sig.csv"
    x = np.sin(np.arange(250) / 10.0)
    write_signal_csv(p, {"ppg": x, "ecg": -x}, 125.0, t0=2.0)
    ts = read_signal_csv(p)
    assert ts.fs == pytest.approx(125.0, rel=1e-9) and ts.t0 == 2.0
    assert np.array_equal(ts.samples, x)
    assert np.array_equal(read_signal_csv(p, channel="ecg").samples, -x)
    assert np.allclose(read_signal_csv(p, scale=1000).samples, 1000 * x)


@pytest.mark.parametrize("text, where", [
    ("", "empty file"),
    ("time,ppg\n0,1\n", ":1:"),
    ("t_s,ppg\n0,1\n0.01,2,3\n", ":3:"),
    ("t_s,ppg\n0,1\n0.01,abc\n", ":3:"),
    ("t_s,ppg\n0,1\n0.01,nan\n", ":3:"),
    ("t_s,ppg\n0,1\n0.01,2\n0.01,3\n", ":4:"),
    ("t_s,ppg\n0,1\n", "at least two"),
])
def test_signal_errors_name_the_line(tmp_path, text, where):
    with pytest.raises(DataError, match=where):
        read_signal_csv(write(tmp_path, text))


def test_signal_unknown_channel(tmp_path):
    with pytest.raises(DataError, match="'ecg'"):
        read_signal_csv(write(tmp_path, "t_s,ppg\n0,1\n1,2\n"), channel="ecg")


def test_rate_tolerance(tmp_path):
    ok = "t_s,ppg\n" + "".join(f"{0.01 * i + (0.00005 if i == 3 else 0)},{i}\n" for i in range(10))
    assert read_signal_csv(write(tmp_path, ok, "ok.csv")).fs == pytest.approx(100, rel=1e-9)
    # one gap 2 % long, preceded by a blank line that must not shift the reported line
    bad = "t_s,ppg\n0,0\n0.01,1\n\n0.0202,2\n0.0302,3\n0.0402,4\n"
    with pytest.raises(DataError, match=r":5: sample interval"):
        read_signal_csv(write(tmp_path, bad, "bad.csv"))
    assert read_signal_csv(write(tmp_path, bad, "bad2.csv"), fs=100).fs == 100


def test_score_csv(tmp_path):
    p = write(tmp_path, "spo2_pct,rmssd_ms,pi,phase_left_deg,phase_right_deg\n"
                        "100,40,0.1,0,0\n"
                        "97,,0.2,,\n"
                        "9x,40,0.1,0,0\n")
    rows = read_score_csv(p)
    assert rows[0].values["spo2_pct"] == 100.0 and rows[0].error is None
    assert rows[1].values["rmssd_ms"] is None and rows[1].values["phase_left_deg"] is None
    assert rows[2].line == 4 and "spo2_pct" in rows[2].error and "9x" in rows[2].error


def test_score_csv_needs_modality_columns(tmp_path):
    with pytest.raises(DataError):
        read_score_csv(write(tmp_path, "a,b\n1,2\n"))
    with pytest.raises(DataError):
        read_score_csv(write(tmp_path, "", "e.csv"))


def test_results_document_round_trip():
    doc = ResultsDocument("eval", {"n": np.int64(3)}, {"auc": np.float64(0.9), "bad": math.nan,
                                                        "arr": np.arange(3)}, seed=7,
                          version="1.0", timestamp="2026-01-01T00:00:00+00:00")
    d = json.loads(doc.to_json())
    assert d["schema_version"] == SCHEMA_VERSION
    assert d["provenance"] == {"version": "1.0", "timestamp": "2026-01-01T00:00:00+00:00", "seed": 7}
    assert d["metrics"] == {"auc": 0.9, "bad": None, "arr": [0, 1, 2]}
    back = ResultsDocument.from_json(doc.to_json())
    assert back.to_json() == doc.to_json()


@pytest.mark.parametrize("v", [None, 0, SCHEMA_VERSION + 1, "1"])
def test_results_document_schema_check(v):
    d = ResultsDocument("x", {}, {}, 0, "1", "t").to_dict()
    d["schema_version"] = v
    with pytest.raises(DataError):
        ResultsDocument.from_dict(d)


@given(st.lists(st.one_of(st.floats(-1e300, 1e300), st.just(math.nan), st.just(math.inf)), min_size=2, max_size=30))
def test_svg_is_well_formed(ys):
    svg = svg_line_chart({"a<b": ys}, np.arange(len(ys)), title="t & u", xlabel="x", ylabel="y")
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
