import json
import math

from canm.metrics import ImageMetrics, MetricReport, OracleEntry, OracleReport, VerifyReport
from canm.metrics.reports import Aggregate, loss_curve_csv, metrics_table, render_table, verify_table


def test_aggregate_edge_cases():
    empty = Aggregate.of([])
    assert math.isnan(empty.mean) and math.isnan(empty.std)
    same = Aggregate.of([math.inf, math.inf])
    assert same.mean == math.inf and same.std == 0.0
    spread = Aggregate.of([1.0, 3.0])
    assert (spread.mean, spread.std, spread.minimum, spread.maximum) == (2.0, 1.0, 1.0, 3.0)


def test_infinite_psnr_serialises_as_json_constant():
    report = MetricReport.from_images([ImageMetrics(name="a", psnr=math.inf, ssim=1.0, l1=0.0)])
    payload = report.to_json()
    assert "Infinity" in payload
    assert json.loads(payload)["psnr"]["maximum"] == math.inf


def test_oracle_report_pass_state():
    ok = OracleEntry(suite="fold", case="c", seed=0, max_abs_diff=1e-15, tolerance=1e-12, passed=True)
    bad = ok.model_copy(update={"suite": "wab", "max_abs_diff": 1e-3, "passed": False})
    assert OracleReport(entries=[ok]).passed
    report = OracleReport(entries=[ok, bad])
    assert not report.passed
    assert report.max_diff("wab") == 1e-3


def test_tables_are_aligned():
    table = render_table(["a", "long header"], [["xyz", 1.23456789], ["q", 2]])
    lines = table.splitlines()
    assert lines[0] == "a    long header"
    assert lines[2] == "xyz  1.23457"
    assert lines[3] == "q    2"


def test_verify_and_metrics_tables_mark_failures():
    entry = OracleEntry(suite="nbfm", case="n3x3", seed=1, max_abs_diff=1.0, tolerance=1e-10, passed=False)
    text = verify_table(VerifyReport(suites=["oracle"], passed=False, oracles=[entry]))
    assert "oracle/nbfm" in text and "n3x3@1" in text and "FAIL" in text
    metrics = MetricReport.from_images([ImageMetrics(name="out0", psnr=30.0, ssim=0.9, l1=0.01)])
    assert metrics_table(metrics).splitlines()[2].startswith("out0")


def test_loss_curve_csv():
    assert loss_curve_csv([0.5, 0.25]) == "step,loss\n0,0.5\n1,0.25\n"
    assert loss_curve_csv([]) == "step,loss\n"
