import numpy as np
import pytest

from conftest import chain_model
from dgsched.metrics import (
    REPORT_COLUMNS,
    MetricsAccumulator,
    check_qos,
    config_hash,
    emit_report,
    merge_reports,
    read_report,
)
from dgsched.model import FlowSpec, NetworkModel, SimConfig
from dgsched.queues import Delivered


def synthetic(admitted_per_slot=1, delivered=100, delay_sum=4576, horizon=100, max_u=3, flows=1):
    acc = MetricsAccumulator(flows, horizon)
    for t in range(horizon):
        d = Delivered(np.zeros(flows, dtype=np.int64), np.zeros(flows, dtype=np.int64))
        if t == horizon - 1:
            d.count[:] = delivered
            d.delay_sum[:] = delay_sum
        adm = np.full(flows, admitted_per_slot if t % 1 == 0 else 0)
        acc.record(t, adm, np.ones(flows), np.zeros(flows), d, np.zeros(flows, dtype=np.int64),
                   0.0, 0.0, max_u)
    return acc.finish(0.0, 0, np.zeros(flows))


def test_delay_within_threshold_passes():
    model = chain_model(2, min_rate=0.1, delay=150.0)
    rep = synthetic()
    assert rep.flow_summaries()[0].mean_delay == pytest.approx(45.76)
    v = check_qos(rep, model, SimConfig(), warmup_fraction=0.0)
    assert v.delay_ok == [True] and v.passed


def test_rate_below_tolerance_fails():
    model = chain_model(2, min_rate=0.1, delay=150.0)
    acc = MetricsAccumulator(1, 100)
    for t in range(100):
        acc.record(t, np.array([1 if t < 9 else 0]), np.zeros(1), np.zeros(1),
                   Delivered(np.zeros(1, int), np.zeros(1, int)), np.zeros(1, int), 0.0, 0.0, 0)
    rep = acc.finish(0.0, 0, np.zeros(1))
    v = check_qos(rep, model, SimConfig(), warmup_fraction=0.0, tol=0.05)
    assert rep.flow_summaries()[0].admitted_rate == pytest.approx(0.09)
    assert v.rate_ok == [False] and not v.passed


def test_backlog_at_cap_passes():
    model = chain_model(2, delay=150.0)
    assert check_qos(synthetic(max_u=5), model, SimConfig(q_max=5), 0.0).backlog_ok
    assert not check_qos(synthetic(max_u=6), model, SimConfig(q_max=5), 0.0).backlog_ok


def test_exact_integer_delay_mean():
    rep = synthetic(delivered=3, delay_sum=10)
    assert rep.flow_summaries()[0].mean_delay == 10 / 3


def test_warmup_window():
    rep = synthetic(horizon=10)
    assert rep.window(0.1) == slice(1, 10)
    assert rep.flow_summaries(0.5)[0].admitted_rate == 1.0


def test_report_three_flows(tmp_path):
    flows = tuple(FlowSpec(0, 1, 0.1, 10.0) for _ in range(3))
    model = NetworkModel(("a", "b"), ((0, 1),), flows)
    path = emit_report(synthetic(flows=3), tmp_path / "r.csv", model)
    rows = read_report(path)
    assert len(rows) == 4
    assert [r["scope"] for r in rows] == ["flow"] * 3 + ["global"]
    assert list(rows[0]) == REPORT_COLUMNS
    assert path.read_text().splitlines()[0] == "# dgsched-report v1"


def test_empty_report(tmp_path):
    path = emit_report(None, tmp_path / "e.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 3  # version, header, zero global row
    row = read_report(path)[0]
    assert row["scope"] == "global" and float(row["admitted_rate"]) == 0


def test_report_io_error_has_path(tmp_path):
    target = tmp_path / "missing" / "r.csv"
    with pytest.raises(OSError, match="missing"):
        emit_report(None, target)


def test_bad_version_line(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("scope,flow\n")
    with pytest.raises(ValueError, match="header"):
        read_report(p)


def test_config_hash_stable():
    a = config_hash({"q_max": 5, "seed": 1})
    assert a == config_hash({"seed": 1, "q_max": 5})
    assert a != config_hash({"q_max": 6, "seed": 1}) and len(a) == 12


def test_merge_order_independent():
    r1, r2 = synthetic(delay_sum=100), synthetic(delay_sum=300, max_u=4)
    assert merge_reports([r1, r2]) == merge_reports([r2, r1])
    assert merge_reports([r1, r2])["max_backlog"] == 4
    assert merge_reports([]) == {}
