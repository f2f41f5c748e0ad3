"""Recorders, summarization arithmetic, and export formats."""

import csv
import json

import numpy as np
import pytest

from swarm_emu.device import RequestRecord
from swarm_emu.metrics import (
    CSV_COLUMNS,
    E2ERecorder,
    LatencyRecorder,
    export,
    export_many,
    summarize,
)


def dev_rec(posted, target, proc):
    r = LatencyRecorder()
    r.record_batch(np.asarray(posted, dtype=np.int64),
                   np.asarray(target, dtype=np.int64),
                   np.asarray(proc, dtype=np.int64))
    return r


def wl_rec(observed, e2e, submitted=None):
    r = E2ERecorder()
    r.record_batch(np.asarray(observed, dtype=np.int64),
                   np.asarray(e2e, dtype=np.int64))
    r.submitted = submitted if submitted is not None else len(observed)
    r.completed = len(observed)
    return r


def test_record_single_request_definitions():
    r = LatencyRecorder()
    rec = RequestRecord(qid=0, cid=1, slba=0, nlb=0, prp=0,
                        fetch_ns=1000, target_ns=51_000, posted_ns=52_000)
    r.record(rec)
    posted, target, proc = r.arrays()
    assert posted.tolist() == [52_000]
    assert target.tolist() == [50_000]   # target - fetch
    assert proc.tolist() == [51_000]     # posted - fetch


def test_iops_arithmetic():
    # 1,000,000 completions uniformly over a 2 s window -> 500,000 IOPS.
    n = 1_000_000
    posted = np.linspace(1, 2_000_000_000, n).astype(np.int64)
    rec = dev_rec(posted, np.full(n, 50_000), np.full(n, 50_000))
    rep = summarize([rec], [], (0, 2_000_000_000), {}, warmup_frac=0.0)
    assert abs(rep.iops - 500_000) / 500_000 < 1e-3
    assert rep.completions == n


def test_equal_latency_stream_percentiles_collapse():
    n = 1000
    rec = dev_rec(np.arange(1, n + 1) * 1000, np.full(n, 70_000),
                  np.full(n, 70_000))
    wrec = wl_rec(np.arange(1, n + 1) * 1000, np.full(n, 90_000))
    rep = summarize([rec], [wrec], (0, n * 1000), {}, warmup_frac=0.0)
    assert rep.target_mean_us == rep.target_p50_us == rep.target_p99_us == 70.0
    assert rep.e2e_mean_us == rep.e2e_p50_us == rep.e2e_p99_us == 90.0


def test_buffer_merge_is_additive():
    a = dev_rec([100, 200], [1, 2], [1, 2])
    b = dev_rec([300], [3], [3])
    rep = summarize([a, b], [], (0, 1000), {}, warmup_frac=0.0)
    assert rep.completions == 3


def test_warmup_window_excludes_early_completions():
    posted = np.array([50, 950], dtype=np.int64)
    rec = dev_rec(posted, [10, 20], [10, 30])
    rep = summarize([rec], [], (0, 1000), {}, warmup_frac=0.1)
    # First completion (t=50) falls inside the dropped warmup tenth.
    assert rep.iops == pytest.approx(1 / (900 / 1e9))
    assert rep.target_mean_us == pytest.approx(0.02)


def test_summarize_rejects_empty_window():
    with pytest.raises(ValueError):
        summarize([], [], (5, 5), {})


def test_counters_flow_into_report():
    rep = summarize([dev_rec([10], [1], [1])], [], (0, 100),
                    {"doorbell_writes": 7, "fetch_transfers": 3,
                     "batches_issued": 2, "guard_acquisitions": 9},
                    warmup_frac=0.0,
                    config={"t_max_iops": 1000.0, "l_min_us": 50.0,
                            "n_units": 4, "mode": "aggregated/global"})
    assert rep.doorbell_writes == 7
    assert rep.fetch_transfers == 3
    assert rep.batches_issued == 2
    assert rep.guard_acquisitions == 9
    assert rep.t_max_iops == 1000.0
    assert rep.n_units == 4


def make_report():
    rec = dev_rec([100, 200, 300], [50_000, 50_000, 50_000],
                  [50_500, 50_500, 50_500])
    wrec = wl_rec([150, 250, 350], [60_000, 61_000, 62_000])
    return summarize([rec], [wrec], (0, 1000),
                     {"doorbell_writes": 3, "fetch_transfers": 1,
                      "batches_issued": 1},
                     run_id="r1", workload="warp_coalesced",
                     config={"t_max_iops": 2e5, "l_min_us": 50.0,
                             "n_units": 4, "mode": "aggregated/global"},
                     warmup_frac=0.0)


def test_csv_export_exact_columns(tmp_path):
    rep = make_report()
    path = tmp_path / "out.csv"
    export(rep, str(path), "csv")
    with open(path) as f:
        rows = list(csv.reader(f))
    assert rows[0] == CSV_COLUMNS
    assert len(rows) == 2
    row = dict(zip(rows[0], rows[1]))
    assert row["run_id"] == "r1"
    assert row["workload"] == "warp_coalesced"
    assert float(row["iops"]) == rep.iops
    assert int(row["doorbell_writes"]) == 3


def test_json_export_same_fields(tmp_path):
    rep = make_report()
    path = tmp_path / "out.json"
    export(rep, str(path), "json")
    data = json.loads(path.read_text())
    assert set(data) == set(CSV_COLUMNS)
    assert data["e2e_mean_us"] == rep.e2e_mean_us


def test_export_rejects_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        export(make_report(), str(tmp_path / "x"), "xml")


def test_repeated_export_is_deterministic(tmp_path):
    rep = make_report()
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    export(rep, str(p1), "json")
    export(rep, str(p2), "json")
    assert p1.read_bytes() == p2.read_bytes()


def test_export_many_one_row_per_run(tmp_path):
    path = tmp_path / "combined.csv"
    export_many([make_report(), make_report()], str(path))
    with open(path) as f:
        rows = list(csv.reader(f))
    assert len(rows) == 3


def test_latency_ordering_invariant():
    rep = make_report()
    assert rep.e2e_mean_us >= rep.proc_mean_us >= rep.target_mean_us - 1e-3
