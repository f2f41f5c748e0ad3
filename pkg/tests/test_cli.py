"""CLI driver: flags, outputs, exit codes."""

import csv
import json

import pytest

from swarm_emu import cli
from swarm_emu.metrics import CSV_COLUMNS


def run_cli(*argv):
    return cli.main(list(argv))


def test_bench_fio_writes_reports(tmp_path):
    out = tmp_path / "res"
    rc = run_cli("bench", "fio", "--qdepth", "1", "--qps", "1", "--units", "1",
                 "--capacity-blocks", "4096", "--duration", "0.02",
                 "--out", str(out), "--run-id", "lowload")
    assert rc == 0
    got = {p.name for p in out.iterdir()}
    assert got == {"lowload.csv", "lowload.json", "lowload.config.json"}
    with open(out / "lowload.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == CSV_COLUMNS
    data = json.loads((out / "lowload.json").read_text())
    # Queue-depth-1 run reports the minimum latency.
    assert abs(data["target_mean_us"] - 50.0) < 0.01
    echo = json.loads((out / "lowload.config.json").read_text())
    assert echo["n_units"] == 1
    assert echo["workload"]["qdepth"] == 1


def test_bench_warp_runs(tmp_path):
    rc = run_cli("bench", "warp", "--threads", "256", "--qps", "4",
                 "--units", "2", "--capacity-blocks", "4096",
                 "--duration", "0.02", "--out", str(tmp_path))
    assert rc == 0
    data = json.loads((tmp_path / "bench_warp.json").read_text())
    assert data["doorbell_writes"] <= data["iops"] * 0.02 / 32 * 1.5 + 10


def test_bench_seed_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        rc = run_cli("bench", "warp", "--threads", "128", "--qps", "2",
                     "--units", "2", "--capacity-blocks", "4096",
                     "--duration", "0.02", "--seed", "42", "--out", str(out))
        assert rc == 0
    assert (a / "bench_warp.json").read_bytes() == \
        (b / "bench_warp.json").read_bytes()


def test_bench_beam_sweep_rows(tmp_path):
    rc = run_cli("bench", "beam", "--batch", "8", "--width", "2",
                 "--sweep-tmax", "50000,100000", "--duration", "0.03",
                 "--capacity-blocks", "8192", "--graph-nodes", "8192",
                 "--qps", "4", "--units", "2", "--n-instances", "4",
                 "--out", str(tmp_path))
    assert rc == 0
    with open(tmp_path / "beam_sweep.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 2
    assert {r["t_max_iops"] for r in rows} == {"50000.0", "100000.0"}


def test_config_file_flag_equivalence(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("device:\n  n_queue_pairs: 2\n  capacity_blocks: 4096\n"
                   "  n_service_units: 2\n")
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    rc = run_cli("bench", "fio", "--config", str(cfg), "--qdepth", "2",
                 "--duration", "0.02", "--out", str(out1))
    assert rc == 0
    rc = run_cli("bench", "fio", "--qps", "2", "--capacity-blocks", "4096",
                 "--units", "2", "--qdepth", "2", "--duration", "0.02",
                 "--out", str(out2))
    assert rc == 0
    a = json.loads((out1 / "bench_fio.json").read_text())
    b = json.loads((out2 / "bench_fio.json").read_text())
    assert a == b


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("device: {made_up_key: 1}\n")
    assert run_cli("bench", "fio", "--config", str(bad)) == 1
    assert run_cli("bench", "fio", "--config", str(tmp_path / "missing.yaml")) == 1
    assert run_cli("bench", "fio", "--units", "0") == 1


def test_ablation_frontend_five_rows(tmp_path):
    rc = run_cli("ablation", "frontend", "--total-ops", "4000",
                 "--threads", "2048", "--out", str(tmp_path))
    assert rc == 0
    with open(tmp_path / "ablation_frontend.csv") as f:
        rows = list(csv.DictReader(f))
    names = [r["run_id"] for r in rows]
    assert names == ["frontend_Base", "frontend_D", "frontend_D+A",
                     "frontend_D+C", "frontend_D+A+C"]
    iops = {r["run_id"]: float(r["iops"]) for r in rows}
    assert iops["frontend_D+C"] >= 2 * iops["frontend_Base"]
    assert iops["frontend_D+A+C"] >= iops["frontend_D"]


def test_ablation_timing_six_rows(tmp_path):
    rc = run_cli("ablation", "timing", "--total-ops", "6000",
                 "--out", str(tmp_path))
    assert rc == 0
    with open(tmp_path / "ablation_timing.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 6
    modes = {r["mode"] for r in rows}
    assert modes == {"per_request/global", "aggregated/global"}


def test_ablation_skew_global_beats_local(tmp_path):
    rc = run_cli("ablation", "skew", "--duration", "0.1",
                 "--out", str(tmp_path))
    assert rc == 0
    with open(tmp_path / "ablation_skew.csv") as f:
        rows = {r["run_id"]: float(r["iops"]) for r in csv.DictReader(f)}
    assert rows["skew_global"] >= rows["skew_local"]


def test_verification_failure_exit_code(tmp_path, monkeypatch):
    import dataclasses

    real = cli.run_workload

    def tainted(cfg, spec, run_id="run"):
        rep = real(cfg, spec, run_id)
        return dataclasses.replace(rep, verify_failures=3)

    monkeypatch.setattr(cli, "run_workload", tainted)
    rc = run_cli("bench", "fio", "--units", "1", "--qps", "1", "--qdepth", "1",
                 "--capacity-blocks", "4096", "--duration", "0.01",
                 "--out", str(tmp_path))
    assert rc == 2


def test_validate_failure_exit_code(tmp_path, monkeypatch):
    from swarm_emu.validate import CheckResult

    def fake_validation(seed=42):
        return [CheckResult("stub", False, "1", "2")]

    monkeypatch.setattr("swarm_emu.validate.run_validation", fake_validation)
    assert run_cli("validate", "--out", str(tmp_path)) == 3


def test_injected_timing_bug_fails_low_load_check(monkeypatch):
    """Dropping the enforced minimum-latency delay must trip the low-load
    latency check."""
    import dataclasses

    import swarm_emu.device as device_mod
    from swarm_emu.validate import check_low_load_latency

    real = device_mod.derive_params

    def buggy(*a, **kw):
        params = real(*a, **kw)
        return dataclasses.replace(params, min_delay_ns=0)

    monkeypatch.setattr(device_mod, "derive_params", buggy)
    result = check_low_load_latency(seed=1)
    assert not result.passed
