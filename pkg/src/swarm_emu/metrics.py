"""Per-request timestamp recording and run reporting.

Recorders are single-writer, per-agent buffers (numpy chunks appended batch
at a time) merged once at the end of a run, so recording adds no shared-state
contention. Latency definitions:

- Target: model-derived completion latency, target_time - fetch_time
- Proc:   realized processing latency, posted_time - fetch_time
- E2E:    end-to-end latency seen by the submitter, observed - submit,
          which includes submission queue queuing delay

A report summarizes a steady-state window (warmup excluded) and exports to
CSV/JSON with a fixed column set.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

CSV_COLUMNS = [
    "run_id", "workload", "t_max_iops", "l_min_us", "n_units", "mode",
    "iops", "target_mean_us", "proc_mean_us", "e2e_mean_us", "e2e_p99_us",
    "doorbell_writes", "fetch_transfers", "batches_issued",
]

DEFAULT_WARMUP_FRAC = 0.1


class LatencyRecorder:
    """Device-side per-worker buffer of (posted time, Target, Proc)."""

    def __init__(self):
        self._posted: list[np.ndarray] = []
        self._target: list[np.ndarray] = []
        self._proc: list[np.ndarray] = []
        self.errors = 0

    def record_batch(self, posted_ns: np.ndarray, target_lat_ns: np.ndarray,
                     proc_lat_ns: np.ndarray) -> None:
        self._posted.append(posted_ns)
        self._target.append(target_lat_ns)
        self._proc.append(proc_lat_ns)

    def record(self, record) -> None:
        """Append one completed request record."""
        self.record_batch(
            np.array([record.posted_ns], dtype=np.int64),
            np.array([record.target_ns - record.fetch_ns], dtype=np.int64),
            np.array([record.posted_ns - record.fetch_ns], dtype=np.int64))

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self._posted:
            z = np.empty(0, dtype=np.int64)
            return z, z, z
        return (np.concatenate(self._posted), np.concatenate(self._target),
                np.concatenate(self._proc))

    @property
    def count(self) -> int:
        return sum(len(c) for c in self._posted)


class E2ERecorder:
    """Workload-side per-consumer buffer of (observed time, E2E)."""

    def __init__(self):
        self._observed: list[np.ndarray] = []
        self._e2e: list[np.ndarray] = []
        self.submitted = 0
        self.completed = 0
        self.verify_failures = 0

    def record_batch(self, observed_ns: np.ndarray, e2e_ns: np.ndarray) -> None:
        self._observed.append(observed_ns)
        self._e2e.append(e2e_ns)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self._observed:
            z = np.empty(0, dtype=np.int64)
            return z, z
        return np.concatenate(self._observed), np.concatenate(self._e2e)


@dataclass
class RunReport:
    run_id: str
    workload: str
    t_max_iops: float
    l_min_us: float
    n_units: int
    mode: str
    iops: float
    target_mean_us: float
    proc_mean_us: float
    e2e_mean_us: float
    e2e_p99_us: float
    doorbell_writes: int
    fetch_transfers: int
    batches_issued: int
    # Supplementary (not part of the fixed export columns).
    target_p50_us: float = 0.0
    target_p99_us: float = 0.0
    proc_p50_us: float = 0.0
    proc_p99_us: float = 0.0
    e2e_p50_us: float = 0.0
    guard_acquisitions: int = 0
    completions: int = 0        # device-side posted
    completed: int = 0          # workload-side observed
    submitted: int = 0
    errors: int = 0
    verify_failures: int = 0
    # Worst-case slack of posted vs target over every request in the run
    # (negative would mean a completion beat its target).
    min_posted_slack_ns: int = 0
    window_s: float = 0.0
    qps: float = 0.0
    config: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS}

    def summary_line(self) -> str:
        return (f"{self.run_id} [{self.workload}] iops={self.iops:.0f} "
                f"target={self.target_mean_us:.1f}us proc={self.proc_mean_us:.1f}us "
                f"e2e={self.e2e_mean_us:.1f}us (p99 {self.e2e_p99_us:.1f}us) "
                f"completions={self.completions}")


def _stats_us(lat_ns: np.ndarray) -> tuple[float, float, float]:
    if len(lat_ns) == 0:
        return 0.0, 0.0, 0.0
    mean = float(lat_ns.mean()) / 1e3
    p50, p99 = np.percentile(lat_ns, [50, 99]) / 1e3
    return mean, float(p50), float(p99)


def summarize(device_recorders: list[LatencyRecorder],
              workload_recorders: list[E2ERecorder],
              window_ns: tuple[int, int],
              counters: dict,
              run_id: str = "run",
              workload: str = "",
              config: dict | None = None,
              warmup_frac: float = DEFAULT_WARMUP_FRAC,
              queries_completed: int = 0) -> RunReport:
    """Merge per-agent buffers into a steady-state report.

    The measurement window drops the first warmup_frac of the run; IOPS is
    completions posted inside the window divided by the window length.
    """
    t0, t1 = window_ns
    if t1 <= t0:
        raise ValueError("empty measurement window")
    w0 = t0 + int((t1 - t0) * warmup_frac)
    w1 = t1
    window_s = (w1 - w0) / 1e9

    posted = [np.empty(0, dtype=np.int64)]
    target = [np.empty(0, dtype=np.int64)]
    proc = [np.empty(0, dtype=np.int64)]
    errors = 0
    for rec in device_recorders:
        p, t, pr = rec.arrays()
        posted.append(p)
        target.append(t)
        proc.append(pr)
        errors += rec.errors
    posted = np.concatenate(posted)
    target = np.concatenate(target)
    proc = np.concatenate(proc)
    in_win = (posted >= w0) & (posted <= w1)
    iops = float(in_win.sum()) / window_s
    min_slack = int((proc - target).min()) if len(proc) else 0

    observed = [np.empty(0, dtype=np.int64)]
    e2e = [np.empty(0, dtype=np.int64)]
    submitted = 0
    completed = 0
    verify_failures = 0
    for rec in workload_recorders:
        o, e = rec.arrays()
        observed.append(o)
        e2e.append(e)
        submitted += rec.submitted
        completed += rec.completed
        verify_failures += rec.verify_failures
    observed = np.concatenate(observed)
    e2e = np.concatenate(e2e)
    e2e_win = e2e[(observed >= w0) & (observed <= w1)]

    t_mean, t_p50, t_p99 = _stats_us(target[in_win])
    p_mean, p_p50, p_p99 = _stats_us(proc[in_win])
    e_mean, e_p50, e_p99 = _stats_us(e2e_win)

    cfg = config or {}
    return RunReport(
        run_id=run_id,
        workload=workload,
        t_max_iops=cfg.get("t_max_iops", 0.0),
        l_min_us=cfg.get("l_min_us", 0.0),
        n_units=cfg.get("n_units", 0),
        mode=cfg.get("mode", ""),
        iops=iops,
        target_mean_us=t_mean,
        proc_mean_us=p_mean,
        e2e_mean_us=e_mean,
        e2e_p99_us=e_p99,
        doorbell_writes=counters.get("doorbell_writes", 0),
        fetch_transfers=counters.get("fetch_transfers", 0),
        batches_issued=counters.get("batches_issued", 0),
        target_p50_us=t_p50,
        target_p99_us=t_p99,
        proc_p50_us=p_p50,
        proc_p99_us=p_p99,
        e2e_p50_us=e_p50,
        guard_acquisitions=counters.get("guard_acquisitions", 0),
        completions=int(len(posted)),
        completed=completed,
        submitted=submitted,
        errors=errors,
        verify_failures=verify_failures,
        min_posted_slack_ns=min_slack,
        window_s=window_s,
        qps=queries_completed / window_s if queries_completed else 0.0,
        config=cfg,
    )


def export(report: RunReport, path: str, fmt: str = "csv") -> None:
    """Write the report's fixed column set as CSV (header + row) or JSON."""
    row = report.row()
    if fmt == "csv":
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
            w.writeheader()
            w.writerow(row)
    elif fmt == "json":
        with open(path, "w") as f:
            json.dump(row, f, indent=2, sort_keys=True)
            f.write("\n")
    else:
        raise ValueError(f"unknown export format: {fmt}")


def export_many(reports: list[RunReport], path: str) -> None:
    """Combined CSV for a set of runs (one row per run)."""
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in reports:
            w.writerow(r.row())
