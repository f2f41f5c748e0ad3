"""Validation suite: quantitative checks of the emulator's core claims.

Each check builds a desk-scale configuration, runs it on the virtual clock,
and compares against a pinned tolerance. Checks 1-7 run full workloads with
data verification; their exactness facts (submitted == completed, CID
bijection, no completion ahead of its target, buffer integrity) roll up into
the zero-tolerance exactness check. The whole suite is deterministic for a
given seed.
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import CopyEngineConfig, DeviceConfig, TimingConfig
from .copy_engine import OffloadContext, group_configure
from .memory import RegionTable
from .metrics import RunReport
from .timing import TimingState, derive_params, schedule_batch_aggregated, schedule_request
from .workload import GraphSpec, WorkloadSpec, run_beam_search, run_workload


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: str
    expected: str
    runtime_s: float = 0.0
    reports: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: measured {self.measured}, "
                f"expected {self.expected} ({self.runtime_s:.1f}s)")


def _exact_facts(report: RunReport) -> dict:
    return {
        "run": report.run_id,
        "submitted": report.submitted,
        "completed": report.completed,
        "posted": report.completions,
        "verify_failures": report.verify_failures,
        "min_posted_slack_ns": report.min_posted_slack_ns,
    }


def check_saturation(seed: int = 42, duration_s: float = 10.0) -> CheckResult:
    """Sustained IOPS within +-8% of a 200 KIOPS target under warp load."""
    t0 = time.perf_counter()
    cfg = DeviceConfig(
        capacity_blocks=1 << 16,
        n_service_units=4,
        n_queue_pairs=64,
        timing=TimingConfig(t_max_iops=200_000, l_min_us=50.0, n_instances=8),
    )
    spec = WorkloadSpec(kind="warp_coalesced", n_submitters=8192,
                        duration_s=duration_s, verify=True, seed=seed)
    rep = run_workload(cfg, spec, "saturation")
    wall = time.perf_counter() - t0
    err = abs(rep.iops - 200_000) / 200_000
    passed = err <= 0.08 and wall <= 15.0
    return CheckResult("saturation-fidelity", passed,
                       f"{rep.iops:.0f} IOPS ({err * 100:.2f}% err, {wall:.1f}s)",
                       "200000 +-8%, runtime <= 15s", wall, [rep])


def check_low_load_latency(seed: int = 42) -> CheckResult:
    """Queue-depth-1: Target equals l_min exactly; E2E within overhead bounds."""
    t0 = time.perf_counter()
    cfg = DeviceConfig(
        capacity_blocks=1 << 14,
        n_service_units=4,
        n_queue_pairs=4,
        timing=TimingConfig(t_max_iops=200_000, l_min_us=50.0, n_instances=8),
    )
    spec = WorkloadSpec(kind="queue_parallel", qdepth=1, n_queue_pairs=1,
                        duration_s=0.3, verify=True, seed=seed)
    rep = run_workload(cfg, spec, "low-load")
    wall = time.perf_counter() - t0
    target_ok = abs(rep.target_mean_us - 50.0) <= 0.001  # clock granularity
    e2e_ok = 50.0 <= rep.e2e_mean_us <= 150.0
    passed = target_ok and e2e_ok and wall <= 5.0
    return CheckResult("low-load-latency", passed,
                       f"target {rep.target_mean_us:.3f}us, e2e {rep.e2e_mean_us:.1f}us",
                       "target 50us +-1ns, e2e in [50, 150]us", wall, [rep])


def check_target_tracking(seed: int = 42) -> CheckResult:
    """At roughly half load, realized processing tracks the model's targets."""
    t0 = time.perf_counter()
    cfg = DeviceConfig(
        capacity_blocks=1 << 14,
        n_service_units=4,
        n_queue_pairs=8,
        timing=TimingConfig(t_max_iops=200_000, l_min_us=50.0, n_instances=8),
    )
    spec = WorkloadSpec(kind="queue_parallel", qdepth=1, n_queue_pairs=6,
                        duration_s=0.5, verify=True, seed=seed)
    rep = run_workload(cfg, spec, "tracking")
    wall = time.perf_counter() - t0
    ratio = rep.proc_mean_us / rep.target_mean_us
    load = rep.iops / 200_000
    passed = ratio <= 1.2 and wall <= 15.0
    return CheckResult("target-tracking", passed,
                       f"proc/target {ratio:.3f} at {load:.2f} load",
                       "proc <= 1.2 x target near half load", wall, [rep])


def check_update_equivalence(seed: int = 42) -> CheckResult:
    """Aggregated batch updates replay bit-identically to per-request ones."""
    t0 = time.perf_counter()
    params = derive_params(2_470_000, 50_000, 32)
    s_agg = TimingState(params, "aggregated")
    s_seq = TimingState(params, "per_request")
    rng = np.random.default_rng(seed)
    now = 0
    total = 0
    mismatches = 0
    while total < 100_000:
        n = int(rng.integers(1, 129))
        slbas = rng.integers(0, 1 << 20, size=n)
        nbytes = rng.choice([512, 4096], size=n)
        now += int(rng.integers(0, 25_000))
        agg, _ = schedule_batch_aggregated(s_agg, params, slbas, nbytes, now)
        seq = np.fromiter(
            (schedule_request(s_seq, params, int(l), int(b), now)
             for l, b in zip(slbas, nbytes)), dtype=np.int64, count=n)
        mismatches += int((agg != seq).sum())
        total += n
    state_ok = np.array_equal(s_agg.avail, s_seq.avail)
    wall = time.perf_counter() - t0
    passed = mismatches == 0 and state_ok and wall <= 5.0
    return CheckResult("aggregated-equivalence", passed,
                       f"{total} requests, {mismatches} mismatches",
                       "bit-identical targets over 1e5 requests", wall)


def _frontend_cfg(centralized: bool, fetch_mode: str, units: int,
                  mode: str) -> DeviceConfig:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # l_min 0 < quantum, by design here
        return DeviceConfig(
            capacity_blocks=1 << 14,
            n_service_units=units,
            n_queue_pairs=32,
            frontend_mode="centralized" if centralized else "distributed",
            fetch_mode=fetch_mode,
            fetch_path="direct",
            backend_copy=False,
            timing=TimingConfig(t_max_iops=50_000_000, l_min_us=0.0,
                                n_instances=256, mode=mode),
        )


def check_frontend_ablation(seed: int = 42) -> list[CheckResult]:
    """Ingestion-only: distributed + coalesced vs centralized per-entry,
    plus the doorbell/fetch coalescing bound in warp mode."""
    t0 = time.perf_counter()
    total_ops = 150_000
    spec = WorkloadSpec(kind="warp_coalesced", n_submitters=16_384,
                        duration_s=None, total_ops=total_ops, verify=False,
                        seed=seed)
    spec2 = WorkloadSpec(kind="warp_coalesced", n_submitters=16_384,
                         duration_s=None, total_ops=total_ops, verify=False,
                         seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # l_min 0 < quantum, by design here
        base = run_workload(_frontend_cfg(True, "per_entry", 1, "per_request"),
                            spec, "frontend-base")
        dc = run_workload(_frontend_cfg(False, "coalesced", 4, "aggregated"),
                          spec2, "frontend-dc")
    wall = time.perf_counter() - t0
    ratio = dc.iops / base.iops
    r1 = CheckResult("frontend-ablation-speedup", ratio >= 2.0 and wall <= 20.0,
                     f"D+C {dc.iops / 1e6:.2f}M vs Base {base.iops / 1e6:.2f}M "
                     f"({ratio:.1f}x)",
                     "D+C >= 2x centralized per-entry", wall)
    bound = dc.submitted / 32 + 32
    r2 = CheckResult("fetch-coalescing-bound",
                     dc.fetch_transfers <= bound,
                     f"{dc.fetch_transfers} transfers for {dc.submitted} submissions",
                     f"<= submissions/32 + QPs = {bound:.0f}", wall)
    return [r1, r2]


def check_aggregation_scalability(seed: int = 42) -> CheckResult:
    """With a synthetic guard hold cost, aggregated updates out-scale
    per-request updates at 16 service units."""
    t0 = time.perf_counter()

    def run(mode):
        cfg = DeviceConfig(
            capacity_blocks=1 << 14,
            n_service_units=16,
            n_queue_pairs=64,
            timing=TimingConfig(t_max_iops=1_600_000, l_min_us=50.0,
                                n_instances=64, mode=mode, guard_hold_ns=2_000),
        )
        spec = WorkloadSpec(kind="warp_coalesced", n_submitters=16_384,
                            duration_s=None, total_ops=300_000, verify=True,
                            seed=seed)
        return run_workload(cfg, spec, f"timing-{mode}")

    agg = run("aggregated")
    per = run("per_request")
    wall = time.perf_counter() - t0
    ratio = agg.iops / per.iops
    passed = ratio >= 2.0 and wall <= 20.0
    return CheckResult("aggregation-scalability", passed,
                       f"aggregated {agg.iops / 1e6:.2f}M vs per-request "
                       f"{per.iops / 1e6:.2f}M ({ratio:.1f}x)",
                       ">= 2x at 16 units with guard hold cost", wall,
                       [agg, per])


def check_skew(seed: int = 42) -> list[CheckResult]:
    """Load on one unit of sixteen: a global model reaches the full target;
    local models cap at their slice."""
    t0 = time.perf_counter()
    t_max = 160_000

    def run(scope):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # local slice quantum > l_min
            cfg = DeviceConfig(
                capacity_blocks=1 << 14,
                n_service_units=16,
                n_queue_pairs=32,
                timing=TimingConfig(t_max_iops=t_max, l_min_us=50.0,
                                    n_instances=16, scope=scope),
            )
            spec = WorkloadSpec(kind="warp_coalesced", n_submitters=4096,
                                skew_to_units=1, duration_s=0.5, verify=True,
                                seed=seed)
            return run_workload(cfg, spec, f"skew-{scope}")

    g = run("global")
    l = run("local")
    wall = time.perf_counter() - t0
    g_ok = abs(g.iops - t_max) / t_max <= 0.10
    r1 = CheckResult("skew-global-scope", g_ok and wall <= 20.0,
                     f"{g.iops:.0f} IOPS", f"min(offered, {t_max}) +-10%",
                     wall, [g, l])
    cap = 1.2 * t_max / 16
    r2 = CheckResult("skew-local-scope", l.iops <= cap,
                     f"{l.iops:.0f} IOPS", f"<= 1.2 x t_max/16 = {cap:.0f}",
                     wall)
    return [r1, r2]


def check_exactness(reports: list[RunReport]) -> CheckResult:
    """Zero tolerance: conservation, bijection, target adherence, integrity."""
    violations = []
    for rep in reports:
        f = _exact_facts(rep)
        if not (f["submitted"] == f["completed"] == f["posted"]):
            violations.append(f"{f['run']}: counts {f['submitted']}/"
                              f"{f['completed']}/{f['posted']}")
        if f["verify_failures"]:
            violations.append(f"{f['run']}: {f['verify_failures']} integrity")
        if f["min_posted_slack_ns"] < -1:
            violations.append(f"{f['run']}: posted {-f['min_posted_slack_ns']}ns "
                              "before target")
    return CheckResult("completion-exactness-integrity", not violations,
                       f"{len(reports)} runs, {len(violations)} violations: "
                       + (", ".join(violations) if violations else "none"),
                       "0 violations", 0.0)


def check_copy_engine(seed: int = 42) -> list[CheckResult]:
    """Offload efficiency: in-flight depth and batching amortization."""
    t0 = time.perf_counter()

    def regions_pair():
        regions = RegionTable()
        src = bytearray(np.random.default_rng(seed).bytes(1 << 20))
        regions.register(0, src)
        regions.register(1, bytearray(1 << 20))
        return regions

    def caller_rate(num_desc, per_copy_ns, issue_ns, batch_size, n=30_000):
        regions = regions_pair()
        g = group_configure(1, regions, wq_depth=32, pipeline_depth=8,
                            per_copy_cost_ns=per_copy_ns,
                            issue_cost_ns=issue_ns)[0]
        ctx = OffloadContext(g, g.wqs[0], batch_size=batch_size,
                             num_desc=num_desc)
        offs = np.random.default_rng(seed + 1).integers(
            0, (1 << 20) - 512, size=n)
        t = 0
        for i in range(n):
            off = int(offs[i])
            _, t = ctx.batch_issue_async((1, off), (0, off), 512, t)
            if ctx.batch_should_wait(t, 10_000):
                _, t = ctx.batch_wait_oldest(t)
        t = ctx.batch_issue_pending(t)
        while ctx.in_flight_count:
            _, t = ctx.batch_wait_oldest(t)
        return n / (t / 1e9), ctx

    sync_rate, _ = caller_rate(1, 2_000, 1_000, 1)
    async_rate, _ = caller_rate(32, 2_000, 1_000, 1)
    depth_ratio = async_rate / sync_rate

    _, ctx1 = caller_rate(32, 0, 1_000, 1, n=20_000)
    _, ctx16 = caller_rate(32, 0, 1_000, 16, n=20_000)
    o1 = ctx1.issue_cost_total_ns / ctx1.copies_issued
    o16 = ctx16.issue_cost_total_ns / ctx16.copies_issued
    amort = o1 / o16
    wall = time.perf_counter() - t0
    r1 = CheckResult("async-offload-depth", depth_ratio >= 2.0 and wall <= 10.0,
                     f"{async_rate / 1e3:.0f}K/s vs {sync_rate / 1e3:.0f}K/s "
                     f"({depth_ratio:.2f}x)",
                     "depth-32 >= 2x depth-1 with 2us copies", wall)
    r2 = CheckResult("batch-issue-amortization", amort >= 8.0,
                     f"{o1:.0f}ns -> {o16:.0f}ns per copy ({amort:.1f}x)",
                     "batch-16 overhead <= 1/8 of batch-1", wall)
    return [r1, r2]


def check_beam_trend(seed: int = 42) -> list[CheckResult]:
    """Dependent-read search: throughput scales with device IOPS only when
    the batch generates enough I/O parallelism."""
    t0 = time.perf_counter()

    def qps(t_max, batch):
        # Keep the scheduling quantum at or under l_min across the sweep.
        n_inst = max(2, int(t_max * 40e-6))
        cfg = DeviceConfig(
            capacity_blocks=1 << 16,
            n_service_units=4,
            n_queue_pairs=16,
            timing=TimingConfig(t_max_iops=t_max, l_min_us=50.0,
                                n_instances=n_inst),
        )
        spec = WorkloadSpec(kind="beam_search", batch=batch, width=4,
                            duration_s=0.6, verify=True, seed=seed,
                            n_queue_pairs=16)
        graph = GraphSpec(n_nodes=1 << 16, degree=32, seed=seed + 1)
        return run_beam_search(cfg, spec, graph, f"beam-{t_max}-{batch}")

    big_lo = qps(50_000, 256)
    big_hi = qps(400_000, 256)
    small_lo = qps(50_000, 4)
    small_hi = qps(400_000, 4)
    wall = time.perf_counter() - t0
    big_ratio = big_hi.qps / big_lo.qps
    small_ratio = small_hi.qps / small_lo.qps
    r1 = CheckResult("beam-batch-256-scaling",
                     big_ratio >= 2.0 and wall <= 60.0,
                     f"QPS {big_lo.qps:.0f} -> {big_hi.qps:.0f} ({big_ratio:.1f}x)",
                     ">= 2x from 50K to 400K IOPS", wall,
                     [big_lo, big_hi, small_lo, small_hi])
    r2 = CheckResult("beam-batch-4-flat", small_ratio <= 1.3,
                     f"QPS {small_lo.qps:.0f} -> {small_hi.qps:.0f} "
                     f"({small_ratio:.2f}x)",
                     "<= 1.3x (insufficient I/O parallelism)", wall)
    return [r1, r2]


def run_validation(seed: int = 42) -> list[CheckResult]:
    """Run the full suite in order; returns one result per check."""
    results: list[CheckResult] = []
    verified_runs: list[RunReport] = []

    for check in (check_saturation, check_low_load_latency,
                  check_target_tracking, check_update_equivalence):
        r = check(seed)
        results.append(r)
        verified_runs.extend(r.reports)
    results.extend(check_frontend_ablation(seed))
    r = check_aggregation_scalability(seed)
    results.append(r)
    verified_runs.extend(r.reports)
    skew = check_skew(seed)
    results.extend(skew)
    verified_runs.extend(skew[0].reports)
    results.append(check_exactness(verified_runs))
    results.extend(check_copy_engine(seed))
    results.extend(check_beam_trend(seed))
    return results
