"""Experiment driver: benchmarks, ablation matrices, and the validation suite.

Exit codes: 0 success, 1 configuration error, 2 data-verification failure,
3 validation tolerance violation.
"""

import argparse
import dataclasses
import json
import os
import sys
import warnings

from .config import ConfigError, DeviceConfig, config_echo, load_device_config
from .metrics import RunReport, export, export_many
from .workload import GraphSpec, WorkloadSpec, run_beam_search, run_workload

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VERIFY = 2
EXIT_VALIDATE = 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file (or $SWARM_EMU_CONFIG)")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--run-id", default=None)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--tmax-iops", type=float, default=None)
    p.add_argument("--lmin-us", type=float, default=None)
    p.add_argument("--n-instances", type=int, default=None)
    p.add_argument("--units", type=int, default=None, help="service units")
    p.add_argument("--qps", type=int, default=None, help="queue pairs")
    p.add_argument("--capacity-blocks", type=int, default=None)
    p.add_argument("--timing-mode", choices=["per_request", "aggregated"],
                   default=None)
    p.add_argument("--timing-scope", choices=["global", "local"], default=None)
    p.add_argument("--guard-hold-ns", type=int, default=None)
    p.add_argument("--duration", type=float, default=None, help="seconds")
    p.add_argument("--total-ops", type=int, default=None)
    p.add_argument("--io-bytes", type=int, default=None)
    p.add_argument("--qdepth", type=int, default=None)
    p.add_argument("--threads", type=int, default=None, help="logical submitters")
    p.add_argument("--no-verify", action="store_true")


def _device_overrides(args) -> dict:
    dev = {}
    timing = {}
    if args.tmax_iops is not None:
        timing["t_max_iops"] = args.tmax_iops
    if args.lmin_us is not None:
        timing["l_min_us"] = args.lmin_us
    if args.n_instances is not None:
        timing["n_instances"] = args.n_instances
    if args.timing_mode is not None:
        timing["mode"] = args.timing_mode
    if args.timing_scope is not None:
        timing["scope"] = args.timing_scope
    if args.guard_hold_ns is not None:
        timing["guard_hold_ns"] = args.guard_hold_ns
    if timing:
        dev["timing"] = timing
    if args.units is not None:
        dev["n_service_units"] = args.units
    if args.qps is not None:
        dev["n_queue_pairs"] = args.qps
    if args.capacity_blocks is not None:
        dev["capacity_blocks"] = args.capacity_blocks
    return dev


def _workload_spec(args, kind: str) -> WorkloadSpec:
    spec = WorkloadSpec(kind=kind, seed=args.seed)
    if args.duration is not None:
        spec.duration_s = args.duration
    if args.total_ops is not None:
        spec.total_ops = args.total_ops
        if args.duration is None:
            spec.duration_s = None
    if args.io_bytes is not None:
        spec.io_bytes = args.io_bytes
    if args.qdepth is not None:
        spec.qdepth = args.qdepth
    if args.threads is not None:
        spec.n_submitters = args.threads
    spec.verify = not args.no_verify
    return spec


def _emit(report: RunReport, out_dir: str, cfg: DeviceConfig,
          spec_echo: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, report.run_id)
    export(report, base + ".csv", "csv")
    export(report, base + ".json", "json")
    with open(base + ".config.json", "w") as f:
        json.dump(config_echo(cfg, spec_echo), f, indent=2, sort_keys=True,
                  default=str)
    print(report.summary_line())


def cmd_bench(args) -> int:
    cfg = load_device_config(args.config, _device_overrides(args))
    kind = {"fio": "queue_parallel", "warp": "warp_coalesced",
            "beam": "beam_search"}[args.subkind]
    spec = _workload_spec(args, kind)
    failures = 0
    if args.subkind == "beam":
        sweep = ([float(x) for x in args.sweep_tmax.split(",")]
                 if args.sweep_tmax else [cfg.timing.t_max_iops])
        spec.batch = args.batch
        spec.width = args.width
        if args.iter_cost_ns is not None:
            spec.beam_iter_cost_ns = args.iter_cost_ns
        graph = GraphSpec(n_nodes=min(args.graph_nodes, cfg.capacity_blocks),
                          degree=args.degree, seed=args.seed + 1)
        reports = []
        for t_max in sweep:
            run_cfg = dataclasses.replace(
                cfg, timing=dataclasses.replace(cfg.timing, t_max_iops=t_max))
            rid = args.run_id or f"beam_t{int(t_max)}"
            rep = run_beam_search(run_cfg, spec, graph, rid)
            print(f"{rep.summary_line()} qps={rep.qps:.0f}")
            _emit(rep, args.out, run_cfg, dataclasses.asdict(spec))
            failures += rep.verify_failures
            reports.append(rep)
        if len(reports) > 1:
            export_many(reports, os.path.join(args.out, "beam_sweep.csv"))
    else:
        rid = args.run_id or f"bench_{args.subkind}"
        rep = run_workload(cfg, spec, rid)
        _emit(rep, args.out, cfg, dataclasses.asdict(spec))
        failures += rep.verify_failures
    return EXIT_VERIFY if failures else EXIT_OK


def _ablation_frontend(args) -> list[RunReport]:
    """Feature matrix over the ingest path, backend copies disabled."""
    units = args.units or 4
    ops = args.total_ops or 100_000
    rows = [
        ("Base", dict(frontend_mode="centralized", n_service_units=1,
                      fetch_mode="per_entry", fetch_path="direct"),
         "per_request"),
        ("D", dict(frontend_mode="distributed", n_service_units=units,
                   fetch_mode="per_entry", fetch_path="direct"), "per_request"),
        ("D+A", dict(frontend_mode="distributed", n_service_units=units,
                     fetch_mode="per_entry", fetch_path="engine"), "per_request"),
        ("D+C", dict(frontend_mode="distributed", n_service_units=units,
                     fetch_mode="coalesced", fetch_path="direct"), "aggregated"),
        ("D+A+C", dict(frontend_mode="distributed", n_service_units=units,
                       fetch_mode="coalesced", fetch_path="engine"), "aggregated"),
    ]
    reports = []
    for name, dev_kw, mode in rows:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cfg = DeviceConfig(
                capacity_blocks=1 << 14,
                n_queue_pairs=args.qps or 32,
                backend_copy=False,
                timing=dict_to_timing(args, 50_000_000, 0.0, 256, mode),
                **dev_kw)
        spec = WorkloadSpec(kind="warp_coalesced",
                            n_submitters=args.threads or 16_384,
                            duration_s=None, total_ops=ops, verify=False,
                            seed=args.seed)
        rep = run_workload(cfg, spec, f"frontend_{name}")
        print(rep.summary_line())
        reports.append(rep)
    return reports


def dict_to_timing(args, t_max, l_min_us, n_inst, mode, scope="global"):
    from .config import TimingConfig
    return TimingConfig(
        t_max_iops=args.tmax_iops or t_max,
        l_min_us=l_min_us if args.lmin_us is None else args.lmin_us,
        n_instances=args.n_instances or n_inst,
        mode=mode, scope=scope,
        guard_hold_ns=args.guard_hold_ns or 0)


def _ablation_timing(args) -> list[RunReport]:
    """Update-mode scalability across unit counts with a guard hold cost."""
    ops = args.total_ops or 150_000
    hold = args.guard_hold_ns if args.guard_hold_ns is not None else 2_000
    reports = []
    for units in (4, 8, 16):
        for mode in ("per_request", "aggregated"):
            cfg = DeviceConfig(
                capacity_blocks=1 << 14,
                n_service_units=units,
                n_queue_pairs=4 * units,
                timing=dict_to_timing(args, 100_000 * units, 50.0, 4 * units,
                                      mode))
            cfg.timing.guard_hold_ns = hold
            spec = WorkloadSpec(kind="warp_coalesced",
                                n_submitters=1024 * units, duration_s=None,
                                total_ops=ops, verify=not args.no_verify,
                                seed=args.seed)
            rep = run_workload(cfg, spec, f"timing_{mode}_{units}u")
            print(rep.summary_line())
            reports.append(rep)
    return reports


def _ablation_skew(args) -> list[RunReport]:
    """Global vs local model scope under load skewed to one unit."""
    reports = []
    for scope in ("global", "local"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cfg = DeviceConfig(
                capacity_blocks=1 << 14,
                n_service_units=16,
                n_queue_pairs=32,
                timing=dict_to_timing(args, 160_000, 50.0, 16, "aggregated",
                                      scope))
            spec = WorkloadSpec(kind="warp_coalesced", n_submitters=4096,
                                skew_to_units=1,
                                duration_s=args.duration or 0.5,
                                verify=not args.no_verify, seed=args.seed)
            rep = run_workload(cfg, spec, f"skew_{scope}")
        print(rep.summary_line())
        reports.append(rep)
    return reports


def cmd_ablation(args) -> int:
    runner = {"frontend": _ablation_frontend, "timing": _ablation_timing,
              "skew": _ablation_skew}[args.kind]
    reports = runner(args)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"ablation_{args.kind}.csv")
    export_many(reports, path)
    print(f"wrote {path} ({len(reports)} rows)")
    if any(r.verify_failures for r in reports):
        return EXIT_VERIFY
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validate import run_validation
    results = run_validation(seed=args.seed)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        reports = [rep for r in results for rep in r.reports]
        if reports:
            export_many(reports, os.path.join(args.out, "validate_runs.csv"))
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VALIDATE if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="swarm-emu",
        description="Virtual NVMe SSD emulator for high-IOPS random reads")
    sub = ap.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="run one workload")
    bench.add_argument("subkind", choices=["fio", "warp", "beam"])
    _add_common(bench)
    bench.add_argument("--batch", type=int, default=64, help="beam: queries in flight")
    bench.add_argument("--width", type=int, default=4, help="beam: search width")
    bench.add_argument("--sweep-tmax", default=None,
                       help="beam: comma-separated t_max list")
    bench.add_argument("--graph-nodes", type=int, default=1 << 16)
    bench.add_argument("--degree", type=int, default=32)
    bench.add_argument("--iter-cost-ns", type=int, default=None)
    bench.set_defaults(func=cmd_bench)

    abl = sub.add_parser("ablation", help="run a fixed configuration matrix")
    abl.add_argument("kind", choices=["frontend", "timing", "skew"])
    _add_common(abl)
    abl.set_defaults(func=cmd_ablation)

    val = sub.add_parser("validate", help="run the acceptance checks")
    _add_common(val)
    val.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
