"""Configuration for the emulated device, cost model, and workloads.

Every CLI flag has a config-file equivalent; files are YAML (JSON is a YAML
subset) with sections mirroring the dataclasses below. Flags override file
values; the effective config is echoed into every report.
"""

import dataclasses
import os
from dataclasses import dataclass, field

import yaml

ENV_CONFIG = "SWARM_EMU_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass
class TimingConfig:
    t_max_iops: float = 200_000.0
    l_min_us: float = 50.0
    n_instances: int = 8
    unit_bytes: int = 512
    mode: str = "aggregated"        # per_request | aggregated
    scope: str = "global"           # global | local
    guard_hold_ns: int = 0          # synthetic serialization cost per guard entry


@dataclass
class CopyEngineConfig:
    wq_depth: int = 32
    pipeline_depth: int = 8
    batch_size: int = 16            # worker offload batch size
    num_desc: int = 32              # per-context in-flight budget
    synthetic_issue_cost_ns: int = 0
    synthetic_per_copy_cost_ns: int = 0
    s_timeout_ns: int = 5_000       # pending-batch flush timeout
    c_timeout_ns: int = 10_000      # oldest-batch wait timeout


@dataclass
class CostModel:
    """Virtual-time costs of emulator-internal operations.

    These model the software path lengths that shape the architecture
    comparisons (transaction overheads amortized by coalescing, per-entry
    decode, critical-section updates). Values are desk-scale defaults;
    ablation conclusions are directional, not absolute.
    """

    # Dispatcher side.
    doorbell_poll_ns: int = 80
    decode_entry_ns: int = 120
    cpu_fetch_base_ns: int = 1200       # per transfer segment, direct path
    engine_fetch_base_ns: int = 400     # per transfer segment, offloaded path
    fetch_per_byte_ns: float = 0.02
    schedule_base_ns: int = 150
    schedule_unit_ns: int = 15
    guard_update_ns: int = 120          # state update inside the guard
    distribute_record_ns: int = 25
    dispatcher_defer_ns: int = 20_000   # re-poll delay when workers are full
    # Worker side.
    copy_issue_ns: int = 60             # per descriptor append
    cpu_copy_base_ns: int = 250         # direct-path copy, plus per-byte below
    cpu_copy_per_byte_ns: float = 0.05
    post_cqe_ns: int = 120
    sweep_base_ns: int = 250
    # Submitter side (workload agents).
    submit_entry_ns: int = 40
    doorbell_write_ns: int = 100
    consume_cqe_ns: int = 50
    consume_base_ns: int = 300
    # Consumer poll coalescing: target completions per wake and the hard cap
    # on added observation delay (keeps desk-scale wall time in budget while
    # leaving low-queue-depth latency unaffected).
    consume_batch_target: int = 32
    consume_poll_cap_ns: int = 2_000_000


@dataclass
class DeviceConfig:
    capacity_blocks: int = 1 << 16
    block_bytes: int = 512
    n_service_units: int = 4
    workers_per_unit: int = 1
    n_queue_pairs: int = 8
    queue_depth: int = 1024
    max_copies_per_iteration: int = 64
    fetch_path: str = "engine"          # engine | direct
    frontend_mode: str = "distributed"  # distributed | centralized
    fetch_mode: str = "coalesced"       # coalesced | per_entry
    backend_copy: bool = True           # False = ingestion-only (no data path)
    worker_copy_path: str = "engine"    # engine | direct
    local_queue_cap: int = 4096         # records per worker local queue
    pattern_seed: int = 1234
    trace: bool = False                 # per-request trace records (small runs)
    timing: TimingConfig = field(default_factory=TimingConfig)
    copy_engine: CopyEngineConfig = field(default_factory=CopyEngineConfig)
    costs: CostModel = field(default_factory=CostModel)

    def validate(self) -> None:
        c = self
        if c.block_bytes < 1 or c.capacity_blocks < 1:
            raise ConfigError("capacity and block size must be positive")
        if c.queue_depth < 2 or c.queue_depth & (c.queue_depth - 1):
            raise ConfigError("queue_depth must be a power of two >= 2")
        if c.n_service_units < 1 or c.workers_per_unit < 1 or c.n_queue_pairs < 1:
            raise ConfigError("unit, worker, and queue pair counts must be >= 1")
        if c.frontend_mode == "centralized":
            if c.n_service_units != 1:
                raise ConfigError("centralized frontend requires n_service_units == 1")
        elif c.frontend_mode == "distributed":
            if c.n_queue_pairs < c.n_service_units:
                raise ConfigError("need n_queue_pairs >= n_service_units")
        else:
            raise ConfigError(f"unknown frontend_mode {c.frontend_mode!r}")
        if c.fetch_path not in ("engine", "direct"):
            raise ConfigError(f"unknown fetch_path {c.fetch_path!r}")
        if c.fetch_mode not in ("coalesced", "per_entry"):
            raise ConfigError(f"unknown fetch_mode {c.fetch_mode!r}")
        if c.worker_copy_path not in ("engine", "direct"):
            raise ConfigError(f"unknown worker_copy_path {c.worker_copy_path!r}")
        if c.timing.mode not in ("per_request", "aggregated"):
            raise ConfigError(f"unknown timing mode {c.timing.mode!r}")
        if c.timing.scope not in ("global", "local"):
            raise ConfigError(f"unknown timing scope {c.timing.scope!r}")
        if c.timing.t_max_iops <= 0:
            raise ConfigError("t_max_iops must be positive")
        if c.timing.n_instances < 1:
            raise ConfigError("n_instances must be >= 1")
        ub, bb = c.timing.unit_bytes, c.block_bytes
        if ub < 1 or (ub % bb != 0 and bb % ub != 0):
            raise ConfigError("unit_bytes must divide or be a multiple of block_bytes")
        if c.copy_engine.batch_size < 1 or c.copy_engine.num_desc < 1:
            raise ConfigError("batch_size and num_desc must be >= 1")
        if c.copy_engine.num_desc > c.copy_engine.wq_depth:
            raise ConfigError("num_desc cannot exceed wq_depth")


def _merge_dataclass(obj, data: dict, path: str):
    for key, val in data.items():
        if not hasattr(obj, key):
            raise ConfigError(f"unknown config key {path}{key}")
        cur = getattr(obj, key)
        if dataclasses.is_dataclass(cur):
            if not isinstance(val, dict):
                raise ConfigError(f"{path}{key} must be a mapping")
            _merge_dataclass(cur, val, f"{path}{key}.")
        else:
            setattr(obj, key, type(cur)(val) if cur is not None else val)


def load_device_config(path: str | None = None,
                       overrides: dict | None = None) -> DeviceConfig:
    """Build a DeviceConfig from an optional YAML file plus overrides.

    The file may have top-level sections `device`, `timing`, `copy_engine`,
    `costs` (or equivalently a `device` mapping with nested sections).
    """
    cfg = DeviceConfig()
    if path is None:
        path = os.environ.get(ENV_CONFIG)
    if path:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a mapping")
        dev = dict(data.get("device", {}))
        for section in ("timing", "copy_engine", "costs"):
            if section in data:
                dev.setdefault(section, data[section])
        _merge_dataclass(cfg, dev, "device.")
    if overrides:
        _merge_dataclass(cfg, overrides, "override.")
    cfg.validate()
    return cfg


def config_echo(cfg: DeviceConfig, workload: dict | None = None) -> dict:
    """Flatten the effective configuration for report embedding."""
    echo = dataclasses.asdict(cfg)
    echo["t_max_iops"] = cfg.timing.t_max_iops
    echo["l_min_us"] = cfg.timing.l_min_us
    echo["n_units"] = cfg.n_service_units
    echo["mode"] = f"{cfg.timing.mode}/{cfg.timing.scope}"
    if workload:
        echo["workload"] = workload
    return echo
