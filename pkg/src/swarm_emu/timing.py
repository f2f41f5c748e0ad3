"""Shared performance model pacing the emulated device.

The device's throughput/latency envelope is captured by two parameters:
maximum sustained throughput (t_max, unit operations per second) and minimum
request latency (l_min). Hardware parallelism is abstracted as n_instances
scheduling instances; each unit-sized operation occupies one instance for a
fixed scheduling quantum, and a request's target completion time is the last
of its unit operations' finish times plus a delay enforcing l_min.

Two update modes exist: per-request (one critical section entry per request)
and aggregated (one entry per fetched batch, with identical resulting
targets). Scope is either one global model shared by all dispatchers, or a
per-dispatcher local model with 1/N of the target throughput (a baseline that
misbehaves under skewed queue load).

All times are integer nanoseconds, so aggregated and per-request updates
produce bit-identical targets.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .runtime import TimedMutex


@dataclass(frozen=True)
class TimingParams:
    t_max_iops: float        # unit operations per second
    l_min_ns: int
    n_instances: int
    unit_bytes: int
    block_bytes: int
    sched_ns: int            # per-unit-op occupancy of one instance
    min_delay_ns: int        # added to enforce l_min at low load

    def capacity_iops(self) -> float:
        """Aggregate unit-op throughput implied by the derived quantum."""
        return 1e9 * self.n_instances / self.sched_ns


def derive_params(t_max_iops: float, l_min_ns: int, n_instances: int,
                  unit_bytes: int = 512, block_bytes: int = 512) -> TimingParams:
    if t_max_iops <= 0:
        raise ValueError("t_max_iops must be positive")
    if n_instances < 1:
        raise ValueError("n_instances must be >= 1")
    if l_min_ns < 0:
        raise ValueError("l_min must be >= 0")
    sched_ns = round(1e9 * n_instances / t_max_iops)
    if sched_ns < 1:
        raise ValueError(
            f"scheduling quantum rounds to zero at {t_max_iops} IOPS with "
            f"{n_instances} instances; increase n_instances")
    min_delay_ns = max(0, int(l_min_ns) - sched_ns)
    if l_min_ns < sched_ns:
        warnings.warn(
            f"l_min ({l_min_ns} ns) < scheduling quantum ({sched_ns} ns): "
            f"low-load latency will be the quantum, not l_min",
            stacklevel=2)
    return TimingParams(
        t_max_iops=t_max_iops,
        l_min_ns=int(l_min_ns),
        n_instances=n_instances,
        unit_bytes=unit_bytes,
        block_bytes=block_bytes,
        sched_ns=sched_ns,
        min_delay_ns=min_delay_ns,
    )


def instance_of(slba: int, unit_index: int, params: TimingParams) -> int:
    """Deterministic unit-op to instance mapping, uniform for uniform LBAs."""
    return int((slba * params.block_bytes // params.unit_bytes + unit_index)
               % params.n_instances)


def unit_count(transfer_bytes: int, params: TimingParams) -> int:
    return -(-transfer_bytes // params.unit_bytes)


class TimingState:
    """Per-instance availability times plus the serialization guard.

    avail[i] is the earliest time instance i is free; it only changes inside
    the guard and is monotonically nondecreasing.
    """

    def __init__(self, params: TimingParams, mode: str = "aggregated",
                 scope: str = "global"):
        self.params = params
        self.mode = mode
        self.scope = scope
        self.avail = np.zeros(params.n_instances, dtype=np.int64)
        self.guard = TimedMutex()


def schedule_request(state: TimingState, params: TimingParams, slba: int,
                     transfer_bytes: int, now_ns: int) -> int:
    """Derive one request's target completion time (caller holds the guard).

    Each unit op starts when its instance frees up (or now), occupies it for
    one quantum, and proposes start + quantum + min_delay; the request target
    is the latest proposal.
    """
    avail = state.avail
    sched = params.sched_ns
    tail = params.sched_ns + params.min_delay_ns
    units = unit_count(transfer_bytes, params)
    base_inst = slba * params.block_bytes // params.unit_bytes
    n_inst = params.n_instances
    target = 0
    for j in range(units):
        i = (base_inst + j) % n_inst
        a = int(avail[i])
        start = a if a > now_ns else now_ns
        avail[i] = start + sched
        cand = start + tail
        if cand > target:
            target = cand
    return target


def schedule_batch_aggregated(state: TimingState, params: TimingParams,
                              slbas: np.ndarray, transfer_bytes: np.ndarray,
                              now_ns: int, guard_hold_ns: int = 0,
                              ) -> tuple[np.ndarray, int]:
    """Derive targets for an SQ-ordered batch with one guard entry.

    Per-instance unit counts are computed outside the critical section; one
    guard entry reads base[i] = max(now, avail[i]) and applies the aggregate
    increment avail[i] = base[i] + count[i] * quantum (back-to-back
    scheduling); targets are then assigned outside in SQ order. Results are
    bit-identical to sequential per-request scheduling at the same now.

    Returns (targets, guard_exit_ns).
    """
    n = len(slbas)
    if n == 0:
        return np.empty(0, dtype=np.int64), now_ns
    ub = params.unit_bytes
    n_inst = params.n_instances
    sched = params.sched_ns
    base_inst = slbas.astype(np.int64) * params.block_bytes // ub
    units = -(np.asarray(transfer_bytes, dtype=np.int64) // -ub)
    if units.max() == 1:
        inst = base_inst % n_inst
        req_starts = None
    else:
        total = int(units.sum())
        req_idx = np.repeat(np.arange(n), units)
        req_starts = np.zeros(n, dtype=np.int64)
        np.cumsum(units[:-1], out=req_starts[1:])
        j = np.arange(total, dtype=np.int64) - req_starts[req_idx]
        inst = (base_inst[req_idx] + j) % n_inst

    # Rank of each unit op within its instance, preserving SQ order.
    order = np.argsort(inst, kind="stable")
    sorted_inst = inst[order]
    total = len(inst)
    is_start = np.empty(total, dtype=bool)
    is_start[0] = True
    np.not_equal(sorted_inst[1:], sorted_inst[:-1], out=is_start[1:])
    group_start_pos = np.where(is_start)[0]
    touched = sorted_inst[group_start_pos]
    counts = np.diff(np.append(group_start_pos, total))

    # Critical section: read bases, apply aggregate increments.
    enter, exit_ns = state.guard.acquire(now_ns, guard_hold_ns)
    bases = np.maximum(now_ns, state.avail[touched])
    state.avail[touched] = bases + counts * sched

    # Back outside: per-unit start = base + (rank-1) * quantum.
    seq = np.arange(total, dtype=np.int64)
    rank0 = seq - np.repeat(group_start_pos, counts)  # 0-based rank
    unit_target_sorted = (np.repeat(bases, counts) + (rank0 + 1) * sched
                          + params.min_delay_ns)
    unit_target = np.empty(total, dtype=np.int64)
    unit_target[order] = unit_target_sorted
    if req_starts is None:
        targets = unit_target
    else:
        targets = np.maximum.reduceat(unit_target, req_starts)
    return targets, exit_ns


def local_model_partition(params: TimingParams, n_dispatchers: int,
                          ) -> list[TimingParams]:
    """Split the model into n local models of 1/N throughput each.

    Instances are partitioned as well (at least one per local model), which
    keeps the scheduling quantum and hence low-load latency unchanged while
    capping each local model's capacity at t_max / N.
    """
    if n_dispatchers < 1:
        raise ValueError("n_dispatchers must be >= 1")
    if n_dispatchers == 1:
        return [params]
    local_inst = max(1, params.n_instances // n_dispatchers)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return [
            derive_params(params.t_max_iops / n_dispatchers, params.l_min_ns,
                          local_inst, params.unit_bytes, params.block_bytes)
            for _ in range(n_dispatchers)
        ]
