"""swarm_emu: a user-space virtual NVMe SSD emulator for massively parallel
fine-grained random reads.

The emulator runs in a deterministic virtual-time domain: all agents
(submitters, dispatchers, workers, copy engines) are cooperatively scheduled
and every timestamp is an integer nanosecond on a shared monotonic virtual
clock. This makes high target IOPS reproducible on any machine and makes
every run bit-deterministic for a given seed.
"""

from .runtime import Scheduler, Agent, TimedMutex
from .queue_model import (
    QueuePair,
    FetchBuffer,
    SQE_DTYPE,
    CQE_DTYPE,
    OP_READ,
    make_sqe,
    submit,
    doorbell_delta,
    fetch_coalesced,
    post_completion,
    consume_completions,
)
from .timing import TimingParams, TimingState, derive_params, instance_of
from .copy_engine import EngineGroup, OffloadContext, WorkQueue, group_configure, sync_copy
from .device import DeviceConfig, DeviceHandle, device_start, device_stop, read_block_oracle
from .workload import WorkloadSpec, GraphSpec, run_workload, verify_read
from .metrics import RunReport, summarize, export

__all__ = [
    "Scheduler",
    "Agent",
    "TimedMutex",
    "QueuePair",
    "FetchBuffer",
    "SQE_DTYPE",
    "CQE_DTYPE",
    "OP_READ",
    "make_sqe",
    "submit",
    "doorbell_delta",
    "fetch_coalesced",
    "post_completion",
    "consume_completions",
    "TimingParams",
    "TimingState",
    "derive_params",
    "instance_of",
    "EngineGroup",
    "OffloadContext",
    "WorkQueue",
    "group_configure",
    "sync_copy",
    "DeviceConfig",
    "DeviceHandle",
    "device_start",
    "device_stop",
    "read_block_oracle",
    "WorkloadSpec",
    "GraphSpec",
    "run_workload",
    "verify_read",
    "RunReport",
    "summarize",
    "export",
]
