"""Load generators driving the emulated device.

Three kinds:
- queue_parallel: one submitter agent per queue pair keeping qdepth requests
  outstanding, per-request doorbell writes (classic CPU-side generator).
- warp_coalesced: logical threads grouped into warps of 32 that submit
  together through a single doorbell write and resubmit when the whole warp
  has completed (massively parallel accelerator-side pattern, multiplexed
  over one agent per queue pair).
- beam_search: batched graph traversal issuing dependent reads; each query
  reads its frontier nodes, scores their neighbors with a keyed hash, and
  descends. Reproduces the I/O-parallelism-vs-IOPS tradeoff without real
  embeddings.

Every workload optionally verifies read buffers against the device's pattern
oracle and records end-to-end latency (observed - submit, including SQ
queuing delay).
"""

from dataclasses import dataclass, field

import numpy as np

from . import queue_model as qm
from .config import DeviceConfig
from .device import DeviceHandle, device_start, pattern_bytes
from .memory import REGION_IO
from .metrics import E2ERecorder, RunReport, summarize
from .runtime import Agent, Scheduler

WARP = 32


@dataclass
class WorkloadSpec:
    kind: str = "warp_coalesced"
    n_submitters: int = 1024        # logical threads (warp mode) / agents (fio mode)
    qdepth: int = 32                # outstanding per queue pair (queue_parallel)
    io_bytes: int = 512
    n_queue_pairs: int | None = None
    lba_distribution: str = "uniform"   # uniform | zipf
    zipf_theta: float = 0.99
    skew_to_units: int | None = None    # drive only QPs of the first k units
    duration_s: float | None = 1.0
    total_ops: int | None = None
    verify: bool = True
    seed: int = 42
    cqe_batch: int | None = None        # consumer-side completion granularity
    # Beam search parameters.
    batch: int = 64
    width: int = 4
    # Reads-per-accuracy tradeoff: iterations needed at each search width.
    # Placeholder values pending offline profiling; override in config.
    iteration_table: dict = field(default_factory=lambda: {1: 24, 2: 16, 4: 12, 8: 10})
    beam_iter_cost_ns: int = 500_000    # per-iteration scoring/compute stand-in


@dataclass
class GraphSpec:
    """Synthetic on-disk graph: node i lives at block i, adjacency by keyed hash."""

    n_nodes: int
    degree: int = 32
    seed: int = 7

    def neighbors(self, node: int) -> np.ndarray:
        h = _hash64(np.uint64(self.seed),
                    np.arange(node * self.degree, (node + 1) * self.degree,
                              dtype=np.uint64))
        return (h % np.uint64(self.n_nodes)).astype(np.int64)

    def scores(self, query_key: int, nodes: np.ndarray) -> np.ndarray:
        return _hash64(np.uint64(query_key), nodes.astype(np.uint64))

    def start_node(self, query_key: int) -> int:
        h = _hash64(np.uint64(query_key), np.array([0x5EED], dtype=np.uint64))
        return int(h[0] % np.uint64(self.n_nodes))


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _hash64(key: np.uint64, x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (x + np.uint64(1)) * _GOLDEN + key * np.uint64(0xD1B54A32D192ED03)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def verify_read(buffer, slba: int, nlb: int, seed: int,
                block_bytes: int = 512) -> tuple[bool, int | None]:
    """Check a read buffer against the pattern oracle.

    Returns (ok, first mismatching byte offset or None).
    """
    from .device import read_block_oracle
    expected = b"".join(read_block_oracle(seed, slba + b, block_bytes)
                        for b in range(nlb + 1))
    got = bytes(buffer[:len(expected)])
    if got == expected:
        return True, None
    for off, (a, b) in enumerate(zip(got, expected)):
        if a != b:
            return False, off
    return False, min(len(got), len(expected))


class LbaSampler:
    """Aligned LBA sampling: uniform or bounded-zipf over I/O-sized slots."""

    def __init__(self, spec: WorkloadSpec, capacity_blocks: int,
                 blocks_per_io: int, rng: np.random.Generator):
        self.blocks_per_io = blocks_per_io
        self.slots = capacity_blocks // blocks_per_io
        self.rng = rng
        if spec.lba_distribution == "zipf":
            ranks = np.arange(1, self.slots + 1, dtype=np.float64)
            w = ranks ** -spec.zipf_theta
            self.cdf = np.cumsum(w / w.sum())
        elif spec.lba_distribution == "uniform":
            self.cdf = None
        else:
            raise ValueError(f"unknown lba_distribution {spec.lba_distribution!r}")

        self._pool = np.empty(0, dtype=np.int64)
        self._pool_pos = 0

    def sample(self, n: int) -> np.ndarray:
        # Refill in bulk; generator call overhead dominates small draws.
        if self._pool_pos + n > len(self._pool):
            fill = max(4096, n)
            if self.cdf is None:
                slots = self.rng.integers(0, self.slots, size=fill)
            else:
                slots = np.searchsorted(self.cdf, self.rng.random(fill))
            self._pool = slots * self.blocks_per_io
            self._pool_pos = 0
        out = self._pool[self._pool_pos:self._pool_pos + n]
        self._pool_pos += n
        return out


class _SubmitterBase(Agent):
    """Common per-QP machinery: slot accounting, consume, verify, E2E."""

    def __init__(self, qp, handle: DeviceHandle, spec: WorkloadSpec,
                 n_slots: int, buf_base: int, pattern: bytes | None,
                 budget: int | None):
        super().__init__()
        self.qp = qp
        self.handle = handle
        self.spec = spec
        self.costs = handle.cfg.costs
        self.n_slots = n_slots
        self.buf_base = buf_base
        self.io_bytes = spec.io_bytes
        self.blocks_per_io = spec.io_bytes // handle.cfg.block_bytes
        self.pattern = pattern
        self.recorder = E2ERecorder()
        self.budget = budget  # remaining submissions allowed (None = unlimited)
        self.t_end_ns = (int(spec.duration_s * 1e9)
                         if spec.duration_s is not None else None)
        self.slot_slba = np.zeros(n_slots, dtype=np.int64)
        self.slot_submit_ns = np.zeros(n_slots, dtype=np.int64)
        self.slot_busy = np.zeros(n_slots, dtype=bool)
        self.outstanding = 0
        self.sampler: LbaSampler | None = None
        self._io_buf = handle.regions.raw(REGION_IO)
        self._started = False
        self._last_consume_ns = 0
        self._gap_est_ns = 0
        batch_target = spec.cqe_batch
        self._batch_target = (batch_target if batch_target is not None
                              else self.costs.consume_batch_target)
        qp.on_completion = self.wake

    # -- helpers ------------------------------------------------------------

    def _stopped(self, now_ns: int) -> bool:
        if self.budget is not None and self.budget <= 0:
            return True
        return self.t_end_ns is not None and now_ns >= self.t_end_ns

    def _verify_slots(self, slots: np.ndarray) -> None:
        pat = self.pattern
        if pat is None:
            return
        io = self._io_buf
        nbytes = self.io_bytes
        offs = (self.buf_base + slots * nbytes).tolist()
        pos = (self.slot_slba[slots] * self.handle.cfg.block_bytes).tolist()
        for off, p in zip(offs, pos):
            if io[off:off + nbytes] != pat[p:p + nbytes]:
                self.recorder.verify_failures += 1

    def _consume(self, now_ns: int) -> tuple[np.ndarray, int]:
        """Consume all visible completions; returns (slots, new local time)."""
        entries = qm.consume_completions(self.qp, self.qp.depth, now_ns)
        k = len(entries)
        if k == 0:
            return np.empty(0, dtype=np.int64), now_ns
        t = now_ns + self.costs.consume_base_ns + self.costs.consume_cqe_ns * k
        cids = entries["cid"].astype(np.int64)  # int64: slots scale into offsets
        codes = entries["status"] >> 1
        if codes.any():
            self.recorder.verify_failures += int((codes != 0).sum())
        if not self.slot_busy[cids].all():
            raise AssertionError("completion for a CID that is not outstanding")
        self.slot_busy[cids] = False
        self.outstanding -= k
        self.recorder.completed += k
        e2e = t - self.slot_submit_ns[cids]
        self.recorder.record_batch(np.full(k, t, dtype=np.int64), e2e)
        self._verify_slots(cids)
        # Completion-rate estimate for poll coalescing.
        if self._last_consume_ns:
            gap = (t - self._last_consume_ns) // max(k, 1)
            self._gap_est_ns = (self._gap_est_ns + gap) // 2 if self._gap_est_ns else gap
        self._last_consume_ns = t
        return cids, t

    def _next_wake(self, t: int) -> int | None:
        nv = qm.next_visible_ns(self.qp)
        if nv is None:
            return None  # completion hook re-wakes
        target = min(self._batch_target, self.outstanding // 2)
        if target <= 1 or self._gap_est_ns == 0:
            return max(nv, t)
        delay = min(target * self._gap_est_ns, self.costs.consume_poll_cap_ns)
        return max(nv, t + delay)

    def _submit_slots(self, slots: np.ndarray, now_ns: int,
                      doorbell_updates: int) -> int:
        """Issue new reads for the given slots; returns new local time."""
        k = len(slots)
        lbas = self.sampler.sample(k)
        self.slot_slba[slots] = lbas
        t = now_ns + self.costs.submit_entry_ns * k \
            + self.costs.doorbell_write_ns * doorbell_updates
        self.slot_submit_ns[slots] = t
        self.slot_busy[slots] = True
        prps = self.buf_base + slots * self.io_bytes
        nlbs = np.full(k, self.blocks_per_io - 1, dtype=np.uint16)
        qm.submit_fields(self.qp, slots.astype(np.uint16), lbas, nlbs, prps,
                         t, doorbell_updates)
        self.outstanding += k
        self.recorder.submitted += k
        if self.budget is not None:
            self.budget -= k
        return t


class QueueParallelSubmitter(_SubmitterBase):
    """Keeps qdepth requests outstanding with per-request doorbell writes."""

    def step(self, now_ns: int) -> int | None:
        t = now_ns
        if not self._started:
            self._started = True
            n = min(self.n_slots, self.qp.sq_free_slots())
            t = self._submit_slots(np.arange(n, dtype=np.int64), t, n)
            return self._next_wake(t)
        slots, t = self._consume(t)
        if len(slots) and not self._stopped(t):
            if self.budget is not None and self.budget < len(slots):
                slots = slots[:self.budget]
            if len(slots):
                t = self._submit_slots(slots, t, len(slots))
        return self._next_wake(t)


class WarpSubmitter(_SubmitterBase):
    """Warps of 32 logical threads submitting via one doorbell write each.

    A warp resubmits once all 32 of its lanes have completed (warp-synchronous
    rounds); lanes map to fixed CID slots so per-thread completions are
    tracked exactly.
    """

    def __init__(self, qp, handle, spec, n_warps: int, buf_base, pattern, budget):
        super().__init__(qp, handle, spec, n_warps * WARP, buf_base, pattern, budget)
        self.n_warps = n_warps
        self.warp_remaining = np.zeros(n_warps, dtype=np.int64)

    def _submit_warp(self, warp: int, t: int) -> int:
        slots = np.arange(warp * WARP, (warp + 1) * WARP, dtype=np.int64)
        self.warp_remaining[warp] = WARP
        return self._submit_slots(slots, t, 1)

    def step(self, now_ns: int) -> int | None:
        t = now_ns
        if not self._started:
            self._started = True
            for w in range(self.n_warps):
                if self.budget is not None and self.budget < WARP:
                    break
                t = self._submit_warp(w, t)
            return self._next_wake(t)
        slots, t = self._consume(t)
        if len(slots):
            self.warp_remaining -= np.bincount(slots // WARP,
                                               minlength=self.n_warps)
            if not self._stopped(t):
                ready = np.where(self.warp_remaining == 0)[0]
                for w in ready:
                    if self.budget is not None and self.budget < WARP:
                        break
                    t = self._submit_warp(int(w), t)
        return self._next_wake(t)


def _active_qps(handle: DeviceHandle, spec: WorkloadSpec) -> list:
    qps = handle.qps
    if spec.n_queue_pairs is not None:
        qps = qps[:spec.n_queue_pairs]
    if spec.skew_to_units is not None:
        n_units = handle.cfg.n_service_units
        qps = [qp for qp in qps if qp.qid % n_units < spec.skew_to_units]
    if not qps:
        raise ValueError("workload selects no queue pairs")
    return qps


def _split_budget(total: int | None, n: int) -> list[int | None]:
    if total is None:
        return [None] * n
    per = total // n
    out = [per] * n
    for i in range(total - per * n):
        out[i] += 1
    return out


def _build_submitters(handle: DeviceHandle, spec: WorkloadSpec,
                      pattern: bytes | None) -> list[_SubmitterBase]:
    qps = _active_qps(handle, spec)
    cap = handle.cfg.capacity_blocks
    budgets = _split_budget(spec.total_ops, len(qps))
    agents: list[_SubmitterBase] = []
    buf_base = 0
    for i, qp in enumerate(qps):
        if spec.kind == "queue_parallel":
            n_slots = min(spec.qdepth, qp.depth - 1)
            agent = QueueParallelSubmitter(qp, handle, spec, n_slots, buf_base,
                                           pattern, budgets[i])
        elif spec.kind == "warp_coalesced":
            threads = spec.n_submitters // len(qps)
            n_warps = max(1, threads // WARP)
            n_warps = min(n_warps, (qp.depth - 1) // WARP)
            agent = WarpSubmitter(qp, handle, spec, n_warps, buf_base, pattern,
                                  budgets[i])
        else:
            raise ValueError(f"unknown workload kind {spec.kind!r}")
        agent.sampler = LbaSampler(
            spec, cap, agent.blocks_per_io,
            np.random.default_rng([spec.seed, qp.qid]))
        agent.name = f"submitter{qp.qid}"
        buf_base += agent.n_slots * spec.io_bytes
        agents.append(agent)
    return agents


def _count_active_qps(cfg: DeviceConfig, spec: WorkloadSpec) -> int:
    n_qps = spec.n_queue_pairs or cfg.n_queue_pairs
    if spec.skew_to_units is None:
        return n_qps
    n_units = cfg.n_service_units
    return sum(1 for qid in range(n_qps) if qid % n_units < spec.skew_to_units)


def _io_buffer_size(spec: WorkloadSpec, cfg: DeviceConfig) -> int:
    n_active = max(_count_active_qps(cfg, spec), 1)
    if spec.kind == "queue_parallel":
        per = min(spec.qdepth, cfg.queue_depth - 1)
    elif spec.kind == "warp_coalesced":
        threads = max(WARP, spec.n_submitters // n_active)
        per = min(max(1, threads // WARP) * WARP,
                  (cfg.queue_depth - 1) // WARP * WARP)
    else:
        per = cfg.queue_depth
    return max(per * n_active * spec.io_bytes, spec.io_bytes)


def _run_and_report(handle: DeviceHandle, spec: WorkloadSpec,
                    agents: list, run_id: str, workload_name: str,
                    queries_done=None) -> RunReport:
    sched = handle.scheduler
    sched.run()
    if handle.outstanding() != 0 or any(a.outstanding for a in agents):
        raise RuntimeError("run ended with requests outstanding")

    recorders = [a.recorder for a in agents]
    if spec.duration_s is not None and spec.total_ops is None:
        window_end = int(spec.duration_s * 1e9)
    else:
        posted = [rec.arrays()[0] for rec in handle.device_recorders()]
        window_end = max((int(p.max()) for p in posted if len(p)), default=1)
    cfg = handle.cfg
    echo = {
        "t_max_iops": cfg.timing.t_max_iops,
        "l_min_us": cfg.timing.l_min_us,
        "n_units": cfg.n_service_units,
        "mode": f"{cfg.timing.mode}/{cfg.timing.scope}",
        "workload": workload_name,
        "kind": spec.kind,
        "seed": spec.seed,
    }
    report = summarize(handle.device_recorders(), recorders,
                       (0, max(window_end, 1)), handle.counters(),
                       run_id=run_id, workload=workload_name, config=echo,
                       queries_completed=queries_done[0] if queries_done else 0)
    return report


def run_queue_parallel(cfg: DeviceConfig, spec: WorkloadSpec,
                       run_id: str = "fio") -> RunReport:
    spec.kind = "queue_parallel"
    return run_workload(cfg, spec, run_id)


def run_warp_coalesced(cfg: DeviceConfig, spec: WorkloadSpec,
                       run_id: str = "warp") -> RunReport:
    spec.kind = "warp_coalesced"
    return run_workload(cfg, spec, run_id)


def run_workload(cfg: DeviceConfig, spec: WorkloadSpec,
                 run_id: str = "run") -> RunReport:
    """Start a device, drive it with the spec'd workload, drain, and report."""
    if spec.kind == "beam_search":
        raise ValueError("use run_beam_search for beam workloads")
    if spec.io_bytes % cfg.block_bytes:
        raise ValueError("io_bytes must be a multiple of block_bytes")
    sched = Scheduler()
    io_buf = bytearray(_io_buffer_size(spec, cfg))
    handle = device_start(cfg, {REGION_IO: io_buf}, sched)
    pattern = (pattern_bytes(cfg.pattern_seed, cfg.capacity_blocks,
                             cfg.block_bytes) if spec.verify else None)
    agents = _build_submitters(handle, spec, pattern)
    for a in agents:
        sched.add(a, start_ns=0)
    return _run_and_report(handle, spec, agents, run_id, spec.kind)


# -- beam search -------------------------------------------------------------


class BeamReadProxy(Agent):
    """Owns one QP for a set of queries (single submitter/consumer per ring)."""

    def __init__(self, qp, handle: DeviceHandle, spec: WorkloadSpec,
                 n_slots: int, buf_base: int, pattern: bytes | None):
        super().__init__()
        self.qp = qp
        self.handle = handle
        self.spec = spec
        self.costs = handle.cfg.costs
        self.name = f"beamproxy{qp.qid}"
        self.recorder = E2ERecorder()
        self.n_slots = n_slots
        self.buf_base = buf_base
        self.io_bytes = spec.io_bytes
        self.blocks_per_io = spec.io_bytes // handle.cfg.block_bytes
        self.pattern = pattern
        self._io_buf = handle.regions.raw(REGION_IO)
        self.free_slots = list(range(n_slots - 1, -1, -1))
        self.slot_query = [None] * n_slots
        self.slot_submit_ns = np.zeros(n_slots, dtype=np.int64)
        self.slot_slba = np.zeros(n_slots, dtype=np.int64)
        self.pending: list[tuple] = []  # (query, node) awaiting submission
        qp.on_completion = self.wake

    def request_read(self, query, node: int, ts_ns: int) -> None:
        self.pending.append((query, node))
        self.wake(ts_ns)

    def step(self, now_ns: int) -> int | None:
        t = now_ns
        entries = qm.consume_completions(self.qp, self.qp.depth, t)
        k = len(entries)
        if k:
            t += self.costs.consume_base_ns + self.costs.consume_cqe_ns * k
            cids = entries["cid"].astype(np.int64)
            self.recorder.completed += k
            e2e = t - self.slot_submit_ns[cids]
            self.recorder.record_batch(np.full(k, t, dtype=np.int64), e2e)
            if self.pattern is not None:
                bb = self.handle.cfg.block_bytes
                nbytes = self.io_bytes
                for s in cids:
                    off = self.buf_base + int(s) * nbytes
                    p = int(self.slot_slba[s]) * bb
                    if self._io_buf[off:off + nbytes] != self.pattern[p:p + nbytes]:
                        self.recorder.verify_failures += 1
            for s in cids:
                q = self.slot_query[s]
                self.slot_query[s] = None
                self.free_slots.append(int(s))
                q.deliver(t)
        # Submit pending reads while slots and ring space allow.
        n = min(len(self.pending), len(self.free_slots), self.qp.sq_free_slots())
        if n:
            take = self.pending[:n]
            del self.pending[:n]
            slots = np.empty(n, dtype=np.int64)
            lbas = np.empty(n, dtype=np.int64)
            for i, (q, node) in enumerate(take):
                s = self.free_slots.pop()
                slots[i] = s
                lbas[i] = node * self.blocks_per_io
                self.slot_query[s] = q
            t += self.costs.submit_entry_ns * n + self.costs.doorbell_write_ns
            self.slot_submit_ns[slots] = t
            self.slot_slba[slots] = lbas
            self.recorder.submitted += n
            prps = self.buf_base + slots * self.io_bytes
            nlbs = np.full(n, self.blocks_per_io - 1, dtype=np.uint16)
            qm.submit_fields(self.qp, slots.astype(np.uint16), lbas, nlbs,
                             prps, t, 1)
        # Deferred work (no free slot / ring space) resumes on the next
        # completion; the hook re-wakes this agent.
        nv = qm.next_visible_ns(self.qp)
        return max(nv, t) if nv is not None else None

    @property
    def outstanding(self) -> int:
        return self.n_slots - len(self.free_slots)


class BeamQuery(Agent):
    """One stream of back-to-back queries walking the graph via the device."""

    def __init__(self, index: int, graph: GraphSpec, spec: WorkloadSpec,
                 proxy: BeamReadProxy, iterations: int, done_counter: list,
                 iter_cost_ns: int):
        super().__init__()
        self.index = index
        self.graph = graph
        self.spec = spec
        self.proxy = proxy
        self.iterations = iterations
        self.done_counter = done_counter
        self.iter_cost_ns = iter_cost_ns
        self.name = f"query{index}"
        self.t_end_ns = (int(spec.duration_s * 1e9)
                         if spec.duration_s is not None else None)
        self._serial = 0
        self._outstanding = 0
        self._frontier: list[int] = []
        self._visited: set[int] = set()
        self._iters_left = 0
        self._active = False
        self.queries_started = 0
        self.visit_log: list[int] | None = None

    def _query_key(self) -> int:
        return (self.spec.seed * 1_000_003 + self.index) * 65_537 + self._serial

    def _begin_query(self, t: int) -> None:
        self._active = True
        self._serial += 1
        self.queries_started += 1
        self._visited = set()
        start = self.graph.start_node(self._query_key())
        self._frontier = [start]
        self._iters_left = self.iterations
        self._issue_frontier(t)

    def _issue_frontier(self, t: int) -> None:
        self._outstanding = len(self._frontier)
        for node in self._frontier:
            self.proxy.request_read(self, node, t)

    def deliver(self, ts_ns: int) -> None:
        self._outstanding -= 1
        if self._outstanding == 0:
            self.wake(ts_ns + self.iter_cost_ns)

    def _advance(self, t: int) -> None:
        g = self.graph
        self._visited.update(self._frontier)
        if self.visit_log is not None:
            self.visit_log.extend(self._frontier)
        self._iters_left -= 1
        if self._iters_left <= 0:
            self._active = False
            self.done_counter[0] += 1
            self.wake(t)
            return
        cands = np.unique(np.concatenate([g.neighbors(n) for n in self._frontier]))
        scores = g.scores(self._query_key(), cands)
        order = np.argsort(scores, kind="stable")
        frontier = []
        visited = self._visited
        for idx in order:
            node = int(cands[idx])
            if node not in visited:
                frontier.append(node)
                if len(frontier) == self.spec.width:
                    break
        if not frontier:
            frontier = [int(cands[order[0]])]
        self._frontier = frontier
        self._issue_frontier(t)

    def step(self, now_ns: int) -> int | None:
        if self._active:
            self._advance(now_ns)
            return None
        if self.t_end_ns is not None and now_ns >= self.t_end_ns:
            return None
        self._begin_query(now_ns)
        return None


def run_beam_search(cfg: DeviceConfig, spec: WorkloadSpec, graph: GraphSpec,
                    run_id: str = "beam") -> RunReport:
    """Batched dependent-read graph search; reports QPS alongside IOPS."""
    if graph.n_nodes * (spec.io_bytes // cfg.block_bytes) > cfg.capacity_blocks:
        raise ValueError("graph does not fit in device capacity")
    if spec.width not in spec.iteration_table:
        raise ValueError(f"no iteration count configured for width {spec.width}")
    iterations = spec.iteration_table[spec.width]
    sched = Scheduler()
    n_qps = spec.n_queue_pairs or cfg.n_queue_pairs
    slots_per_qp = min(cfg.queue_depth - 1,
                       max(spec.width * spec.batch * 2 // n_qps + 8, 64))
    io_buf = bytearray(slots_per_qp * n_qps * spec.io_bytes)
    handle = device_start(cfg, {REGION_IO: io_buf}, sched)
    pattern = (pattern_bytes(cfg.pattern_seed, cfg.capacity_blocks,
                             cfg.block_bytes) if spec.verify else None)

    proxies = []
    buf_base = 0
    for qp in handle.qps[:n_qps]:
        proxy = BeamReadProxy(qp, handle, spec, slots_per_qp, buf_base, pattern)
        buf_base += slots_per_qp * spec.io_bytes
        proxies.append(proxy)
        sched.add(proxy)

    done = [0]
    queries = []
    it_cost = spec.beam_iter_cost_ns
    for i in range(spec.batch):
        q = BeamQuery(i, graph, spec, proxies[i % len(proxies)], iterations,
                      done, it_cost)
        queries.append(q)
        sched.add(q, start_ns=0)

    report = _run_and_report(handle, spec, proxies, run_id, "beam_search",
                             queries_done=done)
    return report
