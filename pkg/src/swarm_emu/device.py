"""The emulated device: backing store, service units, request lifecycle.

A service unit is one dispatcher plus its workers, bound to an engine group
and an exclusive partition of queue pairs (qid mod n_service_units). The
dispatcher polls SQ doorbells, fetches new entries (coalesced into at most
two transfers, or per-entry in baseline mode), decodes them, derives target
completion times from the shared timing model, and distributes records
round-robin to worker local queues. Workers issue the storage data transfers
through their offload contexts and post completions whose consumer-visible
time never precedes the model's target.

The centralized baseline (one dispatcher for all queues, per-entry fetching,
per-request timing updates, CPU copies) reproduces the legacy emulator shape
for comparison runs.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import queue_model as qm
from .config import CostModel, DeviceConfig
from .copy_engine import COMP_DONE, EngineGroup, OffloadContext, group_configure, sync_copy
from .memory import REGION_IO, REGION_STORE, RegionTable
from .metrics import LatencyRecorder, RunReport, summarize
from .runtime import Agent, Scheduler
from .timing import (
    TimingState,
    derive_params,
    local_model_partition,
    schedule_batch_aggregated,
    schedule_request,
)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _pattern_words(seed: int, word_start: int, count: int) -> np.ndarray:
    """Deterministic 64-bit word stream: splitmix64 of a seeded counter."""
    idx = np.arange(word_start + 1, word_start + count + 1, dtype=np.uint64)
    z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + idx * _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def read_block_oracle(seed: int, block_id: int, block_bytes: int = 512,
                      capacity_blocks: int | None = None) -> bytes:
    """Reference content of one block; equals the backing store by construction."""
    if block_id < 0 or (capacity_blocks is not None and block_id >= capacity_blocks):
        raise ValueError(f"block {block_id} out of range")
    words = block_bytes // 8
    return _pattern_words(seed, block_id * words, words).tobytes()


_pattern_cache: dict[tuple[int, int, int], bytes] = {}


def pattern_bytes(seed: int, capacity_blocks: int, block_bytes: int = 512) -> bytes:
    """Full pattern image (workloads verify read buffers against slices of it).

    Cached: the image is immutable and regenerating it dominates small-run
    setup time.
    """
    key = (seed, capacity_blocks, block_bytes)
    cached = _pattern_cache.get(key)
    if cached is not None:
        return cached
    total_words = capacity_blocks * block_bytes // 8
    out = np.empty(total_words, dtype=np.uint64)
    chunk = 1 << 22
    for start in range(0, total_words, chunk):
        n = min(chunk, total_words - start)
        out[start:start + n] = _pattern_words(seed, start, n)
    data = out.tobytes()
    if len(_pattern_cache) >= 8:
        _pattern_cache.clear()
    _pattern_cache[key] = data
    return data


class BackingStore:
    """Emulated storage block space in memory, pattern-filled, read-only here."""

    def __init__(self, capacity_blocks: int, block_bytes: int, seed: int):
        self.capacity_blocks = capacity_blocks
        self.block_bytes = block_bytes
        self.seed = seed
        self.buf = bytearray(pattern_bytes(seed, capacity_blocks, block_bytes))

    def size_bytes(self) -> int:
        return self.capacity_blocks * self.block_bytes


@dataclass
class RequestRecord:
    """Per-request lifecycle view (API/trace form of the batched records)."""

    qid: int
    cid: int
    slba: int
    nlb: int
    prp: int
    submit_ns: int = 0
    fetch_ns: int = 0
    target_ns: int = 0
    copy_done_ns: int = 0
    posted_ns: int = 0

    @property
    def state(self) -> str:
        if self.posted_ns:
            return "completed"
        if self.copy_done_ns:
            return "copy_done"
        if self.fetch_ns:
            return "fetched"
        return "submitted"

    def trace_line(self) -> str:
        return (f"q{self.qid} cid={self.cid} slba={self.slba} nlb={self.nlb} "
                f"submit={self.submit_ns} fetch={self.fetch_ns} "
                f"target={self.target_ns} copy_done={self.copy_done_ns} "
                f"posted={self.posted_ns}")


class RecordBatch:
    """Structure-of-arrays for one fetched batch of a single queue pair."""

    __slots__ = ("qp", "n", "cid", "slba", "nlb", "prp", "submit_ns",
                 "fetch_ns", "target_ns", "copy_done_ns", "sq_head_snapshot",
                 "issue_pos")

    def __init__(self, qp, cid, slba, nlb, prp, submit_ns, fetch_ns,
                 target_ns, sq_head_snapshot):
        self.qp = qp
        self.n = len(cid)
        self.cid = cid
        self.slba = slba
        self.nlb = nlb
        self.prp = prp
        self.submit_ns = submit_ns
        self.fetch_ns = fetch_ns
        self.target_ns = target_ns
        self.copy_done_ns = np.zeros(self.n, dtype=np.int64)
        self.sq_head_snapshot = sq_head_snapshot
        self.issue_pos = 0


class DispatcherAgent(Agent):
    """Frontend of one service unit: doorbell polling, fetch, decode, timing."""

    def __init__(self, unit, cfg: DeviceConfig, handle):
        super().__init__()
        self.unit = unit
        self.cfg = cfg
        self.costs: CostModel = cfg.costs
        self.handle = handle
        self.name = f"dispatcher{unit.unit_id}"
        self.fetch_buffer = qm.FetchBuffer(cfg.queue_depth)
        self._fb_rid = handle.regions_auto_register(self.fetch_buffer.entries)
        self._rr = 0
        self._next_worker = 0
        self.fetch_transfers = 0
        self.fetched_requests = 0
        self.recorder = LatencyRecorder()

    def _fetch(self, qp, n: int, t: int) -> int:
        """Fetch n entries from qp into the fetch buffer; returns the new time."""
        costs = self.costs
        engine = self.cfg.fetch_path == "engine"
        base = costs.engine_fetch_base_ns if engine else costs.cpu_fetch_base_ns
        tbox = [t]

        if engine:
            group = self.unit.group
            ring_rid = self.handle.ring_region(qp)
            fb_rid = self._fb_rid

            def via(dst_idx, src_idx, count):
                nbytes = count * qm.SQE_BYTES
                done = sync_copy(group, (fb_rid, dst_idx * qm.SQE_BYTES),
                                 (ring_rid, src_idx * qm.SQE_BYTES), nbytes,
                                 tbox[0] + base)
                tbox[0] = done + int(nbytes * costs.fetch_per_byte_ns)
                self.fetch_transfers += 1
        else:
            fb = self.fetch_buffer

            def via(dst_idx, src_idx, count):
                fb.entries[dst_idx:dst_idx + count] = \
                    qp.sq_ring[src_idx:src_idx + count]
                tbox[0] += base + int(count * qm.SQE_BYTES * costs.fetch_per_byte_ns)
                self.fetch_transfers += 1

        qm.fetch_coalesced(qp, n, self.fetch_buffer, via)
        return tbox[0]

    def _schedule(self, slbas, nbytes, fetch_ts: int, t: int):
        """Derive targets for the batch; returns (targets, t after guard exit)."""
        tc = self.cfg.timing
        state = self.unit.timing_state
        params = state.params
        hold = self.costs.guard_update_ns + tc.guard_hold_ns
        if tc.mode == "aggregated":
            targets, t_exit = schedule_batch_aggregated(
                state, params, slbas, nbytes, fetch_ts, hold)
            return targets, max(t, t_exit)
        targets = np.empty(len(slbas), dtype=np.int64)
        guard = state.guard
        for i in range(len(slbas)):
            _, t = guard.acquire(t, hold)
            targets[i] = schedule_request(state, params, int(slbas[i]),
                                          int(nbytes[i]), fetch_ts)
        return targets, t

    def _process_qp_per_entry(self, qp, n: int, t: int) -> int:
        """Legacy ingest: fetch, decode, schedule, and hand off one entry at
        a time, each with its own fetch timestamp."""
        cfg = self.cfg
        costs = self.costs
        tc = cfg.timing
        state = self.unit.timing_state
        params = state.params
        hold = costs.guard_update_ns + tc.guard_hold_ns
        workers = self.unit.workers
        n_workers = len(workers)
        fb = self.fetch_buffer
        io_size = self.handle.io_region_size
        for _ in range(n):
            t = self._fetch(qp, 1, t)
            fetch_ts = t
            t += costs.decode_entry_ns
            e = fb.entries[0]
            op = int(e["opcode"])
            cid = int(e["cid"])
            slba = int(e["slba"])
            nlb = int(e["nlb"])
            prp = int(e["prp1"])
            nbytes = (nlb + 1) * cfg.block_bytes
            head_snapshot = qp.sq_head
            if op != qm.OP_READ:
                status = qm.STATUS_INVALID_OPCODE
            elif slba + nlb + 1 > cfg.capacity_blocks:
                status = qm.STATUS_LBA_RANGE
            elif prp + nbytes > io_size:
                status = qm.STATUS_BUFFER_RANGE
            else:
                status = 0
            self.fetched_requests += 1
            if status:
                t += costs.post_cqe_ns
                qm.post_completion(qp, cid, head_snapshot, status, now_ns=t)
                self.recorder.errors += 1
                continue
            t += costs.schedule_base_ns + costs.schedule_unit_ns
            if tc.mode == "aggregated":
                targets, t_exit = schedule_batch_aggregated(
                    state, params, np.array([slba], dtype=np.int64),
                    np.array([nbytes], dtype=np.int64), fetch_ts, hold)
                target = int(targets[0])
                t = max(t, t_exit)
            else:
                _, t = state.guard.acquire(t, hold)
                target = schedule_request(state, params, slba, nbytes, fetch_ts)
            t += costs.distribute_record_ns
            rb = RecordBatch(qp, np.array([cid], dtype=np.uint16),
                             np.array([slba], dtype=np.int64),
                             np.array([nlb], dtype=np.uint16),
                             np.array([prp], dtype=np.int64),
                             np.array([int(fb.submit_ns[0])], dtype=np.int64),
                             fetch_ts, np.array([target], dtype=np.int64),
                             head_snapshot)
            w = workers[self._next_worker]
            self._next_worker = (self._next_worker + 1) % n_workers
            w.push(rb, t)
        return t

    def step(self, now_ns: int) -> int | None:
        cfg = self.cfg
        costs = self.costs
        unit = self.unit
        workers = unit.workers
        n_workers = len(workers)
        cap = cfg.local_queue_cap
        t = now_ns
        deferred = False
        qps = unit.qps
        nq = len(qps)
        start = self._rr
        self._rr = (self._rr + 1) % nq
        for k in range(nq):
            qp = qps[(start + k) % nq]
            t += costs.doorbell_poll_ns
            delta = (qp.sq_tail_doorbell - qp.sq_head) & qp.mask
            if delta == 0:
                continue
            if n_workers == 1:
                room = cap - workers[0].queued_records
            else:
                room = min(cap - w.queued_records for w in workers) * n_workers
            n = delta if delta < room else room
            if n <= 0:
                deferred = True
                continue
            if cfg.fetch_mode == "per_entry":
                t = self._process_qp_per_entry(qp, n, t)
                continue
            t = self._fetch(qp, n, t)
            fetch_ts = t
            self.fetched_requests += n

            # Decode from the fetch buffer.
            fb = self.fetch_buffer
            sl = fb.entries[:n]
            t += costs.decode_entry_ns * n
            op = sl["opcode"]
            cids = sl["cid"].copy()
            slbas = sl["slba"].astype(np.int64)
            nlbs = sl["nlb"].copy()
            prps = sl["prp1"].astype(np.int64)
            submit_ns = fb.submit_ns[:n].copy()
            blocks = nlbs.astype(np.int64) + 1
            nbytes = blocks * cfg.block_bytes

            status = np.zeros(n, dtype=np.uint16)
            status[op != qm.OP_READ] = qm.STATUS_INVALID_OPCODE
            bad_lba = (status == 0) & (slbas + blocks > cfg.capacity_blocks)
            status[bad_lba] = qm.STATUS_LBA_RANGE
            bad_buf = (status == 0) & (prps + nbytes > self.handle.io_region_size)
            status[bad_buf] = qm.STATUS_BUFFER_RANGE

            head_snapshot = qp.sq_head
            bad = status != 0
            if bad.any():
                # Decode errors bypass the timing model: immediate completion.
                idx = np.where(bad)[0]
                t += costs.post_cqe_ns * len(idx)
                qm.post_completions_batch(qp, cids[idx], head_snapshot, t,
                                          status[idx])
                self.recorder.errors += len(idx)
                good = np.where(~bad)[0]
                if len(good) == 0:
                    continue
                cids = cids[good]
                slbas = slbas[good]
                nlbs = nlbs[good]
                prps = prps[good]
                nbytes = nbytes[good]
                submit_ns = submit_ns[good]
                n = len(good)

            t += costs.schedule_base_ns + costs.schedule_unit_ns * n
            targets, t = self._schedule(slbas, nbytes, fetch_ts, t)
            t += costs.distribute_record_ns * n

            if n_workers == 1:
                rb = RecordBatch(qp, cids, slbas, nlbs, prps, submit_ns,
                                 fetch_ts, targets, head_snapshot)
                workers[0].push(rb, t)
            else:
                base = self._next_worker
                self._next_worker = (base + n) % n_workers
                for j in range(n_workers):
                    off = (j - base) % n_workers
                    if off >= n:
                        continue
                    sel = slice(off, None, n_workers)
                    rb = RecordBatch(qp, cids[sel].copy(), slbas[sel].copy(),
                                     nlbs[sel].copy(), prps[sel].copy(),
                                     submit_ns[sel].copy(), fetch_ts,
                                     targets[sel].copy(), head_snapshot)
                    workers[j].push(rb, t)

        # New arrivals re-wake via doorbell hooks; partial fetches and full
        # workers re-poll after a deferral delay.
        leftover = any(qp.sq_tail_doorbell != qp.sq_head for qp in qps)
        if leftover:
            return t + (costs.dispatcher_defer_ns if deferred else 0)
        return None


class WorkerAgent(Agent):
    """Backend of one service unit: data transfers and completion posting."""

    def __init__(self, unit, worker_idx: int, cfg: DeviceConfig, handle,
                 ctx: OffloadContext | None):
        super().__init__()
        self.unit = unit
        self.cfg = cfg
        self.costs = cfg.costs
        self.handle = handle
        self.ctx = ctx
        self.name = f"worker{unit.unit_id}.{worker_idx}"
        self.queue: deque[RecordBatch] = deque()
        self.queued_records = 0
        self.recorder = LatencyRecorder()
        self.copies_issued = 0
        self.completions_posted = 0
        self._open_tag: list[list] = []
        self._bb = cfg.block_bytes

    def push(self, rb: RecordBatch, ts_ns: int) -> None:
        """Single producer: the unit's dispatcher."""
        self.queue.append(rb)
        self.queued_records += rb.n
        self.wake(ts_ns)

    # -- completion posting ------------------------------------------------

    def _post_range(self, rb: RecordBatch, lo: int, hi: int, copy_done_ns,
                    t: int) -> int:
        """Post records [lo, hi): visible at max(now, target), never earlier."""
        k = hi - lo
        targets = rb.target_ns[lo:hi]
        rb.copy_done_ns[lo:hi] = copy_done_ns
        vis = np.maximum(t, targets)
        t += self.costs.post_cqe_ns * k
        qm.post_completions_batch(rb.qp, rb.cid[lo:hi], rb.sq_head_snapshot, vis)
        fetch = rb.fetch_ns
        self.recorder.record_batch(vis, targets - fetch, vis - fetch)
        self.completions_posted += k
        if self.handle.trace is not None:
            self.handle.trace_range(rb, lo, hi, vis)
        return t

    def _post_copy_errors(self, rb: RecordBatch, idx: np.ndarray, t: int) -> int:
        codes = np.full(len(idx), qm.STATUS_COPY_FAILED, dtype=np.uint16)
        qm.post_completions_batch(rb.qp, rb.cid[idx], rb.sq_head_snapshot, t, codes)
        self.recorder.errors += len(idx)
        return t + self.costs.post_cqe_ns * len(idx)

    def _apply_batch_completion(self, batch, t: int) -> int:
        if batch.status == COMP_DONE:
            for rb, lo, hi in batch.tag:
                t = self._post_range(rb, lo, hi, batch.done_ns, t)
            return t
        # Copy failure: fold member statuses back onto their records.
        pos = 0
        for rb, lo, hi in batch.tag:
            k = hi - lo
            st = np.array([d.status for d in batch.descs[pos:pos + k]])
            pos += k
            ok = st == COMP_DONE
            if ok.all():
                t = self._post_range(rb, lo, hi, batch.done_ns, t)
                continue
            idx = np.arange(lo, hi)
            t = self._post_copy_errors(rb, idx[~ok], t)
            for i in idx[ok]:
                t = self._post_range(rb, int(i), int(i) + 1, batch.done_ns, t)
        return t

    def _drain_retired(self, t: int) -> int:
        ctx = self.ctx
        if ctx.auto_retired:
            for b in ctx.auto_retired:
                t = self._apply_batch_completion(b, t)
            ctx.auto_retired.clear()
        return t

    # -- transfer issue paths ------------------------------------------------

    def _tag_append_range(self, rb: RecordBatch, lo: int, hi: int) -> None:
        tag = self._open_tag
        if tag and tag[-1][0] is rb and tag[-1][2] == lo:
            tag[-1][2] = hi
        else:
            tag.append([rb, lo, hi])

    def _tag_close(self):
        tag = [(rb, lo, hi) for rb, lo, hi in self._open_tag]
        self._open_tag.clear()
        return tag

    def _issue_engine(self, rb: RecordBatch, lo: int, hi: int, t: int) -> int:
        """Append the range through the offload context (bulk fast path).

        Ranges were validated at decode (LBA vs capacity, data pointer vs
        I/O region), so descriptors go in pre-validated.
        """
        ctx = self.ctx
        bb = self._bb
        k = hi - lo
        t += self.costs.copy_issue_ns * k
        dst_offs = rb.prp[lo:hi].tolist()
        src_offs = (rb.slba[lo:hi] * bb).tolist()
        lens = ((rb.nlb[lo:hi].astype(np.int64) + 1) * bb).tolist()
        issued, t = ctx.issue_block(REGION_IO, dst_offs, REGION_STORE,
                                    src_offs, lens, t)
        end = 0
        for batch, s, e in issued:
            self._tag_append_range(rb, lo + s, lo + e)
            batch.tag = self._tag_close()
            end = e
        if end < k:
            self._tag_append_range(rb, lo + end, hi)
        if ctx.auto_retired:
            t = self._drain_retired(t)
        self.copies_issued += k
        return t

    def _issue_direct(self, rb: RecordBatch, lo: int, hi: int, t: int) -> int:
        costs = self.costs
        bb = self._bb
        regions = self.handle.regions
        io_mv = regions.mview(REGION_IO)
        store_mv = regions.mview(REGION_STORE)
        store_size = self.handle.store_size
        for i in range(lo, hi):
            nbytes = (int(rb.nlb[i]) + 1) * bb
            src = int(rb.slba[i]) * bb
            dst = int(rb.prp[i])
            if src + nbytes > store_size:
                t = self._post_copy_errors(rb, np.array([i]), t)
                continue
            t += costs.cpu_copy_base_ns + int(nbytes * costs.cpu_copy_per_byte_ns)
            io_mv[dst:dst + nbytes] = store_mv[src:src + nbytes]
            t = self._post_range(rb, i, i + 1, t, t)
        self.copies_issued += hi - lo
        return t

    def _issue_none(self, rb: RecordBatch, lo: int, hi: int, t: int) -> int:
        # Ingestion-only mode: no data path; completion paced by target alone.
        return self._post_range(rb, lo, hi, rb.fetch_ns, t)

    def step(self, now_ns: int) -> int | None:
        cfg = self.cfg
        ctx = self.ctx
        t = now_ns + self.costs.sweep_base_ns
        budget = cfg.max_copies_per_iteration

        # Phase 1: storage data transfers for up to the per-iteration budget.
        if not cfg.backend_copy:
            issue = self._issue_none
        elif ctx is not None:
            issue = self._issue_engine
        else:
            issue = self._issue_direct
        while budget > 0 and self.queue:
            rb = self.queue[0]
            lo = rb.issue_pos
            hi = min(rb.n, lo + budget)
            t = issue(rb, lo, hi, t)
            rb.issue_pos = hi
            done = hi - lo
            budget -= done
            self.queued_records -= done
            if hi == rb.n:
                self.queue.popleft()

        # Phase 2: re-evaluate completions (timeout-driven issue and wait).
        nxt = None
        if ctx is not None:
            ce = cfg.copy_engine
            if ctx.batch_should_issue_pending(t, ce.s_timeout_ns):
                t = ctx.batch_issue_pending(t)
                t = self._drain_retired(t)
                ctx.last_issued().tag = self._tag_close()
            if ctx.batch_should_wait(t, ce.c_timeout_ns):
                batch, t = ctx.batch_wait_oldest(t)
                t = self._apply_batch_completion(batch, t)
            for batch in ctx.poll_completions(t):
                t = self._apply_batch_completion(batch, t)
            if ctx.pending_count:
                nxt = ctx.oldest_pending_append_ns + ce.s_timeout_ns
            nc = ctx.next_completion_ns()
            if nc is not None:
                wake = nc if nc > t else t + 1
                if nxt is None or wake < nxt:
                    nxt = wake
        if self.queue:
            nxt = t
        elif nxt is not None and nxt <= t:
            nxt = t + 1
        return nxt


class ServiceUnit:
    """One dispatcher, its workers, an engine group, and a QP partition."""

    def __init__(self, unit_id: int, group: EngineGroup):
        self.unit_id = unit_id
        self.group = group
        self.qps: list[qm.QueuePair] = []
        self.dispatcher: DispatcherAgent | None = None
        self.workers: list[WorkerAgent] = []
        self.timing_state: TimingState | None = None


class DeviceHandle:
    """Running device instance: units, queues, regions, recorders."""

    def __init__(self, cfg: DeviceConfig, scheduler: Scheduler):
        self.cfg = cfg
        self.scheduler = scheduler
        self.regions = RegionTable()
        self.store: BackingStore | None = None
        self.qps: list[qm.QueuePair] = []
        self.units: list[ServiceUnit] = []
        self.timing_states: list[TimingState] = []
        self.io_region_size = 0
        self.store_size = 0
        self.trace: list[RequestRecord] | None = [] if cfg.trace else None
        self._auto_rid = 1 << 20
        self._ring_rids: dict[int, int] = {}

    def regions_auto_register(self, arr: np.ndarray) -> int:
        rid = self._auto_rid
        self._auto_rid += 1
        self.regions.register(rid, np.frombuffer(arr.data, dtype=np.uint8))
        return rid

    def ring_region(self, qp: qm.QueuePair) -> int:
        rid = self._ring_rids.get(qp.qid)
        if rid is None:
            rid = self.regions_auto_register(qp.sq_ring)
            self._ring_rids[qp.qid] = rid
        return rid

    def trace_range(self, rb: RecordBatch, lo: int, hi: int, vis) -> None:
        for i in range(lo, hi):
            self.trace.append(RequestRecord(
                qid=rb.qp.qid, cid=int(rb.cid[i]), slba=int(rb.slba[i]),
                nlb=int(rb.nlb[i]), prp=int(rb.prp[i]),
                submit_ns=int(rb.submit_ns[i]), fetch_ns=int(rb.fetch_ns),
                target_ns=int(rb.target_ns[i]),
                copy_done_ns=int(rb.copy_done_ns[i]),
                posted_ns=int(vis[i - lo])))

    def unit_of(self, qid: int) -> ServiceUnit:
        return self.units[qid % len(self.units)]

    def device_recorders(self) -> list[LatencyRecorder]:
        recs = []
        for u in self.units:
            recs.append(u.dispatcher.recorder)
            recs.extend(w.recorder for w in u.workers)
        return recs

    def counters(self) -> dict:
        return {
            "doorbell_writes": sum(q.doorbell_writes for q in self.qps),
            "fetch_transfers": sum(u.dispatcher.fetch_transfers for u in self.units),
            "fetched_requests": sum(u.dispatcher.fetched_requests for u in self.units),
            "batches_issued": sum(w.ctx.batches_issued
                                  for u in self.units for w in u.workers
                                  if w.ctx is not None),
            "guard_acquisitions": sum(s.guard.acquisitions for s in self.timing_states),
            "completions_posted": sum(q.completions_posted for q in self.qps),
            "copies_issued": sum(w.copies_issued for u in self.units for w in u.workers),
        }

    def outstanding(self) -> int:
        """Requests accepted but not yet completed (drain check)."""
        fetched = sum(u.dispatcher.fetched_requests for u in self.units)
        pending_sq = sum(q.sq_occupancy() for q in self.qps)
        posted = sum(q.completions_posted for q in self.qps)
        return fetched + pending_sq - posted


def device_start(cfg: DeviceConfig, regions: dict[int, object] | None = None,
                 scheduler: Scheduler | None = None) -> DeviceHandle:
    """Validate config, build the backing store, queues, units, and agents."""
    cfg.validate()
    if scheduler is None:
        scheduler = Scheduler()
    handle = DeviceHandle(cfg, scheduler)

    handle.store = BackingStore(cfg.capacity_blocks, cfg.block_bytes,
                                cfg.pattern_seed)
    handle.regions.register(REGION_STORE, handle.store.buf)
    handle.store_size = handle.store.size_bytes()
    if regions:
        for rid, buf in regions.items():
            handle.regions.register(rid, buf)
    if handle.regions.registered(REGION_IO):
        handle.io_region_size = handle.regions.size(REGION_IO)

    n_units = cfg.n_service_units
    groups = group_configure(
        n_units, handle.regions, cfg.copy_engine.wq_depth,
        cfg.copy_engine.pipeline_depth,
        cfg.copy_engine.synthetic_per_copy_cost_ns,
        cfg.copy_engine.synthetic_issue_cost_ns)

    params = derive_params(cfg.timing.t_max_iops,
                           int(cfg.timing.l_min_us * 1000),
                           cfg.timing.n_instances, cfg.timing.unit_bytes,
                           cfg.block_bytes)
    tc = cfg.timing
    if tc.scope == "global":
        shared = TimingState(params, tc.mode, tc.scope)
        states = [shared] * n_units
        handle.timing_states = [shared]
    else:
        states = [TimingState(p, tc.mode, tc.scope)
                  for p in local_model_partition(params, n_units)]
        handle.timing_states = states

    handle.qps = [qm.QueuePair(qid, cfg.queue_depth)
                  for qid in range(cfg.n_queue_pairs)]

    for uid in range(n_units):
        unit = ServiceUnit(uid, groups[uid])
        unit.timing_state = states[uid]
        unit.qps = [qp for qp in handle.qps if qp.qid % n_units == uid]
        handle.units.append(unit)

        # The dispatcher's sync fetch path shares the group's engine without
        # claiming a work queue; workers claim dedicated queues and fall back
        # to direct copies when none remain.
        free_wqs = list(unit.group.wqs)
        unit.dispatcher = DispatcherAgent(unit, cfg, handle)
        for w in range(cfg.workers_per_unit):
            ctx = None
            if cfg.backend_copy and cfg.worker_copy_path == "engine" and free_wqs:
                ctx = OffloadContext(unit.group, free_wqs.pop(0),
                                     cfg.copy_engine.batch_size,
                                     cfg.copy_engine.num_desc)
            worker = WorkerAgent(unit, w, cfg, handle, ctx)
            unit.workers.append(worker)
            scheduler.add(worker)
        scheduler.add(unit.dispatcher)

        disp = unit.dispatcher
        for qp in unit.qps:
            qp.on_doorbell = disp.wake

    return handle


def device_stop(handle: DeviceHandle, run_id: str = "device") -> RunReport:
    """Drain outstanding requests, halt, and return device-side metrics.

    The caller must have stopped submitting; raises if the device cannot
    drain (a lifecycle bug).
    """
    sched = handle.scheduler
    for _ in range(1000):
        sched.run()
        if handle.outstanding() == 0:
            break
        if sched.quiescent():
            raise RuntimeError(
                f"device quiescent with {handle.outstanding()} outstanding")
    else:
        raise RuntimeError("device failed to drain")
    end = max(sched.now_ns, 1)
    return summarize(handle.device_recorders(), [], (0, end), handle.counters(),
                     run_id=run_id, workload="device",
                     config={"t_max_iops": handle.cfg.timing.t_max_iops,
                             "l_min_us": handle.cfg.timing.l_min_us,
                             "n_units": handle.cfg.n_service_units,
                             "mode": handle.cfg.timing.mode},
                     warmup_frac=0.0)
