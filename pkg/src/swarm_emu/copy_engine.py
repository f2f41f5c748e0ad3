"""Offload engine for emulated data transfers.

Software analog of a streaming copy accelerator: groups of work queues and a
pipelined engine execute copy descriptors and batch descriptors (an array of
copies issued as one unit, amortizing issue overhead). Owners drive transfers
through a per-agent offload context offering an asynchronous, batched issue
path plus a synchronous non-batched path.

Execution timing lives in the virtual clock domain. The engine overlaps up to
pipeline_depth copies; synthetic per-copy and per-issue costs (default 0)
make offload-efficiency experiments reproducible without the hardware.

Byte movement is performed when a descriptor is executed by the engine model.
Sources must stay stable until the descriptor completes (single-owner work
queues and the device's read-only backing store guarantee this here).
"""

from collections import deque

from .memory import RegionTable

COMP_PENDING = 0
COMP_DONE = 1
COMP_ERR_RANGE = 2

_WQS_PER_GROUP = 2


class CopyEngineError(RuntimeError):
    pass


class CopyDescriptor:
    """One copy: (region, offset) -> (region, offset), length bytes.

    validated marks descriptors whose ranges the issuer already checked,
    letting the engine skip re-validation.
    """

    __slots__ = ("src", "dst", "length", "status", "done_ns", "validated")

    def __init__(self):
        self.src = (0, 0)
        self.dst = (0, 0)
        self.length = 0
        self.status = COMP_PENDING
        self.done_ns = 0
        self.validated = False


class BatchDescriptor:
    """An array of copies executed as one unit; one completion record.

    Member error statuses fold into the batch status (worst wins). The
    completion record is never observable before all member copies are.
    """

    __slots__ = ("descs", "status", "issue_ns", "start_ns", "done_ns", "tag")

    def __init__(self, descs, issue_ns):
        self.descs = descs
        self.status = COMP_PENDING
        self.issue_ns = issue_ns
        self.start_ns = 0
        self.done_ns = 0
        self.tag = None

    def __len__(self):
        return len(self.descs)


class WorkQueue:
    """Bounded descriptor queue in dedicated mode: one owner, FIFO order."""

    def __init__(self, wq_id: int, depth: int = 32):
        self.wq_id = wq_id
        self.depth = depth
        self.owner = None
        self.in_flight = 0

    def claim(self, owner) -> None:
        if self.owner is not None:
            raise ValueError(f"work queue {self.wq_id} already owned")
        self.owner = owner

    def release(self) -> None:
        self.owner = None
        self.in_flight = 0


class EngineGroup:
    """Two work queues served by one pipelined engine.

    The engine starts one copy per pipeline slot; with a synthetic per-copy
    cost c and pipeline depth P, sustained throughput is P/c while each copy
    still takes c end to end. Queue interleaving follows issue order, which
    under one owner per queue realizes round-robin service across the group's
    queues and FIFO order within each.
    """

    def __init__(self, gid: int, regions: RegionTable, wq_depth: int = 32,
                 pipeline_depth: int = 8, per_copy_cost_ns: int = 0,
                 issue_cost_ns: int = 0):
        if pipeline_depth < 1:
            raise ValueError("pipeline_depth must be >= 1")
        self.gid = gid
        self.regions = regions
        self.wqs = [WorkQueue(gid * _WQS_PER_GROUP + i, wq_depth)
                    for i in range(_WQS_PER_GROUP)]
        self.pipeline_depth = pipeline_depth
        self.per_copy_cost_ns = per_copy_cost_ns
        self.issue_cost_ns = issue_cost_ns
        self._lane_done = [0] * pipeline_depth
        self._lane_next = 0
        self.copies_executed = 0
        self.bytes_copied = 0

    def _exec_one(self, desc: CopyDescriptor, at_ns: int) -> int:
        lanes = self._lane_done
        li = self._lane_next
        self._lane_next = (li + 1) % self.pipeline_depth
        free = lanes[li]
        start = free if free > at_ns else at_ns
        done = start + self.per_copy_cost_ns
        lanes[li] = done
        regions = self.regions
        if desc.validated or (
                regions.in_range(desc.dst[0], desc.dst[1], desc.length)
                and regions.in_range(desc.src[0], desc.src[1], desc.length)):
            regions.copy(desc.dst, desc.src, desc.length)
            desc.status = COMP_DONE
            self.bytes_copied += desc.length
        else:
            desc.status = COMP_ERR_RANGE
        desc.done_ns = done
        self.copies_executed += 1
        return done

    def exec_batch(self, batch: BatchDescriptor, at_ns: int) -> int:
        """Execute all member copies; returns (and records) completion time."""
        descs = batch.descs
        if self.per_copy_cost_ns == 0:
            # Instantaneous lanes: straight copy loop with cached views.
            regions = self.regions
            mvd = regions._mv
            status = COMP_DONE
            lsr = ldr = -1
            smv = dmv = None
            nbytes = 0
            for d in descs:
                srid, soff = d.src
                drid, doff = d.dst
                if not d.validated and not (
                        regions.in_range(drid, doff, d.length)
                        and regions.in_range(srid, soff, d.length)):
                    d.status = COMP_ERR_RANGE
                    d.done_ns = at_ns
                    status = COMP_ERR_RANGE
                    continue
                if srid != lsr:
                    smv = mvd[srid]
                    lsr = srid
                if drid != ldr:
                    dmv = mvd[drid]
                    ldr = drid
                ln = d.length
                dmv[doff:doff + ln] = smv[soff:soff + ln]
                d.status = COMP_DONE
                d.done_ns = at_ns
                nbytes += ln
            self.copies_executed += len(descs)
            self.bytes_copied += nbytes
            batch.start_ns = at_ns
            batch.status = status
            batch.done_ns = at_ns
            return at_ns
        done = at_ns
        status = COMP_DONE
        batch.start_ns = max(at_ns, min(self._lane_done))
        for d in descs:
            t = self._exec_one(d, at_ns)
            if t > done:
                done = t
            if d.status != COMP_DONE:
                status = max(status, d.status)
        batch.status = status
        batch.done_ns = done
        return done


def group_configure(n_groups: int, regions: RegionTable, wq_depth: int = 32,
                    pipeline_depth: int = 8, per_copy_cost_ns: int = 0,
                    issue_cost_ns: int = 0) -> list[EngineGroup]:
    """Create n_groups engine groups (one engine, two empty WQs each)."""
    if n_groups < 1:
        raise ValueError("n_groups must be >= 1")
    return [EngineGroup(g, regions, wq_depth, pipeline_depth,
                        per_copy_cost_ns, issue_cost_ns)
            for g in range(n_groups)]


def sync_copy(group: EngineGroup, dst: tuple[int, int], src: tuple[int, int],
              length: int, now_ns: int) -> int:
    """Issue one descriptor and poll it to completion; returns finish time."""
    if length < 1:
        raise ValueError("copy length must be >= 1")
    d = CopyDescriptor()
    d.src = src
    d.dst = dst
    d.length = length
    done = group._exec_one(d, now_ns + group.issue_cost_ns)
    if d.status != COMP_DONE:
        raise CopyEngineError(
            f"sync copy failed with status {d.status}: {src} -> {dst} ({length} B)")
    return done


class OffloadContext:
    """Per-agent handle for asynchronous, batched copy offloading.

    Owns one dedicated work queue. Appended copies accumulate in a pending
    batch that auto-issues at batch_size; at most num_desc batch descriptors
    are in flight (the per-context work queue depth budget). Descriptors are
    preallocated and reused across requests.
    """

    def __init__(self, group: EngineGroup, wq: WorkQueue, batch_size: int = 16,
                 num_desc: int = 32):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if num_desc < 1 or num_desc > wq.depth:
            raise ValueError(f"num_desc must be in [1, {wq.depth}]")
        wq.claim(self)
        self.group = group
        self.wq = wq
        self.batch_size = batch_size
        self.num_desc = num_desc
        self._free: list[CopyDescriptor] = [
            CopyDescriptor() for _ in range(batch_size * (num_desc + 1))]
        self._pending: list[CopyDescriptor] = []
        self._in_flight: deque[BatchDescriptor] = deque()
        self.oldest_pending_append_ns: int | None = None
        # Batches retired by the implicit wait inside an auto-issue; the
        # owner drains these to observe their completions.
        self.auto_retired: list[BatchDescriptor] = []
        self.batches_issued = 0
        self.copies_issued = 0
        self.issue_cost_total_ns = 0
        self.wait_time_total_ns = 0

    # -- issue path ----------------------------------------------------------

    def batch_issue_async(self, dst: tuple[int, int], src: tuple[int, int],
                          length: int, now_ns: int) -> tuple[bool, int]:
        """Append one copy; auto-issue when the pending batch fills.

        Returns (issued, caller time after the call).
        """
        if length < 1:
            raise ValueError("copy length must be >= 1")
        regions = self.group.regions
        if not regions.in_range(dst[0], dst[1], length):
            raise ValueError(f"destination out of range: {dst} +{length}")
        if not regions.in_range(src[0], src[1], length):
            raise ValueError(f"source out of range: {src} +{length}")
        d = self._free.pop() if self._free else CopyDescriptor()
        d.src = src
        d.dst = dst
        d.length = length
        d.status = COMP_PENDING
        d.validated = True
        if not self._pending:
            self.oldest_pending_append_ns = now_ns
        self._pending.append(d)
        if len(self._pending) >= self.batch_size:
            return True, self._issue(now_ns)
        return False, now_ns

    def issue_block(self, dst_rid: int, dst_offs, src_rid: int, src_offs,
                    lens, now_ns: int):
        """Append a pre-validated block of copies (device worker hot path).

        The caller has already charged its per-append costs and checked all
        ranges. Returns (issued, now) where issued lists
        (batch, first_append_index, end_append_index) for every batch the
        block caused to auto-issue; indices are within this block.

        With both synthetic engine costs at zero, the copy executes inline at
        append time: the engine would complete it at the same virtual instant
        the batch is issued, so the observable state is identical.
        """
        issued = []
        free = self._free
        pending = self._pending
        bs = self.batch_size
        group = self.group
        fused = group.per_copy_cost_ns == 0 and group.issue_cost_ns == 0
        if fused:
            mvd = group.regions._mv
            smv = mvd[src_rid]
            dmv = mvd[dst_rid]
            nbytes = 0
        for i in range(len(dst_offs)):
            d = free.pop() if free else CopyDescriptor()
            ln = lens[i]
            soff = src_offs[i]
            doff = dst_offs[i]
            d.src = (src_rid, soff)
            d.dst = (dst_rid, doff)
            d.length = ln
            d.validated = True
            if fused:
                dmv[doff:doff + ln] = smv[soff:soff + ln]
                d.status = COMP_DONE
                nbytes += ln
            else:
                d.status = COMP_PENDING
            if not pending:
                self.oldest_pending_append_ns = now_ns
            pending.append(d)
            if len(pending) >= bs:
                start = issued[-1][2] if issued else 0
                now_ns = (self._issue_prefilled(now_ns) if fused
                          else self._issue(now_ns))
                issued.append((self._in_flight[-1], start, i + 1))
                pending = self._pending
        if fused:
            group.copies_executed += len(dst_offs)
            group.bytes_copied += nbytes
        return issued, now_ns

    def _issue_prefilled(self, now_ns: int) -> int:
        """Issue a batch whose member copies already executed inline."""
        if len(self._in_flight) >= self.num_desc:
            retired, now_ns = self.batch_wait_oldest(now_ns)
            self.auto_retired.append(retired)
        batch = BatchDescriptor(self._pending, now_ns)
        batch.status = COMP_DONE
        batch.start_ns = now_ns
        batch.done_ns = now_ns
        for d in self._pending:
            d.done_ns = now_ns
        self._pending = []
        self.oldest_pending_append_ns = None
        self.wq.in_flight += 1
        self._in_flight.append(batch)
        self.batches_issued += 1
        self.copies_issued += len(batch)
        return now_ns

    def _issue(self, now_ns: int) -> int:
        if len(self._in_flight) >= self.num_desc:
            retired, now_ns = self.batch_wait_oldest(now_ns)
            self.auto_retired.append(retired)
        cost = self.group.issue_cost_ns
        now_ns += cost
        self.issue_cost_total_ns += cost
        batch = BatchDescriptor(self._pending, now_ns)
        self._pending = []
        self.oldest_pending_append_ns = None
        self.wq.in_flight += 1
        self.group.exec_batch(batch, now_ns)
        self._in_flight.append(batch)
        self.batches_issued += 1
        self.copies_issued += len(batch)
        return now_ns

    def batch_should_issue_pending(self, now_ns: int, s_timeout_ns: int) -> bool:
        """Forward-progress rule: flush a partial batch once it has aged."""
        return (bool(self._pending)
                and now_ns - self.oldest_pending_append_ns >= s_timeout_ns)

    def batch_issue_pending(self, now_ns: int) -> int:
        """Flush the pending batch (possibly short); no-op when empty."""
        if not self._pending:
            return now_ns
        if self._pending[0].status == COMP_DONE:
            # Prefilled by issue_block's fused path.
            return self._issue_prefilled(now_ns)
        return self._issue(now_ns)

    # -- completion path -------------------------------------------------------

    def batch_should_wait(self, now_ns: int, c_timeout_ns: int) -> bool:
        """True when the oldest batch has aged past c_timeout or the budget is full.

        The budget-full case is required so issuing never deadlocks.
        """
        if not self._in_flight:
            return False
        if len(self._in_flight) >= self.num_desc:
            return True
        return now_ns - self._in_flight[0].issue_ns >= c_timeout_ns

    def batch_wait_oldest(self, now_ns: int) -> tuple[BatchDescriptor, int]:
        """Poll the oldest in-flight batch to completion and retire it."""
        if not self._in_flight:
            raise RuntimeError("wait with no in-flight batch")
        batch = self._in_flight.popleft()
        self.wq.in_flight -= 1
        if batch.done_ns > now_ns:
            self.wait_time_total_ns += batch.done_ns - now_ns
            now_ns = batch.done_ns
        self._free.extend(batch.descs)
        return batch, now_ns

    def poll_completions(self, now_ns: int) -> list[BatchDescriptor]:
        """Retire every completed in-flight batch without blocking.

        FIFO-prefix only: an incomplete oldest batch hides newer completions,
        preserving in-order accounting.
        """
        out = []
        q = self._in_flight
        while q and q[0].done_ns <= now_ns:
            batch = q.popleft()
            self.wq.in_flight -= 1
            self._free.extend(batch.descs)
            out.append(batch)
        return out

    def next_completion_ns(self) -> int | None:
        """Completion time of the oldest in-flight batch (wake planning)."""
        return self._in_flight[0].done_ns if self._in_flight else None

    def last_issued(self) -> BatchDescriptor:
        """Most recently issued batch (for owner-side tagging)."""
        return self._in_flight[-1]

    @property
    def in_flight_count(self) -> int:
        return len(self._in_flight)

    @property
    def pending_count(self) -> int:
        return len(self._pending)

    def release(self) -> None:
        self.wq.release()


def ctx_init(group: EngineGroup, wq: WorkQueue, batch_size: int = 16,
             num_desc: int = 32) -> OffloadContext:
    """Set up a per-agent offload context bound to an unowned work queue."""
    return OffloadContext(group, wq, batch_size, num_desc)
