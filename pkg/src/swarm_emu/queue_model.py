"""NVMe-style submission/completion queue pairs.

Rings are byte-exact: submission entries are 64 bytes, completion entries 16
bytes, laid out via numpy structured dtypes with explicit field offsets, and
allocated contiguously (the contiguous-queues controller contract). Doorbells
are plain shared words; ring payloads are published before the doorbell
value, which the cooperative runtime guarantees by construction.

Roles are exclusive: one submitter and one dispatcher per SQ, one producer
(or unit-serialized producers) and one consumer per CQ. Under those roles no
locking is needed.

Emulator-side shadow state (not part of the wire layout):
- per-SQ-slot submit timestamps, so the device can attribute queuing delay;
- per-CQ-slot visibility timestamps, so a completion posted with a future
  effective time is never observed early by the consumer.
"""

import numpy as np

SQE_BYTES = 64
CQE_BYTES = 16

SQE_DTYPE = np.dtype({
    "names": ["opcode", "cid", "nsid", "prp1", "slba", "nlb"],
    "formats": ["u1", "<u2", "<u4", "<u8", "<u8", "<u2"],
    "offsets": [0, 2, 4, 24, 40, 48],
    "itemsize": SQE_BYTES,
})

CQE_DTYPE = np.dtype({
    "names": ["sq_head", "sqid", "cid", "status"],
    "formats": ["<u2", "<u2", "<u2", "<u2"],
    "offsets": [8, 10, 12, 14],
    "itemsize": CQE_BYTES,
})

OP_READ = 0x02

STATUS_SUCCESS = 0
STATUS_INVALID_OPCODE = 1
STATUS_LBA_RANGE = 2
STATUS_BUFFER_RANGE = 3
STATUS_COPY_FAILED = 4


def make_sqe(cid: int, slba: int, nlb: int, prp1: int, opcode: int = OP_READ,
             nsid: int = 1) -> np.void:
    """Build one 64-byte submission entry."""
    e = np.zeros((), dtype=SQE_DTYPE)
    e["opcode"] = opcode
    e["cid"] = cid
    e["nsid"] = nsid
    e["prp1"] = prp1
    e["slba"] = slba
    e["nlb"] = nlb
    return e


class QueuePair:
    """One SQ/CQ pair with software doorbells and phase-bit semantics."""

    def __init__(self, qid: int, depth: int = 1024):
        if depth < 2 or depth & (depth - 1):
            raise ValueError("queue depth must be a power of two >= 2")
        self.qid = qid
        self.depth = depth
        self.mask = depth - 1
        self.sq_ring = np.zeros(depth, dtype=SQE_DTYPE)
        self.cq_ring = np.zeros(depth, dtype=CQE_DTYPE)
        # Shared doorbell words.
        self.sq_tail_doorbell = 0  # written by submitter
        self.cq_head_doorbell = 0  # written by consumer
        # Private indices.
        self.sq_head = 0           # dispatcher-private
        self.cq_tail = 0           # producer-private
        self.cq_phase_producer = 1
        self.cq_phase_consumer = 1
        # Shadow instrumentation (virtual-time metadata, not wire bytes).
        self.sq_submit_ns = np.zeros(depth, dtype=np.int64)
        self.cq_visible_ns = np.zeros(depth, dtype=np.int64)
        # Counters.
        self.doorbell_writes = 0
        self.completions_posted = 0
        self._sq_read_prefilled = False
        # Wake hooks installed by the owning dispatcher / consumer.
        self.on_doorbell = None    # callable(ts_ns)
        self.on_completion = None  # callable(ts_ns)
        # Precomputed field views (share ring memory).
        self._sq_op = self.sq_ring["opcode"]
        self._sq_cid = self.sq_ring["cid"]
        self._sq_nsid = self.sq_ring["nsid"]
        self._sq_prp = self.sq_ring["prp1"]
        self._sq_slba = self.sq_ring["slba"]
        self._sq_nlb = self.sq_ring["nlb"]
        self._cq_head_f = self.cq_ring["sq_head"]
        self._cq_sqid_f = self.cq_ring["sqid"]
        self._cq_cid_f = self.cq_ring["cid"]
        self._cq_status_f = self.cq_ring["status"]

    # -- occupancy ---------------------------------------------------------

    def sq_occupancy(self) -> int:
        return (self.sq_tail_doorbell - self.sq_head) & self.mask

    def sq_free_slots(self) -> int:
        return self.depth - 1 - self.sq_occupancy()

    def cq_occupancy(self) -> int:
        return (self.cq_tail - self.cq_head_doorbell) & self.mask

    def __repr__(self):
        return (f"QueuePair(qid={self.qid}, depth={self.depth}, "
                f"sq_tail={self.sq_tail_doorbell}, sq_head={self.sq_head}, "
                f"cq_tail={self.cq_tail}, cq_head={self.cq_head_doorbell})")


def doorbell_delta(old_tail: int, new_tail: int, depth: int) -> int:
    """Entries published between two doorbell readings; 0 means idle."""
    if old_tail >= depth or new_tail >= depth:
        raise ValueError(f"corrupted doorbell: {old_tail}, {new_tail} vs depth {depth}")
    return (new_tail - old_tail) % depth


def submit(qp: QueuePair, entries, now_ns: int = 0) -> None:
    """Write entries at consecutive tail slots and ring the doorbell once.

    The caller must be the sole submitter and must have verified free slots
    (the backpressure contract); violations are programming errors.
    """
    arr = np.asarray(entries, dtype=SQE_DTYPE)
    n = arr.shape[0] if arr.ndim else 1
    arr = arr.reshape(n)
    if n > qp.sq_free_slots():
        raise AssertionError(
            f"submit of {n} entries with only {qp.sq_free_slots()} free slots "
            f"(caller must back off)")
    tail = qp.sq_tail_doorbell
    first = min(n, qp.depth - tail)
    qp.sq_ring[tail:tail + first] = arr[:first]
    qp.sq_submit_ns[tail:tail + first] = now_ns
    if n > first:
        qp.sq_ring[0:n - first] = arr[first:]
        qp.sq_submit_ns[0:n - first] = now_ns
    qp.sq_tail_doorbell = (tail + n) & qp.mask
    qp.doorbell_writes += 1
    if qp.on_doorbell is not None:
        qp.on_doorbell(now_ns)


def submit_fields(qp: QueuePair, cids, slbas, nlbs, prps, now_ns: int,
                  doorbell_updates: int = 1) -> None:
    """Vectorized submit for read commands (hot path).

    doorbell_updates models how many doorbell writes the submitter performed
    for these entries (1 for a coalesced warp, n for per-request submission);
    the final doorbell value is identical either way. The constant opcode and
    namespace fields are pre-filled ring-wide on first use.
    """
    n = len(cids)
    if n > qp.sq_free_slots():
        raise AssertionError("submit_fields overflow: caller must back off")
    if not qp._sq_read_prefilled:
        qp._sq_op[:] = OP_READ
        qp._sq_nsid[:] = 1
        qp._sq_read_prefilled = True
    tail = qp.sq_tail_doorbell
    first = min(n, qp.depth - tail)
    if n <= first:
        hi = tail + n
        qp._sq_cid[tail:hi] = cids
        qp._sq_slba[tail:hi] = slbas
        qp._sq_nlb[tail:hi] = nlbs
        qp._sq_prp[tail:hi] = prps
        qp.sq_submit_ns[tail:hi] = now_ns
    else:
        for lo, hi, s in ((tail, tail + first, slice(0, first)),
                          (0, n - first, slice(first, n))):
            qp._sq_cid[lo:hi] = cids[s]
            qp._sq_slba[lo:hi] = slbas[s]
            qp._sq_nlb[lo:hi] = nlbs[s]
            qp._sq_prp[lo:hi] = prps[s]
            qp.sq_submit_ns[lo:hi] = now_ns
    qp.sq_tail_doorbell = (tail + n) & qp.mask
    qp.doorbell_writes += doorbell_updates
    if qp.on_doorbell is not None:
        qp.on_doorbell(now_ns)


class FetchBuffer:
    """Per-dispatcher staging area sized to one full SQ ring.

    Contents are valid only between a fetch and the decode that follows it.
    """

    def __init__(self, depth: int):
        self.depth = depth
        self.entries = np.zeros(depth, dtype=SQE_DTYPE)
        self.submit_ns = np.zeros(depth, dtype=np.int64)
        self.valid = 0

    def bytes_capacity(self) -> int:
        return self.depth * SQE_BYTES


def fetch_coalesced(qp: QueuePair, n: int, dst: FetchBuffer,
                    via=None) -> list[tuple[int, int]]:
    """Move n entries from sq_head onward into dst using at most 2 transfers.

    Returns the transfer segments as (entry offset in ring, byte length).
    `via(dst_entry_index, src_entry_index, entry_count)` performs each
    segment's transfer (copy-engine sync path or direct copy); when None a
    plain memory copy is used.
    """
    if n < 1:
        raise ValueError("fetch of zero entries")
    if n > qp.sq_occupancy():
        raise AssertionError("fetch beyond published tail")
    head = qp.sq_head
    first = min(n, qp.depth - head)
    segments = [(head, first * SQE_BYTES)]
    if n > first:
        segments.append((0, (n - first) * SQE_BYTES))
    if via is None:
        dst.entries[0:first] = qp.sq_ring[head:head + first]
        if n > first:
            dst.entries[first:n] = qp.sq_ring[0:n - first]
    else:
        via(0, head, first)
        if n > first:
            via(first, 0, n - first)
    dst.submit_ns[0:first] = qp.sq_submit_ns[head:head + first]
    if n > first:
        dst.submit_ns[first:n] = qp.sq_submit_ns[0:n - first]
    dst.valid = n
    qp.sq_head = (head + n) & qp.mask
    return segments


def post_completion(qp: QueuePair, cid: int, sq_head_snapshot: int,
                    status_code: int = STATUS_SUCCESS, now_ns: int = 0,
                    visible_ns: int | None = None, notify: bool = True) -> None:
    """Write one completion entry with the current producer phase.

    visible_ns defers consumer visibility to a future virtual time (used to
    realize target completion times exactly); default is immediate.
    """
    assert qp.cq_occupancy() < qp.depth - 1, "CQ full: outstanding exceeded depth-1"
    tail = qp.cq_tail
    qp._cq_head_f[tail] = sq_head_snapshot
    qp._cq_sqid_f[tail] = qp.qid
    qp._cq_cid_f[tail] = cid
    qp._cq_status_f[tail] = (status_code << 1) | qp.cq_phase_producer
    vis = now_ns if visible_ns is None else visible_ns
    qp.cq_visible_ns[tail] = vis
    qp.cq_tail = (tail + 1) & qp.mask
    if qp.cq_tail == 0:
        qp.cq_phase_producer ^= 1
    qp.completions_posted += 1
    if notify and qp.on_completion is not None:
        qp.on_completion(vis)


def post_completions_batch(qp: QueuePair, cids, sq_head_snapshot: int,
                           visible_ns, status_codes=None) -> None:
    """Vectorized post of several completions (same producer semantics).

    visible_ns may be scalar or per-entry; entries should be ordered by
    nondecreasing visibility to avoid head-of-line blocking at the consumer.
    """
    n = len(cids)
    if n == 0:
        return
    assert qp.cq_occupancy() + n <= qp.depth - 1, "CQ full"
    tail = qp.cq_tail
    if n <= qp.depth - tail:
        hi = tail + n
        qp._cq_head_f[tail:hi] = sq_head_snapshot
        qp._cq_sqid_f[tail:hi] = qp.qid
        qp._cq_cid_f[tail:hi] = cids
        if status_codes is None:
            qp._cq_status_f[tail:hi] = qp.cq_phase_producer
        else:
            qp._cq_status_f[tail:hi] = \
                (np.asarray(status_codes, dtype=np.uint16) << 1) | qp.cq_phase_producer
        qp.cq_visible_ns[tail:hi] = visible_ns
        tail = hi & qp.mask
        if tail == 0:
            qp.cq_phase_producer ^= 1
        qp.cq_tail = tail
    else:
        vis = np.broadcast_to(np.asarray(visible_ns, dtype=np.int64), (n,))
        codes = (None if status_codes is None
                 else np.asarray(status_codes, dtype=np.uint16))
        done = 0
        while done < n:
            first = min(n - done, qp.depth - tail)
            lo, hi = tail, tail + first
            s = slice(done, done + first)
            qp._cq_head_f[lo:hi] = sq_head_snapshot
            qp._cq_sqid_f[lo:hi] = qp.qid
            qp._cq_cid_f[lo:hi] = cids[s]
            if codes is None:
                qp._cq_status_f[lo:hi] = qp.cq_phase_producer
            else:
                qp._cq_status_f[lo:hi] = (codes[s] << 1) | qp.cq_phase_producer
            qp.cq_visible_ns[lo:hi] = vis[s]
            tail = (tail + first) & qp.mask
            if tail == 0:
                qp.cq_phase_producer ^= 1
            done += first
        qp.cq_tail = tail
    qp.completions_posted += n
    if qp.on_completion is not None:
        vfirst = visible_ns[0] if hasattr(visible_ns, "__len__") else visible_ns
        qp.on_completion(int(vfirst))


def consume_completions(qp: QueuePair, max_n: int,
                        now_ns: int | None = None) -> np.ndarray:
    """Return up to max_n phase-valid entries in ring order.

    Advances the consumer head, writes the CQ head doorbell, and flips the
    expected phase on wrap. Entries whose visibility time lies beyond now_ns
    are not yet observable.
    """
    out = []
    taken = 0
    head = qp.cq_head_doorbell
    while taken < max_n:
        limit = qp.depth  # contiguous run up to ring end
        run = min(max_n - taken, limit - head)
        if run == 0:
            break
        st = qp._cq_status_f[head:head + run]
        ok = (st & 1) == qp.cq_phase_consumer
        if now_ns is not None:
            ok = ok & (qp.cq_visible_ns[head:head + run] <= now_ns)
        k = int(ok.argmin()) if not ok.all() else run
        if k == 0:
            break
        out.append(qp.cq_ring[head:head + k].copy())
        head += k
        taken += k
        if head == qp.depth:
            head = 0
            qp.cq_phase_consumer ^= 1
        if k < run:
            break
    if taken:
        qp.cq_head_doorbell = head
    if not out:
        return np.empty(0, dtype=CQE_DTYPE)
    return out[0] if len(out) == 1 else np.concatenate(out)


def next_visible_ns(qp: QueuePair) -> int | None:
    """Visibility time of the next pending completion, if any (consumer side)."""
    head = qp.cq_head_doorbell
    st = int(qp._cq_status_f[head])
    if (st & 1) != qp.cq_phase_consumer:
        return None
    return int(qp.cq_visible_ns[head])


def dump_ring(qp: QueuePair, which: str) -> list[str]:
    """Debug dump: one line per entry, hex bytes."""
    ring = qp.sq_ring if which == "sq" else qp.cq_ring
    raw = np.frombuffer(ring.data, dtype=np.uint8).reshape(qp.depth, -1)
    return [f"{i:4d}: {bytes(row).hex()}" for i, row in enumerate(raw)]
