"""Cooperative virtual-time runtime.

All concurrency in the emulator is expressed as agents stepping on a shared
virtual clock. An agent's step runs to completion in real execution, computes
how much virtual time its work consumed, and either reschedules itself or
goes to sleep until another agent notifies it. The scheduler dispatches
agents strictly in virtual-time order (ties broken by wake sequence), so runs
are bit-deterministic.

Design notes:
- Time is integer nanoseconds throughout; granularity is 1 ns.
- An agent's step may span a window of virtual time. Effects it publishes are
  stamped with intra-step local times, so cross-agent observation error is
  bounded by one step span (microseconds in practice).
- Serialization on shared state is modeled by TimedMutex: acquisition order
  is deterministic event order, and each acquisition occupies the mutex for
  an explicit virtual hold duration.
"""

import heapq

CLOCK_GRANULARITY_NS = 1


class Agent:
    """Base class for cooperatively scheduled actors.

    Subclasses implement step(now_ns) and return the virtual time at which
    they next want to run, or None to sleep until someone calls
    Scheduler.wake() on them.
    """

    name = "agent"

    def __init__(self):
        self._sched = None
        self._wake_ns = None  # earliest pending wake, None = not scheduled

    def step(self, now_ns: int) -> int | None:
        raise NotImplementedError

    def wake(self, ts_ns: int) -> None:
        """Request a wake at ts_ns (clamped to the present by the scheduler)."""
        self._sched.wake(self, ts_ns)


class Scheduler:
    """Virtual-time event loop over a set of agents."""

    def __init__(self, start_ns: int = 0):
        self.now_ns = start_ns
        self._heap: list[tuple[int, int, Agent]] = []
        self._seq = 0
        self.agents: list[Agent] = []
        self.steps_executed = 0

    def add(self, agent: Agent, start_ns: int | None = None) -> None:
        agent._sched = self
        self.agents.append(agent)
        if start_ns is not None:
            self.wake(agent, start_ns)

    def wake(self, agent: Agent, ts_ns: int) -> None:
        ts_ns = int(ts_ns)
        if ts_ns < self.now_ns:
            ts_ns = self.now_ns
        # Keep only the earliest pending wake; later entries are dropped on pop.
        if agent._wake_ns is not None and agent._wake_ns <= ts_ns:
            return
        agent._wake_ns = ts_ns
        self._seq += 1
        heapq.heappush(self._heap, (ts_ns, self._seq, agent))

    def run(self, until_ns: int | None = None, max_steps: int | None = None) -> int:
        """Dispatch events until the heap drains (quiescence) or until_ns passes.

        Returns the number of steps executed.
        """
        heap = self._heap
        executed = 0
        while heap:
            ts, _, agent = heap[0]
            if until_ns is not None and ts > until_ns:
                break
            heapq.heappop(heap)
            if agent._wake_ns != ts:
                continue  # superseded by an earlier wake
            agent._wake_ns = None
            self.now_ns = ts
            nxt = agent.step(ts)
            executed += 1
            if nxt is not None:
                self.wake(agent, nxt)
            if max_steps is not None and executed >= max_steps:
                break
        self.steps_executed += executed
        return executed

    def quiescent(self) -> bool:
        return not self._heap


class TimedMutex:
    """Mutual exclusion in the virtual time domain.

    acquire() serializes callers: the caller's critical section starts no
    earlier than the previous holder's release. Acquisition order is the
    order in which acquire() is called (deterministic event order).
    """

    def __init__(self):
        self.free_at_ns = 0
        self.acquisitions = 0
        self.busy_ns = 0

    def acquire(self, now_ns: int, hold_ns: int) -> tuple[int, int]:
        """Acquire at local time now_ns, holding for hold_ns.

        Returns (enter_ns, exit_ns); the caller's local clock becomes exit_ns.
        """
        enter = self.free_at_ns if self.free_at_ns > now_ns else now_ns
        exit_ns = enter + hold_ns
        self.free_at_ns = exit_ns
        self.acquisitions += 1
        self.busy_ns += hold_ns
        return enter, exit_ns
