"""Scheduler and virtual-mutex behavior."""

import pytest

from swarm_emu.runtime import Agent, Scheduler, TimedMutex


class Ticker(Agent):
    def __init__(self, period, stop, log, tag):
        super().__init__()
        self.period = period
        self.stop = stop
        self.log = log
        self.tag = tag

    def step(self, now):
        self.log.append((now, self.tag))
        nxt = now + self.period
        return nxt if nxt <= self.stop else None


def test_events_run_in_time_order():
    sched = Scheduler()
    log = []
    sched.add(Ticker(30, 100, log, "a"), start_ns=0)
    sched.add(Ticker(50, 100, log, "b"), start_ns=5)
    sched.run()
    times = [t for t, _ in log]
    assert times == sorted(times)
    assert log[0] == (0, "a") and log[1] == (5, "b")


def test_wake_keeps_earliest_and_clamps_past():
    sched = Scheduler()
    hits = []

    class Once(Agent):
        def step(self, now):
            hits.append(now)
            return None

    a = Once()
    sched.add(a)
    sched.wake(a, 100)
    sched.wake(a, 50)   # earlier wins
    sched.wake(a, 200)  # ignored: already pending earlier
    sched.run()
    assert hits == [50]

    sched.wake(a, 10)   # in the past relative to now=50
    sched.run()
    assert hits == [50, 50]


def test_run_until_stops_before_later_events():
    sched = Scheduler()
    log = []
    sched.add(Ticker(100, 1000, log, "x"), start_ns=0)
    sched.run(until_ns=250)
    assert [t for t, _ in log] == [0, 100, 200]
    sched.run()
    assert log[-1][0] == 1000


def test_determinism_same_seed_same_trace():
    def trace():
        sched = Scheduler()
        log = []
        for i, p in enumerate((7, 11, 13)):
            sched.add(Ticker(p, 500, log, i), start_ns=i)
        sched.run()
        return log

    assert trace() == trace()


def test_timed_mutex_serializes_holders():
    m = TimedMutex()
    enter1, exit1 = m.acquire(100, hold_ns=50)
    assert (enter1, exit1) == (100, 150)
    # Second caller arrives while held: pushed back to the release time.
    enter2, exit2 = m.acquire(120, hold_ns=50)
    assert (enter2, exit2) == (150, 200)
    # Idle gap: acquisition at arrival time.
    enter3, exit3 = m.acquire(500, hold_ns=10)
    assert (enter3, exit3) == (500, 510)
    assert m.acquisitions == 3
    assert m.busy_ns == 110


def test_mutex_throughput_bounded_by_hold():
    m = TimedMutex()
    t = 0
    for _ in range(1000):
        _, t = m.acquire(t, hold_ns=2000)
    assert t == 1000 * 2000


def test_unstarted_agent_never_steps():
    sched = Scheduler()
    log = []
    a = Ticker(10, 100, log, "never")
    sched.add(a)  # no start time: sleeps until woken
    sched.run()
    assert log == []


def test_step_exception_propagates():
    class Boom(Agent):
        def step(self, now):
            raise RuntimeError("boom")

    sched = Scheduler()
    sched.add(Boom(), start_ns=0)
    with pytest.raises(RuntimeError):
        sched.run()
