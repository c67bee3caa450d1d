"""Per-core scheduling decisions.

FreeRTOS-style fixed-priority preemption (FP, RM, DM) with tick-driven
round robin among equal priorities, and EDF. Interrupt handler jobs form a
class above every periodic job regardless of policy.

The functions here are pure decisions over a CoreSchedState; the engine owns
time, overheads and execution.
"""

from __future__ import annotations

import math
from bisect import insort
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

from tokisim.model import Task

PERIODIC = 1
HANDLER = 2

PREEMPT = "preempt"
NO_PREEMPT = "no_preempt"

SCHEDULABLE = "schedulable"
UNKNOWN = "unknown"
OVERLOADED = "overloaded"


class Job:
    """One released instance of a task.

    ``ops`` walks the execution profile: an int is a compute burst in cycles,
    the other values are the module-level op markers in ``tokisim.engine``.
    """

    __slots__ = (
        "task", "tid", "index", "release", "abs_deadline", "level", "sort_key", "rr_key",
        "ops", "op", "remaining", "started", "assert_time", "assert_index", "aborted", "done",
    )

    def __init__(
        self,
        task: Task,
        index: int,
        release: int,
        priority: int,
        edf: bool,
        ops: Iterator | None = None,
    ):
        self.task = task
        self.tid = task.id
        self.index = index
        self.release = release
        rd = task.relative_deadline
        self.abs_deadline = None if rd is None else release + rd
        cls = HANDLER if task.is_handler else PERIODIC
        self.level = (cls, priority)
        self.rr_key = (task.id, release, index)
        if edf and cls == PERIODIC:
            self.sort_key = (-cls, -priority, self.abs_deadline, task.id, release, index)
        else:
            self.sort_key = (-cls, -priority, 0, task.id, release, index)
        self.ops = ops
        self.op = None
        self.remaining = 0
        self.started = False
        self.assert_time = None
        self.assert_index = None
        self.aborted = False
        self.done = False

    @property
    def is_handler(self) -> bool:
        return self.level[0] == HANDLER

    def __repr__(self) -> str:
        return f"Job({self.tid}#{self.index} r={self.release} d={self.abs_deadline})"


@dataclass
class CoreSchedState:
    policy: str
    ready: list[Job] = field(default_factory=list)
    running: Job | None = None
    rr_cursor: dict[tuple[int, int], tuple] = field(default_factory=dict)
    now: int = 0

    @property
    def edf(self) -> bool:
        return self.policy == "EDF"

    def add_ready(self, job: Job) -> None:
        insort(self.ready, job, key=_sort_key)

    def remove_ready(self, job: Job) -> None:
        self.ready.remove(job)

    def check(self) -> None:
        """Raise AssertionError if the ready ordering invariant is broken."""
        keys = [j.sort_key for j in self.ready]
        assert keys == sorted(keys), "ready list out of policy order"
        assert self.running is None or self.running not in self.ready, "running job also in ready list"


def _sort_key(job: Job) -> tuple:
    return job.sort_key


def pick_next(s: CoreSchedState) -> Job | None:
    """Return the job that should hold the core, or None for idle."""
    run = s.running
    if not s.ready:
        return run
    head = s.ready[0]
    if run is not None and run.level > head.level:
        return run
    level = head.level if run is None or head.level > run.level else run.level

    if s.edf and level[0] == PERIODIC:
        best = head
        if run is not None and run.level == level and run.sort_key < best.sort_key:
            best = run
        return best

    peers = [j for j in s.ready if j.level == level]
    if run is not None and run.level == level:
        peers.append(run)
    if len(peers) == 1:
        return peers[0]
    peers.sort(key=lambda j: j.rr_key)
    cursor = s.rr_cursor.get(level)
    if cursor is not None:
        for j in peers:
            if j.rr_key >= cursor:
                return j
    return peers[0]


def note_dispatch(s: CoreSchedState, job: Job) -> None:
    """Record that ``job`` now holds the round-robin turn at its level."""
    s.rr_cursor[job.level] = job.rr_key


def on_job_release(s: CoreSchedState, job: Job, now: int) -> str:
    s.now = now
    before = pick_next(s)
    s.add_ready(job)
    after = pick_next(s)
    if after is not before and after is not s.running:
        return PREEMPT
    return NO_PREEMPT


def on_tick(s: CoreSchedState, now: int) -> str:
    """Round-robin rotation among jobs sharing the running job's priority."""
    s.now = now
    run = s.running
    if run is None or (s.edf and run.level[0] == PERIODIC):
        return NO_PREEMPT
    peers = [j for j in s.ready if j.level == run.level]
    if not peers:
        return NO_PREEMPT
    ring = sorted(peers + [run], key=lambda j: j.rr_key)
    nxt = ring[(ring.index(run) + 1) % len(ring)]
    s.rr_cursor[run.level] = nxt.rr_key
    return PREEMPT


def rm_bound(n: int) -> float:
    return n * (2 ** (1 / n) - 1)


def admission_check(tasks: Sequence[Task], policy: str, mem_service_time: int) -> str:
    """Utilization-based schedulability verdict for one core.

    WCET is the uncontended profile cost. EDF with constrained deadlines
    falls back to the density test.
    """
    if any(t.is_handler or not t.period for t in tasks):
        raise ValueError("admission_check accepts periodic tasks only")
    if not tasks:
        return SCHEDULABLE
    u = sum((Fraction(t.wcet(mem_service_time), t.period) for t in tasks), Fraction(0))
    if u > 1:
        return OVERLOADED
    implicit = all(t.relative_deadline == t.period for t in tasks)
    if policy == "EDF":
        if implicit:
            return SCHEDULABLE
        density = sum((Fraction(t.wcet(mem_service_time), t.relative_deadline) for t in tasks), Fraction(0))
        return SCHEDULABLE if density <= 1 else UNKNOWN
    if policy == "RM" and implicit:
        n = len(tasks)
        # exact rational compare against the irrational bound: 2**(1/n) >= (u/n + 1)
        # is equivalent to 2 >= (u/n + 1)**n
        if (u / n + 1) ** n <= 2:
            return SCHEDULABLE
        return UNKNOWN
    return UNKNOWN


def hyperperiod(periods: Sequence[int]) -> int:
    return math.lcm(*periods) if periods else 0
