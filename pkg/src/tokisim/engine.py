"""Discrete-event multicore engine.

Time advances from event to event. All events sharing a timestamp form one
instant, processed in this order:

1. queued events by kind: boot, regulation period boundary, tick, interrupt
   assert, job release, bus completion, channel wake, core step
2. per-core scheduling decisions, cores in index order, until stable
3. shared-bus arbitration (round robin from the pointer)
4. deadline checks, after which 2-3 run again if anything changed

Ties inside a kind go by core index (boot, tick, bus, step), task index in
the deployment (release, wake, deadline) or interrupt source index, then by
insertion order. Events at ``until`` and later are not processed.
"""

from __future__ import annotations

import heapq
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator

from tokisim.memguard import DEPLETED, PeriodStats, RegulationError, RegulatorState
from tokisim.model import ChannelConfig, Deployment, Task, effective_priorities, validate_deployment
from tokisim.sched import CoreSchedState, Job, note_dispatch, on_job_release, on_tick, pick_next
from tokisim.trace import (
    IRQ_DEFERRED,
    IRQ_OVERRUN,
    IRQ_PENDING,
    IRQ_RELEASED,
    OUT_ABORTED,
    OUT_BLOCKED,
    OUT_PREEMPTED,
    Kind,
    MetricsReport,
    TraceBuffer,
    TraceEvent,
    compute_metrics,
)

log = logging.getLogger(__name__)

# event ranks, lower first within an instant
EV_BOOT = 0
EV_PERIOD = 1
EV_TICK = 2
EV_IRQ = 3
EV_RELEASE = 4
EV_BUS_DONE = 5
EV_WAKE = 6
EV_STEP = 7
EV_DEADLINE = 8

# core modes
IDLE = "idle"
DISPATCH = "dispatch"
EXEC = "exec"
BUS = "bus"
THROTTLED = "throttled"

# job ops besides integer compute bursts
ACCESS = "access"
DONE = "done"
CHECK = "check"
COMMIT = "commit"

SENT = "sent"
RECEIVED = "received"
WOULD_BLOCK = "would_block"
BLOCKED = "blocked"
BLOCKING = "blocking"
NONBLOCKING = "nonblocking"


class SimulationFault(RuntimeError):
    """An internal invariant broke; the run is aborted."""


class ChannelError(ValueError):
    pass


class Channel:
    """Bounded FIFO between one producer and one consumer task."""

    def __init__(self, config: ChannelConfig, index: int = 0):
        self.config = config
        self.index = index
        self.buf: deque = deque()
        # jobs blocked at the channel, woken one per commit in FIFO order
        self.send_waiters: deque[Job] = deque()
        self.recv_waiters: deque[Job] = deque()
        self.sent = 0

    @property
    def occupancy(self) -> int:
        return len(self.buf)

    @property
    def capacity(self) -> int:
        return self.config.capacity

    def can_send(self) -> bool:
        return len(self.buf) < self.config.capacity

    def can_recv(self) -> bool:
        return bool(self.buf)

    def send(self, task: str, mode: str = NONBLOCKING, message: object = None) -> str:
        """Data-level send. Memory costs and wakeups are charged by the engine."""
        if task != self.config.producer:
            raise ChannelError(f"'{task}' is not the producer of channel {self.index}")
        if not self.can_send():
            return BLOCKED if mode == BLOCKING else WOULD_BLOCK
        self.buf.append(self.sent if message is None else message)
        self.sent += 1
        return SENT

    def recv(self, task: str, mode: str = NONBLOCKING) -> tuple[str, object]:
        if task != self.config.consumer:
            raise ChannelError(f"'{task}' is not the consumer of channel {self.index}")
        if not self.can_recv():
            return (BLOCKED if mode == BLOCKING else WOULD_BLOCK), None
        return RECEIVED, self.buf.popleft()


@dataclass
class BusState:
    n_cores: int
    pending: list[bool] = field(init=False)
    in_service: tuple[int, int] | None = None
    rr_pointer: int = 0
    issued: int = 0
    completed: int = 0

    def __post_init__(self) -> None:
        self.pending = [False] * self.n_cores

    def request(self, core: int) -> None:
        if self.pending[core] or (self.in_service is not None and self.in_service[0] == core):
            raise SimulationFault(f"core {core} already has an outstanding access")
        self.pending[core] = True
        self.issued += 1

    def arbitrate(self, now: int, service_time: int) -> tuple[int, int] | None:
        """Start serving the next pending core, if the bus is free."""
        if self.in_service is not None:
            return None
        n = self.n_cores
        for k in range(n):
            c = (self.rr_pointer + k) % n
            if self.pending[c]:
                self.pending[c] = False
                self.rr_pointer = (c + 1) % n
                self.in_service = (c, now + service_time)
                return self.in_service
        return None

    def complete(self, core: int, now: int) -> None:
        if self.in_service != (core, now):
            raise SimulationFault(f"bus completion for core {core} at {now} does not match {self.in_service}")
        self.in_service = None
        self.completed += 1


class _Core:
    __slots__ = ("index", "booted", "boot", "sched", "mode", "until_t", "computing", "dirty", "deferred_irqs")

    def __init__(self, index: int, policy: str, boot: int):
        self.index = index
        self.booted = False
        self.boot = boot
        self.sched = CoreSchedState(policy)
        self.mode = IDLE
        self.until_t = 0  # end of the current dispatch or compute burst
        self.computing = False
        self.dirty = False
        self.deferred_irqs: list[int] = []


class _IrqState:
    __slots__ = ("source", "handler", "count", "active", "pending")

    def __init__(self, source: int, handler: Task):
        self.source = source
        self.handler = handler
        self.count = 0
        self.active: Job | None = None
        self.pending: tuple[int, int] | None = None


def first_release(task: Task, boot: int) -> int:
    """First grid point ``offset + k*period`` (k >= 0) at or after ``boot``."""
    if task.offset >= boot:
        return task.offset
    k = -(-(boot - task.offset) // task.period)
    return task.offset + k * task.period


def job_ops(task: Task, recv: list[Channel], send: list[Channel]) -> Iterator:
    """Ops of one job: channel receives, profile segments, channel sends.

    Within a segment of C compute cycles and M accesses, an access follows
    every ``C // (M + 1)`` compute cycles; the remainder trails.
    """
    for ch in recv:
        yield (CHECK, ch, False)
        for _ in range(ch.config.accesses_per_op):
            yield ACCESS
        yield (COMMIT, ch, False)
    for seg in task.profile.segments:
        m = seg.mem_accesses
        gap = seg.compute // (m + 1)
        for _ in range(m):
            if gap:
                yield gap
            yield ACCESS
        tail = seg.compute - m * gap
        if tail:
            yield tail
    for ch in send:
        yield (CHECK, ch, True)
        for _ in range(ch.config.accesses_per_op):
            yield ACCESS
        yield (COMMIT, ch, True)


class Simulator:
    """One simulation run of a validated Deployment."""

    def __init__(self, d: Deployment, until: int, seed: int = 0, check_invariants: bool = False):
        if until <= 0:
            raise ValueError("until must be > 0")
        report = validate_deployment(d)
        if not report.ok:
            raise ValueError(f"deployment has validation errors: {report.errors[0].code}")
        self.d = d
        self.until = until
        self.seed = seed
        self.check_invariants = check_invariants
        pf = d.platform
        self.dispatch_overhead = pf.dispatch_overhead
        self.service_time = pf.mem_service_time
        self.tick = pf.cycles_per_tick
        self.abort = d.deadline_miss_policy == "abort_job"

        n = len(d.cores)
        self.cores = [_Core(i, c.policy, c.boot_offset) for i, c in enumerate(d.cores)]
        self.bus = BusState(n)
        self.trace = TraceBuffer(n, d.trace_buffer_capacity)
        self.reg = RegulatorState(d.regulator) if d.regulator is not None else None
        self.period_stats: list[PeriodStats] = []
        self.channels = [Channel(c, i) for i, c in enumerate(d.channels)]

        self.prio: dict[str, int] = {}
        for c in range(n):
            self.prio.update(effective_priorities(d, c))
        for t in d.tasks:
            if t.is_handler:
                self.prio[t.id] = t.priority if isinstance(t.priority, int) else 0
        self.job_count = {t.id: 0 for t in d.tasks}
        self.task_index = {t.id: i for i, t in enumerate(d.tasks)}
        self.recv_chs = {t.id: [ch for ch in self.channels if ch.config.consumer == t.id] for t in d.tasks}
        self.send_chs = {t.id: [ch for ch in self.channels if ch.config.producer == t.id] for t in d.tasks}
        self.irqs = [_IrqState(i, d.task(s.handler)) for i, s in enumerate(d.interrupts)]
        self.irq_of_handler = {st.handler.id: st for st in self.irqs}

        self._queue: list[tuple] = []
        self._seq = 0
        self.now = 0
        self.events_processed = 0
        self._ran = False

    # ------------------------------------------------------------ plumbing

    def _push(self, time: int, rank: int, sub: int, payload) -> None:
        if time < self.until:
            self._seq += 1
            heapq.heappush(self._queue, (time, rank, sub, self._seq, payload))

    def _emit(self, core: int, kind: Kind, task: str | None = None, a0: int = 0, a1: int = 0) -> None:
        self.trace.emit(TraceEvent(self.now, core, kind, task, a0, a1))

    # ------------------------------------------------------------ main loop

    def run(self) -> "Simulator":
        if self._ran:
            raise RuntimeError("a Simulator runs once")
        self._ran = True
        d = self.d
        for c in self.cores:
            self._push(c.boot, EV_BOOT, c.index, c.index)
        for t in d.tasks:
            if not t.is_handler:
                self._push(first_release(t, d.cores[t.core].boot_offset), EV_RELEASE, self.task_index[t.id], t)
        for i, src in enumerate(d.interrupts):
            self._push(src.one_shot if src.one_shot is not None else src.period, EV_IRQ, i, i)
        if self.reg is not None:
            self._push(0, EV_PERIOD, 0, None)

        q = self._queue
        handlers = {
            EV_BOOT: self._on_boot,
            EV_PERIOD: self._on_period,
            EV_TICK: self._on_tick,
            EV_IRQ: self._on_irq,
            EV_RELEASE: self._on_release,
            EV_BUS_DONE: self._on_bus_done,
            EV_WAKE: self._on_wake,
            EV_STEP: self._on_step,
            EV_DEADLINE: self._on_deadline,
        }
        try:
            while q:
                t = q[0][0]
                if t < self.now:
                    raise SimulationFault(f"time went backwards: {t} < {self.now}")
                self.now = t
                while True:
                    while q and q[0][0] == t and q[0][1] < EV_DEADLINE:
                        _, rank, _, _, payload = heapq.heappop(q)
                        self.events_processed += 1
                        handlers[rank](payload)
                    self._settle_all()
                    if q and q[0][0] == t:
                        if q[0][1] == EV_DEADLINE:
                            while q and q[0][0] == t and q[0][1] == EV_DEADLINE:
                                self.events_processed += 1
                                self._on_deadline(heapq.heappop(q)[4])
                        continue
                    break
            self.now = self.until
            if self.reg is not None:
                self.reg.check_enforcement()
        except RegulationError as exc:
            raise SimulationFault(f"memory regulation invariant broken at t={self.now}: {exc}") from exc
        if not self.trace.conserved():
            raise SimulationFault("trace conservation broken")
        return self

    def _settle_all(self) -> None:
        for core in self.cores:
            if core.dirty:
                self._settle(core)
                if self.check_invariants:
                    self._check_core(core)
        grant = self.bus.arbitrate(self.now, self.service_time)
        if grant is not None:
            self._push(grant[1], EV_BUS_DONE, grant[0], grant[0])

    # ------------------------------------------------------------ event handlers

    def _on_boot(self, c: int) -> None:
        core = self.cores[c]
        core.booted = True
        self._emit(c, Kind.BOOT_RELEASE, None, core.boot, 0)
        self._push(self.now + self.tick, EV_TICK, c, c)
        for i in core.deferred_irqs:
            self._assert_irq(i, deferred=True)
        core.deferred_irqs.clear()

    def _on_period(self, _payload) -> None:
        reg = self.reg
        now = self.now
        prev_used = list(reg.used_this_period)
        if reg.period_index >= 0:
            stats = reg.end_period_stats(now)
            reg.check_enforcement()
            self.period_stats.append(stats)
            for c, since in enumerate(reg.throttle_since):
                if since is not None:
                    self._emit(c, Kind.THROTTLE_END, None, stats.period_index, stats.throttle_cycles[c])
        throttled = [c for c in range(reg.n_cores) if reg.throttled[c]]
        grants = reg.begin_period(now)
        for c in range(reg.n_cores):
            self._emit(c, Kind.PERIOD_BOUNDARY, None, reg.period_index, prev_used[c] if reg.period_index else 0)
            if reg.regulated(c):
                self._emit(c, Kind.BUDGET_REPLENISHED, None, grants[c], reg.pool_G)
        for c in throttled:
            core = self.cores[c]
            if core.mode != THROTTLED:
                raise SimulationFault(f"core {c} throttled flag without throttled mode")
            core.mode = EXEC if core.sched.running is not None else IDLE
            core.dirty = True
        self._push(now + reg.config.period_P, EV_PERIOD, 0, None)

    def _on_tick(self, c: int) -> None:
        core = self.cores[c]
        if on_tick(core.sched, self.now) == "preempt":
            core.dirty = True
        self._push(self.now + self.tick, EV_TICK, c, c)

    def _on_irq(self, i: int) -> None:
        src = self.d.interrupts[i]
        core = self.cores[src.core]
        if src.period is not None:
            self._push(self.now + src.period, EV_IRQ, i, i)
        if not core.booted:
            core.deferred_irqs.append(i)
            return
        self._assert_irq(i, deferred=False)

    def _assert_irq(self, i: int, deferred: bool) -> None:
        st = self.irqs[i]
        idx = st.count
        st.count += 1
        flag = IRQ_DEFERRED if deferred else 0
        if st.active is None:
            status = IRQ_RELEASED
        elif st.pending is None:
            status = IRQ_PENDING
            st.pending = (self.now, idx)
        else:
            status = IRQ_OVERRUN
        self._emit(st.handler.core, Kind.IRQ_ASSERT, st.handler.id, idx, status | flag)
        if status == IRQ_RELEASED:
            self._release_handler(st, self.now, idx)

    def _release_handler(self, st: _IrqState, assert_time: int, idx: int) -> None:
        job = self._new_job(st.handler)
        job.assert_time = assert_time
        job.assert_index = idx
        st.active = job
        self._admit(job)

    def _on_release(self, task: Task) -> None:
        self._push(self.now + task.period, EV_RELEASE, self.task_index[task.id], task)
        self._admit(self._new_job(task))

    def _new_job(self, task: Task) -> Job:
        idx = self.job_count[task.id]
        self.job_count[task.id] = idx + 1
        core = self.cores[task.core]
        job = Job(task, idx, self.now, self.prio[task.id], core.sched.edf)
        job.ops = job_ops(task, self.recv_chs[task.id], self.send_chs[task.id])
        return job

    def _admit(self, job: Job) -> None:
        core = self.cores[job.task.core]
        self._emit(core.index, Kind.JOB_RELEASE, job.tid, job.index, job.abs_deadline or 0)
        if job.abs_deadline is not None:
            self._push(job.abs_deadline, EV_DEADLINE, self.task_index[job.tid], job)
        on_job_release(core.sched, job, self.now)
        core.dirty = True

    def _on_bus_done(self, c: int) -> None:
        self.bus.complete(c, self.now)
        core = self.cores[c]
        if core.mode != BUS:
            raise SimulationFault(f"bus completion for core {c} in mode {core.mode}")
        core.sched.running.op = None
        core.mode = EXEC
        core.dirty = True

    def _on_wake(self, job: Job) -> None:
        if job.aborted or job.done:
            return
        core = self.cores[job.task.core]
        core.sched.add_ready(job)
        core.dirty = True

    def _on_step(self, c: int) -> None:
        self.cores[c].dirty = True

    def _on_deadline(self, job: Job) -> None:
        if job.done or job.aborted:
            return
        core = self.cores[job.task.core]
        self._emit(core.index, Kind.DEADLINE_MISS, job.tid, job.index, job.abs_deadline)
        if self.abort:
            self._abort(core, job)

    # ------------------------------------------------------------ core state machine

    def _settle(self, core: _Core) -> None:
        s = core.sched
        now = self.now
        while core.dirty:
            core.dirty = False
            mode = core.mode
            if mode == BUS or mode == THROTTLED:
                continue
            if mode == DISPATCH:
                if core.until_t > now:
                    continue
                job = s.running
                if job.aborted:
                    self._drop_running(core, job)
                    continue
                pick = pick_next(s)
                if pick is not job:
                    s.running = None
                    s.add_ready(job)
                    self._dispatch(core, pick)
                    continue
                self._emit(core.index, Kind.SCHED_SWITCH_IN, job.tid, job.index, 0)
                if job.is_handler and not job.started:
                    self._emit(core.index, Kind.IRQ_ENTER, job.tid, job.assert_time, job.assert_index)
                job.started = True
                core.mode = EXEC
                core.dirty = True
                continue
            if mode == IDLE:
                pick = pick_next(s)
                if pick is not None:
                    self._dispatch(core, pick)
                continue

            # EXEC
            job = s.running
            if job.aborted:
                self._drop_running(core, job)
                continue
            if core.computing:
                if core.until_t > now:
                    pick = pick_next(s)
                    if pick is job:
                        continue
                    job.remaining = core.until_t - now
                    core.computing = False
                    self._preempt(core, job, pick)
                    continue
                core.computing = False
                job.remaining = 0
                job.op = None
            op = job.op
            while op is None or (op.__class__ is int and job.remaining == 0):
                op = next(job.ops, DONE)
                if op.__class__ is int:
                    job.remaining = op
                job.op = op
            if op is DONE:
                self._complete(core, job)
                continue
            pick = pick_next(s)
            if pick is not job:
                self._preempt(core, job, pick)
                continue
            if op.__class__ is int:
                core.computing = True
                core.until_t = now + job.remaining
                self._push(core.until_t, EV_STEP, core.index, core.index)
            elif op is ACCESS:
                self._issue_access(core, job)
            elif op[0] == CHECK:
                ch, is_send = op[1], op[2]
                if ch.can_send() if is_send else ch.can_recv():
                    job.op = None
                    core.dirty = True
                else:
                    (ch.send_waiters if is_send else ch.recv_waiters).append(job)
                    self._emit(core.index, Kind.SCHED_SWITCH_OUT, job.tid, job.index, OUT_BLOCKED)
                    s.running = None
                    core.mode = IDLE
                    core.dirty = True
            else:
                self._commit_channel(job, op[1], op[2])
                job.op = None
                core.dirty = True

    def _dispatch(self, core: _Core, job: Job) -> None:
        s = core.sched
        s.remove_ready(job)
        s.running = job
        note_dispatch(s, job)
        core.mode = DISPATCH
        core.computing = False
        core.until_t = self.now + self.dispatch_overhead
        if self.dispatch_overhead == 0:
            core.dirty = True
        else:
            self._push(core.until_t, EV_STEP, core.index, core.index)

    def _preempt(self, core: _Core, job: Job, pick: Job) -> None:
        self._emit(core.index, Kind.SCHED_SWITCH_OUT, job.tid, job.index, OUT_PREEMPTED)
        core.sched.running = None
        core.sched.add_ready(job)
        self._dispatch(core, pick)

    def _drop_running(self, core: _Core, job: Job) -> None:
        if job.started and core.mode == EXEC:
            self._emit(core.index, Kind.SCHED_SWITCH_OUT, job.tid, job.index, OUT_ABORTED)
        core.sched.running = None
        core.computing = False
        core.mode = IDLE
        core.dirty = True

    def _complete(self, core: _Core, job: Job) -> None:
        job.done = True
        self._emit(core.index, Kind.JOB_COMPLETE, job.tid, job.index, self.now - job.release)
        core.sched.running = None
        core.mode = IDLE
        core.dirty = True
        self._job_finished(job)

    def _job_finished(self, job: Job) -> None:
        if job.is_handler:
            st = self.irq_of_handler[job.tid]
            st.active = None
            if st.pending is not None:
                t_assert, idx = st.pending
                st.pending = None
                self._release_handler(st, t_assert, idx)

    def _abort(self, core: _Core, job: Job) -> None:
        job.aborted = True
        s = core.sched
        if job in s.ready:
            s.remove_ready(job)
        elif s.running is job:
            if core.mode == EXEC:
                self._emit(core.index, Kind.SCHED_SWITCH_OUT, job.tid, job.index, OUT_ABORTED)
                s.running = None
                core.computing = False
                core.mode = IDLE
                core.dirty = True
            elif core.mode == THROTTLED:
                self._emit(core.index, Kind.SCHED_SWITCH_OUT, job.tid, job.index, OUT_ABORTED)
                s.running = None
            # DISPATCH and BUS finish their non-preemptible part first
        else:
            for ch in self.channels:
                if job in ch.send_waiters:
                    ch.send_waiters.remove(job)
                if job in ch.recv_waiters:
                    ch.recv_waiters.remove(job)
        self._job_finished(job)

    def _issue_access(self, core: _Core, job: Job) -> None:
        c = core.index
        reg = self.reg
        if reg is not None:
            if reg.regulated(c) and reg.q[c] == 0:
                n = reg.request_chunk(c, self.now)
                if n:
                    self._emit(c, Kind.BUDGET_REPLENISHED, job.tid, n, reg.pool_G)
                else:
                    self._emit(c, Kind.THROTTLE_START, job.tid, reg.period_index, 0)
                    core.mode = THROTTLED
                    return
            if reg.charge_access(c) == DEPLETED:
                self._emit(c, Kind.BUDGET_DEPLETED, job.tid, reg.period_index, reg.used_this_period[c])
        self.bus.request(c)
        core.mode = BUS

    def _commit_channel(self, job: Job, ch: Channel, is_send: bool) -> None:
        c = job.task.core
        if is_send:
            if ch.send(job.tid) != SENT:
                raise SimulationFault(f"channel {ch.index} overflow on commit")
            self._emit(c, Kind.CHANNEL_SEND, job.tid, ch.index, ch.occupancy)
            waiters = ch.recv_waiters
        else:
            outcome, _ = ch.recv(job.tid)
            if outcome != RECEIVED:
                raise SimulationFault(f"channel {ch.index} underflow on commit")
            self._emit(c, Kind.CHANNEL_RECV, job.tid, ch.index, ch.occupancy)
            waiters = ch.send_waiters
        if waiters:
            waiter = waiters.popleft()
            self._push(self.now, EV_WAKE, self.task_index[waiter.tid], waiter)

    def _check_core(self, core: _Core) -> None:
        s = core.sched
        try:
            s.check()
        except AssertionError as exc:
            raise SimulationFault(f"core {core.index}: {exc}") from None
        if core.mode == IDLE and pick_next(s) is not None:
            raise SimulationFault(f"core {core.index} idle with ready work at {self.now}")
        if core.mode == EXEC and pick_next(s) is not s.running:
            raise SimulationFault(f"core {core.index} runs a non-maximal job at {self.now}")

    # ------------------------------------------------------------ results

    def events(self) -> list[TraceEvent]:
        return self.trace.merged()

    def metrics(self) -> MetricsReport:
        return compute_metrics(self.trace.merged(), self.trace.dropped)


def run(d: Deployment, until: int, seed: int = 0) -> tuple[TraceBuffer, MetricsReport]:
    """Simulate ``d`` over [0, until) and return the trace buffers and metrics.

    The seed is accepted for interface stability; no engine behaviour is
    randomized.
    """
    sim = Simulator(d, until, seed).run()
    return sim.trace, sim.metrics()


def simulate(d: Deployment, until: int, seed: int = 0, check_invariants: bool = False) -> Simulator:
    return Simulator(d, until, seed, check_invariants).run()
