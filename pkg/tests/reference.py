"""Naive cycle-by-cycle reference interpreter.

Written separately from the event engine: it shares only the model types
and steps every core through every cycle. Supports periodic tasks, ticks,
boot offsets, dispatch overhead, the round-robin bus and both deadline-miss
policies. No regulator, channels or interrupts.
"""

from __future__ import annotations

from tokisim.model import Deployment
from tokisim.trace import Kind, TraceEvent


class RJob:
    def __init__(self, tix, task, index, release, prio):
        self.tix = tix
        self.tid = task.id
        self.index = index
        self.release = release
        self.deadline = release + task.relative_deadline
        self.prio = prio
        self.ops = []
        for seg in task.profile.segments:
            gap = seg.compute // (seg.mem_accesses + 1)
            for _ in range(seg.mem_accesses):
                if gap > 0:
                    self.ops.append(gap)
                self.ops.append("A")
            if seg.compute - seg.mem_accesses * gap > 0:
                self.ops.append(seg.compute - seg.mem_accesses * gap)
        self.pos = 0
        self.left = self.ops[0] if self.ops and self.ops[0] != "A" else 0
        self.started = False
        self.aborted = False
        self.done = False

    def advance(self):
        self.pos += 1
        self.left = self.ops[self.pos] if self.pos < len(self.ops) and self.ops[self.pos] != "A" else 0

    def rr(self):
        return (self.tid, self.release, self.index)


class RCore:
    def __init__(self, policy, boot):
        self.policy = policy
        self.boot = boot
        self.booted = False
        self.mode = "idle"
        self.job = None
        self.ready = []
        self.cursor = {}
        self.count = 0  # cycles left in dispatch or compute
        self.computing = False


def _priorities(d: Deployment, c: int) -> dict:
    tasks = [t for t in d.tasks if t.core == c]
    pol = d.cores[c].policy
    if pol == "EDF":
        return {t.id: 0 for t in tasks}
    if pol == "FP":
        return {t.id: t.priority for t in tasks}
    if pol == "RM":
        order = sorted(tasks, key=lambda t: (t.period, t.id))
    else:
        order = sorted(tasks, key=lambda t: (t.relative_deadline, t.id))
    return {t.id: len(order) - i for i, t in enumerate(order)}


def reference_run(d: Deployment, until: int) -> list[TraceEvent]:
    pf = d.platform
    n = len(d.cores)
    cores = [RCore(c.policy, c.boot_offset) for c in d.cores]
    prio = {}
    for c in range(n):
        prio.update(_priorities(d, c))
    out = [[] for _ in range(n)]
    counts = {t.id: 0 for t in d.tasks}
    active = []
    bus_pending = [False] * n
    bus_busy = None  # (core, end)
    rr = 0

    next_rel = []
    for t in d.tasks:
        b = d.cores[t.core].boot_offset
        r = t.offset
        while r < b:
            r += t.period
        next_rel.append(r)

    now = 0

    def emit(c, kind, tid, a0, a1):
        out[c].append(TraceEvent(now, c, kind, tid, a0, a1))

    def choose(core):
        cands = list(core.ready)
        if core.job is not None:
            cands.append(core.job)
        if not cands:
            return None
        if core.policy == "EDF":
            return min(cands, key=lambda j: (j.deadline, j.tid, j.release, j.index))
        top = max(j.prio for j in cands)
        peers = sorted((j for j in cands if j.prio == top), key=lambda j: j.rr())
        cur = core.cursor.get(top)
        if cur is not None:
            for j in peers:
                if j.rr() >= cur:
                    return j
        return peers[0]

    def start_dispatch(c, core, job):
        core.ready.remove(job)
        core.job = job
        core.cursor[job.prio] = job.rr()
        core.mode = "dispatch"
        core.computing = False
        core.count = pf.dispatch_overhead

    def preempt(c, core, job, best):
        emit(c, Kind.SCHED_SWITCH_OUT, job.tid, job.index, 0)
        core.job = None
        core.ready.append(job)
        start_dispatch(c, core, best)

    def settle(c, core):
        nonlocal bus_pending
        while True:
            if core.mode == "bus":
                return
            if core.mode == "dispatch":
                if core.count > 0:
                    return
                job = core.job
                if job.aborted:
                    core.job = None
                    core.mode = "idle"
                    continue
                best = choose(core)
                if best is not job:
                    core.job = None
                    core.ready.append(job)
                    start_dispatch(c, core, best)
                    continue
                emit(c, Kind.SCHED_SWITCH_IN, job.tid, job.index, 0)
                job.started = True
                core.mode = "exec"
                continue
            if core.mode == "idle":
                best = choose(core)
                if best is None:
                    return
                start_dispatch(c, core, best)
                continue
            job = core.job
            if job.aborted:
                emit(c, Kind.SCHED_SWITCH_OUT, job.tid, job.index, 2)
                core.job = None
                core.computing = False
                core.mode = "idle"
                continue
            if core.computing:
                if core.count > 0:
                    best = choose(core)
                    if best is job:
                        return
                    job.left = core.count
                    core.computing = False
                    preempt(c, core, job, best)
                    continue
                core.computing = False
                job.advance()
            if job.pos >= len(job.ops):
                job.done = True
                emit(c, Kind.JOB_COMPLETE, job.tid, job.index, now - job.release)
                core.job = None
                core.mode = "idle"
                continue
            best = choose(core)
            if best is not job:
                preempt(c, core, job, best)
                continue
            if job.ops[job.pos] == "A":
                bus_pending[c] = True
                core.mode = "bus"
                return
            core.computing = True
            core.count = job.left
            return

    while now < until:
        # boots
        for c, core in enumerate(cores):
            if not core.booted and core.boot == now:
                core.booted = True
                emit(c, Kind.BOOT_RELEASE, None, core.boot, 0)
        # ticks
        for c, core in enumerate(cores):
            if core.booted and now > core.boot and (now - core.boot) % pf.cycles_per_tick == 0:
                job = core.job
                if job is not None and core.policy != "EDF":
                    peers = [j for j in core.ready if j.prio == job.prio]
                    if peers:
                        ring = sorted(peers + [job], key=lambda j: j.rr())
                        core.cursor[job.prio] = ring[(ring.index(job) + 1) % len(ring)].rr()
        # releases
        for ti, t in enumerate(d.tasks):
            if next_rel[ti] == now:
                next_rel[ti] += t.period
                job = RJob(ti, t, counts[t.id], now, prio[t.id])
                counts[t.id] += 1
                active.append(job)
                emit(t.core, Kind.JOB_RELEASE, t.id, job.index, job.deadline)
                cores[t.core].ready.append(job)
        # bus completion
        if bus_busy is not None and bus_busy[1] == now:
            c = bus_busy[0]
            bus_busy = None
            core = cores[c]
            core.mode = "exec"
            core.job.advance()

        def settle_and_arbitrate():
            nonlocal bus_busy, rr
            for c, core in enumerate(cores):
                settle(c, core)
            if bus_busy is None:
                for k in range(n):
                    c = (rr + k) % n
                    if bus_pending[c]:
                        bus_pending[c] = False
                        rr = (c + 1) % n
                        bus_busy = (c, now + pf.mem_service_time)
                        break

        settle_and_arbitrate()
        # deadlines, by task order
        due = sorted((j for j in active if j.deadline == now and not j.done and not j.aborted), key=lambda j: j.tix)
        if due:
            for job in due:
                core = cores[d.tasks[job.tix].core]
                emit(d.tasks[job.tix].core, Kind.DEADLINE_MISS, job.tid, job.index, job.deadline)
                if d.deadline_miss_policy == "abort_job":
                    job.aborted = True
                    if job in core.ready:
                        core.ready.remove(job)
                    elif core.job is job and core.mode == "exec":
                        emit(d.tasks[job.tix].core, Kind.SCHED_SWITCH_OUT, job.tid, job.index, 2)
                        core.job = None
                        core.computing = False
                        core.mode = "idle"
            settle_and_arbitrate()
        active = [j for j in active if not j.done and not j.aborted]

        # one cycle of execution
        for core in cores:
            if core.mode == "dispatch" or (core.mode == "exec" and core.computing):
                core.count -= 1
        now += 1

    merged = [(e.time, e.core, i, e) for c in range(n) for i, e in enumerate(out[c])]
    merged.sort(key=lambda k: k[:3])
    return [k[3] for k in merged]
