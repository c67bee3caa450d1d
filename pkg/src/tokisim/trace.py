"""Bounded per-core trace capture, the text export format, and metrics.

Trace file format (``tokisim-trace v1``)::

    tokisim-trace v1
    time,core,kind,task,arg0,arg1
    ...

One event per line, LF endings, ``task`` empty when absent. Events are
ordered by (time, core, emission order). When any core dropped events the
file ends with one ``#dropped,<core>,<count>`` line per such core.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, NamedTuple

HEADER = "tokisim-trace v1"


class Kind(str, Enum):
    JOB_RELEASE = "JOB_RELEASE"
    SCHED_SWITCH_IN = "SCHED_SWITCH_IN"
    SCHED_SWITCH_OUT = "SCHED_SWITCH_OUT"
    JOB_COMPLETE = "JOB_COMPLETE"
    DEADLINE_MISS = "DEADLINE_MISS"
    IRQ_ASSERT = "IRQ_ASSERT"
    IRQ_ENTER = "IRQ_ENTER"
    BUDGET_DEPLETED = "BUDGET_DEPLETED"
    BUDGET_REPLENISHED = "BUDGET_REPLENISHED"
    THROTTLE_START = "THROTTLE_START"
    THROTTLE_END = "THROTTLE_END"
    PERIOD_BOUNDARY = "PERIOD_BOUNDARY"
    CHANNEL_SEND = "CHANNEL_SEND"
    CHANNEL_RECV = "CHANNEL_RECV"
    BOOT_RELEASE = "BOOT_RELEASE"


# SCHED_SWITCH_OUT reasons
OUT_PREEMPTED = 0
OUT_BLOCKED = 1
OUT_ABORTED = 2

# IRQ_ASSERT status values; DEFERRED is or-ed in for asserts held until boot
IRQ_RELEASED = 0
IRQ_PENDING = 1
IRQ_OVERRUN = 2
IRQ_DEFERRED = 4


class TraceEvent(NamedTuple):
    """One trace record.

    Payloads per kind:

    ==================  ===========================  ==========================
    kind                arg0                         arg1
    ==================  ===========================  ==========================
    JOB_RELEASE         job index                    absolute deadline (0: none)
    SCHED_SWITCH_IN     job index                    0
    SCHED_SWITCH_OUT    job index                    reason (0 preempt, 1 block, 2 abort)
    JOB_COMPLETE        job index                    response time
    DEADLINE_MISS       job index                    absolute deadline
    IRQ_ASSERT          assertion index              status (0/1/2, +4 deferred)
    IRQ_ENTER           assertion time               assertion index
    BUDGET_DEPLETED     period index                 accesses used this period
    BUDGET_REPLENISHED  new budget                   reclaim pool after
    THROTTLE_START      period index                 0
    THROTTLE_END        period index                 throttled cycles
    PERIOD_BOUNDARY     index of period starting     accesses in period ending
    CHANNEL_SEND        channel index                occupancy after
    CHANNEL_RECV        channel index                occupancy after
    BOOT_RELEASE        boot offset                  0
    ==================  ===========================  ==========================
    """

    time: int
    core: int
    kind: Kind
    task: str | None = None
    arg0: int = 0
    arg1: int = 0

    def line(self) -> str:
        return f"{self.time},{self.core},{self.kind.value},{self.task or ''},{self.arg0},{self.arg1}"


class TraceFormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


ACCEPTED = "accepted"
DROPPED = "dropped"


class TraceBuffer:
    """Per-core bounded event buffers. Full buffers drop the newest event."""

    def __init__(self, n_cores: int, capacity: int):
        self.capacity = capacity
        self.events: list[list[TraceEvent]] = [[] for _ in range(n_cores)]
        self.dropped = [0] * n_cores
        self.emitted = [0] * n_cores

    def emit(self, event: TraceEvent) -> str:
        c = event.core
        self.emitted[c] += 1
        buf = self.events[c]
        if len(buf) >= self.capacity:
            self.dropped[c] += 1
            return DROPPED
        buf.append(event)
        return ACCEPTED

    def merged(self) -> list[TraceEvent]:
        keyed = [(e.time, e.core, i, e) for core in self.events for i, e in enumerate(core)]
        keyed.sort(key=lambda k: k[:3])
        return [k[3] for k in keyed]

    def conserved(self) -> bool:
        return all(e == len(b) + d for e, b, d in zip(self.emitted, self.events, self.dropped))


def format_trace(events: Iterable[TraceEvent], dropped: Iterable[int] = ()) -> str:
    lines = [HEADER]
    lines.extend(e.line() for e in events)
    lines.extend(f"#dropped,{c},{n}" for c, n in enumerate(dropped) if n)
    return "\n".join(lines) + "\n"


def export(buffers: TraceBuffer, sink: IO[str]) -> int:
    """Write the merged trace to ``sink``; returns the number of records."""
    events = buffers.merged()
    sink.write(format_trace(events, buffers.dropped))
    return len(events)


_KINDS = {k.value: k for k in Kind}


def parse_trace(text: str) -> tuple[list[TraceEvent], dict[int, int]]:
    """Parse a trace file. Returns the events and per-core drop counts."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != HEADER:
        raise TraceFormatError(1, f"expected header '{HEADER}'")
    events: list[TraceEvent] = []
    dropped: dict[int, int] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        try:
            if line.startswith("#dropped"):
                if len(parts) != 3:
                    raise ValueError("bad drop record")
                dropped[_uint(parts[1])] = _uint(parts[2])
                continue
            if dropped:
                raise ValueError("event after drop records")
            if len(parts) != 6:
                raise ValueError(f"expected 6 fields, got {len(parts)}")
            kind = _KINDS.get(parts[2])
            if kind is None:
                raise ValueError(f"unknown kind '{parts[2]}'")
            events.append(
                TraceEvent(_uint(parts[0]), _uint(parts[1]), kind, parts[3] or None, _uint(parts[4]), _uint(parts[5]))
            )
        except ValueError as exc:
            raise TraceFormatError(lineno, str(exc)) from None
    return events, dropped


def _uint(s: str) -> int:
    if not s.isdigit() or (len(s) > 1 and s[0] == "0"):
        raise ValueError(f"bad unsigned integer '{s}'")
    return int(s)


# --------------------------------------------------------------------------
# metrics


def nearest_rank(sorted_values: list[int], pct: int) -> int:
    """Nearest-rank percentile on an ascending list (no interpolation)."""
    n = len(sorted_values)
    rank = max(1, (pct * n + 99) // 100)
    return sorted_values[rank - 1]


def _summary(values: list[int]) -> dict[str, int | None]:
    if not values:
        return {"min": None, "max": None, "mean": None, "p95": None}
    v = sorted(values)
    return {"min": v[0], "max": v[-1], "mean": sum(v) // len(v), "p95": nearest_rank(v, 95)}


@dataclass
class TaskStats:
    count: int
    response_min: int | None
    response_max: int | None
    response_mean: int | None
    response_p95: int | None
    jitter: int | None
    deadline_misses: int


@dataclass
class InterruptStats:
    count: int
    latency_min: int | None
    latency_max: int | None
    latency_mean: int | None
    latency_p95: int | None
    overruns: int


@dataclass
class PeriodUsage:
    period: int
    accesses: int
    throttle_cycles: int


@dataclass
class MetricsReport:
    """Per-task response statistics, interrupt latencies and bandwidth use.

    Means are floor-divided integer cycles. ``interrupts`` is None when the
    trace holds no interrupt assertions.
    """

    tasks: dict[str, TaskStats] = field(default_factory=dict)
    interrupts: dict[str, InterruptStats] | None = None
    bandwidth: dict[int, list[PeriodUsage]] = field(default_factory=dict)
    trace_records: int = 0
    dropped_trace_events: int = 0
    integrity_errors: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out: dict = {
            "tasks": {
                tid: {
                    "count": s.count,
                    "response_min": s.response_min,
                    "response_max": s.response_max,
                    "response_mean": s.response_mean,
                    "response_p95": s.response_p95,
                    "jitter": s.jitter,
                    "deadline_misses": s.deadline_misses,
                }
                for tid, s in sorted(self.tasks.items())
            }
        }
        if self.interrupts is not None:
            out["interrupts"] = {
                tid: {
                    "count": s.count,
                    "latency_min": s.latency_min,
                    "latency_max": s.latency_max,
                    "latency_mean": s.latency_mean,
                    "latency_p95": s.latency_p95,
                    "overruns": s.overruns,
                }
                for tid, s in sorted(self.interrupts.items())
            }
        out["bandwidth"] = {
            str(core): [
                {"period": u.period, "accesses": u.accesses, "throttle_cycles": u.throttle_cycles} for u in rows
            ]
            for core, rows in sorted(self.bandwidth.items())
        }
        out["totals"] = {
            "trace_records": self.trace_records,
            "dropped_trace_events": self.dropped_trace_events,
            "integrity_errors": list(self.integrity_errors),
        }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def compute_metrics(events: Iterable[TraceEvent], dropped: dict[int, int] | Iterable[int] | None = None) -> MetricsReport:
    """Derive a MetricsReport from a trace stream.

    Only matched (release, complete) and (assert, enter) pairs contribute, so
    the result does not depend on the merge order of the input.
    """
    events = list(events)
    releases: dict[tuple[str, int], int] = {}
    completes: dict[tuple[str, int], int] = {}
    misses: dict[str, int] = {}
    task_ids: set[str] = set()
    asserts: dict[tuple[str, int], int] = {}
    enters: dict[tuple[str, int], int] = {}
    overruns: dict[str, int] = {}
    handlers: set[str] = set()
    usage: dict[tuple[int, int], int] = {}
    throttle: dict[tuple[int, int], int] = {}
    errors: list[str] = []

    for e in events:
        k = e.kind
        if k is Kind.JOB_RELEASE:
            task_ids.add(e.task)
            releases[(e.task, e.arg0)] = e.time
        elif k is Kind.JOB_COMPLETE:
            task_ids.add(e.task)
            completes[(e.task, e.arg0)] = e.time
        elif k is Kind.DEADLINE_MISS:
            task_ids.add(e.task)
            misses[e.task] = misses.get(e.task, 0) + 1
        elif k is Kind.IRQ_ASSERT:
            handlers.add(e.task)
            status = e.arg1 & ~IRQ_DEFERRED
            if status == IRQ_OVERRUN:
                overruns[e.task] = overruns.get(e.task, 0) + 1
            else:
                asserts[(e.task, e.arg0)] = e.time
        elif k is Kind.IRQ_ENTER:
            handlers.add(e.task)
            enters[(e.task, e.arg1)] = e.time
        elif k is Kind.PERIOD_BOUNDARY:
            if e.arg0 > 0:
                usage[(e.core, e.arg0 - 1)] = e.arg1
        elif k is Kind.THROTTLE_END:
            throttle[(e.core, e.arg0)] = throttle.get((e.core, e.arg0), 0) + e.arg1

    responses: dict[str, list[int]] = {t: [] for t in task_ids}
    for key, t_done in sorted(completes.items()):
        t_rel = releases.get(key)
        if t_rel is None:
            errors.append(f"JOB_COMPLETE without release: {key[0]}#{key[1]}")
            continue
        responses[key[0]].append(t_done - t_rel)

    report = MetricsReport()
    for tid in sorted(task_ids):
        s = _summary(responses[tid])
        report.tasks[tid] = TaskStats(
            count=len(responses[tid]),
            response_min=s["min"],
            response_max=s["max"],
            response_mean=s["mean"],
            response_p95=s["p95"],
            jitter=None if s["min"] is None else s["max"] - s["min"],
            deadline_misses=misses.get(tid, 0),
        )

    if handlers:
        latencies: dict[str, list[int]] = {h: [] for h in handlers}
        for key, t_enter in sorted(enters.items()):
            t_assert = asserts.get(key)
            if t_assert is None:
                errors.append(f"IRQ_ENTER without assert: {key[0]}#{key[1]}")
                continue
            latencies[key[0]].append(t_enter - t_assert)
        report.interrupts = {}
        for h in sorted(handlers):
            s = _summary(latencies[h])
            report.interrupts[h] = InterruptStats(
                count=len(latencies[h]),
                latency_min=s["min"],
                latency_max=s["max"],
                latency_mean=s["mean"],
                latency_p95=s["p95"],
                overruns=overruns.get(h, 0),
            )

    for (core, period), n in sorted(usage.items()):
        report.bandwidth.setdefault(core, []).append(PeriodUsage(period, n, throttle.get((core, period), 0)))

    if dropped is None:
        n_dropped = 0
    elif isinstance(dropped, dict):
        n_dropped = sum(dropped.values())
    else:
        n_dropped = sum(dropped)
    report.trace_records = len(events)
    report.dropped_trace_events = n_dropped
    report.integrity_errors = errors
    return report


# --------------------------------------------------------------------------
# comparison


class CompareError(ValueError):
    pass


@dataclass
class DiffRow:
    scope: str
    name: str
    metric: str
    a: int | None
    b: int | None
    delta: int | None
    percent: float | None


@dataclass
class DiffReport:
    rows: list[DiffRow]
    highlights: dict[str, dict[str, str]]

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "scope": r.scope,
                    "name": r.name,
                    "metric": r.metric,
                    "a": r.a,
                    "b": r.b,
                    "delta": r.delta,
                    "percent": r.percent,
                }
                for r in self.rows
            ],
            "highlights": self.highlights,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def row(self, name: str, metric: str) -> DiffRow:
        for r in self.rows:
            if r.name == name and r.metric == metric:
                return r
        raise KeyError((name, metric))

    def format_table(self) -> str:
        head = f"{'scope':<10} {'name':<16} {'metric':<16} {'a':>12} {'b':>12} {'delta':>12} {'%':>9}"
        out = [head, "-" * len(head)]
        for r in self.rows:
            pct = "" if r.percent is None else f"{r.percent:+.2f}"
            out.append(
                f"{r.scope:<10} {r.name:<16} {r.metric:<16} {_cell(r.a):>12} {_cell(r.b):>12} {_cell(r.delta):>12} {pct:>9}"
            )
        return "\n".join(out)


def _cell(v: int | None) -> str:
    return "-" if v is None else str(v)


TASK_METRICS = ("count", "response_min", "response_max", "response_mean", "response_p95", "jitter", "deadline_misses")
IRQ_METRICS = ("count", "latency_min", "latency_max", "latency_mean", "latency_p95", "overruns")


def _diff(scope: str, name: str, metric: str, a: int | None, b: int | None) -> DiffRow:
    if a is None or b is None:
        return DiffRow(scope, name, metric, a, b, None, None)
    delta = b - a
    pct = None if a == 0 else round(delta * 100 / a, 4)
    return DiffRow(scope, name, metric, a, b, delta, pct)


def _sign(row: DiffRow) -> str:
    if row.delta is None:
        return "n/a"
    return "lower" if row.delta < 0 else "higher" if row.delta > 0 else "equal"


def compare_runs(a: MetricsReport, b: MetricsReport) -> DiffReport:
    """Diff two reports of the same task set; deltas are ``b - a``."""
    if set(a.tasks) != set(b.tasks):
        only = sorted(set(a.tasks) ^ set(b.tasks))
        raise CompareError(f"task sets differ: {', '.join(only)}")
    rows: list[DiffRow] = []
    highlights: dict[str, dict[str, str]] = {}
    for tid in sorted(a.tasks):
        sa, sb = a.tasks[tid], b.tasks[tid]
        task_rows = [_diff("task", tid, m, getattr(sa, m), getattr(sb, m)) for m in TASK_METRICS]
        rows.extend(task_rows)
        by_metric = {r.metric: r for r in task_rows}
        highlights[tid] = {"response_max": _sign(by_metric["response_max"]), "jitter": _sign(by_metric["jitter"])}
    if a.interrupts and b.interrupts:
        for h in sorted(set(a.interrupts) & set(b.interrupts)):
            ia, ib = a.interrupts[h], b.interrupts[h]
            rows.extend(_diff("interrupt", h, m, getattr(ia, m), getattr(ib, m)) for m in IRQ_METRICS)
    rows.append(_diff("totals", "-", "dropped", a.dropped_trace_events, b.dropped_trace_events))
    return DiffReport(rows, highlights)
