"""Deployment model: domain types, JSON config parsing, validation and
static priority assignment.

All quantities are integer cycles or counts. The on-disk format is a single
JSON object; see ``docs/config-schema.md`` for the exact schema.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Sequence, Union

POLICIES = ("FP", "RM", "DM", "EDF")
TASK_KINDS = ("periodic", "interrupt_handler")
MISS_POLICIES = ("record_continue", "abort_job")
BUS_ARBITRATIONS = ("round_robin",)

DEFAULT_CYCLES_PER_TICK = 100_000
DEFAULT_MEM_SERVICE_TIME = 40
DEFAULT_DISPATCH_OVERHEAD = 50
DEFAULT_TRACE_CAPACITY = 65_536
DEFAULT_ACCESSES_PER_OP = 2

DERIVED = "derived"

_ID_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")

Priority = Union[int, str]


class ConfigError(ValueError):
    """Raised when a configuration document cannot be turned into a Deployment."""

    def __init__(self, code: str, message: str, path: str = "", report: "ValidationReport | None" = None):
        self.code = code
        self.message = message
        self.path = path
        self.report = report
        where = f" at {path}" if path else ""
        super().__init__(f"{code}: {message}{where}")


@dataclass(frozen=True)
class Platform:
    cycles_per_tick: int = DEFAULT_CYCLES_PER_TICK
    mem_service_time: int = DEFAULT_MEM_SERVICE_TIME
    dispatch_overhead: int = DEFAULT_DISPATCH_OVERHEAD
    bus_arbitration: str = "round_robin"


@dataclass(frozen=True)
class Segment:
    compute: int
    mem_accesses: int = 0


@dataclass(frozen=True)
class ExecutionProfile:
    segments: tuple[Segment, ...]

    @classmethod
    def of(cls, *pairs: tuple[int, int]) -> "ExecutionProfile":
        return cls(tuple(Segment(c, m) for c, m in pairs))

    def cost(self, mem_service_time: int) -> int:
        """Uncontended execution cost in cycles."""
        return sum(s.compute + s.mem_accesses * mem_service_time for s in self.segments)

    @property
    def accesses(self) -> int:
        return sum(s.mem_accesses for s in self.segments)


@dataclass(frozen=True)
class Task:
    id: str
    profile: ExecutionProfile
    core: int = 0
    period: int | None = None
    offset: int = 0
    relative_deadline: int | None = None
    priority: Priority = DERIVED
    kind: str = "periodic"

    @property
    def is_handler(self) -> bool:
        return self.kind == "interrupt_handler"

    def wcet(self, mem_service_time: int) -> int:
        return self.profile.cost(mem_service_time)


@dataclass(frozen=True)
class CoreConfig:
    policy: str = "FP"
    boot_offset: int = 0


@dataclass(frozen=True)
class RegulatorConfig:
    """Memory-bandwidth regulation settings.

    ``budgets_Q`` and ``chunk_size`` have one entry per core; ``None`` marks an
    unregulated core.
    """

    period_P: int
    budgets_Q: tuple[int | None, ...]
    guaranteed_r_min: int
    chunk_size: tuple[int | None, ...]

    def regulated(self, core: int) -> bool:
        return core < len(self.budgets_Q) and self.budgets_Q[core] is not None


def default_chunk(budget: int) -> int:
    return max(1, -(-budget // 4))


@dataclass(frozen=True)
class ChannelConfig:
    capacity: int
    producer: str
    consumer: str
    accesses_per_op: int = DEFAULT_ACCESSES_PER_OP


@dataclass(frozen=True)
class InterruptSource:
    core: int
    handler: str
    period: int | None = None
    one_shot: int | None = None


@dataclass(frozen=True)
class Deployment:
    cores: tuple[CoreConfig, ...]
    tasks: tuple[Task, ...]
    platform: Platform = field(default_factory=Platform)
    regulator: RegulatorConfig | None = None
    channels: tuple[ChannelConfig, ...] = ()
    interrupts: tuple[InterruptSource, ...] = ()
    trace_buffer_capacity: int = DEFAULT_TRACE_CAPACITY
    deadline_miss_policy: str = "record_continue"

    def task(self, task_id: str) -> Task:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)

    def tasks_on(self, core: int) -> list[Task]:
        return [t for t in self.tasks if t.core == core]


@dataclass(frozen=True)
class Finding:
    code: str
    message: str
    path: str

    def as_dict(self) -> dict[str, str]:
        return {"code": self.code, "message": self.message, "path": self.path}


@dataclass
class ValidationReport:
    errors: list[Finding] = field(default_factory=list)
    warnings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, code: str, message: str, path: str) -> None:
        self.errors.append(Finding(code, message, path))

    def warn(self, code: str, message: str, path: str) -> None:
        self.warnings.append(Finding(code, message, path))

    def codes(self) -> set[str]:
        return {f.code for f in self.errors}

    def as_dict(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "errors": [f.as_dict() for f in self.errors],
            "warnings": [f.as_dict() for f in self.warnings],
        }

    def format_text(self) -> str:
        lines = []
        for f in self.errors:
            lines.append(f"error[{f.code}] {f.path}: {f.message}")
        for f in self.warnings:
            lines.append(f"warning[{f.code}] {f.path}: {f.message}")
        if self.ok:
            lines.append("OK")
        return "\n".join(lines)


# --------------------------------------------------------------------------
# parsing


class _Obj:
    """Strict view over a JSON object: tracks consumed keys, checks types."""

    def __init__(self, raw: Any, path: str):
        if not isinstance(raw, dict):
            raise ConfigError("type_mismatch", "expected an object", path)
        self.raw = raw
        self.path = path
        self.seen: set[str] = set()

    def _at(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def has(self, key: str) -> bool:
        return key in self.raw and self.raw[key] is not None

    def get(self, key: str, kind: type | tuple, default: Any = ..., nullable: bool = False) -> Any:
        self.seen.add(key)
        if key not in self.raw or (self.raw[key] is None and default is not ...):
            if default is ...:
                raise ConfigError("missing_field", f"missing required field '{key}'", self._at(key))
            return default
        value = self.raw[key]
        if value is None and nullable:
            return None
        _check_type(value, kind, self._at(key))
        return value

    def obj(self, key: str, required: bool = False) -> "_Obj | None":
        self.seen.add(key)
        if key not in self.raw or self.raw[key] is None:
            if required:
                raise ConfigError("missing_field", f"missing required field '{key}'", self._at(key))
            return None
        return _Obj(self.raw[key], self._at(key))

    def items(self, key: str, required: bool = False) -> list[tuple[Any, str]]:
        self.seen.add(key)
        if key not in self.raw or self.raw[key] is None:
            if required:
                raise ConfigError("missing_field", f"missing required field '{key}'", self._at(key))
            return []
        value = self.raw[key]
        _check_type(value, list, self._at(key))
        return [(v, f"{self._at(key)}[{i}]") for i, v in enumerate(value)]

    def done(self) -> None:
        extra = sorted(set(self.raw) - self.seen)
        if extra:
            raise ConfigError("unknown_key", f"unknown key '{extra[0]}'", self._at(extra[0]))


def _check_type(value: Any, kind: type | tuple, path: str) -> None:
    kinds = kind if isinstance(kind, tuple) else (kind,)
    for k in kinds:
        if k is int:
            if isinstance(value, int) and not isinstance(value, bool):
                return
        elif isinstance(value, k):
            return
    names = "/".join("integer" if k is int else k.__name__ for k in kinds)
    raise ConfigError("type_mismatch", f"expected {names}, got {type(value).__name__}", path)


def _parse_profile(raw: Any, path: str) -> ExecutionProfile:
    prof = _Obj(raw, path)
    segments = []
    for seg_raw, seg_path in prof.items("segments", required=True):
        seg = _Obj(seg_raw, seg_path)
        segments.append(Segment(seg.get("compute", int), seg.get("mem_accesses", int, 0)))
        seg.done()
    prof.done()
    return ExecutionProfile(tuple(segments))


def _parse_task(raw: Any, path: str) -> Task:
    o = _Obj(raw, path)
    task_id = o.get("id", str)
    kind = o.get("kind", str, "periodic")
    period = o.get("period", int, None)
    deadline = o.get("relative_deadline", int, None)
    if deadline is None and kind == "periodic":
        deadline = period
    priority = o.get("priority", (int, str), DERIVED)
    if isinstance(priority, str) and priority != DERIVED:
        raise ConfigError("type_mismatch", f"priority must be an integer or '{DERIVED}'", f"{path}.priority")
    prof = o.obj("profile", required=True)
    assert prof is not None
    o.seen.add("profile")
    task = Task(
        id=task_id,
        core=o.get("core", int, 0),
        period=period,
        offset=o.get("offset", int, 0),
        relative_deadline=deadline,
        priority=priority,
        profile=_parse_profile(prof.raw, prof.path),
        kind=kind,
    )
    o.done()
    return task


def parse_deployment(text: str | bytes, check: bool = True) -> Deployment:
    """Parse a JSON deployment document into a fully defaulted Deployment.

    With ``check`` (the default) the result is also validated and a
    ConfigError carrying the report is raised on the first error.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("syntax_error", f"{exc.msg} (line {exc.lineno}, column {exc.colno})", f"@{exc.pos}") from None
    top = _Obj(raw, "")

    pf = top.obj("platform")
    if pf is None:
        platform = Platform()
    else:
        platform = Platform(
            cycles_per_tick=pf.get("cycles_per_tick", int, DEFAULT_CYCLES_PER_TICK),
            mem_service_time=pf.get("mem_service_time", int, DEFAULT_MEM_SERVICE_TIME),
            dispatch_overhead=pf.get("dispatch_overhead", int, DEFAULT_DISPATCH_OVERHEAD),
            bus_arbitration=pf.get("bus_arbitration", str, "round_robin"),
        )
        pf.done()

    cores = []
    for core_raw, core_path in top.items("cores", required=True):
        c = _Obj(core_raw, core_path)
        cores.append(CoreConfig(policy=c.get("policy", str, "FP"), boot_offset=c.get("boot_offset", int, 0)))
        c.done()

    tasks = tuple(_parse_task(r, p) for r, p in top.items("tasks", required=True))

    regulator = None
    rg = top.obj("regulator")
    if rg is not None:
        budgets = tuple(_nullable_int(v, p) for v, p in rg.items("budgets_Q", required=True))
        if rg.has("chunk_size"):
            chunks = tuple(_nullable_int(v, p) for v, p in rg.items("chunk_size"))
        else:
            rg.seen.add("chunk_size")
            chunks = tuple(None if q is None else default_chunk(q) for q in budgets)
        regulator = RegulatorConfig(
            period_P=rg.get("period_P", int, platform.cycles_per_tick),
            budgets_Q=budgets,
            guaranteed_r_min=rg.get("guaranteed_r_min", int),
            chunk_size=chunks,
        )
        rg.done()

    channels = []
    for ch_raw, ch_path in top.items("channels"):
        c = _Obj(ch_raw, ch_path)
        channels.append(
            ChannelConfig(
                capacity=c.get("capacity", int),
                producer=c.get("producer", str),
                consumer=c.get("consumer", str),
                accesses_per_op=c.get("accesses_per_op", int, DEFAULT_ACCESSES_PER_OP),
            )
        )
        c.done()

    interrupts = []
    for irq_raw, irq_path in top.items("interrupts"):
        c = _Obj(irq_raw, irq_path)
        interrupts.append(
            InterruptSource(
                core=c.get("core", int),
                handler=c.get("handler", str),
                period=c.get("period", int, None),
                one_shot=c.get("one_shot", int, None),
            )
        )
        c.done()

    d = Deployment(
        platform=platform,
        cores=tuple(cores),
        tasks=tasks,
        regulator=regulator,
        channels=tuple(channels),
        interrupts=tuple(interrupts),
        trace_buffer_capacity=top.get("trace_buffer_capacity", int, DEFAULT_TRACE_CAPACITY),
        deadline_miss_policy=top.get("deadline_miss_policy", str, "record_continue"),
    )
    top.done()

    if check:
        report = validate_deployment(d)
        if not report.ok:
            first = report.errors[0]
            raise ConfigError(first.code, first.message, first.path, report=report)
    return d


def _nullable_int(value: Any, path: str) -> int | None:
    if value is None:
        return None
    _check_type(value, int, path)
    return value


def deployment_to_dict(d: Deployment) -> dict[str, Any]:
    """Canonical, fully explicit dictionary form (stable key order)."""

    def task_dict(t: Task) -> dict[str, Any]:
        out: dict[str, Any] = {"id": t.id, "core": t.core, "kind": t.kind}
        if t.period is not None:
            out["period"] = t.period
        out["offset"] = t.offset
        if t.relative_deadline is not None:
            out["relative_deadline"] = t.relative_deadline
        out["priority"] = t.priority
        out["profile"] = {
            "segments": [{"compute": s.compute, "mem_accesses": s.mem_accesses} for s in t.profile.segments]
        }
        return out

    def irq_dict(i: InterruptSource) -> dict[str, Any]:
        out: dict[str, Any] = {"core": i.core, "handler": i.handler}
        if i.period is not None:
            out["period"] = i.period
        if i.one_shot is not None:
            out["one_shot"] = i.one_shot
        return out

    doc: dict[str, Any] = {
        "platform": {
            "cycles_per_tick": d.platform.cycles_per_tick,
            "mem_service_time": d.platform.mem_service_time,
            "dispatch_overhead": d.platform.dispatch_overhead,
            "bus_arbitration": d.platform.bus_arbitration,
        },
        "cores": [{"policy": c.policy, "boot_offset": c.boot_offset} for c in d.cores],
        "tasks": [task_dict(t) for t in d.tasks],
    }
    if d.regulator is not None:
        r = d.regulator
        doc["regulator"] = {
            "period_P": r.period_P,
            "budgets_Q": list(r.budgets_Q),
            "guaranteed_r_min": r.guaranteed_r_min,
            "chunk_size": list(r.chunk_size),
        }
    doc["channels"] = [
        {"capacity": c.capacity, "producer": c.producer, "consumer": c.consumer, "accesses_per_op": c.accesses_per_op}
        for c in d.channels
    ]
    doc["interrupts"] = [irq_dict(i) for i in d.interrupts]
    doc["trace_buffer_capacity"] = d.trace_buffer_capacity
    doc["deadline_miss_policy"] = d.deadline_miss_policy
    return doc


def serialize_deployment(d: Deployment) -> str:
    return json.dumps(deployment_to_dict(d), indent=2) + "\n"


# --------------------------------------------------------------------------
# validation


def utilization(tasks: Iterable[Task], mem_service_time: int) -> Fraction:
    return sum(
        (Fraction(t.wcet(mem_service_time), t.period) for t in tasks if not t.is_handler and t.period),
        Fraction(0),
    )


def validate_deployment(d: Deployment) -> ValidationReport:
    """Check every type invariant and the cross-field rules.

    Never raises; all findings are collected into the report.
    """
    rep = ValidationReport()
    pf = d.platform
    n_cores = len(d.cores)

    for name in ("cycles_per_tick", "mem_service_time"):
        if getattr(pf, name) < 1:
            rep.error("platform_range", f"{name} must be >= 1", f"platform.{name}")
    if pf.dispatch_overhead < 0:
        rep.error("platform_range", "dispatch_overhead must be >= 0", "platform.dispatch_overhead")
    if pf.cycles_per_tick <= pf.dispatch_overhead:
        rep.error("tick_overhead", "cycles_per_tick must exceed dispatch_overhead", "platform.cycles_per_tick")
    if pf.bus_arbitration not in BUS_ARBITRATIONS:
        rep.error("bad_enum", f"unknown bus_arbitration '{pf.bus_arbitration}'", "platform.bus_arbitration")

    if n_cores == 0:
        rep.error("no_cores", "at least one core is required", "cores")
    for i, c in enumerate(d.cores):
        if c.policy not in POLICIES:
            rep.error("bad_enum", f"unknown policy '{c.policy}'", f"cores[{i}].policy")
        if c.boot_offset < 0:
            rep.error("boot_offset", "boot_offset must be >= 0", f"cores[{i}].boot_offset")

    if d.trace_buffer_capacity < 0:
        rep.error("trace_capacity", "trace_buffer_capacity must be >= 0", "trace_buffer_capacity")
    if d.deadline_miss_policy not in MISS_POLICIES:
        rep.error("bad_enum", f"unknown deadline_miss_policy '{d.deadline_miss_policy}'", "deadline_miss_policy")

    seen_ids: set[str] = set()
    for i, t in enumerate(d.tasks):
        path = f"tasks[{i}]"
        _validate_task(rep, d, t, path, n_cores)
        if t.id in seen_ids:
            rep.error("duplicate_id", f"duplicate id '{t.id}'", f"{path}.id")
        seen_ids.add(t.id)

    by_id = {t.id: t for t in d.tasks}
    _validate_interrupts(rep, d, by_id, n_cores)
    _validate_channels(rep, d, by_id)
    if d.regulator is not None:
        _validate_regulator(rep, d.regulator, n_cores)

    for c, core in enumerate(d.cores):
        on_core = [t for t in d.tasks if t.core == c and not t.is_handler]
        for t in on_core:
            if t.offset < core.boot_offset:
                rep.warn(
                    "boot_delay",
                    f"task '{t.id}' offset {t.offset} precedes core boot at {core.boot_offset}; first release delayed",
                    f"tasks[{d.tasks.index(t)}].offset",
                )
            if core.policy == "FP" and t.priority == DERIVED:
                rep.error(
                    "fp_derived_priority",
                    f"task '{t.id}' on FP core needs an explicit integer priority",
                    f"tasks[{d.tasks.index(t)}].priority",
                )
        if all(t.period and t.period > 0 for t in on_core):
            u = utilization(on_core, max(pf.mem_service_time, 1))
            if u > 1:
                rep.warn("utilization", f"utilization {float(u):.2f} > 1", f"cores[{c}]")
    return rep


def _validate_task(rep: ValidationReport, d: Deployment, t: Task, path: str, n_cores: int) -> None:
    if not isinstance(t.id, str) or not _ID_RE.match(t.id):
        rep.error("bad_id", f"task id '{t.id}' must match [A-Za-z0-9_.-]+", f"{path}.id")
    if t.kind not in TASK_KINDS:
        rep.error("bad_enum", f"unknown task kind '{t.kind}'", f"{path}.kind")
    if not 0 <= t.core < n_cores:
        rep.error("core_range", f"core {t.core} does not exist", f"{path}.core")
    if t.offset < 0:
        rep.error("offset_range", "offset must be >= 0", f"{path}.offset")
    if t.is_handler:
        if t.period is not None:
            rep.error("handler_period", "interrupt handlers have no period", f"{path}.period")
        if t.relative_deadline is not None and t.relative_deadline <= 0:
            rep.error("deadline_range", "relative_deadline must be > 0", f"{path}.relative_deadline")
    else:
        if t.period is None:
            rep.error("missing_period", "periodic task needs a period", f"{path}.period")
        elif t.period <= 0:
            rep.error("period_range", "period must be > 0", f"{path}.period")
        if t.relative_deadline is None or t.relative_deadline <= 0:
            rep.error("deadline_range", "relative_deadline must be > 0", f"{path}.relative_deadline")
        elif t.period is not None and t.relative_deadline > t.period:
            rep.error("deadline_range", "relative_deadline must not exceed period", f"{path}.relative_deadline")
    if isinstance(t.priority, bool) or not (isinstance(t.priority, int) or t.priority == DERIVED):
        rep.error("bad_priority", "priority must be an integer or 'derived'", f"{path}.priority")
    if not t.profile.segments:
        rep.error("empty_profile", "empty profile", f"{path}.profile.segments")
    for j, s in enumerate(t.profile.segments):
        if s.compute < 0 or s.mem_accesses < 0 or s.compute + s.mem_accesses <= 0:
            rep.error(
                "segment_range",
                "segment needs compute >= 0, mem_accesses >= 0 and a positive sum",
                f"{path}.profile.segments[{j}]",
            )


def _validate_interrupts(rep: ValidationReport, d: Deployment, by_id: dict[str, Task], n_cores: int) -> None:
    refs: dict[str, int] = {}
    for i, irq in enumerate(d.interrupts):
        path = f"interrupts[{i}]"
        if not 0 <= irq.core < n_cores:
            rep.error("core_range", f"core {irq.core} does not exist", f"{path}.core")
        if (irq.period is None) == (irq.one_shot is None):
            rep.error("irq_timing", "exactly one of period or one_shot is required", path)
        if irq.period is not None and irq.period <= 0:
            rep.error("period_range", "period must be > 0", f"{path}.period")
        if irq.one_shot is not None and irq.one_shot < 0:
            rep.error("irq_timing", "one_shot time must be >= 0", f"{path}.one_shot")
        handler = by_id.get(irq.handler)
        if handler is None:
            rep.error("unknown_task", f"unknown handler task '{irq.handler}'", f"{path}.handler")
            continue
        if not handler.is_handler:
            rep.error("irq_handler_kind", f"task '{irq.handler}' is not an interrupt_handler", f"{path}.handler")
        elif handler.core != irq.core:
            rep.error("irq_core", f"handler '{irq.handler}' lives on core {handler.core}", f"{path}.core")
        refs[irq.handler] = refs.get(irq.handler, 0) + 1
    for i, t in enumerate(d.tasks):
        if t.is_handler and refs.get(t.id, 0) != 1:
            rep.error(
                "handler_refs",
                f"handler '{t.id}' must be referenced by exactly one interrupt source (found {refs.get(t.id, 0)})",
                f"tasks[{i}]",
            )


def _validate_channels(rep: ValidationReport, d: Deployment, by_id: dict[str, Task]) -> None:
    for i, ch in enumerate(d.channels):
        path = f"channels[{i}]"
        if ch.capacity < 1:
            rep.error("channel_capacity", "capacity must be >= 1", f"{path}.capacity")
        if ch.accesses_per_op < 0:
            rep.error("channel_accesses", "accesses_per_op must be >= 0", f"{path}.accesses_per_op")
        for end in ("producer", "consumer"):
            tid = getattr(ch, end)
            if tid not in by_id:
                rep.error("channel_endpoint", f"unknown {end} task '{tid}'", f"{path}.{end}")
            elif by_id[tid].is_handler:
                rep.error("channel_endpoint", f"{end} '{tid}' must be a periodic task", f"{path}.{end}")
        if ch.producer == ch.consumer:
            rep.error("channel_endpoint", "producer and consumer must differ", path)


def _validate_regulator(rep: ValidationReport, r: RegulatorConfig, n_cores: int) -> None:
    if r.period_P < 1:
        rep.error("regulator_period", "period_P must be >= 1", "regulator.period_P")
    if len(r.budgets_Q) != n_cores:
        rep.error("regulator_shape", f"budgets_Q needs {n_cores} entries", "regulator.budgets_Q")
    if len(r.chunk_size) != len(r.budgets_Q):
        rep.error("regulator_shape", "chunk_size must match budgets_Q", "regulator.chunk_size")
    for i, q in enumerate(r.budgets_Q):
        if q is not None and q < 1:
            rep.error("regulator_budget", "regulated core budget must be >= 1", f"regulator.budgets_Q[{i}]")
        chunk = r.chunk_size[i] if i < len(r.chunk_size) else None
        if q is not None and (chunk is None or chunk < 1):
            rep.error("regulator_chunk", "chunk_size must be >= 1 for regulated cores", f"regulator.chunk_size[{i}]")
    if r.guaranteed_r_min < 1:
        rep.error("regulator_rmin", "guaranteed_r_min must be >= 1", "regulator.guaranteed_r_min")
    total = sum(q for q in r.budgets_Q if q is not None)
    if total > r.guaranteed_r_min:
        rep.error(
            "budget_oversubscription",
            f"budget oversubscription: sum of budgets {total} > guaranteed_r_min {r.guaranteed_r_min}",
            "regulator.budgets_Q",
        )


# --------------------------------------------------------------------------
# priorities


def derive_priorities(tasks: Sequence[Task], policy: str) -> dict[str, int]:
    """Rate- or deadline-monotonic priority assignment.

    Returns a dense map where the highest priority is ``len(tasks)`` and the
    lowest is 1. Ties go to the lexicographically smaller id.
    """
    if policy not in ("RM", "DM"):
        raise ValueError(f"cannot derive priorities for policy {policy!r}")
    if any(t.is_handler for t in tasks):
        raise ValueError("interrupt handlers are excluded from priority derivation")
    if policy == "RM":
        ordered = sorted(tasks, key=lambda t: (t.period, t.id))
    else:
        ordered = sorted(tasks, key=lambda t: (t.relative_deadline, t.id))
    n = len(ordered)
    return {t.id: n - i for i, t in enumerate(ordered)}


def effective_priorities(d: Deployment, core: int) -> dict[str, int]:
    """Priorities the scheduler uses on ``core`` (periodic tasks only)."""
    policy = d.cores[core].policy
    periodic = [t for t in d.tasks if t.core == core and not t.is_handler]
    if policy in ("RM", "DM"):
        return derive_priorities(periodic, policy)
    if policy == "FP":
        return {t.id: int(t.priority) for t in periodic}
    return {t.id: 0 for t in periodic}
