"""Synthetic workloads: UUniFast task sets and the interference scenario.

Generation is bit-reproducible across implementations:

* PRNG is SplitMix64 (Steele, Lea, Flood 2014). ``state += 0x9E3779B97F4A7C15``
  then the usual xor-shift-multiply finalizer; a uniform double is
  ``(x >> 11) * 2**-53``.
* UUniFast draws ``n - 1`` uniforms first, then one uniform per task for the
  period choice (``index = floor(u * len(choices))``).
* Per-task utilizations are quantized to parts per million by flooring; the
  last task takes the remainder so the total is exact.
* ``cost = floor(u_ppm * period / 10**6)``;
  ``accesses = min(round_half_up(intensity * cost / S), cost // S)``;
  ``compute = cost - accesses * S``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Sequence

from tokisim.model import (
    CoreConfig,
    Deployment,
    ExecutionProfile,
    Platform,
    RegulatorConfig,
    Segment,
    Task,
    default_chunk,
)

PPM = 1_000_000
_MASK = (1 << 64) - 1


class WorkloadError(ValueError):
    pass


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


def _ratio(value: Any, name: str) -> Fraction:
    """Config ratios are integers in parts per thousand; Fractions pass through."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool) or not isinstance(value, int):
        raise WorkloadError(f"{name} must be an integer in parts per thousand")
    return Fraction(value, 1000)


@dataclass(frozen=True)
class WorkloadSpec:
    """Task-set generator parameters.

    ``total_utilization`` and ``memory_intensity`` are exact ratios; the JSON
    form gives them as integers in parts per thousand. ``memory_intensity`` is
    one ratio per task class, assigned to tasks round robin.
    """

    n_tasks: int
    total_utilization: Fraction
    period_choices: tuple[int, ...]
    memory_intensity: tuple[Fraction, ...] = (Fraction(0),)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_tasks < 1:
            raise WorkloadError("n_tasks must be >= 1")
        if self.total_utilization <= 0:
            raise WorkloadError("total_utilization must be > 0")
        if (self.total_utilization * PPM).denominator != 1:
            raise WorkloadError("total_utilization must be a multiple of 1e-6")
        if not self.period_choices or any(p <= 0 for p in self.period_choices):
            raise WorkloadError("period_choices must be non-empty and positive")
        if not self.memory_intensity or any(not 0 <= m <= 1 for m in self.memory_intensity):
            raise WorkloadError("memory_intensity values must lie in [0, 1]")

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "WorkloadSpec":
        known = {"n_tasks", "total_utilization", "period_choices", "memory_intensity", "seed"}
        extra = set(raw) - known
        if extra:
            raise WorkloadError(f"unknown key '{sorted(extra)[0]}'")
        for key in ("n_tasks", "total_utilization", "period_choices"):
            if key not in raw:
                raise WorkloadError(f"missing required field '{key}'")
        mi = raw.get("memory_intensity", 0)
        mi_list = mi if isinstance(mi, list) else [mi]
        periods = raw["period_choices"]
        if not isinstance(periods, list) or not all(isinstance(p, int) and not isinstance(p, bool) for p in periods):
            raise WorkloadError("period_choices must be a list of integers")
        return cls(
            n_tasks=raw["n_tasks"],
            total_utilization=_ratio(raw["total_utilization"], "total_utilization"),
            period_choices=tuple(periods),
            memory_intensity=tuple(_ratio(m, "memory_intensity") for m in mi_list),
            seed=raw.get("seed", 0),
        )

    @classmethod
    def from_json(cls, text: str) -> "WorkloadSpec":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise WorkloadError(f"bad workload JSON: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise WorkloadError("workload spec must be a JSON object")
        return cls.from_dict(raw)


def uunifast(n: int, total: float, rng: SplitMix64) -> list[float]:
    utils = []
    remaining = total
    for i in range(1, n):
        nxt = remaining * rng.random() ** (1.0 / (n - i))
        utils.append(remaining - nxt)
        remaining = nxt
    utils.append(remaining)
    return utils


def quantize_ppm(utils: Sequence[float], total_ppm: int) -> list[int]:
    out = [int(u * PPM) for u in utils[:-1]]
    out.append(total_ppm - sum(out))
    return out


def _round_half_up(x: Fraction) -> int:
    return int((x * 2 + 1) // 2)


def generate_taskset(
    spec: WorkloadSpec,
    mem_service_time: int = Platform().mem_service_time,
    id_prefix: str = "t",
) -> list[Task]:
    """Draw a task set; tasks get core 0, implicit deadlines and derived priorities."""
    rng = SplitMix64(spec.seed)
    total_ppm = int(spec.total_utilization * PPM)
    utils = quantize_ppm(uunifast(spec.n_tasks, float(spec.total_utilization), rng), total_ppm)
    periods = [spec.period_choices[int(rng.random() * len(spec.period_choices))] for _ in range(spec.n_tasks)]
    tasks = []
    for i, (u_ppm, period) in enumerate(zip(utils, periods)):
        cost = u_ppm * period // PPM
        if cost <= 0:
            raise WorkloadError("utilization too small for period grid")
        intensity = spec.memory_intensity[i % len(spec.memory_intensity)]
        accesses = min(_round_half_up(intensity * cost / mem_service_time), cost // mem_service_time)
        compute = cost - accesses * mem_service_time
        tasks.append(
            Task(
                id=f"{id_prefix}{i}",
                core=0,
                period=period,
                relative_deadline=period,
                profile=ExecutionProfile((Segment(compute, accesses),)),
            )
        )
    return tasks


def taskset_deployment(
    tasks: Sequence[Task],
    cores: int = 1,
    policy: str = "RM",
    platform: Platform | None = None,
    regulator: RegulatorConfig | None = None,
) -> Deployment:
    """Wrap tasks into a deployment, partitioning them round robin over cores."""
    placed = []
    for i, t in enumerate(tasks):
        prio = t.priority
        if policy == "FP" and prio == "derived":
            prio = len(tasks) - i
        placed.append(Task(
            id=t.id, core=i % cores, period=t.period, offset=t.offset,
            relative_deadline=t.relative_deadline, priority=prio, profile=t.profile, kind=t.kind,
        ))
    return Deployment(
        platform=platform or Platform(),
        cores=tuple(CoreConfig(policy=policy) for _ in range(cores)),
        tasks=tuple(placed),
        regulator=regulator,
    )


# canonical two-core interference scenario
CRITICAL_PERIOD = 100_000
CRITICAL_COMPUTE = 20_000
CRITICAL_ACCESSES = 200
HOG_PERIOD = 10_000_000
HOG_ACCESSES = 250_000
CRITICAL_BUDGET = 300
HOG_BUDGET = 100
R_MIN = 1_250

REGULATED = "regulated"
UNREGULATED = "unregulated"


def interference_scenario(variant: str) -> Deployment:
    """Critical task on core 0, bus-saturating memory hog on core 1.

    The regulated variant bounds the hog at 100 accesses per 100000-cycle
    period (plus what it reclaims from the critical core's unused budget).
    """
    if variant not in (REGULATED, UNREGULATED):
        raise ValueError(f"unknown variant {variant!r}")
    platform = Platform()
    tasks = (
        Task(
            id="critical",
            core=0,
            period=CRITICAL_PERIOD,
            relative_deadline=CRITICAL_PERIOD,
            profile=ExecutionProfile((Segment(CRITICAL_COMPUTE, CRITICAL_ACCESSES),)),
        ),
        Task(
            id="hog",
            core=1,
            period=HOG_PERIOD,
            relative_deadline=HOG_PERIOD,
            profile=ExecutionProfile((Segment(0, HOG_ACCESSES),)),
        ),
    )
    regulator = None
    if variant == REGULATED:
        budgets = (CRITICAL_BUDGET, HOG_BUDGET)
        regulator = RegulatorConfig(
            period_P=platform.cycles_per_tick,
            budgets_Q=budgets,
            guaranteed_r_min=R_MIN,
            chunk_size=tuple(default_chunk(q) for q in budgets),
        )
    return Deployment(
        platform=platform,
        cores=(CoreConfig("RM"), CoreConfig("RM")),
        tasks=tasks,
        regulator=regulator,
    )
