"""Per-core memory-access budget regulation with a reclaim pool.

Each regulation period a core is granted ``min(Q, max(predicted, chunk))``
accesses where the prediction is the previous period's usage. The rest of
``Q`` is donated to a shared pool. A core that runs out draws ``chunk``-sized
refills from the pool and is throttled until the next period once the pool
is empty. Unused pool budget expires at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from tokisim.model import RegulatorConfig

OK = "ok"
DEPLETED = "depleted"


class RegulationError(RuntimeError):
    """Raised when the regulator is driven against its protocol."""


@dataclass
class PeriodStats:
    period_index: int
    used: list[int]
    throttle_cycles: list[int]


@dataclass
class RegulatorState:
    config: RegulatorConfig
    q: list[int] = field(init=False)
    donated: list[int] = field(init=False)
    grant: list[int] = field(init=False)
    drawn: list[int] = field(init=False)
    pool_G: int = 0
    initial_pool: int = 0
    used_this_period: list[int] = field(init=False)
    used_prev_period: list[int | None] = field(init=False)
    throttled: list[bool] = field(init=False)
    throttle_since: list[int | None] = field(init=False)
    throttle_cycles: list[int] = field(init=False)
    period_index: int = -1

    def __post_init__(self) -> None:
        n = len(self.config.budgets_Q)
        self.q = [0] * n
        self.donated = [0] * n
        self.grant = [0] * n
        self.drawn = [0] * n
        self.used_this_period = [0] * n
        self.used_prev_period = [None] * n
        self.throttled = [False] * n
        self.throttle_since = [None] * n
        self.throttle_cycles = [0] * n

    @property
    def n_cores(self) -> int:
        return len(self.q)

    def regulated(self, core: int) -> bool:
        return self.config.budgets_Q[core] is not None

    def next_boundary(self) -> int:
        return (self.period_index + 1) * self.config.period_P

    def begin_period(self, now: int) -> list[int]:
        """Open a new regulation period and return the per-core grants.

        Throttled cores are released; the caller resumes them.
        """
        if now != (self.period_index + 1) * self.config.period_P:
            raise RegulationError(f"begin_period at {now} is off schedule")
        pool = 0
        for c in range(self.n_cores):
            budget = self.config.budgets_Q[c]
            self.used_prev_period[c] = self.used_this_period[c] if self.period_index >= 0 else None
            self.used_this_period[c] = 0
            self.drawn[c] = 0
            self.throttled[c] = False
            self.throttle_since[c] = None
            self.throttle_cycles[c] = 0
            if budget is None:
                self.grant[c] = self.q[c] = self.donated[c] = 0
                continue
            prev = self.used_prev_period[c]
            predict = budget if prev is None else prev
            g = min(budget, max(predict, self.config.chunk_size[c]))
            self.grant[c] = g
            self.donated[c] = budget - g
            self.q[c] = g
            pool += budget - g
        self.pool_G = pool
        self.initial_pool = pool
        self.period_index += 1
        return list(self.grant)

    def charge_access(self, core: int) -> str:
        """Account one access. Unregulated cores are only counted."""
        if self.throttled[core]:
            raise RegulationError(f"charge on throttled core {core}")
        self.used_this_period[core] += 1
        if not self.regulated(core):
            return OK
        if self.q[core] <= 0:
            raise RegulationError(f"charge on core {core} with empty budget")
        self.q[core] -= 1
        return DEPLETED if self.q[core] == 0 else OK

    def request_chunk(self, core: int, now: int) -> int:
        """Refill an empty budget from the pool.

        Returns the refill size, or 0 when the core is now throttled until the
        next period.
        """
        if self.q[core] != 0:
            raise RegulationError(f"request_chunk on core {core} with budget left")
        if self.pool_G > 0:
            n = min(self.pool_G, self.config.chunk_size[core])
            self.pool_G -= n
            self.q[core] = n
            self.drawn[core] += n
            return n
        self.throttled[core] = True
        self.throttle_since[core] = now
        return 0

    def end_period_stats(self, now: int) -> PeriodStats:
        """Usage record for the period ending at ``now`` (pure read)."""
        throttle = list(self.throttle_cycles)
        for c, since in enumerate(self.throttle_since):
            if since is not None:
                throttle[c] += now - since
        return PeriodStats(self.period_index, list(self.used_this_period), throttle)

    def check_enforcement(self) -> None:
        """Per-period enforcement invariant; raises RegulationError on breach."""
        for c in range(self.n_cores):
            if not self.regulated(c):
                continue
            if self.used_this_period[c] > self.grant[c] + self.drawn[c]:
                raise RegulationError(
                    f"core {c} used {self.used_this_period[c]} > grant {self.grant[c]} + drawn {self.drawn[c]}"
                )
            if self.grant[c] + self.donated[c] != self.config.budgets_Q[c]:
                raise RegulationError(f"core {c} grant + donation != Q")
        if sum(self.drawn) > self.initial_pool or self.pool_G + sum(self.drawn) != self.initial_pool:
            raise RegulationError("reclaim pool conservation broken")
