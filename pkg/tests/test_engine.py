import random

import pytest

from gen import random_small_deployment
from reference import reference_run
from tokisim.engine import (
    BLOCKED,
    BLOCKING,
    RECEIVED,
    SENT,
    WOULD_BLOCK,
    Channel,
    ChannelError,
    first_release,
    run,
    simulate,
)
from tokisim.model import (
    ChannelConfig,
    CoreConfig,
    Deployment,
    ExecutionProfile,
    InterruptSource,
    Platform,
    RegulatorConfig,
    Task,
)
from tokisim.trace import IRQ_DEFERRED, IRQ_OVERRUN, IRQ_PENDING, IRQ_RELEASED, OUT_ABORTED, OUT_BLOCKED, Kind, format_trace
from tokisim.workloads import interference_scenario


def task(tid, period=None, core=0, prof=((100, 0),), **kw):
    deadline = kw.pop("deadline", period)
    return Task(id=tid, core=core, period=period, relative_deadline=deadline, profile=ExecutionProfile.of(*prof), **kw)


def handler(tid, core=0, compute=10, priority=5):
    return Task(id=tid, core=core, kind="interrupt_handler", priority=priority, profile=ExecutionProfile.of((compute, 0)))


ONE = (CoreConfig("FP"),)


def kinds(events, kind, tid=None):
    return [e for e in events if e.kind is kind and (tid is None or e.task == tid)]


def test_single_task_example():
    d = Deployment(cores=ONE, tasks=(task("a", 1000, priority=1),))
    trace, m = run(d, 10_000)
    ev = trace.merged()
    assert len(kinds(ev, Kind.JOB_RELEASE)) == 10
    done = kinds(ev, Kind.JOB_COMPLETE)
    assert len(done) == 10
    assert {e.arg1 for e in done} == {100 + d.platform.dispatch_overhead}
    assert m.tasks["a"].response_max == 150 and m.tasks["a"].jitter == 0


def test_until_must_be_positive():
    d = Deployment(cores=ONE, tasks=(task("a", 1000, priority=1),))
    with pytest.raises(ValueError):
        run(d, 0)


def test_invalid_deployment_refused():
    d = Deployment(cores=ONE, tasks=(task("a", 1000),))  # FP without explicit priority
    with pytest.raises(ValueError):
        run(d, 1000)


def test_window_is_half_open():
    d = Deployment(cores=ONE, tasks=(task("a", 1000, priority=1),))
    ev = simulate(d, 1000).events()
    assert [e.time for e in kinds(ev, Kind.JOB_RELEASE)] == [0]


def test_same_inputs_same_trace_bytes():
    d = interference_scenario("regulated")
    a = simulate(d, 500_000)
    b = simulate(d, 500_000)
    assert format_trace(a.events(), a.trace.dropped) == format_trace(b.events(), b.trace.dropped)


def test_uncontended_access_takes_service_time():
    d = Deployment(platform=Platform(dispatch_overhead=0), cores=(CoreConfig("RM"),), tasks=(task("a", 1000, prof=((0, 1),)),))
    (done,) = kinds(simulate(d, 1000).events(), Kind.JOB_COMPLETE)
    assert done.time == 40


def test_simultaneous_accesses_serialize_round_robin():
    S = 40
    d = Deployment(
        platform=Platform(dispatch_overhead=0, mem_service_time=S),
        cores=(CoreConfig("RM"), CoreConfig("RM")),
        tasks=(task("a", 1000, 0, ((0, 1),)), task("b", 1000, 1, ((0, 1),))),
    )
    done = {e.task: e.time for e in kinds(simulate(d, 1000).events(), Kind.JOB_COMPLETE)}
    assert done == {"a": S, "b": 2 * S}


def test_bus_counters_conserve():
    sim = simulate(interference_scenario("unregulated"), 300_000, check_invariants=True)
    bus = sim.bus
    outstanding = sum(bus.pending) + (bus.in_service is not None)
    assert bus.issued == bus.completed + outstanding


def test_boot_offset_first_release():
    d = Deployment(
        cores=(CoreConfig("RM"), CoreConfig("RM", boot_offset=5000)),
        tasks=(task("x", 2000, 0), task("a", 2000, 1), task("b", 9000, 1, offset=7000)),
    )
    ev = simulate(d, 8000).events()
    first = {}
    for e in kinds(ev, Kind.JOB_RELEASE):
        first.setdefault(e.task, e.time)
    assert first == {"x": 0, "a": 6000, "b": 7000}
    boots = kinds(ev, Kind.BOOT_RELEASE)
    assert [(e.core, e.time, e.arg0) for e in boots] == [(0, 0, 0), (1, 5000, 5000)]


def test_first_release_grid():
    t = task("a", 2000, offset=0)
    assert first_release(t, 5000) == 6000
    assert first_release(t, 6000) == 6000
    assert first_release(task("b", 2000, offset=7000), 5000) == 7000


def test_all_boot_offsets_zero_is_simultaneous_start():
    d = Deployment(cores=(CoreConfig("RM"), CoreConfig("RM")), tasks=(task("a", 1000, 0), task("b", 1000, 1)))
    rel = kinds(simulate(d, 1000).events(), Kind.JOB_RELEASE)
    assert [e.time for e in rel] == [0, 0]


# ---------------------------------------------------------------- channels


def test_channel_data_level():
    ch = Channel(ChannelConfig(4, "p", "c"))
    ch.send("p"), ch.send("p")
    assert ch.send("p") == SENT and ch.occupancy == 3
    ch.send("p")
    assert ch.send("p") == WOULD_BLOCK
    assert ch.send("p", BLOCKING) == BLOCKED
    with pytest.raises(ChannelError):
        ch.send("c")


def test_channel_recv_data_level():
    ch = Channel(ChannelConfig(2, "p", "c"))
    assert ch.recv("c")[0] == WOULD_BLOCK
    assert ch.recv("c", BLOCKING)[0] == BLOCKED
    ch.send("p")
    assert ch.recv("c") == (RECEIVED, 0) and ch.occupancy == 0


def test_blocked_producer_wakes_after_consumer_receive():
    D, S, A = 50, 40, 2
    d = Deployment(
        platform=Platform(dispatch_overhead=D, mem_service_time=S),
        cores=(CoreConfig("FP"), CoreConfig("FP")),
        tasks=(
            task("p", 1000, 0, ((10, 0),), priority=1),
            task("c", 5000, 1, ((10, 0),), offset=1500, priority=1),
        ),
        channels=(ChannelConfig(1, "p", "c", A),),
    )
    ev = simulate(d, 2000).events()
    out = kinds(ev, Kind.SCHED_SWITCH_OUT, "p")
    assert [(e.arg0, e.arg1) for e in out] == [(1, OUT_BLOCKED)]
    (recv,) = kinds(ev, Kind.CHANNEL_RECV)
    sends = kinds(ev, Kind.CHANNEL_SEND)
    assert sends[1].time == recv.time + D + A * S
    assert sends[1].arg1 == 1


def test_blocked_consumer_wakes_after_send():
    D, S = 50, 40
    d = Deployment(
        platform=Platform(dispatch_overhead=D, mem_service_time=S),
        cores=(CoreConfig("FP"), CoreConfig("FP")),
        tasks=(
            task("p", 5000, 0, ((10, 0),), offset=700, priority=1),
            task("c", 5000, 1, ((10, 0),), priority=1),
        ),
        channels=(ChannelConfig(2, "p", "c", 1),),
    )
    ev = simulate(d, 5000).events()
    (send,) = kinds(ev, Kind.CHANNEL_SEND)
    (recv,) = kinds(ev, Kind.CHANNEL_RECV)
    assert [e.arg1 for e in kinds(ev, Kind.SCHED_SWITCH_OUT, "c")] == [OUT_BLOCKED]
    assert recv.time == send.time + D + S
    assert recv.arg1 == 0


def test_blocked_jobs_wake_in_fifo_order():
    # two producer jobs block on a full channel; the older one resumes first
    d = Deployment(
        cores=(CoreConfig("FP"), CoreConfig("FP")),
        tasks=(task("p", 1000, 0, ((10, 0),), priority=1), task("c", 5000, 1, ((10, 0),), offset=2500, priority=1)),
        channels=(ChannelConfig(1, "p", "c", 2),),
    )
    ev = simulate(d, 2800).events()
    resumed = [e.arg0 for e in kinds(ev, Kind.SCHED_SWITCH_IN, "p") if e.time > 2500]
    assert resumed[0] == 1


# ---------------------------------------------------------------- interrupts


def test_idle_core_latency_is_dispatch_overhead():
    d = Deployment(cores=ONE, tasks=(handler("h"),), interrupts=(InterruptSource(0, "h", one_shot=300),))
    sim = simulate(d, 2000)
    (enter,) = kinds(sim.events(), Kind.IRQ_ENTER)
    assert enter.time - 300 == d.platform.dispatch_overhead
    assert sim.metrics().interrupts["h"].latency_max == d.platform.dispatch_overhead


def test_latency_on_throttled_core():
    # the task is throttled at 130 until the boundary at T=1000
    P, assert_at, D = 1000, 500, 50
    d = Deployment(
        cores=(CoreConfig("FP"),),
        tasks=(task("p", 10_000, prof=((0, 10),), priority=1), handler("h")),
        regulator=RegulatorConfig(P, (2,), 2, (1,)),
        interrupts=(InterruptSource(0, "h", one_shot=assert_at),),
    )
    ev = simulate(d, 1500).events()
    assert kinds(ev, Kind.THROTTLE_START)[0].time < assert_at
    (enter,) = kinds(ev, Kind.IRQ_ENTER)
    assert enter.time - assert_at == (P - assert_at) + D


def test_pending_and_overrun():
    d = Deployment(cores=ONE, tasks=(handler("h", compute=250),), interrupts=(InterruptSource(0, "h", period=100),))
    sim = simulate(d, 500)
    asserts = kinds(sim.events(), Kind.IRQ_ASSERT)
    assert [e.arg1 for e in asserts] == [IRQ_RELEASED, IRQ_PENDING, IRQ_OVERRUN, IRQ_OVERRUN]
    enters = kinds(sim.events(), Kind.IRQ_ENTER)
    # first at 100+50; pending one (asserted at 200) after the first completes at 400
    assert [(e.time, e.arg0) for e in enters] == [(150, 100), (450, 200)]
    assert sim.metrics().interrupts["h"].overruns == 2


def test_assert_before_boot_is_deferred():
    d = Deployment(
        cores=(CoreConfig("FP"), CoreConfig("FP", boot_offset=1000)),
        tasks=(handler("h", core=1),),
        interrupts=(InterruptSource(1, "h", one_shot=200),),
    )
    ev = simulate(d, 2000).events()
    (a,) = kinds(ev, Kind.IRQ_ASSERT)
    assert a.time == 1000 and a.arg1 == IRQ_RELEASED | IRQ_DEFERRED


def test_no_interrupts_section_absent():
    _, m = run(Deployment(cores=ONE, tasks=(task("a", 1000, priority=1),)), 5000)
    assert "interrupts" not in m.to_dict()


# ---------------------------------------------------------------- misses, faults, oracle


def test_abort_policy_drops_late_job():
    d = Deployment(cores=ONE, tasks=(task("a", 1000, prof=((2000, 0),), priority=1),), deadline_miss_policy="abort_job")
    ev = simulate(d, 1500).events()
    miss = kinds(ev, Kind.DEADLINE_MISS)
    assert [(e.time, e.arg0) for e in miss] == [(1000, 0)]
    outs = kinds(ev, Kind.SCHED_SWITCH_OUT)
    assert [(e.time, e.arg1) for e in outs] == [(1000, OUT_ABORTED)]
    assert not kinds(ev, Kind.JOB_COMPLETE)


def test_record_continue_keeps_running():
    d = Deployment(cores=ONE, tasks=(task("a", 3000, prof=((1000, 0),), deadline=500, priority=1),))
    ev = simulate(d, 3000).events()
    assert len(kinds(ev, Kind.DEADLINE_MISS)) == 1
    assert kinds(ev, Kind.JOB_COMPLETE)[0].arg1 == 1050


def test_completion_exactly_at_deadline_is_not_a_miss():
    d = Deployment(cores=ONE, tasks=(task("a", 1000, prof=((450, 0),), deadline=500, priority=1),))
    ev = simulate(d, 1000).events()
    assert kinds(ev, Kind.JOB_COMPLETE)[0].time == 500
    assert not kinds(ev, Kind.DEADLINE_MISS)


def test_regulated_scenario_passes_invariant_checks():
    sim = simulate(interference_scenario("regulated"), 1_000_000, check_invariants=True)
    assert sim.period_stats and sim.trace.conserved()


@pytest.mark.parametrize("seed", range(20))
def test_matches_reference_interpreter(seed):
    d = random_small_deployment(random.Random(seed))
    assert simulate(d, 10_000, check_invariants=True).events() == reference_run(d, 10_000)
