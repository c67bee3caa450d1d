from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tokisim.model import validate_deployment
from tokisim.workloads import (
    HOG_BUDGET,
    REGULATED,
    UNREGULATED,
    SplitMix64,
    WorkloadError,
    WorkloadSpec,
    generate_taskset,
    interference_scenario,
    quantize_ppm,
    taskset_deployment,
    uunifast,
)


def test_splitmix64_reference_vector():
    rng = SplitMix64(0)
    assert rng.next_u64() == 0xE220A8397B1DCDAF
    assert rng.next_u64() == 0x6E789E6AA1B965F4
    assert rng.next_u64() == 0x06C45D188009454F


def test_single_task_half_utilization():
    spec = WorkloadSpec(1, Fraction(1, 2), (1000,))
    (t,) = generate_taskset(spec)
    assert (t.period, t.relative_deadline) == (1000, 1000)
    assert (t.profile.segments[0].compute, t.profile.segments[0].mem_accesses) == (500, 0)


def test_full_intensity_rounding():
    spec = WorkloadSpec(1, Fraction(2, 5), (1000,), (Fraction(1),))
    (t,) = generate_taskset(spec, mem_service_time=40)
    seg = t.profile.segments[0]
    assert (seg.mem_accesses, seg.compute) == (10, 0)


def test_accesses_clamped_to_cost():
    # 0.5 * 90 / 40 = 1.125 -> 1 access, 50 compute
    spec = WorkloadSpec(1, Fraction(9, 100), (1000,), (Fraction(1, 2),))
    seg = generate_taskset(spec, 40)[0].profile.segments[0]
    assert (seg.mem_accesses, seg.compute) == (1, 50)


def test_same_seed_same_set():
    spec = WorkloadSpec(5, Fraction(7, 10), (1000, 2000, 4000), (Fraction(1, 5),), seed=42)
    assert generate_taskset(spec) == generate_taskset(spec)
    other = WorkloadSpec(5, Fraction(7, 10), (1000, 2000, 4000), (Fraction(1, 5),), seed=43)
    assert generate_taskset(spec) != generate_taskset(other)


def test_tiny_utilization_rejected():
    spec = WorkloadSpec(1, Fraction(5, 10_000), (1000,))
    with pytest.raises(WorkloadError, match="utilization too small for period grid"):
        generate_taskset(spec)


def test_spec_from_json_ppt():
    spec = WorkloadSpec.from_json('{"n_tasks": 3, "total_utilization": 700, "period_choices": [1000], "seed": 1}')
    assert spec.total_utilization == Fraction(7, 10)
    with pytest.raises(WorkloadError):
        WorkloadSpec.from_json('{"n_tasks": 3, "total_utilization": 700, "period_choices": [1000], "x": 1}')
    with pytest.raises(WorkloadError):
        WorkloadSpec.from_json('{"n_tasks": 3}')


@given(st.integers(1, 12), st.integers(1, 1000), st.integers(0, 2**64 - 1))
@settings(max_examples=200)
def test_uunifast_sums_to_total(n, ppt, seed):
    total = ppt / 1000
    utils = uunifast(n, total, SplitMix64(seed))
    assert len(utils) == n and all(u >= 0 for u in utils)
    assert sum(utils) == pytest.approx(total)
    q = quantize_ppm(utils, ppt * 1000)
    assert sum(q) == ppt * 1000 and all(x >= 0 for x in q)


def test_generated_sets_validate():
    spec = WorkloadSpec(3, Fraction(7, 10), (1000, 2000, 4000, 8000), seed=1)
    for policy in ("RM", "DM", "EDF", "FP"):
        d = taskset_deployment(generate_taskset(spec), policy=policy)
        assert validate_deployment(d).ok


def test_partition_round_robin():
    spec = WorkloadSpec(5, Fraction(1), (1000,), seed=3)
    d = taskset_deployment(generate_taskset(spec), cores=2)
    assert [t.core for t in d.tasks] == [0, 1, 0, 1, 0]


def test_interference_unregulated():
    d = interference_scenario(UNREGULATED)
    assert validate_deployment(d).ok and d.regulator is None


def test_interference_regulated():
    d = interference_scenario(REGULATED)
    assert validate_deployment(d).ok
    assert sum(d.regulator.budgets_Q) <= d.regulator.guaranteed_r_min
    assert d.regulator.budgets_Q[1] == HOG_BUDGET


def test_interference_unknown_variant():
    with pytest.raises(ValueError):
        interference_scenario("both")
