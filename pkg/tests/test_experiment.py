import numpy as np
import pytest

from afsched.errors import ContractError
from afsched.experiment import (CSV_HEADER, BufferState, ExperimentSpec, buffer_demand,
                                mean_records, pick_solver, read_csv, records_to_csv, relay_family,
                                run_periods, run_single, run_sweep)
from afsched.model import SystemParams, extend_relays, generate_instance

from conftest import make_instance

SMALL = SystemParams(T=2, demand=2)


def test_buffer_demand_examples():
    st = BufferState([8, 0, 3], [8, 8, 8])
    assert buffer_demand(st, 8).tolist() == [8, 0, 3]
    # floor(5/7 * 8) = floor(5.71) = 5
    assert buffer_demand(BufferState([5], [7]), 8).tolist() == [5]


def test_buffer_state_validation():
    with pytest.raises(ValueError):
        BufferState([3], [2])
    with pytest.raises(ValueError):
        BufferState([0], [0])


def test_single_strong_link_full_throughput():
    inst = make_instance([[0.5]], T=8, demand=8)
    rec = run_single(inst, "cls", "exact")
    assert rec.norm_throughput == 1.0
    assert rec.solver == "exact"


def test_demand_cap_limits_throughput():
    inst = generate_instance(1, 2, 1, 2, SystemParams(T=8, demand=4))
    rec = run_single(inst, "cls", "lp-round")
    assert rec.norm_throughput <= 0.5


def test_cls_without_relays_equals_dls():
    inst = generate_instance(3, 2, 0, 2, SMALL)
    assert run_single(inst, "cls", "exact").objective == run_single(inst, "dls", "exact").objective


def test_pick_solver_cutover():
    tiny = generate_instance(0, 2, 1, 2, SMALL)
    big = generate_instance(0, 4, 4, 4)
    assert pick_solver(tiny, "cls", "auto") == "exact"
    assert pick_solver(big, "cls", "auto") == "lp-round"
    with pytest.raises(ValueError):
        pick_solver(tiny, "cls", "cplex")


def test_sweep_shape_and_relay_policy():
    spec = ExperimentSpec(n_sources=(4,), relays=("n",), seeds=(0, 1), modes=("cls",),
                          solver="lp-round", trials=2)
    recs = run_sweep(spec)
    assert [r.seed for r in recs] == [0, 1]
    assert all(r.m == 4 and r.n == 4 for r in recs)
    assert recs[0].instance_id != recs[1].instance_id


def test_sweep_is_deterministic_and_csv_stable():
    spec = ExperimentSpec(n_sources=(2,), relays=("n", 1), seeds=(0, 1), base=SMALL,
                          splits=((5.0, 5.0), (4.0, 6.0)))
    a = records_to_csv(run_sweep(spec))
    b = records_to_csv(run_sweep(spec))
    assert a == b
    rows = read_csv(a)
    assert tuple(rows[0].keys()) == CSV_HEADER
    assert {r["beta1_db"] for r in rows} == {"5.0", "4.0"}
    assert all(r["runtime_ms"] == "" for r in rows)
    # per split: cls with m=2 and m=1, and one dls group (m is 0 for both)
    assert sum(r["seed"] == "mean" for r in rows) == 2 * 3


def test_mean_records():
    spec = ExperimentSpec(n_sources=(2,), seeds=(0, 1, 2), modes=("dls",), base=SMALL)
    recs = run_sweep(spec)
    (mean,) = mean_records(recs)
    assert mean.norm_throughput == pytest.approx(np.mean([r.norm_throughput for r in recs]))
    assert mean.seed == "mean"


def test_run_single_rejects_broken_solver(monkeypatch):
    import afsched.experiment as ex
    inst = make_instance([[0.5]], T=1, demand=1)

    def bogus(*args, **kwargs):
        from afsched.sinr import Schedule
        s = Schedule.empty(inst)
        s.x[0, 0], s.p[0, 0] = 1, 1e-9
        return s, "bogus"

    monkeypatch.setattr(ex, "solve_schedule", bogus)
    with pytest.raises(ContractError):
        ex.run_single(inst)


def test_exact_cls_never_below_dls():
    for seed in range(6):
        inst = generate_instance(seed, 2, 1, 2, SystemParams.from_split(
            beta_db=3.0, beta1_db=0.0, beta2_db=0.0, T=2, demand=2))
        cls = run_single(inst, "cls", "exact").objective
        dls = run_single(inst, "dls", "exact").objective
        assert cls >= dls - 1e-9


def test_relay_monotonicity_on_a_family():
    base = generate_instance(7, 2, 0, 2, SystemParams.from_split(
        beta_db=3.0, beta1_db=0.0, beta2_db=0.0, T=2, demand=2))
    fam = relay_family(extend_relays(base, 2, seed=1))
    objs = [run_single(inst, "cls", "exact").objective for inst in fam]
    assert all(b >= a - 1e-9 for a, b in zip(objs, objs[1:]))


def test_periods_without_traffic():
    inst = generate_instance(0, 2, 1, 2, SMALL)
    recs = run_periods(inst, 3, 0.0, BufferState([0, 0], [4, 4]))
    assert all(r.norm_throughput == 0.0 for r in recs)
    assert all(r.demand.tolist() == [0, 0] for r in recs)


def test_saturated_buffers_demand_every_slot():
    inst = generate_instance(0, 2, 1, 2, SMALL)
    recs = run_periods(inst, 3, 50.0, BufferState([4, 4], [4, 4]), solver_choice="lp-round")
    assert all(r.demand.tolist() == [2, 2] for r in recs)


def test_buffer_conservation():
    inst = generate_instance(2, 3, 1, 3, SMALL)
    start = np.array([1, 3, 0])
    recs = run_periods(inst, 5, 0.4, BufferState(start, [4, 4, 4]), seed=3,
                       solver_choice="lp-round")
    buffered = start.copy()
    for r in recs:
        assert np.all(r.drained <= r.scheduled)
        assert np.all(r.scheduled <= r.demand)
        buffered = buffered - r.drained + r.arrivals
        assert np.array_equal(buffered, r.buffered_end)
    total_in = sum(r.arrivals for r in recs)
    total_out = sum(r.drained for r in recs)
    assert np.array_equal(recs[-1].buffered_end, start + total_in - total_out)


def test_negative_arrival_rate_rejected():
    inst = generate_instance(0, 2, 1, 2, SMALL)
    with pytest.raises(ValueError):
        run_periods(inst, 1, -1.0, BufferState([0, 0], [4, 4]))
