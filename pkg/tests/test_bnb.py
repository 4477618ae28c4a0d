import numpy as np
import pytest

from afsched.errors import ContractError
from afsched.milp import big_delta, build_model
from afsched.model import SystemParams, generate_instance
from afsched.sinr import Schedule, validate_schedule
from afsched.solver.bnb import INFEASIBLE, NODE_LIMIT, OPTIMAL, extract_schedule, solve_milp
from afsched.solver.oracle import enumerate_optimum, slot_patterns
from afsched.solver.simplex import solve_lp

from conftest import make_instance

LOW_BETA = SystemParams.from_split(beta_db=3.0, beta1_db=0.0, beta2_db=0.0, T=2, demand=2)


def strong_pair():
    # each source hits the other's destination as hard as its own
    return make_instance([[0.5, 0.5], [0.5, 0.5]], links=[(0, 0), (1, 1)], T=1, demand=1)


def test_smallest_model_shape():
    inst = make_instance([[0.5]], T=1, demand=1)
    m = build_model(inst, "cls")
    assert m.row_counts() == {"C3a": 1, "C3b": 1, "C7": 1, "C8lo": 1, "C8hi": 1}
    assert [k.kind for k in m.keys] == ["x", "P"]


def test_delta_lower_bound_and_monotone_in_sources():
    one = make_instance([[0.5]], T=1, demand=1)
    two = make_instance([[0.5], [0.2]], links=[(0, 0), (1, 0)], T=1, demand=1)
    assert big_delta(one) >= one.params.beta * one.params.sigma2
    assert big_delta(two) >= big_delta(one)


def test_mutual_interferers_only_one_link():
    inst = strong_pair()
    sol = solve_milp(build_model(inst, "dls"))
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(1.0)


def test_weak_link_is_never_scheduled():
    # SNR at max power: 300 * 1e-8 / 1e-6 = 3 < 10
    inst = make_instance([[1e-8]], T=2, demand=2)
    sol = solve_milp(build_model(inst, "dls"))
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(0.0)


def test_integral_relaxation_takes_one_node():
    # one clean link with no interference: the LP optimum is already integral
    inst = make_instance([[0.5]], T=1, demand=1)
    model = build_model(inst, "cls")
    sol = solve_milp(model)
    assert sol.nodes_explored == 1
    assert sol.objective == pytest.approx(solve_lp(model).objective)


def test_at_least_demand_can_be_infeasible():
    inst = make_instance([[1e-8]], T=1, demand=1, demand_mode="at_least")
    assert solve_milp(build_model(inst, "dls")).status == INFEASIBLE


def test_node_limit_reports_bound():
    inst = generate_instance(2, 3, 1, 3, SystemParams(T=2, demand=2))
    sol = solve_milp(build_model(inst, "cls"), node_limit=1)
    assert sol.status in (NODE_LIMIT, OPTIMAL)
    if sol.status == NODE_LIMIT:
        assert sol.bound >= (sol.objective if sol.values is not None else -np.inf) - 1e-9


def test_node_log_records():
    inst = generate_instance(2, 2, 1, 2, SystemParams(T=2, demand=2))
    log = []
    sol = solve_milp(build_model(inst, "cls"), node_log=log.append)
    assert len(log) == sol.nodes_explored
    assert log[0].depth == 0
    assert all(r.incumbent <= r.bound + 1e-9 for r in log)


@pytest.mark.parametrize("seed", range(6))
def test_milp_bounded_by_relaxation_and_schedule_valid(seed):
    inst = generate_instance(seed, 2, 1, 2, LOW_BETA)
    model = build_model(inst, "cls")
    sol = solve_milp(model)
    assert sol.objective <= solve_lp(model).objective + 1e-7
    sched = extract_schedule(inst, model, sol.values)
    assert validate_schedule(inst, sched) == []
    assert model.violations(sol.values) == []


def test_extract_all_zero_is_empty():
    inst = generate_instance(0, 2, 1, 2)
    model = build_model(inst, "cls")
    assert extract_schedule(inst, model, np.zeros(model.n_vars)).equals(Schedule.empty(inst))


def test_extract_sets_relay_link():
    inst = generate_instance(0, 2, 2, 2)
    model = build_model(inst, "cls")
    z = np.zeros(model.n_vars)
    for col, k in enumerate(model.keys):
        if (k.kind, k.i, k.j, k.t) == ("x", 1, 1, 3) or (k.kind, k.i, k.r, k.j, k.t) == ("y", 1, 0, 1, 3):
            z[col] = 1
        if (k.kind, k.i, k.t) == ("P", 1, 3):
            z[col] = 50.0
    s = extract_schedule(inst, model, z)
    assert s.y[3, inst.relay_link_index[(1, 0, 1)]] == 1
    assert s.x.sum() == 1 and s.y.sum() == 1
    assert s.p[3, 1] == 50.0


def test_extract_rejects_fractional():
    inst = generate_instance(0, 2, 1, 2)
    model = build_model(inst, "cls")
    z = np.zeros(model.n_vars)
    z[0] = 0.5
    with pytest.raises(ContractError):
        extract_schedule(inst, model, z)


def test_schedule_round_trips_through_model():
    inst = generate_instance(5, 2, 1, 2, LOW_BETA)
    model = build_model(inst, "cls")
    sol = solve_milp(model)
    sched = extract_schedule(inst, model, sol.values)
    # rebuild the vector from the schedule and check every row
    z = np.zeros(model.n_vars)
    for col, k in enumerate(model.keys):
        if k.kind == "x":
            z[col] = sched.x[k.t, inst.link_index[(k.i, k.j)]]
        elif k.kind == "y":
            z[col] = sched.y[k.t, inst.relay_link_index[(k.i, k.r, k.j)]]
        else:
            z[col] = sched.p[k.t, k.i]
    assert model.violations(z) == []


def test_slot_patterns_respect_relay_exclusivity():
    inst = generate_instance(0, 2, 1, 2)
    pats = slot_patterns(inst, "cls")
    # per link: off, direct, via relay 0; both via relay 0 is excluded
    assert len(pats) == 3 * 3 - 1
    assert len(slot_patterns(inst, "dls")) == 4


@pytest.mark.parametrize("seed", range(8))
def test_bnb_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    beta = float(rng.choice([0.0, 3.0, 6.0]))
    params = SystemParams.from_split(beta_db=beta, beta1_db=beta - 3, beta2_db=beta - 3,
                                     T=2, demand=int(rng.integers(1, 3)))
    inst = generate_instance(seed, 2, 1, 2, params)
    for mode in ("cls", "dls"):
        ref = enumerate_optimum(inst, mode)
        sol = solve_milp(build_model(inst, mode))
        assert sol.objective == pytest.approx(ref.objective, abs=1e-6)
        assert validate_schedule(inst, ref.schedule) == []
