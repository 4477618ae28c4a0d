import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from afsched.errors import ValidationError
from afsched.model import (DemandMode, NetworkInstance, NodeId, SystemParams, db_to_linear,
                           extend_relays, generate_instance, linear_to_db, normalize_split,
                           subset_relays, validate_instance)

from conftest import make_instance


def test_db_conversions():
    assert db_to_linear(10.0) == pytest.approx(10.0)
    assert db_to_linear(0.0) == 1.0
    assert linear_to_db(100.0) == pytest.approx(20.0)


def test_even_split_is_ten_log_five():
    b1, b2 = normalize_split(10.0, 5.0, 5.0)
    # 5 + 5 = 10 in linear scale
    assert b1 == pytest.approx(6.989700043360188, abs=1e-12)
    assert b2 == pytest.approx(b1)


def test_uneven_split_keeps_db_gap():
    # 10^0.4 + 10^0.6 = 6.492958; scale up by 10/6.492958 i.e. +1.875574 dB
    b1, b2 = normalize_split(10.0, 4.0, 6.0)
    assert b1 == pytest.approx(5.875574, abs=1e-6)
    assert b2 == pytest.approx(7.875574, abs=1e-6)
    assert db_to_linear(b1) + db_to_linear(b2) == pytest.approx(10.0, rel=1e-12)


def test_default_params():
    pr = SystemParams()
    assert pr.beta == pytest.approx(10.0)
    assert pr.beta1 + pr.beta2 == pytest.approx(pr.beta)
    assert pr.energy_budget == pytest.approx(0.3 * 300 * 8)
    assert pr.p_slot_min == pytest.approx(0.01 * pr.p_slot_max)
    assert pr.violations() == []


def test_raw_split_that_does_not_sum_is_flagged():
    pr = SystemParams(beta1_db=5.0, beta2_db=5.0)
    assert [v.rule for v in pr.violations()] == ["threshold-sum"]


@pytest.mark.parametrize("kwargs, rule", [
    ({"p_slot_min": 400.0}, "power-bounds"),
    ({"sigma2": 0.0}, "sigma2"),
    ({"demand": 9}, "demand"),
    ({"T": 0, "demand": 0}, "T"),
])
def test_param_violations(kwargs, rule):
    assert rule in [v.rule for v in SystemParams(**kwargs).violations()]


def test_demand_vector():
    assert list(SystemParams(demand=3).demand_vector(4)) == [3, 3, 3, 3]
    assert list(SystemParams(demand=(1, 2)).demand_vector(2)) == [1, 2]
    with pytest.raises(ValueError):
        SystemParams(demand=(1, 2)).demand_vector(3)


def test_generation_is_deterministic():
    a = generate_instance(5, 3, 2, 3)
    b = generate_instance(5, 3, 2, 3)
    c = generate_instance(6, 3, 2, 3)
    assert a.dumps() == b.dumps()
    assert a.dumps() != c.dumps()


def test_default_links_and_relay_links():
    inst = generate_instance(0, 4, 2, 2)
    assert inst.links == ((0, 0), (1, 1), (2, 0), (3, 1))
    assert len(inst.relay_links) == 8
    assert inst.relay_links_of((2, 0)) == [4, 5]
    assert inst.links_of_source(3) == [3]


def test_per_pair_gain_range():
    inst = generate_instance(11, 6, 6, 6)
    for arr in (inst.gains.sd, inst.gains.sr, inst.gains.rd):
        assert arr.min() >= 0.01 and arr.max() <= 1.0


def test_planar_gains_bounded():
    inst = generate_instance(11, 6, 6, 6, placement="planar")
    for arr in (inst.gains.sd, inst.gains.sr, inst.gains.rd):
        assert arr.max() <= 1.0 and arr.min() > 0


def test_relays_nest_across_counts():
    big = generate_instance(3, 4, 5, 4)
    small = generate_instance(3, 4, 2, 4)
    assert np.array_equal(big.gains.sd, small.gains.sd)
    assert np.array_equal(big.gains.sr[:, :2], small.gains.sr)
    assert np.array_equal(big.gains.rd[:2], small.gains.rd)
    assert subset_relays(big, 2).dumps() == small.dumps()


def test_extend_relays_keeps_existing_gains():
    inst = generate_instance(3, 3, 1, 3)
    ext = extend_relays(inst, 2, seed=9)
    assert ext.n_relays == 3
    assert np.array_equal(ext.gains.sr[:, :1], inst.gains.sr)
    assert np.array_equal(ext.gains.sd, inst.gains.sd)
    assert set(inst.relay_links) <= set(ext.relay_links)


def test_json_round_trip(tmp_path):
    inst = generate_instance(2, 3, 2, 2, SystemParams.from_split(beta1_db=4, beta2_db=6, demand=(1, 2, 3)))
    path = tmp_path / "inst.json"
    inst.save(path)
    back = NetworkInstance.load(path)
    assert back.dumps() == inst.dumps()
    assert back.params == inst.params
    assert np.array_equal(back.gains.sr, inst.gains.sr)


def test_load_rejects_wrong_format():
    with pytest.raises(ValidationError):
        NetworkInstance.loads('{"format": "something-else"}')


def test_gamma_lookup():
    inst = make_instance([[0.5]], [[0.25]], [[0.125]])
    g = inst.gains
    assert g.gamma(NodeId.source(0), NodeId.destination(0)) == 0.5
    assert g.gamma(NodeId.source(0), NodeId.relay(0)) == 0.25
    assert g.gamma(NodeId.relay(0), NodeId.destination(0)) == 0.125
    with pytest.raises(KeyError):
        g.gamma(NodeId.destination(0), NodeId.source(0))


def test_validate_instance_flags_bad_gain_and_link():
    bad = make_instance([[0.0]])
    assert "gain-positivity" in [v.rule for v in validate_instance(bad)]
    bad = make_instance([[0.5]], links=[(0, 3)])
    assert "links" in [v.rule for v in validate_instance(bad)]


def test_n_binaries():
    inst = generate_instance(0, 2, 1, 2, SystemParams(T=2, demand=2))
    assert inst.n_binaries("cls") == 2 * (2 + 2)
    assert inst.n_binaries("dls") == 2 * 2


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 5), m=st.integers(0, 4),
       d=st.integers(1, 5), planar=st.booleans())
def test_generated_instances_are_valid(seed, n, m, d, planar):
    inst = generate_instance(seed, n, m, d, placement="planar" if planar else "per_pair")
    assert validate_instance(inst) == []
    assert inst.gains.sd.shape == (n, d)
    assert inst.gains.sr.shape == (n, m)
    assert all(math.isfinite(g) for *_, g in inst.gains.triplets())


def test_demand_mode_parsing():
    assert SystemParams(demand_mode="at_least").demand_mode is DemandMode.AT_LEAST
