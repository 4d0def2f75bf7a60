import numpy as np
import pytest

from gridrestore.errors import GridRestoreError
from gridrestore.metrics import energy_not_served, reconnection_times, sensitivity_matrix
from gridrestore.model import Demand
from gridrestore.rop import RestorationPlan
from gridrestore.scenarios import DerMode, DerPlacement, apply_der_mode

from helpers import chain3

NO_DER = DerPlacement("none", ())


def test_ens_zero_when_fully_served():
    demands = (Demand(1, 2, 1.0), Demand(2, 3, 2.0))
    rep = energy_not_served(np.ones((2, 4)), demands, 1.0)
    assert rep.total_mwh == 0.0
    assert rep.fraction == 0.0


def test_ens_full_outage_matches_total_energy(bundled_network):
    x = np.zeros((52, 19))
    rep = energy_not_served(x, bundled_network.demands, 1.0)
    # 3.49 MW for 19 hourly periods
    assert rep.total_mwh == pytest.approx(66.31, abs=1e-9)
    assert rep.fraction == pytest.approx(1.0)


def test_ens_micro_example():
    demands = (Demand(1, 2, 1.0), Demand(2, 3, 2.0))
    x = np.array([[1.0, 1.0], [0.0, 1.0]])
    rep = energy_not_served(x, demands, 1.0)
    assert rep.total_mwh == pytest.approx(2.0)
    assert rep.per_demand_mwh == {1: pytest.approx(0.0), 2: pytest.approx(2.0)}


def test_ens_group_split_and_consistency():
    demands = (
        Demand(1, 2, 1.0, has_der=True),
        Demand(2, 3, 2.0),
        Demand(3, 4, 0.5, has_der=True),
    )
    x = np.array([[0.5, 1.0], [1.0, 0.0], [0.0, 0.0]])
    rep = energy_not_served(x, demands, 2.0)
    assert rep.der_group_mwh == pytest.approx(1.0 + 2.0)
    assert rep.non_der_group_mwh == pytest.approx(4.0)
    assert rep.total_mwh == pytest.approx(rep.der_group_mwh + rep.non_der_group_mwh)
    # group values recompute exactly from the per-demand map
    der = {1, 3}
    assert rep.der_group_mwh == pytest.approx(
        sum(v for k, v in rep.per_demand_mwh.items() if k in der)
    )
    # explicit group override takes precedence over flags
    rep2 = energy_not_served(x, demands, 2.0, der_demand_ids={2})
    assert rep2.der_group_mwh == pytest.approx(4.0)


def test_ens_input_validation():
    demands = (Demand(1, 2, 1.0),)
    with pytest.raises(ValueError):
        energy_not_served(np.ones((2, 3)), demands, 1.0)
    with pytest.raises(ValueError):
        energy_not_served(np.full((1, 3), 1.5), demands, 1.0)


def chain_case(damage=(1, 2)):
    return apply_der_mode(chain3(damage=damage), NO_DER, DerMode.BASE)


def test_reconnection_undamaged_all_zero():
    case = chain_case(damage=())
    plan = RestorationPlan(schedule=((),), energization={}, objective_mwh=0.0)
    rep = reconnection_times(plan, case)
    assert rep.period_by_demand == {1: 0, 2: 0}
    assert rep.non_der_avg_hours == 0.0


def test_reconnection_chain_order():
    case = chain_case()
    plan = RestorationPlan(
        schedule=((), ("line:1",), ("line:2",)),
        energization={"line:1": 1, "line:2": 2},
        objective_mwh=0.0,
    )
    rep = reconnection_times(plan, case)
    assert rep.period_by_demand == {1: 1, 2: 2}
    # no DER group here; the non-DER average is (1 + 2) / 2
    assert rep.non_der_avg_hours == pytest.approx(1.5)
    assert np.isnan(rep.der_avg_hours)


def test_reconnection_group_averages():
    net = chain3(damage=(1, 2))
    case = apply_der_mode(net, DerPlacement("der", (3,)), DerMode.BASE)
    plan = RestorationPlan(
        schedule=((), ("line:1",), ("line:2",)),
        energization={"line:1": 1, "line:2": 2},
        objective_mwh=0.0,
    )
    rep = reconnection_times(plan, case, step_hours=2.0)
    assert rep.der_avg_hours == pytest.approx(4.0)  # bus 3 back at period 2
    assert rep.non_der_avg_hours == pytest.approx(2.0)
    assert rep.hours(2) == 4.0


def test_reconnection_reports_never_connected():
    case = chain_case()
    bad_plan = RestorationPlan(
        schedule=((), ("line:1",)),
        energization={"line:1": 1, "line:2": 5},  # line 2 beyond horizon
        objective_mwh=0.0,
    )
    bad_plan = RestorationPlan(
        schedule=((), ("line:1",)),
        energization={"line:1": 1},
        objective_mwh=0.0,
    )
    with pytest.raises(GridRestoreError):
        reconnection_times(bad_plan, case)


def test_sensitivity_matrix_matches_direct_replays():
    from gridrestore.model import time_grid_for
    from gridrestore.replay import simulate_plan
    from gridrestore.rop import build_rop, solve_rop

    net = chain3(damage=(1, 2))
    placement = DerPlacement("one", (3,), p_max=0.5, q_min=-0.2, q_max=0.2)
    modes = (DerMode.BASE, DerMode.COMMUNITY_MICROGRID)
    plans = {}
    for mode in modes:
        case = apply_der_mode(net, placement, mode)
        plans[mode] = solve_rop(build_rop(case, time_grid_for(net)))
    grid = sensitivity_matrix(net, placement, plans, modes)
    for assumed in modes:
        for actual in modes:
            direct = simulate_plan(
                apply_der_mode(net, placement, actual), plans[assumed]
            )
            assert grid[assumed][actual] == pytest.approx(direct.ens_mwh, abs=1e-9)


def test_sensitivity_zero_load_grid():
    from dataclasses import replace

    net = chain3(damage=(1, 2))
    net = replace(net, demands=tuple(replace(d, p=0.0, q=0.0) for d in net.demands))
    plan = RestorationPlan(
        schedule=((), ("line:1",), ("line:2",)),
        energization={"line:1": 1, "line:2": 2},
        objective_mwh=0.0,
    )
    modes = (DerMode.BASE, DerMode.HOME_MICROGRID)
    plans = {m: plan for m in modes}
    grid = sensitivity_matrix(net, NO_DER, plans, modes)
    for assumed in modes:
        for actual in modes:
            assert grid[assumed][actual] == pytest.approx(0.0, abs=1e-9)
