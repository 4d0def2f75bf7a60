import json
from dataclasses import replace

import numpy as np
import pytest

from gridrestore.errors import CaseValidationError, UnknownIdError
from gridrestore.model import (
    Bus,
    Demand,
    Generator,
    Network,
    TimeGrid,
    apply_damage,
    load_case,
    network_from_dict,
    network_to_dict,
    reachable_buses,
    save_case,
    time_grid_for,
    validate,
)
from gridrestore import datasets

from helpers import random_radial, simple_line, substation


def test_bundled_case_counts(bundled_network):
    net = bundled_network
    assert len(net.buses) == 56
    # a connected radial 56-node network needs exactly 55 branches
    assert len(net.lines) == 55
    assert len(net.demands) == 52
    assert net.total_demand_p() * net.base_mva == pytest.approx(3.49, abs=1e-9)
    assert validate(net).ok


def test_minimal_two_bus_case(tmp_path):
    raw = {
        "base_mva": 1.0,
        "buses": [{"id": 1, "is_reference": True}, {"id": 2}],
        "lines": [{"id": 1, "from_bus": 1, "to_bus": 2, "g": 50.0, "b": -50.0,
                   "thermal_limit": 5.0}],
        "generators": [{"id": 1, "bus": 1, "p_min": 0, "p_max": 5,
                        "q_min": -2, "q_max": 2, "kind": "substation"}],
        "demands": [{"id": 1, "bus": 2, "p": 0.5}],
    }
    path = tmp_path / "two_bus.json"
    path.write_text(json.dumps(raw))
    net = load_case(path)
    assert len(net.buses) == 2 and len(net.lines) == 1
    assert net.demands[0].p == 0.5


def test_duplicate_bus_id_names_offender(tmp_path):
    raw = {
        "base_mva": 1.0,
        "buses": [{"id": 7, "is_reference": True}, {"id": 7}],
        "lines": [{"id": 1, "from_bus": 7, "to_bus": 7, "g": 1.0, "b": -1.0}],
        "generators": [],
        "demands": [],
    }
    path = tmp_path / "dup.json"
    path.write_text(json.dumps(raw))
    with pytest.raises(CaseValidationError) as err:
        load_case(path)
    assert "7" in str(err.value)


def test_validate_two_reference_buses(bundled_network):
    buses = tuple(
        replace(b, is_reference=True) if b.id in (1, 2) else b
        for b in bundled_network.buses
    )
    report = validate(replace(bundled_network, buses=buses))
    assert any("reference" in v for v in report.violations)


def test_validate_cycle_detected(bundled_network):
    extra = simple_line(999, 2, 4)
    report = validate(replace(bundled_network, lines=bundled_network.lines + (extra,)))
    assert any("radiality" in v for v in report.violations)


def test_validate_disconnected_detected(bundled_network):
    # re-wire one line into a parallel edge: count stays right, graph splits
    lines = list(bundled_network.lines)
    victim = lines[-1]
    lines[-1] = replace(victim, from_bus=1, to_bus=2)
    report = validate(replace(bundled_network, lines=tuple(lines)))
    assert any("unreachable" in v for v in report.violations)


def test_validate_reports_bad_bounds():
    net = Network(
        buses=(Bus(1, is_reference=True, v_min=1.2, v_max=1.1), Bus(2)),
        lines=(simple_line(1, 1, 2),),
        generators=(Generator(1, 1, 2.0, 1.0, 0.0, 0.0, kind="substation"),),
        demands=(Demand(1, 2, -0.5),),
    )
    text = "\n".join(validate(net).violations)
    assert "bus 1" in text
    assert "generator 1" in text
    assert "demand 1" in text


def test_customer_der_cannot_be_damaged():
    net = Network(
        buses=(Bus(1, is_reference=True), Bus(2)),
        lines=(simple_line(1, 1, 2),),
        generators=(
            substation(),
            Generator(2, 2, 0.0, 0.075, -0.05, 0.05, kind="customer_der", damaged=True),
        ),
        demands=(Demand(1, 2, 0.5),),
    )
    assert any("cannot be damaged" in v for v in validate(net).violations)


def test_apply_damage_storm_set(bundled_network):
    ids = datasets.bundled_damage_ids()
    assert sorted(ids) == sorted(
        [2, 10, 24, 43, 23, 47, 28, 19, 7, 35, 40, 33, 6, 14, 42, 17, 13, 50]
    )
    damaged = apply_damage(bundled_network, ids)
    flagged = {l.id for l in damaged.lines if l.damaged}
    assert flagged == set(ids)
    assert len(flagged) == 18


def test_apply_damage_empty_is_identity(bundled_network):
    assert apply_damage(bundled_network, []) == bundled_network


def test_apply_damage_unknown_id(bundled_network):
    with pytest.raises(UnknownIdError):
        apply_damage(bundled_network, [999])


def test_apply_damage_preserves_parameters(bundled_network):
    damaged = apply_damage(bundled_network, [2, 10])
    for before, after in zip(bundled_network.lines, damaged.lines):
        assert replace(before, damaged=False) == replace(after, damaged=False)
    assert damaged.buses == bundled_network.buses
    assert damaged.demands == bundled_network.demands


def test_case_round_trip(bundled_network, tmp_path):
    path = tmp_path / "roundtrip.json"
    save_case(bundled_network, path)
    assert load_case(path) == bundled_network


def test_round_trip_on_random_networks(tmp_path):
    rng = np.random.RandomState(3)
    for k in range(10):
        net = random_radial(rng)
        assert validate(net).ok
        again = network_from_dict(network_to_dict(net))
        assert again == net


def test_reachability_respects_damage(storm_network):
    all_on = reachable_buses(storm_network, ignore_damage=True)
    assert all_on == set(b.id for b in storm_network.buses)
    initial = reachable_buses(storm_network, energized_lines=set())
    assert initial == {1, 2, 4, 5, 6}


def test_time_grid_sizing(storm_network):
    grid = time_grid_for(storm_network)
    assert grid.n_periods == 1 + 18
    assert grid.step_hours == 1.0
    with pytest.raises(ValueError):
        TimeGrid(0)
    with pytest.raises(ValueError):
        TimeGrid(5, step_hours=0.0)


def test_missing_field_is_format_error(tmp_path):
    from gridrestore.errors import CaseFormatError

    path = tmp_path / "broken.json"
    path.write_text(json.dumps({"base_mva": 1.0, "buses": [], "lines": [],
                                "generators": [], "demands": [{"id": 1, "bus": 1}]}))
    with pytest.raises(CaseFormatError) as err:
        load_case(path)
    assert "demand 1" in str(err.value)
    path.write_text("{not json")
    with pytest.raises(CaseFormatError):
        load_case(path)
