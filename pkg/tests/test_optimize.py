from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import CAP, by_members, make_link
from oracles import maxmin_vertex_oracle
from qkdswitch.configspace import enumerate_configurations
from qkdswitch.coordinator import CoordinatorConfig, SwitchingCoordinator
from qkdswitch.model import Configuration, LinkState, NetworkState, NetworkStructure
from qkdswitch.optimize import (
    OrphanedLinkError,
    Schedule,
    build_matrices,
    compute_schedule,
    consumption_weights,
    criticality_order,
    fmcb_most_critical,
    fmcb_select,
    k_supported,
    key_gain,
    mmak_solve,
    schedule_from_mix,
)
from qkdswitch.simenv import Simulation, periodic_start_fills

K_STAR = 38400 / 11

DIAGONAL = ("A1B1.1", "A2B2.1", "A3B3.1")
ROTATED = ("A1B3.1", "A2B1.1", "A3B2.1")
CROSSED = ("A1B2.1", "A2B1.1", "A3B3.1")
BOOSTED_A1B2 = ("A1B2.4",)


def _mix(m, structure, weights):
    p = np.zeros(len(m.config_ids))
    for members, w in weights:
        p[m.column(by_members(structure, *members))] = w
    return p


@pytest.fixture(scope="module")
def hex_matrix(hex_structure):
    return build_matrices(hex_structure)


def test_matrix_shape_and_unit_weights(hex_structure, hex_matrix):
    m = hex_matrix
    assert m.shape == (7, 22)
    assert np.array_equal(m.gamma, m.G)
    col = m.G[:, m.column(by_members(hex_structure, *DIAGONAL))]
    assert sorted(col.tolist()) == [0, 0, 0, 0, 9600, 9600, 9600]
    assert np.all(m.G >= 0)


def test_weighted_row_halves(hex_structure, hex_matrix):
    eta = np.ones(7)
    eta[3] = 2.0
    m = build_matrices(hex_structure, eta)
    assert np.array_equal(m.gamma[3], hex_matrix.G[3] / 2)
    assert np.array_equal(np.delete(m.gamma, 3, 0), np.delete(hex_matrix.G, 3, 0))


def test_key_gain_examples(hex_structure, hex_matrix):
    m = hex_matrix
    assert not key_gain(m, np.zeros(22), 0).any()
    p = _mix(m, hex_structure, [(DIAGONAL, 1.0)])
    g = key_gain(m, p, 0)
    assert g[hex_structure.link_index["A1B1"]] == 9600
    assert k_supported(m, p) == 0


def test_three_configuration_mix_supports_k_star(hex_structure, hex_matrix):
    m = hex_matrix
    p = _mix(m, hex_structure, [(DIAGONAL, 4 / 11), (ROTATED, 4 / 11), (BOOSTED_A1B2, 3 / 11)])
    assert k_supported(m, p) == pytest.approx(K_STAR, rel=1e-12)
    assert np.allclose(key_gain(m, p, K_STAR), 0, atol=1e-9)


def test_uniform_three_link_mix(hex_structure, hex_matrix):
    m = hex_matrix
    p = _mix(m, hex_structure, [(DIAGONAL, 1 / 3), (ROTATED, 1 / 3), (CROSSED, 1 / 3)])
    assert k_supported(m, p) == pytest.approx(3200, rel=1e-12)


@given(st.lists(st.floats(0, 1), min_size=22, max_size=22))
def test_k_supported_is_min_key_gain(hex_matrix, p):
    assert k_supported(hex_matrix, p) == min(key_gain(hex_matrix, p, 0))


def test_criticality_examples():
    assert fmcb_most_critical([1e6, 2e6, 3e6], [1, 1, 1], [1, 2, 3]) == 0
    assert fmcb_most_critical([2e6, 2e6, 3e6], [1, 1, 1], [5, 9, 1]) == 1
    assert fmcb_most_critical([4e6, 2e6], [4, 1], [1, 2]) == 0


@given(st.lists(st.floats(0, 1e7), min_size=3, max_size=3), st.floats(0.01, 100))
def test_criticality_scale_invariant(fills, scale):
    eta = np.array([0.5, 1.0, 0.25])
    prio = [3, 1, 2]
    assert criticality_order(fills, eta, prio) == criticality_order(fills, eta * scale, prio)


def test_fmcb_picks_boosted_configuration(hex_structure, hex_matrix):
    l = hex_structure.link_index["A1B1"]
    sched = fmcb_select(hex_matrix, l)
    assert sched.is_infinite
    assert sched.entries[0][0] == by_members(hex_structure, "A1B1.4")
    assert hex_matrix.gamma[l, hex_matrix.column(sched.entries[0][0])] == hex_matrix.gamma[l].max() == 12800


def test_fmcb_tie_break_follows_criticality(hex_structure, hex_matrix):
    idx = hex_structure.link_index
    a2b1 = idx["A2B1"]
    # A2B1.2 (11.2 kbps) appears in two configurations: with A1B3.1 and with A3B3.1
    ties = [c for c in range(22) if hex_matrix.gamma[a2b1, c] == 11200]
    assert len(ties) == 2
    pick_a3b3 = fmcb_select(hex_matrix, a2b1, [a2b1, idx["A3B3"], idx["A1B3"]])
    pick_a1b3 = fmcb_select(hex_matrix, a2b1, [a2b1, idx["A1B3"], idx["A3B3"]])
    assert pick_a3b3.entries[0][0] == by_members(hex_structure, "A2B1.2", "A3B3.1")
    assert pick_a1b3.entries[0][0] == by_members(hex_structure, "A1B3.1", "A2B1.2")


def test_fmcb_single_configuration_and_orphan():
    a = make_link("A", [("A.1", {"t", "r"}, 5.0)])
    b = make_link("B", [("B.1", {"u", "v"}, 5.0)], priority=1)
    s = NetworkStructure((a, b))
    (both,) = enumerate_configurations(s.links)
    assert fmcb_select(build_matrices(s, configurations=[both]), 0).entries[0][0] == "C1"
    only_a = Configuration("C1", both.active_links[:1])
    with pytest.raises(OrphanedLinkError):
        fmcb_select(build_matrices(s, configurations=[only_a]), 1)


def test_mmak_hexagon(hex_structure, hex_matrix):
    p, k = mmak_solve(hex_matrix)
    assert k == pytest.approx(K_STAR, abs=1e-6)
    assert k > 0.36 * 9600
    assert np.all(hex_matrix.gamma @ p >= k - 1e-9 * hex_matrix.gamma.max())
    assert p.sum() <= 1 + 1e-12
    assert k == pytest.approx(maxmin_vertex_oracle(hex_matrix.gamma[:, p > 0]), rel=1e-9)


def test_mmak_restricted_to_three_link_configurations(hex_structure, hex_matrix):
    ids = [by_members(hex_structure, *c) for c in (DIAGONAL, ROTATED, CROSSED)]
    m = hex_matrix.restrict(ids)
    p, k = mmak_solve(m)
    assert k == pytest.approx(3200, rel=1e-12)
    assert np.allclose(p, 1 / 3)
    assert k == pytest.approx(maxmin_vertex_oracle(m.gamma), rel=1e-9)


def test_superseded_columns_do_not_change_optimum(hexagon, hex_matrix):
    s = hexagon.structure
    everything = enumerate_configurations(s.links)
    assert len(everything) > 22
    _, k_all = mmak_solve(build_matrices(s, configurations=everything))
    assert k_all == pytest.approx(mmak_solve(hex_matrix)[1], rel=1e-12)


def test_eta_scaling_leaves_decisions_unchanged(hex_structure):
    eta = np.array([1.0, 0.5, 0.8, 1.0, 0.25, 0.6, 0.9])
    p1, k1 = mmak_solve(build_matrices(hex_structure, eta))
    p2, k2 = mmak_solve(build_matrices(hex_structure, eta * 3.0))
    assert np.allclose(p1, p2)
    assert k2 == pytest.approx(k1 / 3.0)


def test_consumption_weights():
    assert consumption_weights([3490] * 7).tolist() == [1.0] * 7
    assert consumption_weights([1, 2, 4]).tolist() == [0.25, 0.5, 1.0]
    with pytest.raises(ValueError):
        consumption_weights([1, 0])


def _mmak_state(structure, k):
    return NetworkState({lid: LinkState(0.5 * CAP, k) for lid in structure.link_ids})


def test_mmak_schedule_durations(hex_structure):
    sched, info = compute_schedule("mmak", hex_structure, _mmak_state(hex_structure, 3490))
    got = {frozenset(hex_structure.configuration(c).physical_link_ids): d for c, d in sched.entries}
    assert got == pytest.approx({
        frozenset(DIAGONAL): 4125.0,
        frozenset(BOOSTED_A1B2): 3093.75,
        frozenset(ROTATED): 4125.0,
    })


def test_schedule_excursion_touches_both_bounds(hex_structure):
    """One simulated period at k* stays in [0, capacity] and uses the full buffer on some link."""
    k = K_STAR
    state = _mmak_state(hex_structure, k)
    sched, _ = compute_schedule("mmak", hex_structure, state)
    configs = list(hex_structure.configurations)
    fills = periodic_start_fills(sched, hex_structure, configs, [k] * 7)
    start = state.replace(fills=fills, link_ids=hex_structure.link_ids)
    coord = SwitchingCoordinator(hex_structure, CoordinatorConfig("mmak", "periodic"))
    trace = Simulation(hex_structure, start, coord, configurations=configs).run(sched.period)
    series = np.array([f for _, _, f in trace.rows] + [trace.final_fills])
    assert series.min() >= -1.0
    assert series.max() <= CAP + 1.0
    span = series.max(axis=0) - series.min(axis=0)
    assert span.max() == pytest.approx(CAP, abs=1.0)
    assert trace.depletion_time() == 0.0
    assert np.allclose(trace.final_fills, fills, atol=1.0)


def test_static_network_gives_infinite_schedule():
    a = make_link("A", [("A.1", {"t", "r"}, 10.0)])
    s = NetworkStructure((a,))
    m = build_matrices(s, configurations=enumerate_configurations(s.links))
    sched = schedule_from_mix(np.array([1.0]), m, s.capacities)
    assert sched.is_infinite and sched.entries[0][0] == "C1"


def test_schedule_validation():
    with pytest.raises(ValueError):
        Schedule(())
    with pytest.raises(ValueError):
        Schedule((("C1", 0.0),))
    with pytest.raises(ValueError):
        Schedule((("C1", math.inf), ("C2", 1.0)))
