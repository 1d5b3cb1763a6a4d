from __future__ import annotations

import numpy as np
import pytest

from conftest import by_members, make_link
from netgen import random_structure
from oracles import maximal_sets_brute_force
from qkdswitch.configspace import (
    EnumerationLimitError,
    dominates,
    enumerate_configurations,
    rate_vector,
    reduce_useful,
    useful_configurations,
)
from qkdswitch.model import EMPTY_CONFIGURATION, ActiveLink, Configuration, NetworkStructure


def _vectors(configs, structure):
    return [rate_vector(c, structure) for c in configs]


def test_hexagon_counts(hexagon):
    s = hexagon.structure
    maximal = enumerate_configurations(s.links)
    useful = useful_configurations(s)
    assert len(maximal) >= 22
    assert len(useful) == 22


def test_hexagon_three_link_configurations(hex_structure):
    s = hex_structure
    triples = [c for c in s.configurations
               if sorted(rate_vector(c, s)[rate_vector(c, s) > 0]) == [9600] * 3]
    members = {c.physical_link_ids for c in triples}
    assert members == {
        frozenset({"A1B1.1", "A2B2.1", "A3B3.1"}),
        frozenset({"A1B3.1", "A2B1.1", "A3B2.1"}),
        frozenset({"A1B2.1", "A2B1.1", "A3B3.1"}),
    }


def test_c1_and_c7_vectors(hex_structure):
    s = hex_structure
    idx = s.link_index
    c1 = s.configuration(by_members(s, "A1B1.1", "A2B2.1", "A3B3.1"))
    v = rate_vector(c1, s)
    expected = np.zeros(7)
    for lid in ("A1B1", "A2B2", "A3B3"):
        expected[idx[lid]] = 9600
    assert np.array_equal(v, expected)
    c7 = s.configuration(by_members(s, "A1B1.4"))
    expected = np.zeros(7)
    expected[idx["A1B1"]] = 12800
    assert np.array_equal(rate_vector(c7, s), expected)
    assert not rate_vector(EMPTY_CONFIGURATION, s).any()


def test_hexagon_listing_configurations_are_useful(hex_structure):
    for members in (("A1B1.1", "A2B2.1", "A3B3.1"), ("A1B1.2", "A3B3.1"),
                    ("A1B1.3", "A3B2.1"), ("A1B1.4",)):
        by_members(hex_structure, *members)


def test_superseded_single_link(hexagon):
    s = hexagon.structure
    alone = Configuration("X", (ActiveLink("A1B1", "A1B1.1", 9600),))
    c1 = Configuration("C1", tuple(ActiveLink(p[:4], p, 9600) for p in ("A1B1.1", "A2B2.1", "A3B3.1")))
    kept = reduce_useful([alone, c1], s)
    assert [c.config_id for c in kept] == ["C1"]


def test_identical_vectors_keep_smallest_id():
    a = make_link("A", [("A.1", {"t", "r"}, 5.0), ("A.2", {"t", "r", "s"}, 5.0)])
    s = NetworkStructure((a,))
    c2 = Configuration("C2", (ActiveLink("A", "A.1", 5.0),))
    c10 = Configuration("C10", (ActiveLink("A", "A.2", 5.0),))
    assert [c.config_id for c in reduce_useful([c10, c2], s)] == ["C2"]


def test_trivial_networks():
    one = make_link("A", [("A.1", {"t", "r"}, 5.0)])
    (cfg,) = enumerate_configurations([one])
    assert cfg.physical_link_ids == {"A.1"}
    a = make_link("A", [("A.1", {"t", "r1"}, 5.0)])
    b = make_link("B", [("B.1", {"t", "r2"}, 5.0)], priority=1)
    assert len(enumerate_configurations([a, b])) == 2


def test_enumeration_bound():
    links = [make_link(f"L{i}", [(f"L{i}.1", {f"t{i}", f"r{i}"}, 1.0)], priority=i) for i in range(5)]
    with pytest.raises(EnumerationLimitError):
        enumerate_configurations(links, max_physical_links=4)


def _brute(structure):
    physical = [(l.link_id, p.physical_link_id, p.resources) for l in structure.links for p in l.physical_links]
    return maximal_sets_brute_force(physical)


def test_hexagon_matches_brute_force(hexagon):
    s = hexagon.structure
    assert {c.physical_link_ids for c in enumerate_configurations(s.links)} == _brute(s)


def test_random_networks_antichain_idempotence_and_oracle():
    rng = np.random.default_rng(20240601)
    for _ in range(200):
        s = random_structure(rng)
        maximal = enumerate_configurations(s.links)
        assert {c.physical_link_ids for c in maximal} == _brute(s)
        useful = reduce_useful(maximal, s)
        vecs = _vectors(useful, s)
        for i, v in enumerate(vecs):
            for j, w in enumerate(vecs):
                if i != j:
                    assert not dominates(w, v), "useful set must be an antichain"
        # every dropped configuration is covered by a survivor
        for v in _vectors(maximal, s):
            assert any(dominates(w, v) for w in vecs)
        assert [c.config_id for c in reduce_useful(useful, s)] == [c.config_id for c in useful]


def test_explicit_configurations_used_as_given(hex_structure):
    assert useful_configurations(hex_structure) == list(hex_structure.configurations)
