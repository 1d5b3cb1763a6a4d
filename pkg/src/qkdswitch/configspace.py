"""Configuration enumeration and reduction to the useful set.

Enumeration is a plain backtracking search over physical links, so it is
exponential in the number of physical links. That is fine for desk-scale
networks (the hexagon has 20 physical links); beyond ``max_physical_links``
the caller is expected to provide the configurations explicitly.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from qkdswitch.model import ActiveLink, Configuration, LinkSpec, NetworkStructure, natural_key

__all__ = [
    "EnumerationLimitError",
    "enumerate_configurations",
    "rate_vector",
    "reduce_useful",
    "useful_configurations",
    "dominates",
]

DEFAULT_MAX_PHYSICAL_LINKS = 64


class EnumerationLimitError(ValueError):
    pass


def _make_config(cid: str, members: Iterable[tuple[str, str, float]]) -> Configuration:
    active = tuple(ActiveLink(lid, pid, rate) for lid, pid, rate in sorted(members, key=lambda m: m[1]))
    return Configuration(cid, active)


def enumerate_configurations(links: Sequence[LinkSpec],
                             max_physical_links: int = DEFAULT_MAX_PHYSICAL_LINKS) -> list[Configuration]:
    """Return every maximal conflict-free set of physical links.

    A set is conflict free when resource sets are pairwise disjoint and no link
    appears twice; it is maximal when no other physical link can be added.
    Configurations are sorted by their sorted member ids and numbered ``C1..Cn``.
    """
    candidates = sorted(
        ((l.link_id, p.physical_link_id, p.generation_rate, p.resources)
         for l in links for p in l.physical_links),
        key=lambda c: c[1],
    )
    if len(candidates) > max_physical_links:
        raise EnumerationLimitError(
            f"{len(candidates)} physical links exceed the enumeration bound of {max_physical_links}; "
            "supply the configurations explicitly in the scenario file")

    n = len(candidates)
    found: list[tuple[int, ...]] = []

    def compatible(i: int, used: frozenset[str], busy: frozenset[str]) -> bool:
        lid, _, _, res = candidates[i]
        return lid not in busy and used.isdisjoint(res)

    def search(i: int, chosen: tuple[int, ...], used: frozenset[str], busy: frozenset[str]) -> None:
        if i == n:
            # maximal iff every skipped candidate conflicts with the chosen set
            if all(not compatible(j, used, busy) for j in range(n) if j not in chosen):
                found.append(chosen)
            return
        if compatible(i, used, busy):
            lid, _, _, res = candidates[i]
            search(i + 1, chosen + (i,), used | res, busy | {lid})
        search(i + 1, chosen, used, busy)

    search(0, (), frozenset(), frozenset())
    found.sort(key=lambda members: [natural_key(candidates[i][1]) for i in members])
    return [
        _make_config(f"C{k}", ((candidates[i][0], candidates[i][1], candidates[i][2]) for i in members))
        for k, members in enumerate(found, start=1)
    ]


def rate_vector(config: Configuration, structure: NetworkStructure) -> np.ndarray:
    """Per-link generation rate of ``config`` in canonical link order (0 when inactive)."""
    out = np.zeros(len(structure.links))
    for a in config.active_links:
        idx = structure.link_index.get(a.link_id)
        if idx is None or structure.physical_owner.get(a.physical_link_id) != a.link_id:
            raise KeyError(f"dangling reference {a.link_id}/{a.physical_link_id} in {config.config_id}")
        out[idx] = a.generation_rate
    return out


def dominates(a: np.ndarray, b: np.ndarray) -> bool:
    """True when ``a`` generates at least as much as ``b`` on every link."""
    return bool(np.all(a >= b))


def reduce_useful(configs: Sequence[Configuration], structure: NetworkStructure) -> list[Configuration]:
    """Drop superseded configurations.

    A configuration is kept when no other rate vector is componentwise >= its
    own while differing somewhere; of identical rate vectors only the smallest
    config_id survives. Output is ordered by config_id.
    """
    ordered = sorted(configs, key=lambda c: natural_key(c.config_id))
    vectors = [rate_vector(c, structure) for c in ordered]
    keep = []
    for i, v in enumerate(vectors):
        superseded = False
        for j, w in enumerate(vectors):
            if i == j or not dominates(w, v):
                continue
            if not np.array_equal(w, v) or j < i:
                superseded = True
                break
        if not superseded:
            keep.append(ordered[i])
    return keep


def useful_configurations(structure: NetworkStructure,
                          max_physical_links: int = DEFAULT_MAX_PHYSICAL_LINKS) -> list[Configuration]:
    """Configurations to optimise over.

    Explicit configurations in ``structure`` are used as given. Otherwise the
    maximal sets are enumerated, reduced, and renumbered ``C1..Cn`` in order.
    """
    if structure.configurations:
        return list(structure.configurations)
    useful = reduce_useful(enumerate_configurations(structure.links, max_physical_links), structure)
    return [Configuration(f"C{k}", c.active_links) for k, c in enumerate(useful, start=1)]
