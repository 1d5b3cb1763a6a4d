"""Domain types of the switched QKD network model and structural validation.

A *link* is a key buffer shared by a node pair. It can be filled by any one of
several mutually exclusive *physical links*, each of which occupies a set of
hardware resources (transmitters, receivers, wavelengths) and generates key at
a fixed rate. A *configuration* is a set of physical links that may be active
at the same time, which requires their resource sets to be pairwise disjoint.

Everything here is immutable; link order is always ascending ``link_id`` and
defines the row order of every per-link vector downstream.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

__all__ = [
    "DEFAULT_THRESHOLD_FRACTION",
    "PhysicalLinkSpec",
    "LinkSpec",
    "ActiveLink",
    "Configuration",
    "NetworkStructure",
    "LinkState",
    "NetworkState",
    "Violation",
    "ValidationError",
    "validate",
    "validate_state",
    "EMPTY_CONFIGURATION",
    "natural_key",
]

DEFAULT_THRESHOLD_FRACTION = 0.05

_DIGITS = re.compile(r"(\d+)")


def natural_key(text: str) -> tuple:
    """Sort key that orders ``C2`` before ``C10``.

    Config ids are compared with this key everywhere a "smallest id" rule
    applies, so numbered ids behave the way a reader expects.
    """
    return tuple(int(part) if part.isdigit() else part for part in _DIGITS.split(text))


@dataclass(frozen=True)
class PhysicalLinkSpec:
    physical_link_id: str
    resources: frozenset[str]
    generation_rate: float  # bits/s


@dataclass(frozen=True)
class LinkSpec:
    link_id: str
    buffer_capacity: float  # bits
    physical_links: tuple[PhysicalLinkSpec, ...]
    priority_index: int
    critical_threshold: float | None = None  # bits; None -> 5% of capacity

    @property
    def threshold(self) -> float:
        if self.critical_threshold is None:
            return DEFAULT_THRESHOLD_FRACTION * self.buffer_capacity
        return self.critical_threshold

    def physical(self, physical_link_id: str) -> PhysicalLinkSpec | None:
        for p in self.physical_links:
            if p.physical_link_id == physical_link_id:
                return p
        return None


@dataclass(frozen=True)
class ActiveLink:
    link_id: str
    physical_link_id: str
    generation_rate: float


@dataclass(frozen=True)
class Configuration:
    config_id: str
    active_links: tuple[ActiveLink, ...]

    @property
    def physical_link_ids(self) -> frozenset[str]:
        return frozenset(a.physical_link_id for a in self.active_links)

    @property
    def link_ids(self) -> frozenset[str]:
        return frozenset(a.link_id for a in self.active_links)


EMPTY_CONFIGURATION = Configuration("", ())


@dataclass(frozen=True)
class NetworkStructure:
    links: tuple[LinkSpec, ...]
    configurations: tuple[Configuration, ...] = ()

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.links, key=lambda l: l.link_id))
        object.__setattr__(self, "links", ordered)
        object.__setattr__(self, "configurations", tuple(self.configurations))

    @cached_property
    def link_ids(self) -> tuple[str, ...]:
        return tuple(l.link_id for l in self.links)

    @cached_property
    def link_index(self) -> dict[str, int]:
        return {lid: i for i, lid in enumerate(self.link_ids)}

    @cached_property
    def physical_owner(self) -> dict[str, str]:
        """physical_link_id -> owning link_id (first owner wins on duplicates)."""
        owner: dict[str, str] = {}
        for link in self.links:
            for p in link.physical_links:
                owner.setdefault(p.physical_link_id, link.link_id)
        return owner

    @cached_property
    def physical_links(self) -> dict[str, PhysicalLinkSpec]:
        out: dict[str, PhysicalLinkSpec] = {}
        for link in self.links:
            for p in link.physical_links:
                out.setdefault(p.physical_link_id, p)
        return out

    @cached_property
    def config_index(self) -> dict[str, int]:
        return {c.config_id: i for i, c in enumerate(self.configurations)}

    def link(self, link_id: str) -> LinkSpec:
        return self.links[self.link_index[link_id]]

    def configuration(self, config_id: str) -> Configuration:
        return self.configurations[self.config_index[config_id]]

    def with_configurations(self, configs: Iterable[Configuration]) -> "NetworkStructure":
        return NetworkStructure(self.links, tuple(configs))

    @property
    def capacities(self) -> list[float]:
        return [l.buffer_capacity for l in self.links]

    @property
    def priorities(self) -> list[int]:
        return [l.priority_index for l in self.links]


@dataclass(frozen=True)
class LinkState:
    buffer_fill_level: float  # bits
    consumption_rate: float  # bits/s


@dataclass(frozen=True)
class NetworkState:
    """Per-link fill levels and consumption rates at ``time``."""

    links: Mapping[str, LinkState]
    time: float = 0.0

    def fills(self, structure: NetworkStructure) -> list[float]:
        return [self.links[lid].buffer_fill_level for lid in structure.link_ids]

    def consumption(self, structure: NetworkStructure) -> list[float]:
        return [self.links[lid].consumption_rate for lid in structure.link_ids]

    def replace(self, *, fills: Sequence[float] | None = None,
                consumption: Sequence[float] | None = None,
                link_ids: Sequence[str] | None = None,
                time: float | None = None) -> "NetworkState":
        ids = list(link_ids) if link_ids is not None else sorted(self.links)
        new = dict(self.links)
        for i, lid in enumerate(ids):
            old = new[lid]
            new[lid] = LinkState(
                old.buffer_fill_level if fills is None else float(fills[i]),
                old.consumption_rate if consumption is None else float(consumption[i]),
            )
        return NetworkState(new, self.time if time is None else time)


@dataclass(frozen=True)
class Violation:
    """One broken invariant. ``code`` is stable and machine readable."""

    code: str
    ids: tuple[str, ...]
    message: str = field(default="", compare=False)

    def __str__(self) -> str:
        return f"{self.code}[{', '.join(self.ids)}]: {self.message}"


class ValidationError(ValueError):
    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


def _validate_links(links: Sequence[LinkSpec]) -> list[Violation]:
    out: list[Violation] = []
    if not links:
        out.append(Violation("EmptyLinkList", (), "empty link list"))
    seen_links: set[str] = set()
    seen_priorities: dict[int, str] = {}
    seen_physical: dict[str, str] = {}
    for link in links:
        lid = link.link_id
        if not lid:
            out.append(Violation("EmptyId", (), "link with empty link_id"))
        if lid in seen_links:
            out.append(Violation("DuplicateLinkId", (lid,), f"link_id {lid!r} declared twice"))
        seen_links.add(lid)
        if link.priority_index in seen_priorities:
            other = seen_priorities[link.priority_index]
            out.append(Violation("DuplicatePriority", (other, lid),
                                 f"priority_index {link.priority_index} shared"))
        seen_priorities.setdefault(link.priority_index, lid)
        if not link.buffer_capacity > 0:
            out.append(Violation("NonPositiveCapacity", (lid,), "buffer_capacity must be > 0"))
        elif not 0 < link.threshold < link.buffer_capacity:
            out.append(Violation("ThresholdOutOfRange", (lid,),
                                 "critical_threshold must lie strictly inside (0, capacity)"))
        if not link.physical_links:
            out.append(Violation("NoPhysicalLinks", (lid,), "link has no physical links"))
        for p in link.physical_links:
            pid = p.physical_link_id
            if not pid:
                out.append(Violation("EmptyId", (lid,), "physical link with empty id"))
            if pid in seen_physical:
                out.append(Violation("DuplicatePhysicalLinkId", (seen_physical[pid], lid, pid),
                                     f"physical_link_id {pid!r} declared twice"))
            seen_physical.setdefault(pid, lid)
            if len(p.resources) < 2:
                out.append(Violation("TooFewResources", (pid,),
                                     "a physical link needs at least two resources"))
            if any(not r for r in p.resources):
                out.append(Violation("EmptyId", (pid,), "empty resource id"))
            if not p.generation_rate > 0:
                out.append(Violation("NonPositiveRate", (pid,), "generation_rate must be > 0"))
    return out


def _validate_configuration(config: Configuration, structure: NetworkStructure) -> list[Violation]:
    out: list[Violation] = []
    cid = config.config_id
    seen_links: set[str] = set()
    used: dict[str, str] = {}
    for a in config.active_links:
        if a.link_id in seen_links:
            out.append(Violation("LinkActiveTwice", (cid, a.link_id),
                                 "a link buffer is filled by at most one physical link"))
        seen_links.add(a.link_id)
        owner = structure.physical_owner.get(a.physical_link_id)
        if owner is None or a.link_id not in structure.link_index:
            out.append(Violation("DanglingReference", (cid, a.link_id, a.physical_link_id),
                                 "unknown link or physical link"))
            continue
        if owner != a.link_id:
            out.append(Violation("WrongOwner", (cid, a.link_id, a.physical_link_id),
                                 f"{a.physical_link_id} belongs to {owner}"))
            continue
        spec = structure.physical_links[a.physical_link_id]
        if not a.generation_rate >= 0:
            out.append(Violation("NonPositiveRate", (cid, a.physical_link_id),
                                 "negative generation rate"))
        for r in sorted(spec.resources):
            if r in used:
                out.append(Violation("ResourceConflict", (cid, r),
                                     f"{used[r]} and {a.physical_link_id} both use {r}"))
            else:
                used[r] = a.physical_link_id
    return out


def validate(structure: NetworkStructure) -> list[Violation]:
    """Return every invariant violation of ``structure``; empty means valid."""
    out = _validate_links(structure.links)
    seen: set[str] = set()
    for config in structure.configurations:
        if config.config_id in seen:
            out.append(Violation("DuplicateConfigId", (config.config_id,), "config_id declared twice"))
        seen.add(config.config_id)
        out.extend(_validate_configuration(config, structure))
    return out


def validate_state(state: NetworkState, structure: NetworkStructure) -> list[Violation]:
    out: list[Violation] = []
    for lid in structure.link_ids:
        if lid not in state.links:
            out.append(Violation("MissingState", (lid,), "no state for link"))
            continue
        s = state.links[lid]
        cap = structure.link(lid).buffer_capacity
        if not 0 <= s.buffer_fill_level <= cap:
            out.append(Violation("FillOutOfRange", (lid,), "fill level outside [0, capacity]"))
        if not s.consumption_rate > 0:
            out.append(Violation("NonPositiveConsumption", (lid,), "consumption_rate must be > 0"))
    for lid in state.links:
        if lid not in structure.link_index:
            out.append(Violation("DanglingReference", (lid,), "state for unknown link"))
    return out
