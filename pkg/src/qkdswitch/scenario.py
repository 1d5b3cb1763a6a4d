"""Scenario files: parsing, validation on load, and serialization.

A scenario is a YAML document with up to four top-level sections::

    links:            # list of links, fields as in the controller's list of links
    configurations:   # optional explicit list of configurations
    network_state:    # optional per-link operational data
    strategy:         # optional run settings

Quantities carry unit suffixes (``9.6kbps``, ``3.6MB``, ``600s``, ``50%``).
Inside ``active_links`` a ``generation_rate`` may be written ``g(<physical_link_id>)``
or left out, both of which resolve to the physical link's declared rate.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from qkdswitch.model import (
    ActiveLink,
    Configuration,
    LinkSpec,
    LinkState,
    NetworkState,
    NetworkStructure,
    PhysicalLinkSpec,
    ValidationError,
    validate,
    validate_state,
)
from qkdswitch.units import (
    UnitError,
    format_duration,
    format_rate,
    format_size,
    parse_duration,
    parse_fraction,
    parse_rate,
    parse_size,
)

__all__ = [
    "ScenarioError",
    "StrategySettings",
    "Scenario",
    "parse_scenario",
    "load_scenario",
    "parse_state",
    "serialize_state",
    "serialize_scenario",
]

STRATEGIES = ("mmak", "fmcb")
MODES = ("periodic", "event_driven", "hybrid")


class ScenarioError(ValueError):
    """Malformed scenario text. ``line``/``column`` are 1-based when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


@dataclass(frozen=True)
class StrategySettings:
    name: str = "mmak"
    mode: str | None = None  # None -> strategy default
    grace_time: float = 600.0
    recalc_period: float | None = None  # None -> no periodic recalculation after the first
    horizon: float = 100 * 3600.0
    uniform_consumption: float | None = None
    initial_fill: float = 0.5  # fraction of capacity for links without explicit state
    switch_downtime: float = 0.0
    sample_interval: float | None = None

    @property
    def effective_mode(self) -> str:
        if self.mode is not None:
            return self.mode
        return "event_driven" if self.name == "fmcb" else "periodic"

    def check(self) -> None:
        if self.name not in STRATEGIES:
            raise ScenarioError(f"unknown strategy {self.name!r} (expected mmak or fmcb)")
        if self.effective_mode not in MODES:
            raise ScenarioError(f"unknown mode {self.mode!r}")
        if self.grace_time < 0:
            raise ScenarioError("grace_time must be >= 0")
        if self.recalc_period is not None and not self.recalc_period > 0:
            raise ScenarioError("recalc_period must be > 0")
        if not self.horizon > 0:
            raise ScenarioError("horizon must be > 0")
        if self.uniform_consumption is not None and not self.uniform_consumption > 0:
            raise ScenarioError("uniform_consumption must be > 0")
        if self.switch_downtime < 0:
            raise ScenarioError("switch_downtime must be >= 0")


@dataclass(frozen=True)
class Scenario:
    structure: NetworkStructure
    state: NetworkState
    settings: StrategySettings = field(default_factory=StrategySettings)

    def __iter__(self):
        return iter((self.structure, self.state, self.settings))


# -- YAML loading with line numbers -------------------------------------------------


class _Map(dict):
    line: int | None = None


class _Loader(yaml.SafeLoader):
    pass


def _construct_map(loader: _Loader, node: yaml.MappingNode) -> _Map:
    out = _Map()
    out.line = node.start_mark.line + 1
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in out:
            raise ScenarioError(f"duplicate key {key!r}", key_node.start_mark.line + 1,
                                key_node.start_mark.column + 1)
        out[key] = loader.construct_object(value_node, deep=True)
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_map)


def _load_yaml(text: str) -> Any:
    try:
        return yaml.load(text, Loader=_Loader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ScenarioError(f"syntax error: {exc.problem or exc}", line, col) from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"syntax error: {exc}") from exc


def _line(obj: Any) -> int | None:
    return getattr(obj, "line", None)


def _mapping(obj: Any, where: str, allowed: set[str], required: set[str]) -> dict:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected a mapping", _line(obj))
    unknown = sorted(set(obj) - allowed, key=str)
    if unknown:
        raise ScenarioError(f"{where}: unknown field {unknown[0]!r}", _line(obj))
    missing = sorted(required - set(obj))
    if missing:
        raise ScenarioError(f"{where}: missing field {missing[0]!r}", _line(obj))
    return obj


def _list(obj: Any, where: str, parent: Any = None) -> list:
    if obj is None:
        return []
    if not isinstance(obj, list):
        raise ScenarioError(f"{where}: expected a list", _line(parent))
    return obj


def _ident(value: Any, where: str, parent: Any) -> str:
    if isinstance(value, bool) or value is None or isinstance(value, (list, dict)):
        raise ScenarioError(f"{where}: expected an identifier, got {value!r}", _line(parent))
    return str(value)


def _unit(fn, value: Any, where: str, parent: Any) -> float:
    try:
        return fn(value)
    except UnitError as exc:
        raise ScenarioError(f"{where}: {exc}", _line(parent)) from exc


# -- sections ---------------------------------------------------------------------

_LINK_FIELDS = {"link_id", "buffer_capacity", "physical_links", "priority_index", "critical_threshold"}
_PHYS_FIELDS = {"physical_link_id", "resources", "generation_rate"}
_CONFIG_FIELDS = {"config_id", "active_links"}
_ACTIVE_FIELDS = {"link_id", "physical_link_id", "generation_rate"}
_STATE_FIELDS = {"link_id", "current_state"}
_CURRENT_FIELDS = {"buffer_fill_level", "consumption_rate"}
_STRATEGY_FIELDS = {
    "name", "mode", "grace_time", "recalc_period", "horizon", "uniform_consumption",
    "initial_fill", "switch_downtime", "sample_interval",
}
_TOP_FIELDS = {"links", "configurations", "network_state", "strategy", "state_time"}

_G_REF = re.compile(r"^\s*g\(\s*([^)\s]+)\s*\)\s*$")


def _parse_links(raw: Any, doc: Any) -> list[LinkSpec]:
    links = []
    for pos, item in enumerate(_list(raw, "links", doc), start=1):
        m = _mapping(item, "link", _LINK_FIELDS, {"link_id", "buffer_capacity", "physical_links"})
        lid = _ident(m["link_id"], "link_id", m)
        cap = _unit(parse_size, m["buffer_capacity"], f"{lid}.buffer_capacity", m)
        phys = []
        for p_item in _list(m["physical_links"], f"{lid}.physical_links", m):
            p = _mapping(p_item, f"{lid} physical link", _PHYS_FIELDS, _PHYS_FIELDS)
            pid = _ident(p["physical_link_id"], "physical_link_id", p)
            res = _list(p["resources"], f"{pid}.resources", p)
            resources = frozenset(_ident(r, f"{pid}.resources", p) for r in res)
            rate = _unit(parse_rate, p["generation_rate"], f"{pid}.generation_rate", p)
            phys.append(PhysicalLinkSpec(pid, resources, rate))
        prio = m.get("priority_index", pos)
        if isinstance(prio, bool) or not isinstance(prio, int):
            raise ScenarioError(f"{lid}.priority_index: expected an integer", _line(m))
        thr = m.get("critical_threshold")
        thr_bits = None if thr is None else _unit(parse_size, thr, f"{lid}.critical_threshold", m)
        links.append(LinkSpec(lid, cap, tuple(phys), prio, thr_bits))
    return links


def _parse_configurations(raw: Any, links: list[LinkSpec], doc: Any) -> list[Configuration]:
    declared = {p.physical_link_id: p.generation_rate for l in links for p in l.physical_links}
    configs = []
    for item in _list(raw, "configurations", doc):
        m = _mapping(item, "configuration", _CONFIG_FIELDS, _CONFIG_FIELDS)
        cid = _ident(m["config_id"], "config_id", m)
        active = []
        for a_item in _list(m["active_links"], f"{cid}.active_links", m):
            a = _mapping(a_item, f"{cid} active link", _ACTIVE_FIELDS, {"link_id", "physical_link_id"})
            lid = _ident(a["link_id"], "link_id", a)
            pid = _ident(a["physical_link_id"], "physical_link_id", a)
            raw_rate = a.get("generation_rate")
            ref = _G_REF.match(raw_rate) if isinstance(raw_rate, str) else None
            if raw_rate is None or ref is not None:
                target = ref.group(1) if ref else pid
                if target != pid:
                    raise ScenarioError(f"{cid}: g({target}) does not match {pid}", _line(a))
                # unknown ids are reported by validate() as dangling references
                rate = declared.get(pid, 0.0)
            else:
                rate = _unit(parse_rate, raw_rate, f"{cid}.{pid}.generation_rate", a)
            active.append(ActiveLink(lid, pid, rate))
        configs.append(Configuration(cid, tuple(active)))
    return configs


def _parse_settings(raw: Any, doc: Any) -> StrategySettings:
    if raw is None:
        return StrategySettings()
    m = _mapping(raw, "strategy", _STRATEGY_FIELDS, set())
    kw: dict[str, Any] = {}
    if "name" in m:
        kw["name"] = str(m["name"]).lower()
    if "mode" in m:
        kw["mode"] = str(m["mode"]).lower().replace("-", "_")
    for key in ("grace_time", "recalc_period", "horizon", "switch_downtime", "sample_interval"):
        if key in m and m[key] is not None:
            kw[key] = _unit(parse_duration, m[key], f"strategy.{key}", m)
    if kw.get("recalc_period") == float("inf"):
        kw["recalc_period"] = None
    if "uniform_consumption" in m and m["uniform_consumption"] is not None:
        kw["uniform_consumption"] = _unit(parse_rate, m["uniform_consumption"],
                                          "strategy.uniform_consumption", m)
    if "initial_fill" in m:
        kw["initial_fill"] = _unit(parse_fraction, m["initial_fill"], "strategy.initial_fill", m)
    settings = StrategySettings(**kw)
    try:
        settings.check()
    except ScenarioError as exc:
        raise ScenarioError(str(exc), _line(m)) from None
    return settings


def _parse_state_entries(raw: Any, doc: Any) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    for item in _list(raw, "network_state", doc):
        m = _mapping(item, "network_state entry", _STATE_FIELDS, _STATE_FIELDS)
        lid = _ident(m["link_id"], "link_id", m)
        cur = _mapping(m["current_state"], f"{lid}.current_state", _CURRENT_FIELDS, set())
        entry: dict[str, float] = {}
        if "buffer_fill_level" in cur:
            entry["fill"] = _unit(parse_size, cur["buffer_fill_level"], f"{lid}.buffer_fill_level", cur)
        if "consumption_rate" in cur:
            entry["rate"] = _unit(parse_rate, cur["consumption_rate"], f"{lid}.consumption_rate", cur)
        if lid in out:
            raise ScenarioError(f"network_state: link {lid!r} listed twice", _line(m))
        out[lid] = entry
    return out


def _build_state(structure: NetworkStructure, entries: dict[str, dict[str, float]],
                 settings: StrategySettings, time: float) -> NetworkState:
    states = {}
    for link in structure.links:
        e = entries.get(link.link_id, {})
        fill = e.get("fill", settings.initial_fill * link.buffer_capacity)
        rate = settings.uniform_consumption if settings.uniform_consumption is not None else e.get("rate")
        if rate is None:
            raise ScenarioError(
                f"no consumption_rate for link {link.link_id!r} and no strategy.uniform_consumption")
        states[link.link_id] = LinkState(fill, rate)
    return NetworkState(states, time)


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document.

    Raises :class:`ScenarioError` for syntax, field and unit problems and
    :class:`~qkdswitch.model.ValidationError` for broken invariants.
    """
    doc = _load_yaml(text)
    if doc is None:
        doc = _Map()
    doc = _mapping(doc, "document", _TOP_FIELDS, set())
    links = _parse_links(doc.get("links"), doc)
    configs = _parse_configurations(doc.get("configurations"), links, doc)
    structure = NetworkStructure(tuple(links), tuple(configs))
    violations = validate(structure)
    if violations:
        raise ValidationError(violations)
    settings = _parse_settings(doc.get("strategy"), doc)
    time = _unit(parse_duration, doc.get("state_time", 0), "state_time", doc)
    state = _build_state(structure, _parse_state_entries(doc.get("network_state"), doc), settings, time)
    violations = validate_state(state, structure)
    if violations:
        raise ValidationError(violations)
    return Scenario(structure, state, settings)


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def parse_state(text: str, structure: NetworkStructure) -> NetworkState:
    """Parse a ``network_state`` fragment (as written by :func:`serialize_state`)."""
    doc = _load_yaml(text) or _Map()
    doc = _mapping(doc, "document", {"network_state", "state_time"}, {"network_state"})
    entries = _parse_state_entries(doc["network_state"], doc)
    time = _unit(parse_duration, doc.get("state_time", 0), "state_time", doc)
    missing = [lid for lid in structure.link_ids
               if "fill" not in entries.get(lid, {}) or "rate" not in entries.get(lid, {})]
    if missing:
        raise ScenarioError(f"network_state: incomplete entry for link {missing[0]!r}")
    return _build_state(structure, entries, StrategySettings(), time)


# -- serialization ----------------------------------------------------------------


def _scalar(value: str) -> str:
    dumped = yaml.safe_dump(value, default_flow_style=True, width=10**9)
    return dumped.replace("\n...\n", "").strip()


def serialize_state(state: NetworkState) -> str:
    """Write ``state`` as a ``network_state`` fragment; fills are rounded to whole bits."""
    lines = []
    if state.time:
        lines.append(f"state_time: {format_duration(state.time)}")
    lines.append("network_state:")
    for lid in sorted(state.links):
        s = state.links[lid]
        lines += [
            f"  - link_id: {_scalar(lid)}",
            "    current_state:",
            f"      buffer_fill_level: {format_size(round(s.buffer_fill_level))}",
            f"      consumption_rate: {format_rate(s.consumption_rate)}",
        ]
    return "\n".join(lines) + "\n"


def serialize_structure(structure: NetworkStructure) -> str:
    lines = ["links:"]
    for link in structure.links:
        lines += [
            f"  - link_id: {_scalar(link.link_id)}",
            f"    buffer_capacity: {format_size(link.buffer_capacity)}",
            f"    priority_index: {link.priority_index}",
        ]
        if link.critical_threshold is not None:
            lines.append(f"    critical_threshold: {format_size(link.critical_threshold)}")
        lines.append("    physical_links:")
        for p in link.physical_links:
            res = ", ".join(_scalar(r) for r in sorted(p.resources))
            lines += [
                f"      - physical_link_id: {_scalar(p.physical_link_id)}",
                f"        resources: [{res}]",
                f"        generation_rate: {format_rate(p.generation_rate)}",
            ]
    if structure.configurations:
        lines.append("configurations:")
        lines.extend(serialize_configurations(structure.configurations, indent=2).splitlines())
    return "\n".join(lines) + "\n"


def serialize_configurations(configs, indent: int = 0) -> str:
    pad = " " * indent
    lines = []
    for c in configs:
        lines += [f"{pad}- config_id: {_scalar(c.config_id)}", f"{pad}  active_links:"]
        for a in c.active_links:
            lines += [
                f"{pad}  - link_id: {_scalar(a.link_id)}",
                f"{pad}    physical_link_id: {_scalar(a.physical_link_id)}",
                f"{pad}    generation_rate: {format_rate(a.generation_rate)}",
            ]
        if not c.active_links:
            lines[-1] += " []"
    return "\n".join(lines) + ("\n" if lines else "")


def serialize_settings(settings: StrategySettings) -> str:
    lines = ["strategy:", f"  name: {settings.name}"]
    if settings.mode is not None:
        lines.append(f"  mode: {settings.mode}")
    lines.append(f"  grace_time: {format_duration(settings.grace_time)}")
    if settings.recalc_period is not None:
        lines.append(f"  recalc_period: {format_duration(settings.recalc_period)}")
    lines.append(f"  horizon: {format_duration(settings.horizon)}")
    if settings.uniform_consumption is not None:
        lines.append(f"  uniform_consumption: {format_rate(settings.uniform_consumption)}")
    lines.append(f"  initial_fill: {settings.initial_fill!r}")
    lines.append(f"  switch_downtime: {format_duration(settings.switch_downtime)}")
    if settings.sample_interval is not None:
        lines.append(f"  sample_interval: {format_duration(settings.sample_interval)}")
    return "\n".join(lines) + "\n"


def serialize_scenario(scenario: Scenario) -> str:
    """Full document; the state is written explicitly and the consumption override dropped."""
    settings = replace(scenario.settings, uniform_consumption=None)
    return (serialize_structure(scenario.structure) + serialize_state(scenario.state)
            + serialize_settings(settings))
