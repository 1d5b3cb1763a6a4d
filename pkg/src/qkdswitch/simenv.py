"""Event-driven simulation of link buffers behind a mock SDN controller.

Between events every buffer fill is an affine function of time, so the
simulator stores for each link an anchor ``(time, fill)`` plus its current
generation and consumption rates and jumps straight to the next crossing
(full, empty, critical threshold) or interrupt. Nothing is integrated in
steps; a fill at time ``t`` is always ``anchor_fill + net * (t - anchor_time)``.

A full buffer discards the surplus (waste). An empty buffer serves only what
is generated and records the missing demand (shortfall) and the starvation
interval. A buffer notifies once when it falls to its critical threshold and
re-arms after it has risen above the threshold again.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from qkdswitch.configspace import useful_configurations
from qkdswitch.coordinator import (
    BufferCriticalNotification,
    Controller,
    ReconfigurationPlan,
    SwitchingCoordinator,
)
from qkdswitch.model import Configuration, LinkState, NetworkState, NetworkStructure
from qkdswitch.optimize import Schedule

__all__ = [
    "SimulationError",
    "Trace",
    "Simulation",
    "run",
    "periodic_start_fills",
]

DEFAULT_MAX_EVENTS = 10**7

_FREE, _FULL, _EMPTY = 0, 1, 2


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class _SwitchComplete:
    time: float
    plan: ReconfigurationPlan


@dataclass(frozen=True)
class _Checkpoint:
    time: float


@dataclass
class Trace:
    link_ids: tuple[str, ...]
    capacities: tuple[float, ...]
    start: float
    end: float = 0.0
    rows: list[tuple[float, str, tuple[float, ...]]] = field(default_factory=list)
    # fills at every applied reconfiguration (time, target config, fills)
    switches: list[tuple[float, str, tuple[float, ...]]] = field(default_factory=list)
    checkpoints: list[tuple[float, tuple[float, ...]]] = field(default_factory=list)
    notifications: list[tuple[float, str]] = field(default_factory=list)
    depletion: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    waste: dict[str, float] = field(default_factory=dict)
    generated: dict[str, float] = field(default_factory=dict)
    demanded: dict[str, float] = field(default_factory=dict)
    shortfall: dict[str, float] = field(default_factory=dict)
    initial_fills: tuple[float, ...] = ()
    final_fills: tuple[float, ...] = ()
    final_config: str = ""
    static_since: float | None = None
    events: int = 0

    def served(self, link_id: str) -> float:
        return self.demanded[link_id] - self.shortfall[link_id]

    def depletion_time(self, link_id: str | None = None, start: float | None = None,
                       end: float | None = None) -> float:
        lo = self.start if start is None else start
        hi = self.end if end is None else end
        ids = self.link_ids if link_id is None else (link_id,)
        total = 0.0
        for lid in ids:
            for a, b in self.depletion.get(lid, ()):
                total += max(0.0, min(b, hi) - max(a, lo))
        return total

    def to_csv(self, target: str | Path | io.TextIOBase | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_s", "active_config", *(f"{lid}_bits" for lid in self.link_ids)])
        for t, cfg, fills in self.rows:
            w.writerow([repr(float(t)), cfg, *(repr(float(f)) for f in fills)])
        text = buf.getvalue()
        if isinstance(target, (str, Path)):
            Path(target).write_text(text, encoding="utf-8")
        elif target is not None:
            target.write(text)
        return text

    def summary(self) -> dict:
        return {
            lid: {
                "depletion_s": self.depletion_time(lid),
                "waste_bits": self.waste[lid],
                "shortfall_bits": self.shortfall[lid],
            }
            for lid in self.link_ids
        }


class Simulation(Controller):
    """Mock SDN controller owning the buffers; drives a coordinator."""

    def __init__(self, structure: NetworkStructure, initial_state: NetworkState,
                 coordinator: SwitchingCoordinator, *,
                 switch_downtime: float = 0.0,
                 configurations: Sequence[Configuration] | None = None,
                 sample_interval: float | None = None,
                 record_rows: bool = True,
                 max_events: int = DEFAULT_MAX_EVENTS):
        if switch_downtime < 0:
            raise ValueError("switch_downtime must be >= 0")
        self.structure = structure
        self.coordinator = coordinator
        self.switch_downtime = switch_downtime
        self.configurations = list(configurations if configurations is not None
                                   else useful_configurations(structure))
        self._config_by_id = {c.config_id: c for c in self.configurations}
        self.sample_interval = sample_interval
        self.record_rows = record_rows
        self.max_events = max_events
        self._subscribers: list[Callable[[BufferCriticalNotification], None]] = []

        ids = structure.link_ids
        L = len(ids)
        self.t = initial_state.time
        self.cap = [l.buffer_capacity for l in structure.links]
        self.thr = [l.threshold for l in structure.links]
        self.cons = [initial_state.links[lid].consumption_rate for lid in ids]
        self.gen = [0.0] * L
        self.anchor_t = [self.t] * L
        self.anchor_f = [float(initial_state.links[lid].buffer_fill_level) for lid in ids]
        self.mode = [_FREE] * L
        self.armed = [f > th for f, th in zip(self.anchor_f, self.thr)]
        self.active: dict[str, str] = {}  # link_id -> physical_link_id generating now
        self.label = ""
        self._next = [(math.inf, "")] * L
        self._queue: list = []
        self._seq = 0
        self._depl_open: list[float | None] = [None] * L
        self._last_change = self.t

        self.trace = Trace(ids, tuple(self.cap), self.t,
                           depletion={lid: [] for lid in ids},
                           waste={lid: 0.0 for lid in ids},
                           generated={lid: 0.0 for lid in ids},
                           demanded={lid: 0.0 for lid in ids},
                           shortfall={lid: 0.0 for lid in ids},
                           initial_fills=tuple(self.anchor_f))
        for l in range(L):
            self._settle(l)

    # -- controller interface ---------------------------------------------------------

    def get_configurations(self) -> list[Configuration]:
        return list(self.configurations)

    def get_state(self) -> NetworkState:
        links = {lid: LinkState(self.fill(l), self.cons[l]) for l, lid in enumerate(self.structure.link_ids)}
        return NetworkState(links, self.t)

    def subscribe_notifications(self, callback: Callable[[BufferCriticalNotification], None]) -> None:
        self._subscribers.append(callback)

    def execute_plan(self, plan: ReconfigurationPlan) -> float:
        owner = self.structure.physical_owner
        for pid in plan.deactivate:
            lid = owner[pid]
            if self.active.get(lid) == pid:
                del self.active[lid]
                self._set_gen(self.structure.link_index[lid], 0.0)
        self.label = plan.target
        self.trace.switches.append((self.t, plan.target, self.fills()))
        if self.switch_downtime == 0:
            self._activate(plan)
            return self.t
        done = self.t + self.switch_downtime
        self._push(_SwitchComplete(done, plan))
        return done

    # -- buffer dynamics ----------------------------------------------------------------

    def fill(self, l: int, t: float | None = None) -> float:
        t = self.t if t is None else t
        if self.mode[l] == _FULL:
            return self.cap[l]
        if self.mode[l] == _EMPTY:
            return 0.0
        f = self.anchor_f[l] + (self.gen[l] - self.cons[l]) * (t - self.anchor_t[l])
        return min(self.cap[l], max(0.0, f))

    def fills(self) -> tuple[float, ...]:
        return tuple(self.fill(l) for l in range(len(self.cap)))

    def _account(self, l: int) -> float:
        """Book the interval since the last anchor; return the fill now."""
        lid = self.structure.link_ids[l]
        dt = self.t - self.anchor_t[l]
        tr = self.trace
        g, c = self.gen[l], self.cons[l]
        tr.generated[lid] += g * dt
        tr.demanded[lid] += c * dt
        if self.mode[l] == _FULL:
            tr.waste[lid] += (g - c) * dt
            return self.cap[l]
        if self.mode[l] == _EMPTY:
            tr.shortfall[lid] += (c - g) * dt
            return 0.0
        f = self.anchor_f[l] + (g - c) * dt
        # rounding can overshoot a bound by a few ulps; keep the ledger closed
        if f > self.cap[l]:
            tr.waste[lid] += f - self.cap[l]
            f = self.cap[l]
        elif f < 0.0:
            tr.shortfall[lid] += -f
            f = 0.0
        return f

    def _reanchor(self, l: int, fill: float | None = None) -> None:
        f = self._account(l)
        if fill is not None:
            f = fill
        self.anchor_t[l] = self.t
        self.anchor_f[l] = f
        if f > self.thr[l]:
            self.armed[l] = True

    def _settle(self, l: int) -> None:
        """Pick the clamp mode from fill and net rate, then compute the next crossing."""
        f = self.anchor_f[l]
        net = self.gen[l] - self.cons[l]
        was_empty = self.mode[l] == _EMPTY
        if f >= self.cap[l] and net > 0:
            self.mode[l] = _FULL
        elif f <= 0.0 and net < 0:
            self.mode[l] = _EMPTY
        else:
            self.mode[l] = _FREE
        if self.mode[l] == _EMPTY and not was_empty:
            self._depl_open[l] = self.t
        elif was_empty and self.mode[l] != _EMPTY:
            self._close_depletion(l)

        self._last_change = self.t
        nxt = (math.inf, "")
        if self.mode[l] == _FREE:
            if net > 0:
                nxt = (self.anchor_t[l] + (self.cap[l] - f) / net, "full")
            elif net < 0:
                if self.armed[l] and f > self.thr[l]:
                    nxt = (self.anchor_t[l] + (f - self.thr[l]) / -net, "critical")
                else:
                    nxt = (self.anchor_t[l] + f / -net, "empty")
        self._next[l] = nxt

    def _close_depletion(self, l: int) -> None:
        start = self._depl_open[l]
        if start is not None:
            if self.t > start:
                self.trace.depletion[self.structure.link_ids[l]].append((start, self.t))
            self._depl_open[l] = None

    def _set_gen(self, l: int, rate: float) -> None:
        if self.gen[l] == rate:
            return
        self._reanchor(l)
        self.gen[l] = rate
        self._settle(l)

    def _activate(self, plan: ReconfigurationPlan) -> None:
        target = self._config_by_id.get(plan.target)
        rates = {a.physical_link_id: (a.link_id, a.generation_rate) for a in target.active_links} if target else {}
        for pid in sorted(plan.activate):
            lid, rate = rates.get(pid, (self.structure.physical_owner[pid],
                                        self.structure.physical_links[pid].generation_rate))
            self.active[lid] = pid
            self._set_gen(self.structure.link_index[lid], rate)

    # -- event loop -------------------------------------------------------------------

    def _push(self, event) -> None:
        heapq.heappush(self._queue, (event.time, self._seq, event))
        self._seq += 1

    def _apply(self, decision) -> None:
        for ev in decision.interrupts:
            if ev.time < self.t:
                raise SimulationError(f"coordinator scheduled an interrupt in the past ({ev.time} < {self.t})")
            self._push(ev)

    def _record(self) -> None:
        if self.record_rows:
            row = (self.t, self.label, self.fills())
            if not self.trace.rows or self.trace.rows[-1] != row:
                self.trace.rows.append(row)

    def _link_event(self, l: int, kind: str) -> None:
        if kind == "full":
            self._reanchor(l, self.cap[l])
        elif kind == "empty":
            self._reanchor(l, 0.0)
        else:
            self._reanchor(l, self.thr[l])
            self.armed[l] = False
        self._settle(l)
        if kind == "critical":
            lid = self.structure.link_ids[l]
            note = BufferCriticalNotification(self.t, lid)
            self.trace.notifications.append((self.t, lid))
            for cb in self._subscribers:
                cb(note)
            self._apply(self.coordinator.handle_event(note, self))

    def run(self, horizon: float, checkpoints: Sequence[float] = ()) -> Trace:
        if not horizon > 0:
            raise ValueError("horizon must be > 0")
        end = self.trace.start + horizon
        for ev in self.coordinator.start(self.t):
            if ev.time < self.t:
                raise SimulationError(f"coordinator scheduled an interrupt in the past ({ev.time} < {self.t})")
            self._push(ev)
        for cp in checkpoints:
            if self.trace.start <= cp <= end:
                self._push(_Checkpoint(cp))
        next_sample = self.t if self.sample_interval else math.inf
        self._record()
        events = 0
        L = len(self.cap)
        while True:
            l_min = min(range(L), key=lambda l: self._next[l][0]) if L else -1
            t_link = self._next[l_min][0] if L else math.inf
            t_queue = self._queue[0][0] if self._queue else math.inf
            t_next = min(t_link, t_queue, next_sample)
            if t_next > end:
                break
            events += 1
            if events > self.max_events:
                raise SimulationError(f"event cap of {self.max_events} exceeded before the horizon")
            self.t = t_next
            if t_link <= t_queue and t_link <= next_sample:
                self._link_event(l_min, self._next[l_min][1])
            elif t_queue <= next_sample:
                _, _, ev = heapq.heappop(self._queue)
                if isinstance(ev, _SwitchComplete):
                    self._activate(ev.plan)
                elif isinstance(ev, _Checkpoint):
                    self.trace.checkpoints.append((self.t, self.fills()))
                    continue
                else:
                    self._apply(self.coordinator.handle_event(ev, self))
            else:
                next_sample += self.sample_interval
            self._record()

        self.t = end
        for l in range(L):
            self._reanchor(l)
        for l in range(L):
            if self.mode[l] == _EMPTY:
                self._close_depletion(l)
        tr = self.trace
        tr.end = end
        tr.events = events
        tr.final_fills = tuple(self.anchor_f)
        tr.final_config = self.label
        self._record()
        static = all(m != _FREE or self.gen[l] == self.cons[l] for l, m in enumerate(self.mode))
        tr.static_since = self._last_change if static else None
        return tr


def run(structure: NetworkStructure, initial_state: NetworkState, coordinator: SwitchingCoordinator,
        horizon: float, switch_downtime: float = 0.0, **kwargs) -> Trace:
    """Simulate ``horizon`` seconds and return the trace."""
    checkpoints = kwargs.pop("checkpoints", ())
    sim = Simulation(structure, initial_state, coordinator, switch_downtime=switch_downtime, **kwargs)
    return sim.run(horizon, checkpoints)


def periodic_start_fills(schedule: Schedule, structure: NetworkStructure,
                         configurations: Sequence[Configuration], consumption: Sequence[float]) -> list[float]:
    """Fills at the start of the schedule's periodic steady state.

    Starting from full buffers and running one cycle with clipping at capacity
    lands on the periodic orbit whenever every link gains at least as much
    key per cycle as it consumes. The result can be negative for a link that
    cannot sustain ``consumption``; callers check that.
    """
    by_id = {c.config_id: c for c in configurations}
    fills = list(structure.capacities)
    if schedule.is_infinite:
        return fills
    for cid, duration in schedule.entries:
        gen = [0.0] * len(fills)
        for a in by_id[cid].active_links:
            gen[structure.link_index[a.link_id]] = a.generation_rate
        for l in range(len(fills)):
            fills[l] = min(structure.links[l].buffer_capacity, fills[l] + (gen[l] - consumption[l]) * duration)
    return fills
