"""The switching coordinator: an interrupt-driven state machine.

Two loops run on top of one event stream. The recalculation loop fetches
configurations and state from the controller, runs the strategy and restarts
the schedule. The configuration-change loop steps through the schedule and
turns each step into a :class:`ReconfigurationPlan`.

The coordinator never touches buffers itself; every read and every switch goes
through a :class:`Controller`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence, Union

from qkdswitch.model import EMPTY_CONFIGURATION, Configuration, NetworkState, NetworkStructure
from qkdswitch.optimize import Schedule, compute_schedule

__all__ = [
    "RecalcInterrupt",
    "ConfigChangeInterrupt",
    "BufferCriticalNotification",
    "CoordinatorEvent",
    "ReconfigurationPlan",
    "CoordinatorConfig",
    "Decision",
    "Controller",
    "CoordinatorError",
    "SwitchingCoordinator",
    "diff_configurations",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RecalcInterrupt:
    time: float
    periodic: bool = False
    # non-zero for the deferred recalculation that closes a grace window
    grace_token: int = 0


@dataclass(frozen=True)
class ConfigChangeInterrupt:
    time: float
    epoch: int = 0


@dataclass(frozen=True)
class BufferCriticalNotification:
    time: float
    link_id: str


CoordinatorEvent = Union[RecalcInterrupt, ConfigChangeInterrupt, BufferCriticalNotification]


@dataclass(frozen=True)
class ReconfigurationPlan:
    """Steps to move from the ongoing to the target configuration.

    Execution order is fixed: deactivate, then light-path changes, then activate.
    """

    deactivate: frozenset[str]
    lightpath_changes: tuple
    activate: frozenset[str]
    target: str = ""

    @property
    def is_empty(self) -> bool:
        return not self.deactivate and not self.activate

    def steps(self) -> list[tuple]:
        out: list[tuple] = [("deactivate", pid) for pid in sorted(self.deactivate)]
        out += list(self.lightpath_changes)
        out += [("activate", pid) for pid in sorted(self.activate)]
        return out


def diff_configurations(ongoing: Configuration, target: Configuration) -> ReconfigurationPlan:
    old = ongoing.physical_link_ids
    new = target.physical_link_ids
    deactivate = old - new
    activate = new - old
    lightpaths: tuple = ()
    if deactivate or activate:
        lightpaths = (("lightpaths", tuple(sorted(deactivate)), tuple(sorted(activate))),)
    return ReconfigurationPlan(frozenset(deactivate), lightpaths, frozenset(activate), target.config_id)


@dataclass(frozen=True)
class CoordinatorConfig:
    strategy: str = "mmak"
    mode: str = "periodic"
    recalc_period: float | None = None
    grace_time: float = 600.0
    # re-query the network at grace expiry and treat every buffer still below
    # its threshold as notifying again; None means "on for FMCB only"
    recheck_critical: bool | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("periodic", "event_driven", "hybrid"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.strategy not in ("mmak", "fmcb"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.recalc_period is not None and not self.recalc_period > 0:
            raise ValueError("recalc_period must be > 0")
        if self.grace_time < 0:
            raise ValueError("grace_time must be >= 0")

    @property
    def handles_notifications(self) -> bool:
        return self.mode in ("event_driven", "hybrid")

    @property
    def rechecks(self) -> bool:
        if not self.handles_notifications:
            return False
        return self.strategy == "fmcb" if self.recheck_critical is None else self.recheck_critical

    @property
    def periodic(self) -> bool:
        return self.mode in ("periodic", "hybrid") and self.recalc_period is not None


@dataclass
class Decision:
    interrupts: list = field(default_factory=list)
    plan: ReconfigurationPlan | None = None
    schedule: Schedule | None = None


class Controller(Protocol):
    def get_configurations(self) -> Sequence[Configuration]: ...

    def get_state(self) -> NetworkState: ...

    def execute_plan(self, plan: ReconfigurationPlan) -> float:
        """Carry out ``plan``; return the time at which the switch completes."""
        ...

    def subscribe_notifications(self, callback: Callable[[BufferCriticalNotification], None]) -> None: ...


class CoordinatorError(RuntimeError):
    pass


class SwitchingCoordinator:
    def __init__(self, structure: NetworkStructure, config: CoordinatorConfig):
        self.structure = structure
        self.config = config
        self.schedule: Schedule | None = None
        self.position = -1
        self.epoch = 0
        self.ongoing: Configuration = EMPTY_CONFIGURATION
        self.last_reconfiguration = -math.inf
        self.pending_notifications: set[str] = set()
        self._grace_token = 0
        self._grace_pending = False
        self._configs: dict[str, Configuration] = {}
        self.records: list[dict] = []
        self.recalculations = 0

    # -- entry points -------------------------------------------------------------

    def start(self, time: float) -> list[CoordinatorEvent]:
        return [RecalcInterrupt(time, periodic=True)]

    def handle_event(self, event: CoordinatorEvent, controller: Controller) -> Decision:
        if isinstance(event, RecalcInterrupt):
            decision = self._on_recalc(event, controller)
        elif isinstance(event, ConfigChangeInterrupt):
            decision = self._on_config_change(event, controller)
        elif isinstance(event, BufferCriticalNotification):
            decision = self._on_notification(event, controller)
        else:
            raise TypeError(f"unknown coordinator event {event!r}")
        self._log(event, decision)
        return decision

    def in_grace(self, time: float) -> bool:
        return time < self.last_reconfiguration + self.config.grace_time

    # -- handlers -----------------------------------------------------------------

    def _on_recalc(self, event: RecalcInterrupt, controller: Controller) -> Decision:
        if event.grace_token:
            if event.grace_token != self._grace_token or not self._grace_pending:
                return Decision()
            expiry = self.last_reconfiguration + self.config.grace_time
            if event.time < expiry:
                # another reconfiguration moved the grace window
                return Decision([RecalcInterrupt(expiry, grace_token=event.grace_token)])
            self._grace_pending = False
            if not self.pending_notifications and not self._below_threshold(controller):
                return Decision()
        decision = self._recalculate(event.time, controller)
        if event.periodic and self.config.periodic:
            decision.interrupts.append(RecalcInterrupt(event.time + self.config.recalc_period, periodic=True))
        return decision

    def _recalculate(self, time: float, controller: Controller) -> Decision:
        configs = list(controller.get_configurations())
        state = controller.get_state()
        self._configs = {c.config_id: c for c in configs}
        try:
            schedule, _info = compute_schedule(self.config.strategy, self.structure, state, configs)
        except Exception as exc:
            raise CoordinatorError(
                f"strategy {self.config.strategy} failed at t={time:.3f}s: {exc}") from exc
        self.schedule = schedule
        self.position = -1
        self.epoch += 1
        self.recalculations += 1
        self.pending_notifications.clear()
        self._grace_pending = False
        return Decision([ConfigChangeInterrupt(time, self.epoch)], schedule=schedule)

    def _on_config_change(self, event: ConfigChangeInterrupt, controller: Controller) -> Decision:
        if event.epoch != self.epoch or self.schedule is None:
            return Decision()
        self.position = (self.position + 1) % len(self.schedule)
        config_id, duration = self.schedule.entries[self.position]
        target = self._configs[config_id]
        plan = diff_configurations(self.ongoing, target)
        interrupts = []
        if not plan.is_empty:
            self.last_reconfiguration = controller.execute_plan(plan)
            if self.config.rechecks:
                interrupts.append(self._arm_grace(self.last_reconfiguration + self.config.grace_time))
        elif self.config.rechecks and self.config.grace_time > 0 and not self._grace_pending:
            # nothing changed, but critical links may still be waiting
            if set(self._below_threshold(controller)) - target.link_ids:
                interrupts.append(self._arm_grace(event.time + self.config.grace_time))
        self.ongoing = target
        if not math.isinf(duration):
            interrupts.append(ConfigChangeInterrupt(event.time + duration, self.epoch))
        return Decision(interrupts, plan)

    def _on_notification(self, event: BufferCriticalNotification, controller: Controller) -> Decision:
        if event.link_id not in self.structure.link_index:
            raise CoordinatorError(f"notification for unknown link {event.link_id!r}")
        if not self.config.handles_notifications:
            return Decision()
        if self.in_grace(event.time):
            self.pending_notifications.add(event.link_id)
            if self._grace_pending:
                return Decision()
            return Decision([self._arm_grace(self.last_reconfiguration + self.config.grace_time)])
        return self._recalculate(event.time, controller)

    def _arm_grace(self, at: float) -> RecalcInterrupt:
        self._grace_pending = True
        self._grace_token += 1
        return RecalcInterrupt(at, grace_token=self._grace_token)

    def _below_threshold(self, controller: Controller) -> list[str]:
        if not self.config.rechecks:
            return []
        state = controller.get_state()
        return [link.link_id for link in self.structure.links
                if state.links[link.link_id].buffer_fill_level <= link.threshold]

    # -- logging --------------------------------------------------------------------

    def _log(self, event: CoordinatorEvent, decision: Decision) -> None:
        plan = decision.plan
        record = {
            "time": event.time,
            "event": type(event).__name__,
            "config": plan.target if plan is not None else None,
            "deactivate": len(plan.deactivate) if plan is not None else 0,
            "activate": len(plan.activate) if plan is not None else 0,
        }
        if isinstance(event, BufferCriticalNotification):
            record["link"] = event.link_id
        self.records.append(record)
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug("t=%.3f event=%s config=%s deactivate=%d activate=%d",
                         record["time"], record["event"], record["config"],
                         record["deactivate"], record["activate"])
