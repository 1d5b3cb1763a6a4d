"""Steady-state detection and the supported-rate sweep on top of the simulator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from qkdswitch.coordinator import CoordinatorConfig, SwitchingCoordinator
from qkdswitch.model import Configuration, LinkState, NetworkState, NetworkStructure
from qkdswitch.simenv import Simulation, Trace

__all__ = [
    "SteadyState",
    "Assessment",
    "BracketError",
    "detect_steady_state",
    "assess",
    "uniform_state",
    "coordinator_factory",
    "sustainable",
    "sweep_supported_rate",
]

FILL_EPSILON = 1.0  # bits
QUALIFICATION_HORIZON = 100 * 3600.0


@dataclass(frozen=True)
class SteadyState:
    start: float
    length: float
    mix: dict[str, float]

    def vector(self, config_ids: Sequence[str]) -> np.ndarray:
        return np.array([self.mix.get(c, 0.0) for c in config_ids])


def detect_steady_state(trace: Trace, epsilon: float = FILL_EPSILON) -> SteadyState | None:
    """Earliest recurrence of (active configuration, fills within ``epsilon``).

    Reconfiguration instants are the comparison points. A run that ends with
    every buffer static (balanced, full or empty) counts as a zero-length
    cycle in its final configuration.
    """
    switches = trace.switches
    by_config: dict[str, list[int]] = {}
    for j, (t_j, cfg, fills_j) in enumerate(switches):
        for i in by_config.get(cfg, ()):
            fills_i = switches[i][2]
            if max((abs(a - b) for a, b in zip(fills_i, fills_j)), default=0.0) <= epsilon:
                return SteadyState(switches[i][0], t_j - switches[i][0], _mix(switches, i, j))
        by_config.setdefault(cfg, []).append(j)
    if trace.static_since is not None:
        return SteadyState(trace.static_since, 0.0, {trace.final_config: 1.0} if trace.final_config else {})
    return None


def _mix(switches, i: int, j: int) -> dict[str, float]:
    total = switches[j][0] - switches[i][0]
    mix: dict[str, float] = {}
    for k in range(i, j):
        cfg = switches[k][1]
        mix[cfg] = mix.get(cfg, 0.0) + (switches[k + 1][0] - switches[k][0]) / total
    return mix


@dataclass(frozen=True)
class Assessment:
    sustainable: bool
    steady: SteadyState | None
    depletion_s: float
    reason: str


def _troughs(trace: Trace, lo: float, hi: float) -> list[float]:
    """Lowest fill per link seen at reconfigurations and checkpoints in [lo, hi]."""
    points = [f for t, _, f in trace.switches if lo <= t <= hi]
    points += [f for t, f in trace.checkpoints if lo <= t <= hi]
    if not points:
        return [float("inf")] * len(trace.link_ids)
    return [min(p[l] for p in points) for l in range(len(trace.link_ids))]


def assess(trace: Trace) -> Assessment:
    """Decide whether a run is depletion free in steady state.

    With an exact recurrence, the verdict is the depletion time from the cycle
    start onwards. Runs that have not recurred within 1 bit (buffers creeping
    slowly towards saturation) are judged on their second half instead: no
    depletion, and no link whose lowest fill keeps falling from the third to
    the fourth quarter of the run.
    """
    steady = detect_steady_state(trace)
    if steady is not None:
        depl = trace.depletion_time(start=steady.start)
        return Assessment(depl == 0.0, steady, depl, "cycle" if steady.length else "static")
    span = trace.end - trace.start
    half, three_q = trace.start + span / 2, trace.start + 3 * span / 4
    depl = trace.depletion_time(start=half)
    if depl > 0:
        return Assessment(False, None, depl, "depletion")
    early, late = _troughs(trace, half, three_q), _troughs(trace, three_q, trace.end)
    if any(b < a - FILL_EPSILON for a, b in zip(early, late)):
        return Assessment(False, None, 0.0, "drift")
    return Assessment(True, None, 0.0, "no-depletion")


def uniform_state(structure: NetworkStructure, k: float, fills: Sequence[float] | None = None,
                  eta: Sequence[float] | None = None, initial_fill: float = 0.5) -> NetworkState:
    """State with consumption ``k * eta`` and the given (or fractional) fills."""
    eta = np.ones(len(structure.links)) if eta is None else np.asarray(eta, dtype=float)
    if fills is None:
        fills = [initial_fill * c for c in structure.capacities]
    return NetworkState({lid: LinkState(float(fills[i]), float(k * eta[i]))
                         for i, lid in enumerate(structure.link_ids)})


def coordinator_factory(structure: NetworkStructure, config: CoordinatorConfig
                        ) -> Callable[[], SwitchingCoordinator]:
    return lambda: SwitchingCoordinator(structure, config)


class BracketError(ValueError):
    pass


def sustainable(structure: NetworkStructure, factory: Callable[[], SwitchingCoordinator], k: float, *,
                configurations: Sequence[Configuration] | None = None,
                fills: Sequence[float] | None = None, eta: Sequence[float] | None = None,
                horizon: float = QUALIFICATION_HORIZON, switch_downtime: float = 0.0) -> Assessment:
    state = uniform_state(structure, k, fills, eta)
    sim = Simulation(structure, state, factory(), switch_downtime=switch_downtime,
                     configurations=configurations, record_rows=False)
    trace = sim.run(horizon, checkpoints=(horizon / 2, 3 * horizon / 4, horizon))
    return assess(trace)


def sweep_supported_rate(structure: NetworkStructure, factory: Callable[[], SwitchingCoordinator],
                         k_lo: float, k_hi: float, tol: float, **kwargs) -> float:
    """Bisection for the largest uniform consumption rate a strategy sustains.

    ``k_lo`` must be sustainable and ``k_hi`` not; returns the midpoint of the
    final bracket, which is narrower than ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if not 0 < k_lo < k_hi:
        raise BracketError("need 0 < k_lo < k_hi")
    if not sustainable(structure, factory, k_lo, **kwargs).sustainable:
        raise BracketError(f"k_lo={k_lo} is not sustainable")
    if sustainable(structure, factory, k_hi, **kwargs).sustainable:
        raise BracketError(f"k_hi={k_hi} is sustainable")
    lo, hi = k_lo, k_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if sustainable(structure, factory, mid, **kwargs).sustainable:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
