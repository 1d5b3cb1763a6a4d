"""Rate matrices, the supported-consumption-rate metric and the two strategies.

Notation follows the usual max-min setup: ``G`` is the L x C matrix of per-link
generation rates (one column per configuration), ``eta`` the per-link
consumption weights (consumption ``c = k * eta``) and ``gamma = G / eta`` row
wise. A mix ``p`` holds the relative duration of each configuration.

* FMCB (fill most critical buffer) reacts to a critical buffer by switching to
  the configuration with the highest rate for it, for an unbounded duration.
* MMAK (maximise minimal average key) solves
  ``max k  s.t.  gamma @ p >= k, sum(p) <= 1, p >= 0`` and cycles through the
  support of the optimal ``p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from qkdswitch.configspace import rate_vector
from qkdswitch.lp import simplex_max
from qkdswitch.model import Configuration, NetworkState, NetworkStructure, natural_key

__all__ = [
    "INFINITE",
    "RateMatrix",
    "Schedule",
    "OrphanedLinkError",
    "build_matrices",
    "consumption_weights",
    "key_gain",
    "k_supported",
    "criticality_order",
    "fmcb_most_critical",
    "fmcb_select",
    "mmak_solve",
    "period_amplitudes",
    "schedule_from_mix",
    "compute_schedule",
]

INFINITE = math.inf
P_CLAMP = 1e-12


class OrphanedLinkError(ValueError):
    """No configuration generates key for a link that needs it."""


@dataclass(frozen=True)
class RateMatrix:
    G: np.ndarray
    gamma: np.ndarray
    eta: np.ndarray
    link_ids: tuple[str, ...]
    config_ids: tuple[str, ...]

    @property
    def shape(self) -> tuple[int, int]:
        return self.G.shape

    def column(self, config_id: str) -> int:
        return self.config_ids.index(config_id)

    def restrict(self, config_ids: Sequence[str]) -> "RateMatrix":
        cols = [self.column(c) for c in config_ids]
        return RateMatrix(self.G[:, cols], self.gamma[:, cols], self.eta,
                          self.link_ids, tuple(config_ids))


@dataclass(frozen=True)
class Schedule:
    """Cyclic list of ``(config_id, duration_s)``; a lone entry may last forever."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        entries = tuple((str(c), float(d)) for c, d in self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise ValueError("a schedule needs at least one entry")
        for _, d in entries:
            if not d > 0:
                raise ValueError("schedule durations must be > 0")
        if any(math.isinf(d) for _, d in entries) and len(entries) != 1:
            raise ValueError("an infinite entry must be the only entry")

    @classmethod
    def forever(cls, config_id: str) -> "Schedule":
        return cls(((config_id, INFINITE),))

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.entries[0][1])

    @property
    def period(self) -> float:
        return sum(d for _, d in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def consumption_weights(consumption: Sequence[float]) -> np.ndarray:
    """Split ``c = k * eta`` with ``max(eta) == 1``; uniform consumption gives ``eta = 1``."""
    c = np.asarray(consumption, dtype=float)
    if c.size == 0 or np.any(c <= 0):
        raise ValueError("consumption rates must be strictly positive")
    return c / c.max()


def build_matrices(structure: NetworkStructure, eta=None,
                   configurations: Sequence[Configuration] | None = None) -> RateMatrix:
    configs = list(structure.configurations if configurations is None else configurations)
    L = len(structure.links)
    eta = np.ones(L) if eta is None else np.asarray(eta, dtype=float)
    if eta.shape != (L,):
        raise ValueError(f"eta has shape {eta.shape}, expected ({L},)")
    if np.any(eta <= 0):
        raise ValueError("eta must be strictly positive")
    G = np.zeros((L, len(configs)))
    for j, c in enumerate(configs):
        G[:, j] = rate_vector(c, structure)
    gamma = G / eta[:, None]
    return RateMatrix(G, gamma, eta, structure.link_ids, tuple(c.config_id for c in configs))


def key_gain(m: RateMatrix, p, k: float) -> np.ndarray:
    """Relative average key gain ``gamma @ p - k`` per link."""
    return m.gamma @ np.asarray(p, dtype=float) - k


def k_supported(m: RateMatrix, p) -> float:
    """Largest uniform (weighted) consumption rate the mix ``p`` can sustain."""
    if m.gamma.shape[0] == 0:
        return 0.0
    return float(np.min(m.gamma @ np.asarray(p, dtype=float)))


def criticality_order(fills: Sequence[float], eta, priorities: Sequence[int]) -> list[int]:
    """Link indices from most to least critical: ascending fill/eta, then descending priority."""
    eta = np.asarray(eta, dtype=float)
    ratios = [float(b) / float(e) for b, e in zip(fills, eta)]
    return sorted(range(len(ratios)), key=lambda l: (ratios[l], -priorities[l]))


def fmcb_most_critical(fills: Sequence[float], eta, priorities: Sequence[int]) -> int:
    return criticality_order(fills, eta, priorities)[0]


def fmcb_select(m: RateMatrix, l_mc: int, order: Sequence[int] | None = None) -> Schedule:
    """Configuration with the highest rate for link ``l_mc``, held indefinitely.

    Ties are narrowed link by link along ``order`` (most critical first, after
    ``l_mc``); whatever is still tied at the end goes to the smallest config_id.
    """
    row = m.gamma[l_mc]
    if row.size == 0 or not row.max() > 0:
        raise OrphanedLinkError(f"no configuration serves link {m.link_ids[l_mc]}")
    candidates = [c for c in range(row.size) if row[c] == row.max()]
    for l in (order or ()):
        if len(candidates) == 1:
            break
        if l == l_mc:
            continue
        best = max(m.gamma[l, c] for c in candidates)
        candidates = [c for c in candidates if m.gamma[l, c] == best]
    winner = min(candidates, key=lambda c: natural_key(m.config_ids[c]))
    return Schedule.forever(m.config_ids[winner])


def mmak_solve(m: RateMatrix, max_pivots: int | None = None) -> tuple[np.ndarray, float]:
    """Solve the max-min LP and return ``(p, k)``.

    The problem is scaled by ``max(gamma)`` before pivoting so that the relative
    tolerance of the simplex applies.
    """
    L, C = m.gamma.shape
    if L == 0 or C == 0:
        raise ValueError("mmak_solve needs at least one link and one configuration")
    scale = float(m.gamma.max())
    if scale <= 0:
        return np.zeros(C), 0.0
    gamma = m.gamma / scale
    # variables [p_1..p_C, k]; rows: sum(p) <= 1, then k - gamma_l p <= 0
    A = np.zeros((1 + L, C + 1))
    A[0, :C] = 1.0
    A[1:, :C] = -gamma
    A[1:, C] = 1.0
    b = np.zeros(1 + L)
    b[0] = 1.0
    c = np.zeros(C + 1)
    c[C] = 1.0
    if max_pivots is None:
        max_pivots = 50 * (L + C)
    res = simplex_max(c, A, b, max_pivots=max_pivots)
    p = res.x[:C].copy()
    p[p < P_CLAMP] = 0.0
    return p, res.objective * scale


def _cumulative(durations: Sequence[float], rates: Sequence[float], cycles: int = 2) -> list[float]:
    out = [0.0]
    for _ in range(cycles):
        for d, r in zip(durations, rates):
            out.append(out[-1] + d * r)
    return out


def period_amplitudes(p, m: RateMatrix, k: float | None = None) -> tuple[list[str], np.ndarray]:
    """Largest within-cycle drawdown per link for a cycle of length ``sum(p)`` seconds.

    Configurations run in ascending config_id order with consumption
    ``k * eta`` (``k`` defaults to ``k_supported(p)``). Because the net gain per
    cycle is non-negative, the steady-state trajectory (clipped at capacity)
    spans exactly the largest drop over any window, which two unrolled cycles
    contain.
    """
    p = np.asarray(p, dtype=float)
    if k is None:
        k = k_supported(m, p)
    support = sorted((c for c in range(p.size) if p[c] > 0), key=lambda c: natural_key(m.config_ids[c]))
    durations = [p[c] for c in support]
    consumption = k * m.eta
    amps = np.zeros(len(m.link_ids))
    for l in range(len(m.link_ids)):
        rates = [m.G[l, c] - consumption[l] for c in support]
        F = _cumulative(durations, rates)
        peak = -math.inf
        worst = 0.0
        for f in F:
            peak = max(peak, f)
            worst = max(worst, peak - f)
        amps[l] = worst
    return [m.config_ids[c] for c in support], amps


def schedule_from_mix(p, m: RateMatrix, capacities: Sequence[float]) -> Schedule:
    """Turn a mix into a configuration-duration cycle with the largest safe period.

    The period ``T`` is the largest for which every link's steady-state
    excursion fits its buffer: ``T = min(capacity / amplitude)`` over links
    with a non-zero amplitude. Without any excursion the most used
    configuration is held forever.
    """
    p = np.asarray(p, dtype=float)
    if not p.sum() > 0:
        raise ValueError("mix must have positive total duration")
    order, amps = period_amplitudes(p, m)
    tol = 1e-9 * max(1.0, float(m.G.max()))
    moving = [l for l in range(amps.size) if amps[l] > tol]
    if not moving:
        top = max(p)
        best = min((c for c in range(p.size) if p[c] == top), key=lambda c: natural_key(m.config_ids[c]))
        return Schedule.forever(m.config_ids[best])
    T = min(capacities[l] / amps[l] for l in moving)
    return Schedule(tuple((cid, p[m.column(cid)] * T) for cid in order))


def compute_schedule(strategy: str, structure: NetworkStructure, state: NetworkState,
                     configurations: Sequence[Configuration] | None = None) -> tuple[Schedule, dict]:
    """Run one strategy on the current state; returns the schedule and diagnostics."""
    eta = consumption_weights(state.consumption(structure))
    m = build_matrices(structure, eta, configurations)
    if strategy == "mmak":
        p, k = mmak_solve(m)
        if not k > 0:
            raise OrphanedLinkError("no mix supports a positive consumption rate")
        sched = schedule_from_mix(p, m, structure.capacities)
        return sched, {"p": p, "k": k, "matrix": m}
    if strategy == "fmcb":
        order = criticality_order(state.fills(structure), eta, structure.priorities)
        sched = fmcb_select(m, order[0], order)
        return sched, {"critical": structure.link_ids[order[0]], "matrix": m}
    raise ValueError(f"unknown strategy {strategy!r}")
