from __future__ import annotations

import numpy as np
import pytest

from conftest import CAP, THR, make_link
from qkdswitch.analysis import (
    BracketError,
    assess,
    coordinator_factory,
    detect_steady_state,
    sustainable,
    sweep_supported_rate,
    uniform_state,
)
from qkdswitch.configspace import useful_configurations
from qkdswitch.coordinator import CoordinatorConfig, SwitchingCoordinator
from qkdswitch.model import NetworkStructure
from qkdswitch.optimize import build_matrices, k_supported, mmak_solve
from qkdswitch.simenv import Trace, periodic_start_fills, run

K_STAR = 38400 / 11
MMAK = CoordinatorConfig("mmak", "periodic")
FMCB = CoordinatorConfig("fmcb", "event_driven", grace_time=600.0)


def _trace(switches, end):
    tr = Trace(("A",), (1.0,), 0.0, end=end)
    tr.switches = switches
    return tr


def test_detects_earliest_recurrence():
    tr = _trace([(0, "X", (5.0,)), (10, "Y", (1.0,)), (20, "X", (7.0,)), (25, "Y", (4.0,)),
                 (40, "X", (7.4,)), (50, "Y", (4.0,))], 60)
    st = detect_steady_state(tr)
    assert (st.start, st.length) == (20, 20)
    assert st.mix == {"X": 0.25, "Y": 0.75}


def test_no_recurrence():
    assert detect_steady_state(_trace([(0, "X", (5.0,)), (10, "X", (9.0,))], 20)) is None


def test_static_run_is_zero_length_cycle():
    s = NetworkStructure((make_link("A", [("A.1", {"t", "r"}, 9600.0)], capacity=CAP),))
    s = s.with_configurations(useful_configurations(s))
    trace = run(s, uniform_state(s, 4000.0), SwitchingCoordinator(s, MMAK), 20_000.0)
    st = detect_steady_state(trace)
    assert st.length == 0.0 and st.mix == {"C1": 1.0}
    assert st.start == pytest.approx(0.5 * CAP / 5600.0)
    assert assess(trace).sustainable


def _mmak_periodic_run(structure, k, periods):
    from qkdswitch.optimize import compute_schedule

    state = uniform_state(structure, k)
    sched, info = compute_schedule("mmak", structure, state)
    fills = periodic_start_fills(sched, structure, list(structure.configurations), [k] * 7)
    trace = run(structure, uniform_state(structure, k, fills), SwitchingCoordinator(structure, MMAK),
                periods * sched.period)
    return sched, info, trace


def test_mmak_average_mix_matches_solution(hex_structure):
    sched, info, trace = _mmak_periodic_run(hex_structure, 3490.0, 3)
    st = detect_steady_state(trace)
    assert st is not None and st.length == pytest.approx(sched.period)
    m = info["matrix"]
    assert np.allclose(st.vector(m.config_ids), info["p"] / info["p"].sum(), atol=1e-6)


def test_fmcb_orbit_supports_about_its_consumption(hex_structure):
    """Started on its periodic orbit, FMCB at 2.35 kbps cycles through four equal-share configurations."""
    s = hex_structure
    step = (CAP - THR) / 3
    start = {"A1B3": THR, "A2B1": THR, "A1B2": THR + step, "A2B2": THR + 2 * step,
             "A3B3": THR + 2 * step, "A1B1": CAP, "A3B2": CAP}
    state = uniform_state(s, 2350.0, [start[l] for l in s.link_ids])
    trace = run(s, state, SwitchingCoordinator(s, FMCB), 100 * 3600.0)
    st = detect_steady_state(trace)
    assert st is not None and st.start == 0.0
    assert trace.depletion_time() == 0.0
    m = build_matrices(s)
    k = k_supported(m, st.vector(m.config_ids))
    assert k == pytest.approx(2350, abs=50)
    assert k == pytest.approx(2400, rel=1e-9)  # 9600 / 4 on A1B1 and A1B3
    assert sorted(st.mix.values()) == pytest.approx([0.25] * 4)


def test_mmak_sweep(hex_structure):
    k = sweep_supported_rate(hex_structure, coordinator_factory(hex_structure, MMAK),
                             0.25 * K_STAR, 1.01 * K_STAR, 10.0)
    assert k == pytest.approx(3490, abs=10)


def test_single_always_on_link_sweep():
    r = 9600.0
    s = NetworkStructure((make_link("A", [("A.1", {"t", "r"}, r)], capacity=CAP),))
    s = s.with_configurations(useful_configurations(s))
    k = sweep_supported_rate(s, coordinator_factory(s, MMAK), 0.5 * r, 1.5 * r, 1.0, horizon=20 * 3600.0)
    assert k == pytest.approx(r, abs=1.0)


def test_mmak_sustainability_is_monotone(hex_structure):
    factory = coordinator_factory(hex_structure, MMAK)
    verdicts = [sustainable(hex_structure, factory, k).sustainable
                for k in np.linspace(1000, 4500, 15)]
    # once unsustainable, never sustainable again
    assert verdicts == sorted(verdicts, reverse=True)
    assert verdicts[0] and not verdicts[-1]


def test_bad_brackets(hex_structure):
    factory = coordinator_factory(hex_structure, MMAK)
    with pytest.raises(BracketError):
        sweep_supported_rate(hex_structure, factory, 3000.0, 3400.0, 10.0)
    with pytest.raises(BracketError):
        sweep_supported_rate(hex_structure, factory, 3600.0, 4000.0, 10.0)
    with pytest.raises(ValueError):
        sweep_supported_rate(hex_structure, factory, 1.0, 2.0, 0.0)


def test_k_star_reference(hex_structure):
    assert mmak_solve(build_matrices(hex_structure))[1] == pytest.approx(K_STAR, rel=1e-12)
