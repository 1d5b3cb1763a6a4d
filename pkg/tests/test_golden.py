"""Committed traces for two hexagon runs.

Regenerate after an intentional change to the dynamics with
``python3 tests/test_golden.py``.
"""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import HEXAGON  # noqa: E402
from qkdswitch.analysis import uniform_state  # noqa: E402
from qkdswitch.configspace import useful_configurations  # noqa: E402
from qkdswitch.coordinator import CoordinatorConfig, SwitchingCoordinator  # noqa: E402
from qkdswitch.scenario import load_scenario  # noqa: E402
from qkdswitch.simenv import run  # noqa: E402

GOLDEN = Path(__file__).resolve().parent / "golden"

CASES = {
    "hexagon_mmak_3490.csv": (CoordinatorConfig("mmak", "periodic"), 3490.0, 30_000.0),
    "hexagon_fmcb_2350.csv": (CoordinatorConfig("fmcb", "event_driven", grace_time=600.0), 2350.0, 60_000.0),
}


def _trace_csv(name: str) -> str:
    config, k, horizon = CASES[name]
    s = load_scenario(HEXAGON).structure
    s = s.with_configurations(useful_configurations(s))
    return run(s, uniform_state(s, k), SwitchingCoordinator(s, config), horizon).to_csv()


@pytest.mark.parametrize("name", sorted(CASES))
def test_trace_matches_golden(name):
    assert _trace_csv(name) == (GOLDEN / name).read_text(encoding="utf-8")


if __name__ == "__main__":
    GOLDEN.mkdir(exist_ok=True)
    for case in CASES:
        (GOLDEN / case).write_text(_trace_csv(case), encoding="utf-8")
        print("wrote", GOLDEN / case)
