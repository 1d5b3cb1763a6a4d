from __future__ import annotations

import sys
from pathlib import Path

import pytest

from qkdswitch.configspace import useful_configurations
from qkdswitch.model import LinkSpec, NetworkStructure, PhysicalLinkSpec
from qkdswitch.scenario import load_scenario

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"
HEXAGON = SCENARIOS / "hexagon.scenario"
A1_BOOST = SCENARIOS / "hexagon_a1_boost.scenario"

sys.path.insert(0, str(Path(__file__).resolve().parent))

CAP = 28_800_000.0  # 3.6 MB
THR = 1_440_000.0   # 5 %


@pytest.fixture(scope="session")
def hexagon():
    return load_scenario(HEXAGON)


@pytest.fixture(scope="session")
def hex_structure(hexagon):
    s = hexagon.structure
    return s.with_configurations(useful_configurations(s))


def by_members(structure: NetworkStructure, *pids: str) -> str:
    """config_id of the configuration whose physical links are exactly ``pids``."""
    want = frozenset(pids)
    for c in structure.configurations:
        if c.physical_link_ids == want:
            return c.config_id
    raise KeyError(sorted(want))


def make_link(lid: str, specs, capacity: float = 1e6, priority: int = 0, threshold=None) -> LinkSpec:
    """``specs``: iterable of (pid, resources, rate)."""
    phys = tuple(PhysicalLinkSpec(pid, frozenset(res), float(rate)) for pid, res, rate in specs)
    return LinkSpec(lid, float(capacity), phys, priority, threshold)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
