"""Command-line front end: ``qkdswitch <subcommand> <scenario> [options]``.

Exit codes: 0 success, 1 invalid scenario, 2 usage or runtime error. Set
``QKDSWITCH_LOG`` (DEBUG, INFO, WARNING, ...) to control log verbosity; the
coordinator logs one line per event at DEBUG.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Sequence

import numpy as np

from qkdswitch.analysis import (
    QUALIFICATION_HORIZON,
    coordinator_factory,
    detect_steady_state,
    sweep_supported_rate,
)
from qkdswitch.configspace import enumerate_configurations, useful_configurations
from qkdswitch.coordinator import CoordinatorConfig, SwitchingCoordinator
from qkdswitch.model import NetworkStructure, ValidationError, natural_key
from qkdswitch.optimize import build_matrices, compute_schedule, consumption_weights, k_supported, mmak_solve
from qkdswitch.scenario import Scenario, ScenarioError, load_scenario, serialize_configurations
from qkdswitch.simenv import Simulation
from qkdswitch.units import UnitError, format_duration, parse_duration, parse_rate

__all__ = ["main", "build_parser"]

LOG_ENV = "QKDSWITCH_LOG"

logger = logging.getLogger("qkdswitch")


def _setup_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _rate(text: str) -> float:
    try:
        return parse_rate(text)
    except UnitError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _duration(text: str) -> float:
    try:
        return parse_duration(text)
    except UnitError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkdswitch", description="Switched QKD network control-plane toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("validate", help="check a scenario and list violations")
    p.add_argument("scenario")

    p = sub.add_parser("enumerate", help="print the useful configurations")
    p.add_argument("scenario")
    p.add_argument("--all", action="store_true", help="print every maximal configuration, dominated ones included")

    p = sub.add_parser("optimize", help="run one strategy on the scenario state")
    p.add_argument("scenario")
    p.add_argument("--strategy", choices=("mmak", "fmcb"))

    p = sub.add_parser("simulate", help="simulate the scenario and print a summary")
    p.add_argument("scenario")
    p.add_argument("--strategy", choices=("mmak", "fmcb"))
    p.add_argument("--horizon", type=_duration, help="simulated time, e.g. 10h")
    p.add_argument("--trace", metavar="CSV", help="write the fill trace to this file")

    for name, text in (("sweep", "largest sustainable uniform consumption rate"),
                       ("compare", "sweep both strategies and report the ratio")):
        p = sub.add_parser(name, help=text)
        p.add_argument("scenario")
        if name == "sweep":
            p.add_argument("--strategy", choices=("mmak", "fmcb"))
        p.add_argument("--tol", type=_rate, default=10.0, help="bisection tolerance (default 10bps)")
        p.add_argument("--k-lo", type=_rate, help="sustainable lower bracket (default 25%% of the MMAK optimum)")
        p.add_argument("--k-hi", type=_rate, help="unsustainable upper bracket (default 101%% of the MMAK optimum)")
        p.add_argument("--horizon", type=_duration, default=QUALIFICATION_HORIZON,
                       help="qualification horizon per probe (default 100h)")
    return parser


# -- helpers ----------------------------------------------------------------------------


def _load(path: str) -> Scenario:
    scenario = load_scenario(path)
    scenario.settings.check()
    return scenario


def _with_configs(structure: NetworkStructure) -> NetworkStructure:
    return structure.with_configurations(useful_configurations(structure))


def _coordinator_config(scenario: Scenario, strategy: str | None) -> CoordinatorConfig:
    s = scenario.settings
    name = strategy or s.name
    mode = s.mode if (s.mode is not None and strategy in (None, s.name)) else None
    if mode is None:
        mode = "event_driven" if name == "fmcb" else "periodic"
    return CoordinatorConfig(strategy=name, mode=mode, recalc_period=s.recalc_period, grace_time=s.grace_time)


def _eta(scenario: Scenario) -> np.ndarray:
    return consumption_weights(scenario.state.consumption(scenario.structure))


def _mmak_optimum(structure: NetworkStructure, eta) -> float:
    return mmak_solve(build_matrices(structure, eta))[1]


def _sweep(scenario: Scenario, structure: NetworkStructure, strategy: str, args) -> float:
    eta = _eta(scenario)
    k_star = _mmak_optimum(structure, eta)
    k_lo = args.k_lo if args.k_lo is not None else 0.25 * k_star
    k_hi = args.k_hi if args.k_hi is not None else 1.01 * k_star
    factory = coordinator_factory(structure, _coordinator_config(scenario, strategy))
    return sweep_supported_rate(structure, factory, k_lo, k_hi, args.tol,
                                fills=scenario.state.fills(structure), eta=eta, horizon=args.horizon,
                                switch_downtime=scenario.settings.switch_downtime)


# -- subcommands --------------------------------------------------------------------


def cmd_validate(args, out) -> int:
    scenario = _load(args.scenario)
    s = scenario.structure
    n = len(useful_configurations(s))
    out.write(f"ok: {len(s.links)} links, {sum(len(l.physical_links) for l in s.links)} physical links, "
              f"{n} useful configurations\n")
    return 0


def cmd_enumerate(args, out) -> int:
    structure = _load(args.scenario).structure
    configs = enumerate_configurations(structure.links) if args.all else useful_configurations(structure)
    out.write("configurations:\n")
    out.write(serialize_configurations(configs, indent=2))
    return 0


def cmd_optimize(args, out) -> int:
    scenario = _load(args.scenario)
    structure = _with_configs(scenario.structure)
    strategy = args.strategy or scenario.settings.name
    schedule, info = compute_schedule(strategy, structure, scenario.state)
    if strategy == "mmak":
        m, p = info["matrix"], info["p"]
        out.write(f"k_supported: {info['k']:.3f} bits/s\n")
        out.write("mix:\n")
        for cid, share in sorted(zip(m.config_ids, p), key=lambda x: natural_key(x[0])):
            if share > 0:
                out.write(f"  {cid}: {share:.6f}\n")
    else:
        out.write(f"most critical link: {info['critical']}\n")
    out.write("schedule:\n")
    for cid, duration in schedule.entries:
        out.write(f"  {cid}: {duration:.3f} s\n")
    return 0


def cmd_simulate(args, out) -> int:
    scenario = _load(args.scenario)
    structure = _with_configs(scenario.structure)
    settings = scenario.settings
    horizon = args.horizon or settings.horizon
    coordinator = SwitchingCoordinator(structure, _coordinator_config(scenario, args.strategy))
    sim = Simulation(structure, scenario.state, coordinator, switch_downtime=settings.switch_downtime,
                     sample_interval=settings.sample_interval, record_rows=args.trace is not None)
    trace = sim.run(horizon)
    if args.trace:
        trace.to_csv(args.trace)
    out.write(f"strategy: {coordinator.config.strategy} ({coordinator.config.mode})\n")
    out.write(f"horizon: {format_duration(horizon)}\n")
    out.write(f"reconfigurations: {len(trace.switches)}\n")
    out.write("links:\n")
    for lid, row in trace.summary().items():
        out.write(f"  {lid}: depletion {row['depletion_s']:.3f} s, waste {row['waste_bits']:.0f} bits, "
                  f"shortfall {row['shortfall_bits']:.0f} bits\n")
    steady = detect_steady_state(trace)
    if steady is None:
        out.write("cycle: none detected\n")
        return 0
    out.write(f"cycle: start {steady.start:.3f} s, length {steady.length:.3f} s\n")
    out.write("average mix:\n")
    for cid in sorted(steady.mix, key=natural_key):
        out.write(f"  {cid}: {steady.mix[cid]:.6f}\n")
    m = build_matrices(structure, _eta(scenario))
    out.write(f"k_supported(average mix): {k_supported(m, steady.vector(m.config_ids)):.3f} bits/s\n")
    return 0


def cmd_sweep(args, out) -> int:
    scenario = _load(args.scenario)
    structure = _with_configs(scenario.structure)
    strategy = args.strategy or scenario.settings.name
    k = _sweep(scenario, structure, strategy, args)
    out.write(f"{strategy}: {k:.1f} bits/s\n")
    return 0


def cmd_compare(args, out) -> int:
    scenario = _load(args.scenario)
    structure = _with_configs(scenario.structure)
    rates = {name: _sweep(scenario, structure, name, args) for name in ("mmak", "fmcb")}
    for name, k in rates.items():
        out.write(f"{name}: {k:.1f} bits/s\n")
    out.write(f"ratio mmak/fmcb: {rates['mmak'] / rates['fmcb']:.3f}\n")
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "enumerate": cmd_enumerate,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
}


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = sys.stdout if out is None else out
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, out)
    except ValidationError as exc:
        sys.stderr.write("invalid scenario:\n")
        for v in exc.violations:
            sys.stderr.write(f"  {v}\n")
        return 1
    except (ScenarioError, UnitError) as exc:
        sys.stderr.write(f"invalid scenario: {exc}\n")
        return 1
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 2
        logger.debug("command failed", exc_info=True)
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
