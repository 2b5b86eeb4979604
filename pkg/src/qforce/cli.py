"""Command-line entry point: ``qforce <scenario> [--config path] [--out dir] [--seed n] [flags]``.

Exit codes: 0 all checks passed, 2 configuration error (nothing written),
3 a scenario check failed, 4 a non-finite number was produced.
"""
from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .config import SCENARIOS, load_config, schema_doc
from .errors import ConfigError, ParameterError
from .scenarios import EXIT_CONFIG, run_scenario

# flag -> dotted config key; "steps" is routed by scenario below
FLAG_KEYS = {
    "beta": "kernel.beta",
    "order": "kernel.order",
    "density": "kernel.density",
    "scale": "kernel.scale",
    "points": "grid.points",
    "extent": "grid.extent",
    "case": "stationary.case",
    "particles": "trajectories.particles",
    "epsilon": "spin.epsilon",
    "epsilon_prime": "spin.epsilon_prime",
    "tau": "pair.tau",
    "horizon": "pair.horizon",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qforce",
        description="Quantum-force scenarios: stationary checks, guided trajectories, kernel and "
                    "relativistic consistency checks, spin kernels, Noether currents and pair creation.",
        epilog="Config schema:\n" + schema_doc(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--config", help="INI-style config file")
    p.add_argument("--out", help="output directory (default: [run] output)")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any config key (repeatable)")
    p.add_argument("--scenario", dest="case",
                   help="stationary-check case: hydrogen, oscillator-ground, oscillator-second, oscillator-gap")
    p.add_argument("--beta", type=float, help="kernel width parameter")
    p.add_argument("--order", type=int, help="series truncation order")
    p.add_argument("--density", help="kernel-compare density: gaussian, bimodal, sech2")
    p.add_argument("--scale", type=float, help="density length scale L")
    p.add_argument("--points", type=int, help="grid points (0: scenario default)")
    p.add_argument("--extent", type=float, help="grid extent (0: scenario default)")
    p.add_argument("--steps", type=int, help="time steps (evolve, trajectories)")
    p.add_argument("--particles", type=int, help="ensemble size")
    p.add_argument("--epsilon", type=float, help="spinor kernel epsilon (0: 1/(2 beta))")
    p.add_argument("--epsilon-prime", dest="epsilon_prime", type=float,
                   help="fermion kernel epsilon' in units of 1/beta")
    p.add_argument("--tau", type=float, help="pair-creation switch time")
    p.add_argument("--horizon", type=float, help="pair-creation horizon T")
    return p


def collect_overrides(args: argparse.Namespace) -> dict:
    overrides = {"run.scenario": args.scenario}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = value
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.out is not None:
        overrides["run.output"] = args.out
    if args.steps is not None:
        section = "trajectories" if args.scenario == "trajectories" else "evolve"
        overrides[f"{section}.steps"] = args.steps
    return overrides


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, collect_overrides(args))
    except (ConfigError, ParameterError) as exc:
        print(f"qforce: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run_scenario(cfg)
    except ParameterError as exc:
        print(f"qforce: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
