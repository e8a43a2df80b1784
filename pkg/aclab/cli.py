"""Command-line entrypoint: ``aclab <command> [flags]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from aclab.nodes import cone, diagnose, solve, spectrum, sweep, table
from aclab.solvers.errors import ConfigError, LabError
from utils.config import RunConfig, parse_dims, parse_split

NODES: Dict[str, Callable[[RunConfig], Dict[str, Any]]] = {
    "cone": cone.run,
    "spectrum": spectrum.run,
    "table": table.run,
    "solve": solve.run,
    "sweep": sweep.run,
    "diagnose": diagnose.run,
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; explicit flags override it")
    p.add_argument("--output-dir", dest="output_dir", help="output directory (default <ACLAB_OUTPUT_ROOT>/<command>)")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float, help="shooting tolerance")


def _grid(p: argparse.ArgumentParser) -> None:
    p.add_argument("--geometry", help="planar | planar-box | dp:M,K")
    p.add_argument("--radius", type=float, help="domain extent R")
    p.add_argument("--h", type=float, help="grid spacing")
    p.add_argument("--max-sweeps", dest="max_sweeps", type=int)
    p.add_argument("--energy-tol", dest="energy_tol", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aclab", description="Alt-Caffarelli free boundary lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cone", help="shoot a homogeneous cone profile")
    p.add_argument("--dim", required=True, help="dimension d (3..32)")
    p.add_argument("--split", required=True, action="append", help="symmetry split M,K")
    _common(p)

    p = sub.add_parser("spectrum", help="principal Jacobi eigenvalue of the cones of one dimension")
    p.add_argument("--dim", required=True)
    p.add_argument("--split", action="append")
    p.add_argument("-n", type=int, dest="n", help="base number of theta intervals")
    _common(p)

    p = sub.add_parser("table", help="eigenvalue/exponent table with golden regression")
    p.add_argument("--dims", required=True, help="D1..D2 within 7..14")
    p.add_argument("-n", type=int, dest="n")
    p.add_argument("--golden", help="golden file to compare against")
    _common(p)

    p = sub.add_parser("solve", help="minimize the discrete energy for one trace")
    _grid(p)
    p.add_argument("--data", help="flat:c | cone | file:PATH")
    _common(p)

    p = sub.add_parser("sweep", help="solve a monotone family g_t = (g + t)_+")
    _grid(p)
    p.add_argument("--base", dest="data", help="flat:c | cone | file:PATH")
    p.add_argument("--t-grid", dest="t_grid", help="log:LO:HI:N or lin:LO:HI:N")
    p.add_argument("--refine", action="store_true", default=None, help="repeat at h/2 and compare the linear constant")
    _common(p)

    p = sub.add_parser("diagnose", help="difference-field diagnostics of an ordered pair")
    p.add_argument("--pair", nargs=2, required=True, metavar=("A", "B"), help="field sidecars, A below B")
    p.add_argument("--rho", type=float)
    _common(p)
    return parser


def _flags_to_dict(args: argparse.Namespace) -> Dict[str, Any]:
    data: Dict[str, Any] = {"command": args.command}
    raw = vars(args)
    if raw.get("dim") is not None:
        data["dims"] = list(parse_dims(raw["dim"]))
    if raw.get("dims") is not None:
        data["dims"] = list(parse_dims(raw["dims"]))
    if raw.get("split"):
        data["splits"] = [list(parse_split(s)) for s in raw["split"]]
    if raw.get("pair"):
        data["pair"] = list(raw["pair"])
    for key in ("n", "geometry", "data", "radius", "h", "t_grid", "rho", "tol", "energy_tol",
                "max_sweeps", "output_dir", "golden", "seed", "refine"):
        if raw.get(key) is not None:
            data[key] = raw[key]
    return data


def load_config(args: argparse.Namespace) -> RunConfig:
    merged: Dict[str, Any] = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"--config: cannot read {path}: {e}") from e
        base = RunConfig.from_json(text)
        if base.command != args.command:
            raise ConfigError(f"--config: file is for '{base.command}', not '{args.command}'")
        merged.update(base.to_dict())
    merged.update(_flags_to_dict(args))
    return RunConfig.from_dict(merged)


def parse_and_dispatch(argv: Optional[List[str]] = None) -> int:
    """0 on success, 1 on a computation failure, 2 on invalid configuration or usage."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        config = load_config(args)
        result = NODES[config.command](config)
    except (ConfigError, ValueError) as e:
        print(f"aclab {args.command}: error: {e}", file=sys.stderr)
        return 2
    except LabError as e:
        print(f"aclab {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    brief = {k: v for k, v in result.items() if k != "files"}
    print(f"[{config.command.upper()}] done out={config.out_dir}")
    print(json.dumps(brief, sort_keys=True, default=str)[:2000])
    return 0


def main() -> None:
    sys.exit(parse_and_dispatch())


__all__ = ["build_parser", "load_config", "parse_and_dispatch", "main"]
