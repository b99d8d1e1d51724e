from __future__ import annotations

import argparse
from typing import List, Optional

from .check import register as register_check
from .solve import register as register_solve
from .simulate import register as register_simulate
from .limit import register as register_limit
from .consensus import register as register_consensus
from .common import run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lqmfg",
        description="Linear-quadratic N-player and mean-field ergodic games: conditions, synthesis, simulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    register_check(sub)
    register_solve(sub)
    register_simulate(sub)
    register_limit(sub)
    register_consensus(sub)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.handler, args)
