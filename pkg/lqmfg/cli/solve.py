from __future__ import annotations

import argparse
import logging

from lqmfg.cli.common import emit, game_from_spec, load_spec
from lqmfg.core.errors import EXIT_OK
from lqmfg.services.synthesis import family_member, hjb_kfp_residual, solution_document, solve

logger = logging.getLogger(__name__)


def register(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("solve", help="Synthesize the quadratic-Gaussian equilibrium.")
    p.add_argument("spec", help="Game spec (JSON)")
    p.add_argument("--out", default=None, help="Write the solution JSON here as well as stdout")
    group = p.add_mutually_exclusive_group()
    group.add_argument(
        "--family-member", type=int, default=None,
        help="Select a member of a solution family: 0 = minimum norm, k >= 1 steps along basis vector k",
    )
    group.add_argument("--min-norm", action="store_true", help="Select the minimum-norm member")
    p.add_argument("--family-step", type=float, default=1.0, help="Step along the selected basis vector")
    p.set_defaults(handler=cmd_solve)


def cmd_solve(args: argparse.Namespace) -> int:
    spec, key = load_spec(args.spec)
    game, relaxed = game_from_spec(spec)
    solution = solve(game, relaxed=relaxed)

    member = 0 if args.min_norm else args.family_member
    if member is not None:
        if solution.family is None:
            solution = family_member(solution, game, [], selected_member=member)
        else:
            t = solution.family.member_coefficients(member, args.family_step)
            solution = family_member(solution, game, t, selected_member=member)
            logger.info("[solve] selected family member %d (step %.3g)", member, args.family_step)

    residuals = hjb_kfp_residual(solution, game)
    logger.info("[solve] residuals hjb=%.2e kfp=%.2e", residuals.hjb_max, residuals.kfp_max)
    emit(solution_document(solution, key, residuals, include_family=member is None), args.out)
    return EXIT_OK
