from __future__ import annotations

import argparse
import logging

from lqmfg.cli.common import emit, game_from_spec, load_spec
from lqmfg.core.contracts import CheckDoc
from lqmfg.core.errors import EXIT_EXISTS_ONLY, EXIT_HYPOTHESIS, EXIT_NOT_EXISTS, EXIT_OK
from lqmfg.core.settings import settings
from lqmfg.services.games import validate_H
from lqmfg.services.synthesis import check_conditions

logger = logging.getLogger(__name__)


def register(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("check", help="Check standing hypotheses and existence/uniqueness conditions.")
    p.add_argument("spec", help="Game spec (JSON)")
    p.set_defaults(handler=cmd_check)


def cmd_check(args: argparse.Namespace) -> int:
    spec, key = load_spec(args.spec)
    game, relaxed = game_from_spec(spec)

    hyp = validate_H(game, relaxed=relaxed)
    if not hyp.ok:
        logger.warning("[check] hypotheses violated: %s", "; ".join(hyp.violations))
        emit(CheckDoc(
            spec_key=key,
            algo_version=settings.algo_version,
            kind=spec.kind,
            hypotheses=hyp.violations,
            exit_code=EXIT_HYPOTHESIS,
        ))
        return EXIT_HYPOTHESIS

    report = check_conditions(game, relaxed=relaxed)
    if report.verdict_exists and report.verdict_unique:
        code = EXIT_OK
    elif report.verdict_exists:
        code = EXIT_EXISTS_ONLY
    else:
        code = EXIT_NOT_EXISTS
    emit(CheckDoc(
        spec_key=key,
        algo_version=settings.algo_version,
        kind=spec.kind,
        conditions=report,
        exit_code=code,
    ))
    return code
