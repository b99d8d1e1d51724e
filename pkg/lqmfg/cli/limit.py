from __future__ import annotations

import argparse
import logging

from lqmfg.cli.common import emit, family_from_spec, load_spec, parse_int_list
from lqmfg.core.errors import EXIT_LIMIT_DIVERGES, EXIT_OK
from lqmfg.core.storage import write_csv
from lqmfg.services.converge import run_limit_study

logger = logging.getLogger(__name__)

DEFAULT_N_LIST = [2, 4, 8, 16, 32, 64, 128]


def register(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("limit", help="Large-population study of a scaled family against its mean-field limit.")
    p.add_argument("spec", help="mean_field or consensus spec (JSON)")
    p.add_argument("--N", default=None, help="Comma-separated increasing population sizes, e.g. 2,4,8")
    p.add_argument("--csv", default=None, help="Write the distance table as CSV")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_limit)


def cmd_limit(args: argparse.Namespace) -> int:
    spec, key = load_spec(args.spec)
    family, spec_N = family_from_spec(spec)
    N_list = parse_int_list(args.N) if args.N else (spec_N or DEFAULT_N_LIST)

    study = run_limit_study(family, N_list)
    if args.csv:
        write_csv(args.csv, study.csv_header(), study.csv_rows())
        logger.info("[limit] wrote %s", args.csv)

    emit(study.to_document(key), args.out)
    if not study.all_converged:
        logger.warning(
            "[limit] not converged: %s",
            ", ".join(c for c, ok in study.converged.items() if not ok),
        )
        return EXIT_LIMIT_DIVERGES
    return EXIT_OK
