from __future__ import annotations

import argparse
import logging
from typing import List, Optional

import numpy as np

from lqmfg.cli.common import emit, parse_float_list
from lqmfg.core.contracts import ConsensusDemoDoc, ConsensusMemberDoc
from lqmfg.core.errors import EXIT_OK, parse_error
from lqmfg.core.keying import spec_key
from lqmfg.core.settings import settings
from lqmfg.services.games import build_consensus_game, consensus_kernel
from lqmfg.services.simulate import ClosedLoop, SimConfig, euler_maruyama, running_cost_for
from lqmfg.services.synthesis import family_member, hjb_kfp_residual, solve_nearly_identical

logger = logging.getLogger(__name__)


def register(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser(
        "consensus-demo",
        help="Solve a consensus game with diagonal drift and walk its family of equilibria.",
    )
    p.add_argument("--N", type=int, default=3)
    p.add_argument("--A-diag", default="0,1", help="Diagonal of the shared drift A, e.g. 0,1")
    p.add_argument("--p", type=float, default=1.0, help="P = p I")
    p.add_argument("--r", type=float, default=1.0, help="R = r I")
    p.add_argument("--s", type=float, default=1.0, help="sigma = s I")
    p.add_argument("--members", type=int, default=3, help="Family members to emit")
    p.add_argument("--simulate", action="store_true", help="Simulate every member")
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_consensus_demo)


def sample_coefficients(dim: int, j: int) -> np.ndarray:
    """Member 0 is the minimum-norm mean; member j walks basis vector ((j-1) mod dim)+1 by ceil(j/dim)."""
    t = np.zeros(dim)
    if j > 0 and dim > 0:
        t[(j - 1) % dim] = float((j + dim - 1) // dim)
    return t


def cmd_consensus_demo(args: argparse.Namespace) -> int:
    diag = parse_float_list(args.A_diag)
    if not diag:
        parse_error("bad_list", "--A-diag needs at least one entry")
    if args.N < 2 or args.members < 1:
        parse_error("bad_args", "need N >= 2 and members >= 1")
    d = len(diag)
    A = np.diag(diag)
    P, R, S = args.p * np.eye(d), args.r * np.eye(d), args.s * np.eye(d)

    params = {
        "kind": "consensus-demo", "N": args.N, "A_diag": diag, "p": args.p, "r": args.r, "s": args.s,
    }
    key = spec_key(params, settings.algo_version)

    game = build_consensus_game(args.N, P, A, S, R)
    base = solve_nearly_identical(game)
    kernel_dim = int(consensus_kernel([A]).shape[1])
    fam_dim = 0 if base.family is None else base.family.dim
    logger.info("[consensus] N=%d d=%d kernel=%d family=%d", args.N, d, kernel_dim, fam_dim)

    config: Optional[SimConfig] = None
    if args.simulate:
        config = SimConfig.from_settings(T=args.T, dt=args.dt, replicas=args.replicas, seed=args.seed)

    count = args.members if fam_dim > 0 else 1
    members: List[ConsensusMemberDoc] = []
    for j in range(count):
        t = sample_coefficients(fam_dim, j)
        sol = family_member(base, game, t, selected_member=j) if fam_dim > 0 else base
        res = hjb_kfp_residual(sol, game)
        doc = ConsensusMemberDoc(
            member=j,
            coefficients=t.tolist(),
            mu=[p.measure.mu.tolist() for p in sol.players],
            lam=[p.lam for p in sol.players],
            hjb_max=res.hjb_max,
            kfp_max=res.kfp_max,
        )
        if config is not None:
            x0 = np.stack([p.measure.mu for p in sol.players])
            est = euler_maruyama(ClosedLoop.from_solution(game, sol), running_cost_for(game, sol), x0, config).estimate
            doc.sim_mean = est.mean_hat.tolist()
            doc.sim_mean_se = est.mean_se.tolist()
            doc.sim_mean_ok = all(
                est.mean_within(i, p.measure.mu, settings.sim_se_factor) for i, p in enumerate(sol.players)
            )
        members.append(doc)

    emit(ConsensusDemoDoc(
        spec_key=key,
        algo_version=settings.algo_version,
        N=args.N,
        d=d,
        kernel_dim=kernel_dim,
        family_dim=fam_dim,
        conditions=base.conditions,
        members=members,
    ), args.out)
    return EXIT_OK
