from __future__ import annotations

import argparse
import logging
from typing import Dict, List, Tuple

import numpy as np

from lqmfg.cli.common import emit, game_from_spec, load_solution, load_spec
from lqmfg.core.contracts import DeviationDoc, EstimateDoc, PlayerEstimateDoc, SimConfigDoc
from lqmfg.core.errors import EXIT_OK, dimension_mismatch, parse_error
from lqmfg.core.settings import settings
from lqmfg.core.storage import write_csv
from lqmfg.services.games import MeanFieldGame
from lqmfg.services.simulate import (
    ClosedLoop,
    Deviation,
    SimConfig,
    euler_maruyama,
    nash_deviation_test,
    running_cost_for,
)

logger = logging.getLogger(__name__)


def register(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("simulate", help="Monte Carlo check of a solution's invariant measure and costs.")
    p.add_argument("spec", help="Game spec (JSON)")
    p.add_argument("solution", help="Solution JSON written by `solve`")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--burn-in", type=float, default=None, help="Fraction of the horizon discarded")
    p.add_argument(
        "--deviate", action="append", default=[], metavar="PLAYER:ENTRY:DELTA",
        help="Unilateral deviation: player (1-based), entry of K row-major (then c), additive delta",
    )
    p.add_argument("--trace-csv", default=None, help="Write (t, player, state) samples of replica 0")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_simulate)


def parse_deviation(text: str, N: int, d: int) -> Tuple[int, Deviation]:
    parts = text.split(":")
    if len(parts) != 3:
        parse_error("bad_deviation", f"expected PLAYER:ENTRY:DELTA, got {text!r}")
    try:
        player, entry, delta = int(parts[0]), int(parts[1]), float(parts[2])
    except ValueError:
        parse_error("bad_deviation", f"expected PLAYER:ENTRY:DELTA, got {text!r}")
    if not 1 <= player <= N:
        parse_error("bad_deviation", f"player {player} outside 1..{N}")
    return player - 1, Deviation.entry_shift(d, entry, delta)


def cmd_simulate(args: argparse.Namespace) -> int:
    spec, key = load_spec(args.spec)
    game, _ = game_from_spec(spec)
    solution, doc = load_solution(args.solution)
    if doc.spec_key != key:
        logger.warning("[simulate] solution was produced from a different spec (%s != %s)", doc.spec_key, key)

    expected = 1 if isinstance(game, MeanFieldGame) else game.N
    if solution.N != expected:
        dimension_mismatch("player_count", f"game has {expected} players, solution {solution.N}")
    d = game.d
    if solution.players[0].measure.d != d:
        dimension_mismatch("shape_mismatch", f"game dimension {d}, solution dimension {solution.players[0].measure.d}")

    config = SimConfig.from_settings(
        dt=args.dt, T=args.T, replicas=args.replicas, seed=args.seed, burn_in=args.burn_in,
    )
    loop = ClosedLoop.from_solution(game, solution)
    cost = running_cost_for(game, solution)
    x0 = np.stack([p.measure.mu for p in solution.players])
    trace_every = settings.sim_trace_every if args.trace_csv else 0

    result = euler_maruyama(loop, cost, x0, config, trace_every=trace_every)
    est = result.estimate
    factor = settings.sim_se_factor

    players: List[PlayerEstimateDoc] = []
    for i, p in enumerate(solution.players):
        target_cov = p.measure.covariance
        players.append(PlayerEstimateDoc(
            player=i + 1,
            mean_hat=est.mean_hat[i].tolist(),
            mean_se=est.mean_se[i].tolist(),
            cov_hat=est.cov_hat[i].tolist(),
            cov_se=est.cov_se[i].tolist(),
            cost_hat=float(est.cost_hat[i]),
            cost_se=float(est.cost_se[i]),
            target_mean=p.measure.mu.tolist(),
            target_cov=target_cov.tolist(),
            target_cost=p.lam,
            mean_ok=est.mean_within(i, p.measure.mu, factor),
            cov_ok=est.cov_within(i, target_cov, factor),
            cost_ok=est.cost_within(i, p.lam, factor),
        ))

    by_player: Dict[int, List[Deviation]] = {}
    for text in args.deviate:
        i, dev = parse_deviation(text, solution.N, d)
        by_player.setdefault(i, []).append(dev)

    deviations: List[DeviationDoc] = []
    for i in sorted(by_player):
        for out in nash_deviation_test(game, solution, i, by_player[i], config, x0=x0):
            deviations.append(DeviationDoc(
                player=i + 1,
                entry=out.deviation.entry,
                delta=out.deviation.delta,
                skipped=out.skipped,
                reason=out.reason,
                cost_hat=out.cost_hat,
                cost_se=out.cost_se,
                exact_cost=out.exact_cost,
                lam=out.lam,
                passes=out.passes,
                strictly_above=out.strictly_above,
            ))

    if args.trace_csv:
        header = ["t", "player"] + [f"x{k + 1}" for k in range(d)]
        n = write_csv(args.trace_csv, header, ([t, player] + xs for t, player, xs in result.trace))
        logger.info("[simulate] wrote %d trace rows to %s", n, args.trace_csv)

    passed = (
        est.ergodic
        and all(p.mean_ok and p.cov_ok and p.cost_ok for p in players)
        and all(dv.passes for dv in deviations)
    )
    emit(EstimateDoc(
        spec_key=key,
        algo_version=settings.algo_version,
        config=SimConfigDoc(
            dt=config.dt, T=config.T, burn_in=config.burn_in,
            replicas=config.replicas, seed=config.seed, batches=config.batches,
        ),
        ergodic=est.ergodic,
        trend_ratio=est.trend_ratio,
        players=players,
        deviations=deviations,
        passed=passed,
    ), args.out)
    return EXIT_OK
