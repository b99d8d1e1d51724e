from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, Callable, Dict, List, Optional, Tuple

import orjson
from pydantic import TypeAdapter, ValidationError

from lqmfg.core.contracts import (
    ConsensusSpec,
    GameSpecFile,
    MeanFieldSpec,
    NearlyIdenticalSpec,
    NPersonSpec,
    SolutionDoc,
)
from lqmfg.core.errors import LqmfgError, dimension_mismatch, parse_error
from lqmfg.core.keying import spec_key
from lqmfg.core.settings import settings
from lqmfg.core.storage import read_json, write_json
from lqmfg.services.games import (
    AnyGame,
    MeanFieldGame,
    NearlyIdenticalGame,
    NPersonGame,
    ScalingFamily,
    ScalingRule,
    build_consensus_game,
    build_consensus_mean_field,
    consensus_family,
    scaled_family,
)
from lqmfg.services.synthesis import EquilibriumSolution, solution_from_document

logger = logging.getLogger(__name__)

Handler = Callable[[argparse.Namespace], int]

_SPEC_ADAPTER: TypeAdapter = TypeAdapter(GameSpecFile)


# ──────────────────────────────────────────────────────────────
# Spec ingestion
# ──────────────────────────────────────────────────────────────

def _first_error(e: ValidationError) -> str:
    err = e.errors()[0]
    loc = ".".join(str(p) for p in err.get("loc", ()))
    return f"{loc}: {err.get('msg', 'invalid')}" if loc else str(err.get("msg", "invalid"))


def load_spec(path: str) -> Tuple[Any, str]:
    """Parse and schema-check a game spec; returns (model, spec_key)."""
    try:
        raw = read_json(path)
    except FileNotFoundError:
        parse_error("spec_not_found", f"{path}: no such file")
    except orjson.JSONDecodeError as e:
        parse_error("bad_json", f"{path}: {e}")
    try:
        spec = _SPEC_ADAPTER.validate_python(raw)
    except ValidationError as e:
        parse_error("bad_spec", f"{path}: {_first_error(e)}")
    return spec, spec_key(spec.model_dump(mode="json"), settings.algo_version)


def _check_sizes(spec: Any) -> None:
    if isinstance(spec, NPersonSpec):
        if len(spec.players) != spec.N:
            dimension_mismatch("player_count", f"N={spec.N} but {len(spec.players)} players given")
        for i, p in enumerate(spec.players):
            if len(p.A) != spec.d:
                dimension_mismatch("shape_mismatch", f"players[{i}].A: expected {spec.d} rows, got {len(p.A)}")
    elif isinstance(spec, (NearlyIdenticalSpec, MeanFieldSpec, ConsensusSpec)):
        if len(spec.A) != spec.d:
            dimension_mismatch("shape_mismatch", f"A: expected {spec.d} rows, got {len(spec.A)}")


def game_from_spec(spec: Any) -> Tuple[AnyGame, bool]:
    """Build the game a spec describes; returns (game, relaxed)."""
    _check_sizes(spec)
    try:
        if isinstance(spec, NPersonSpec):
            game: AnyGame = NPersonGame.from_blocks(
                A=[p.A for p in spec.players],
                sigma=[p.sigma for p in spec.players],
                R=[p.R for p in spec.players],
                Q_blocks=[p.Q_blocks for p in spec.players],
                Xbar=[p.Xbar for p in spec.players],
            )
            return game, spec.relaxed
        if isinstance(spec, NearlyIdenticalSpec):
            game = NearlyIdenticalGame.build(
                N=spec.N, A=spec.A, sigma=spec.sigma, R=spec.R, Q=spec.Q, B=spec.B,
                H=spec.H, Delta=spec.Delta, C=spec.C, D=spec.D,
            )
            return game, spec.relaxed
        if isinstance(spec, MeanFieldSpec):
            game = MeanFieldGame.build(
                A=spec.A, sigma=spec.sigma, R=spec.R, Qhat=spec.Qhat, Bhat=spec.Bhat,
                Chat=spec.Chat, Dhat=spec.Dhat, H=spec.H, Delta=spec.Delta,
            )
            return game, spec.relaxed
        if spec.mean_field:
            return build_consensus_mean_field(spec.P_N, spec.A, spec.sigma, spec.R), False
        return build_consensus_game(spec.N, spec.P_N, spec.A, spec.sigma, spec.R), False
    except ValueError as e:
        # ragged nested arrays
        dimension_mismatch("ragged_array", str(e))


def family_from_spec(spec: Any) -> Tuple[ScalingFamily, Optional[List[int]]]:
    _check_sizes(spec)
    if isinstance(spec, MeanFieldSpec):
        game, _ = game_from_spec(spec)
        rule = ScalingRule(
            perturb=frozenset(spec.scaling.perturb),
            frozen=frozenset(spec.scaling.frozen),
            heterogeneity=spec.scaling.heterogeneity,
        )
        return scaled_family(game, rule), spec.N_list
    if isinstance(spec, ConsensusSpec):
        return consensus_family(spec.P_N, spec.A, spec.sigma, spec.R, spec.schedule), spec.N_list
    parse_error("not_a_family", f"limit studies need a mean_field or consensus spec, got {spec.kind!r}")


def load_solution(path: str) -> Tuple[EquilibriumSolution, SolutionDoc]:
    try:
        doc = SolutionDoc.model_validate(read_json(path))
    except FileNotFoundError:
        parse_error("solution_not_found", f"{path}: no such file")
    except orjson.JSONDecodeError as e:
        parse_error("bad_json", f"{path}: {e}")
    except ValidationError as e:
        parse_error("bad_solution", f"{path}: {_first_error(e)}")
    return solution_from_document(doc), doc


def parse_int_list(text: str) -> List[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        parse_error("bad_list", f"expected comma-separated integers, got {text!r}")


def parse_float_list(text: str) -> List[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        parse_error("bad_list", f"expected comma-separated numbers, got {text!r}")


# ──────────────────────────────────────────────────────────────
# Output + exit codes
# ──────────────────────────────────────────────────────────────

def emit(doc: Any, out: Optional[str] = None) -> None:
    """Write the document to `out` (if given) and always to stdout."""
    blob = write_json(doc, out)
    sys.stdout.buffer.write(blob)
    sys.stdout.flush()


def run(handler: Handler, args: argparse.Namespace) -> int:
    try:
        return handler(args)
    except LqmfgError as e:
        logger.error("[cli] %s: %s", e.code, e.message)
        detail: Dict[str, Any] = e.detail()
        sys.stderr.buffer.write(orjson.dumps(detail) + b"\n")
        sys.stderr.flush()
        return e.exit_code
