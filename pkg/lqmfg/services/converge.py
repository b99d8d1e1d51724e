# lqmfg/services/converge.py
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from lqmfg.core.contracts import LimitDoc, LimitRowDoc
from lqmfg.core.errors import ConditionsFail, LimitConditionsFail, LqmfgError, SpecParseError
from lqmfg.core.settings import settings
from lqmfg.services.games import ScalingFamily
from lqmfg.services.synthesis import (
    EquilibriumSolution,
    GaussianMeasure,
    player_document,
    solve_mean_field,
    solve_nearly_identical,
)

logger = logging.getLogger(__name__)

COLUMNS = ("Sigma", "mu", "lambda", "Lambda", "density")


@dataclass(frozen=True)
class LimitRow:
    N: int
    ok: bool
    failure: Optional[str] = None
    exists: Optional[bool] = None
    unique: Optional[bool] = None
    distances: Dict[str, float] = field(default_factory=dict)

    def to_document(self) -> LimitRowDoc:
        dist = self.distances
        return LimitRowDoc(
            N=self.N,
            ok=self.ok,
            failure=self.failure,
            exists=self.exists,
            unique=self.unique,
            dist_Sigma=dist.get("Sigma"),
            dist_mu=dist.get("mu"),
            dist_lambda=dist.get("lambda"),
            dist_Lambda=dist.get("Lambda"),
            dist_density=dist.get("density"),
        )


@dataclass(frozen=True)
class LimitStudy:
    family: ScalingFamily
    N_list: List[int]
    limit: EquilibriumSolution
    rows: List[LimitRow]
    slopes: Dict[str, Optional[float]]
    converged: Dict[str, bool]

    @property
    def all_converged(self) -> bool:
        return all(self.converged.values())

    def column(self, name: str) -> List[Optional[float]]:
        return [r.distances.get(name) if r.ok else None for r in self.rows]

    def to_document(self, spec_key: str) -> LimitDoc:
        return LimitDoc(
            spec_key=spec_key,
            algo_version=settings.algo_version,
            N_list=list(self.N_list),
            limit=player_document(self.limit.players[0]),
            rows=[r.to_document() for r in self.rows],
            slopes=dict(self.slopes),
            converged=dict(self.converged),
            all_converged=self.all_converged,
        )

    def csv_header(self) -> List[str]:
        return ["N", "ok", "failure"] + [f"dist_{c}" for c in COLUMNS]

    def csv_rows(self) -> List[List[object]]:
        out: List[List[object]] = []
        for r in self.rows:
            out.append([r.N, int(r.ok), r.failure or ""] + [r.distances.get(c) for c in COLUMNS])
        out.append(["slope", "", ""] + [self.slopes.get(c) for c in COLUMNS])
        return out


# ──────────────────────────────────────────────────────────────
# Distances
# ──────────────────────────────────────────────────────────────

def density_points(limit: GaussianMeasure, others: Sequence[GaussianMeasure], n: int = 256) -> np.ndarray:
    """Halton points over the limit box plus every mean involved."""
    sd = settings.residual_box_sd
    half = sd * np.sqrt(float(np.linalg.norm(limit.covariance, 2)))
    u = qmc.Halton(d=limit.d, scramble=False).random(n + 1)[1:]
    box = limit.mu + half * (2.0 * u - 1.0)
    means = np.stack([limit.mu] + [m.mu for m in others])
    return np.vstack([box, means])


def distances(solution: EquilibriumSolution, limit: EquilibriumSolution) -> Dict[str, float]:
    lp = limit.players[0]
    players = solution.players
    X = density_points(lp.measure, [p.measure for p in players])
    m_lim = lp.measure.density(X)
    return {
        "Sigma": max(float(np.linalg.norm(p.measure.Sigma - lp.measure.Sigma, 2)) for p in players),
        "mu": max(float(np.linalg.norm(p.measure.mu - lp.measure.mu)) for p in players),
        "lambda": max(abs(p.lam - lp.lam) for p in players),
        "Lambda": max(float(np.linalg.norm(p.value.Lambda - lp.value.Lambda, 2)) for p in players),
        "density": max(float(np.max(np.abs(p.measure.density(X) - m_lim))) for p in players),
    }


def fit_slope(N_list: Sequence[int], column: Sequence[Optional[float]]) -> Optional[float]:
    """Least-squares slope of log(distance) against log(N) over positive entries."""
    pts = [(np.log(n), np.log(v)) for n, v in zip(N_list, column) if v is not None and v > 0]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def column_converged(column: Sequence[Optional[float]]) -> bool:
    """Last entry below the absolute tolerance, or a contracting monotone tail of three."""
    vals = [v for v in column if v is not None]
    if not vals:
        return False
    if vals[-1] < settings.limit_abs_tol:
        return True
    if len(vals) < 3:
        return False
    a, b, c = vals[-3:]
    return a >= b >= c and c <= settings.limit_tail_contraction * a


# ──────────────────────────────────────────────────────────────
# Study
# ──────────────────────────────────────────────────────────────

def _row(family: ScalingFamily, N: int, limit: EquilibriumSolution) -> LimitRow:
    try:
        sol = solve_nearly_identical(family.game(N))
    except ConditionsFail as e:
        logger.warning("[converge] N=%d: %s", N, e.message)
        return LimitRow(N=N, ok=False, failure=e.message, exists=False)
    except LqmfgError as e:
        logger.warning("[converge] N=%d: %s (%s)", N, e.message, e.code)
        return LimitRow(N=N, ok=False, failure=f"{e.code}: {e.message}")
    return LimitRow(
        N=N,
        ok=True,
        exists=sol.conditions.verdict_exists,
        unique=sol.conditions.verdict_unique,
        distances=distances(sol, limit),
    )


def run_limit_study(family: ScalingFamily, N_list: Sequence[int]) -> LimitStudy:
    """
    Solve the scaled N-player games along N_list and measure distances of
    (Sigma_N, mu_N, lambda_N, Lambda_N, m_N) to the mean-field solution.
    Per-N failures are recorded as rows; the limit must be solvable and unique.
    """
    N_list = [int(n) for n in N_list]
    if not N_list or any(n < 2 for n in N_list) or any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise SpecParseError("N_list", f"N list must be strictly increasing integers >= 2, got {N_list}")

    try:
        limit = solve_mean_field(family.target)
    except LqmfgError as e:
        raise LimitConditionsFail("limit_conditions", f"limit game: {e.message}") from e
    if not limit.conditions.verdict_unique:
        raise LimitConditionsFail("limit_conditions", "limit system is singular: mean-field equilibrium not unique")

    workers = max(1, min(settings.worker_count(), len(N_list)))
    if workers == 1:
        rows = [_row(family, N, limit) for N in N_list]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda N: _row(family, N, limit), N_list))

    slopes: Dict[str, Optional[float]] = {}
    converged: Dict[str, bool] = {}
    for c in COLUMNS:
        col = [r.distances.get(c) if r.ok else None for r in rows]
        slopes[c] = fit_slope(N_list, col)
        converged[c] = column_converged(col)

    failed = sum(1 for r in rows if not r.ok)
    logger.info(
        "[converge] N=%s failed=%d converged=%s",
        N_list, failed, ",".join(c for c in COLUMNS if converged[c]) or "none",
    )
    return LimitStudy(
        family=family,
        N_list=N_list,
        limit=limit,
        rows=rows,
        slopes=slopes,
        converged=converged,
    )
