# lqmfg/services/simulate.py
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from lqmfg.core.errors import NumericalBlowup, SpecParseError, Unstable
from lqmfg.core.matlin import as_matrix, as_vector, is_stable, require_stable, solve_lyapunov, symmetrize
from lqmfg.core.settings import settings
from lqmfg.services.games import (
    AnyGame,
    MeanFieldGame,
    MeasureMoments,
    NearlyIdenticalGame,
    NPersonGame,
    eval_Vhat,
    expand_nearly_identical,
    expect_Vhat,
)
from lqmfg.services.synthesis import EquilibriumSolution, GaussianMeasure

logger = logging.getLogger(__name__)


# ──────────────────────────────────────────────────────────────
# Configuration
# ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SimConfig:
    dt: float
    T: float
    burn_in: float
    replicas: int
    seed: int
    batches: int = 16
    blowup_bound: float = 1e8
    chunk_steps: int = 4096
    threads: int = 1

    def __post_init__(self) -> None:
        if not (self.dt > 0 and self.dt < self.T):
            raise SpecParseError("sim_config", f"need 0 < dt < T, got dt={self.dt}, T={self.T}")
        if not (0.0 <= self.burn_in < 1.0):
            raise SpecParseError("sim_config", f"burn_in must lie in [0, 1), got {self.burn_in}")
        if self.replicas < 1 or self.batches < 2:
            raise SpecParseError("sim_config", "need replicas >= 1 and batches >= 2")
        if self.steps - self.burn_steps < self.batches:
            raise SpecParseError("sim_config", "averaging window shorter than the number of batches")

    @classmethod
    def from_settings(cls, **overrides: object) -> "SimConfig":
        base = dict(
            dt=settings.sim_dt,
            T=settings.sim_T,
            burn_in=settings.sim_burn_in,
            replicas=settings.sim_replicas,
            seed=settings.sim_seed,
            batches=settings.sim_batches,
            blowup_bound=settings.sim_blowup_bound,
            chunk_steps=settings.sim_chunk_steps,
            threads=settings.worker_count(),
        )
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def burn_steps(self) -> int:
        return int(self.burn_in * self.steps)

    @property
    def batch_len(self) -> int:
        return (self.steps - self.burn_steps) // self.batches

    @property
    def avg_start(self) -> int:
        return self.steps - self.batches * self.batch_len


# ──────────────────────────────────────────────────────────────
# Closed loops and running costs
# ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ClosedLoop:
    """dX^i = ((A_i - K_i) X^i - c_i) dt + sigma_i dW^i with control alpha_i = K_i X^i + c_i."""

    A: np.ndarray      # (N, d, d)
    K: np.ndarray      # (N, d, d)
    c: np.ndarray      # (N, d)
    sigma: np.ndarray  # (N, d, d)
    R: np.ndarray      # (N, d, d)

    @property
    def N(self) -> int:
        return int(self.A.shape[0])

    @property
    def d(self) -> int:
        return int(self.A.shape[1])

    @property
    def M(self) -> np.ndarray:
        return self.A - self.K

    @classmethod
    def from_solution(cls, game: AnyGame, solution: EquilibriumSolution) -> "ClosedLoop":
        K = np.stack([p.feedback.K for p in solution.players])
        c = np.stack([p.feedback.c for p in solution.players])
        N = solution.N
        if isinstance(game, NearlyIdenticalGame):
            game = expand_nearly_identical(game)
        if isinstance(game, NPersonGame):
            return cls(A=game.A.copy(), K=K, c=c, sigma=game.sigma.copy(), R=game.R.copy())
        A, S, R = (np.repeat(M[None, :, :], N, axis=0) for M in (game.A, game.sigma, game.R))
        return cls(A=A, K=K, c=c, sigma=S, R=R)

    def with_feedback(self, player: int, K: np.ndarray, c: np.ndarray) -> "ClosedLoop":
        Ks, cs = self.K.copy(), self.c.copy()
        Ks[player] = K
        cs[player] = c
        return replace(self, K=Ks, c=cs)


class RunningCost(Protocol):
    def state_cost(self, X: np.ndarray) -> np.ndarray:
        """X: (replicas, N, d) -> (replicas, N)."""


@dataclass(frozen=True)
class BlockCost:
    Q: np.ndarray     # (N, Nd, Nd)
    Xbar: np.ndarray  # (N, Nd)

    def state_cost(self, X: np.ndarray) -> np.ndarray:
        Xf = X.reshape(X.shape[0], -1)
        W = Xf[:, None, :] - self.Xbar[None, :, :]
        return np.einsum("rnk,nkl,rnl->rn", W, self.Q, W)


@dataclass(frozen=True)
class MeanFieldCost:
    """Representative player facing a frozen population m."""

    mfg: MeanFieldGame
    population: MeasureMoments

    def state_cost(self, X: np.ndarray) -> np.ndarray:
        vals = eval_Vhat(self.mfg, self.population, X.reshape(-1, X.shape[-1]))
        return np.asarray(vals).reshape(X.shape[0], X.shape[1])


def running_cost_for(game: AnyGame, solution: EquilibriumSolution) -> RunningCost:
    if isinstance(game, NearlyIdenticalGame):
        game = expand_nearly_identical(game)
    if isinstance(game, NPersonGame):
        return BlockCost(Q=game.Q, Xbar=game.Xbar)
    return MeanFieldCost(mfg=game, population=solution.players[0].measure.moments())


# ──────────────────────────────────────────────────────────────
# Deterministic tools
# ──────────────────────────────────────────────────────────────

def stability_certificate(M: object) -> np.ndarray:
    """SPD P with M^T P + P M = -I."""
    M = as_matrix(M, "M")
    require_stable(M, "M")
    return solve_lyapunov(M.T, np.eye(M.shape[0]))


def generator_radius(P: np.ndarray, sigma: np.ndarray) -> float:
    """For V(x) = x^T P x and dX = M X dt + sigma dW: LV(x) = -|x|^2 + Tr(sigma sigma^T P) < 0 beyond this radius."""
    return float(np.sqrt(np.trace(sigma @ sigma.T @ P)))


@dataclass(frozen=True)
class MomentTrajectory:
    times: np.ndarray
    means: np.ndarray  # (n, d)
    covs: np.ndarray   # (n, d, d)


def moment_odes(M: object, c: object, sigma: object, x0: object, T: float, dt: float) -> MomentTrajectory:
    """m' = M m - c, v' = M v + v M^T + sigma sigma^T from (x0, 0)."""
    M = as_matrix(M, "M")
    d = M.shape[0]
    c = as_vector(c, d, "c")
    S = as_matrix(sigma, "sigma", shape=(d, d))
    SS = S @ S.T
    x0 = as_vector(x0, d, "x0")

    def rhs(_t: float, y: np.ndarray) -> np.ndarray:
        m = y[:d]
        v = y[d:].reshape(d, d)
        return np.concatenate([M @ m - c, (M @ v + v @ M.T + SS).reshape(-1)])

    n = int(round(T / dt))
    times = np.linspace(0.0, n * dt, n + 1)
    y0 = np.concatenate([x0, np.zeros(d * d)])
    sol = solve_ivp(rhs, (0.0, times[-1]), y0, method="RK45", t_eval=times, rtol=1e-10, atol=1e-12)
    means = sol.y[:d].T
    covs = np.array([symmetrize(col.reshape(d, d)) for col in sol.y[d:].T])
    return MomentTrajectory(times=sol.t, means=means, covs=covs)


def stationary_moments(M: np.ndarray, c: np.ndarray, sigma: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(M^-1 c, solve_lyapunov(M, sigma sigma^T)) for a stable closed loop."""
    require_stable(M, "closed-loop drift")
    return np.linalg.solve(M, c), solve_lyapunov(M, sigma @ sigma.T)


def exact_ergodic_cost(
    game: AnyGame,
    loop: ClosedLoop,
    player: int,
    population: Optional[GaussianMeasure] = None,
) -> float:
    """
    Long-time-average cost of one player under stable affine feedbacks, from the
    Gaussian invariant measures of every closed loop.
    """
    means, covs = [], []
    for j in range(loop.N):
        m, V = stationary_moments(loop.M[j], loop.c[j], loop.sigma[j])
        means.append(m)
        covs.append(V)

    K, c, R = loop.K[player], loop.c[player], loop.R[player]
    a_mean = K @ means[player] + c
    control = 0.5 * float(a_mean @ R @ a_mean + np.trace(R @ K @ covs[player] @ K.T))

    if isinstance(game, MeanFieldGame):
        if population is None:
            raise SpecParseError("population", "mean-field cost needs the population measure")
        own = MeasureMoments(mean=means[player], second_moment=covs[player] + np.outer(means[player], means[player]))
        return control + expect_Vhat(game, population.moments(), own)

    if isinstance(game, NearlyIdenticalGame):
        game = expand_nearly_identical(game)
    w = np.concatenate(means) - game.Xbar[player]
    state = float(w @ game.Q[player] @ w)
    state += sum(float(np.trace(game.block(player, j, j) @ covs[j])) for j in range(game.N))
    return control + state


# ──────────────────────────────────────────────────────────────
# Euler–Maruyama
# ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ErgodicEstimate:
    mean_hat: np.ndarray   # (N, d)
    mean_se: np.ndarray
    cov_hat: np.ndarray    # (N, d, d)
    cov_se: np.ndarray
    cost_hat: np.ndarray   # (N,)
    cost_se: np.ndarray
    ergodic: bool
    trend_ratio: float

    def mean_within(self, player: int, target: np.ndarray, factor: float) -> bool:
        return bool(np.all(np.abs(self.mean_hat[player] - target) <= factor * self.mean_se[player] + 1e-12))

    def cov_within(self, player: int, target: np.ndarray, factor: float) -> bool:
        return bool(np.all(np.abs(self.cov_hat[player] - target) <= factor * self.cov_se[player] + 1e-12))

    def cost_within(self, player: int, target: float, factor: float) -> bool:
        return bool(abs(self.cost_hat[player] - target) <= factor * self.cost_se[player] + 1e-12)


@dataclass
class SimulationResult:
    estimate: ErgodicEstimate
    trace: List[Tuple[float, int, List[float]]] = field(default_factory=list)


@dataclass
class _Accumulators:
    sum_x: np.ndarray      # (B, r, N, d)
    sum_xx: np.ndarray     # (B, r, N, d, d)
    sum_cost: np.ndarray   # (B, r, N)
    snapshots: np.ndarray  # (B, r, N, d)
    trace: List[Tuple[float, int, List[float]]]


def _streams(seed: int, replicas: Sequence[int], N: int) -> List[List[np.random.Generator]]:
    """One counter-based stream per (replica, player); independent of the replica count."""
    return [
        [np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(r, n)))) for n in range(N)]
        for r in replicas
    ]


def _run_group(
    loop: ClosedLoop,
    cost: RunningCost,
    x0: np.ndarray,
    config: SimConfig,
    replicas: Sequence[int],
    trace_every: int,
) -> _Accumulators:
    N, d = loop.N, loop.d
    Rg = len(replicas)
    B, blen, start = config.batches, config.batch_len, config.avg_start
    dt, sqdt = config.dt, np.sqrt(config.dt)

    gens = _streams(config.seed, replicas, N)
    M, K, c, S, Rm = loop.M, loop.K, loop.c, loop.sigma, loop.R
    X = np.repeat(x0[None, :, :], Rg, axis=0).astype(float)

    acc = _Accumulators(
        sum_x=np.zeros((B, Rg, N, d)),
        sum_xx=np.zeros((B, Rg, N, d, d)),
        sum_cost=np.zeros((B, Rg, N)),
        snapshots=np.zeros((B, Rg, N, d)),
        trace=[],
    )
    record = trace_every > 0 and replicas[0] == 0

    for chunk0 in range(0, config.steps, config.chunk_steps):
        L = min(config.chunk_steps, config.steps - chunk0)
        noise = np.empty((L, Rg, N, d))
        for r in range(Rg):
            for n in range(N):
                noise[:, r, n, :] = gens[r][n].standard_normal((L, d))

        for s in range(L):
            step = chunk0 + s
            if record and step % trace_every == 0:
                for n in range(N):
                    acc.trace.append((step * dt, n + 1, X[0, n].tolist()))
            if step >= start:
                b = (step - start) // blen
                alpha = np.einsum("nij,rnj->rni", K, X) + c
                acc.sum_cost[b] += 0.5 * np.einsum("rni,nij,rnj->rn", alpha, Rm, alpha) + cost.state_cost(X)
                acc.sum_x[b] += X
                acc.sum_xx[b] += X[..., :, None] * X[..., None, :]
            X = X + (np.einsum("nij,rnj->rni", M, X) - c) * dt + np.einsum("nij,rnj->rni", S, noise[s]) * sqdt
            done = step + 1 - start
            if done > 0 and done % blen == 0:
                acc.snapshots[done // blen - 1] = X

        peak = float(np.max(np.abs(X)))
        if not np.isfinite(peak) or peak > config.blowup_bound:
            raise NumericalBlowup(
                "blowup", f"state norm {peak:.3e} exceeds {config.blowup_bound:.1e} at t={(chunk0 + L) * dt:.3f}"
            )
    return acc


def _trend_ratio(snapshots: np.ndarray) -> float:
    """Cross-replica variance at late vs early batch boundaries."""
    if snapshots.shape[1] < 2:
        return 1.0
    var = snapshots.var(axis=1, ddof=1).sum(axis=-1).mean(axis=-1)  # (B,)
    q = max(1, var.shape[0] // 4)
    early = float(np.mean(var[:q]))
    late = float(np.mean(var[-q:]))
    return late / early if early > 0 else float("inf")


def euler_maruyama(
    loop: ClosedLoop,
    cost: RunningCost,
    x0: object,
    config: SimConfig,
    require_stable: bool = True,
    trace_every: int = 0,
) -> SimulationResult:
    """
    Simulate every player's closed loop with independent noise and estimate
    invariant moments and ergodic costs by batch means after burn-in.
    """
    N, d = loop.N, loop.d
    x0 = np.array(x0, dtype=float).reshape(N, d)
    if require_stable:
        for i in range(N):
            if not is_stable(loop.M[i]):
                raise Unstable("unstable_feedback", f"closed loop of player {i + 1} is not stable")

    workers = max(1, min(config.threads, config.replicas))
    groups = [[int(r) for r in g] for g in np.array_split(np.arange(config.replicas), workers) if len(g)]
    logger.info(
        "[simulate] N=%d d=%d steps=%d replicas=%d groups=%d",
        N, d, config.steps, config.replicas, len(groups),
    )
    if len(groups) == 1:
        parts = [_run_group(loop, cost, x0, config, groups[0], trace_every)]
    else:
        with ThreadPoolExecutor(max_workers=len(groups)) as pool:
            parts = list(pool.map(lambda g: _run_group(loop, cost, x0, config, g, trace_every), groups))

    sum_x = np.concatenate([p.sum_x for p in parts], axis=1).sum(axis=1)
    sum_xx = np.concatenate([p.sum_xx for p in parts], axis=1).sum(axis=1)
    sum_cost = np.concatenate([p.sum_cost for p in parts], axis=1).sum(axis=1)
    snapshots = np.concatenate([p.snapshots for p in parts], axis=1)

    n_b = float(config.batch_len * config.replicas)
    B = config.batches
    mean_b = sum_x / n_b                              # (B, N, d)
    second_b = sum_xx / n_b                           # (B, N, d, d)
    cov_b = second_b - mean_b[..., :, None] * mean_b[..., None, :]
    cost_b = sum_cost / n_b                           # (B, N)

    mean_hat = mean_b.mean(axis=0)
    second_hat = second_b.mean(axis=0)
    cov_hat = second_hat - mean_hat[..., :, None] * mean_hat[..., None, :]
    cov_hat = 0.5 * (cov_hat + np.swapaxes(cov_hat, -1, -2))

    ratio = _trend_ratio(snapshots)
    ergodic = ratio <= settings.ergodic_trend_ratio
    if not ergodic:
        logger.warning("[simulate] variance grows across the run (ratio %.2f): not ergodic", ratio)

    est = ErgodicEstimate(
        mean_hat=mean_hat,
        mean_se=mean_b.std(axis=0, ddof=1) / np.sqrt(B),
        cov_hat=cov_hat,
        cov_se=cov_b.std(axis=0, ddof=1) / np.sqrt(B),
        cost_hat=cost_b.mean(axis=0),
        cost_se=cost_b.std(axis=0, ddof=1) / np.sqrt(B),
        ergodic=ergodic,
        trend_ratio=ratio,
    )
    trace = parts[0].trace if trace_every > 0 else []
    return SimulationResult(estimate=est, trace=trace)


# ──────────────────────────────────────────────────────────────
# Unilateral deviations
# ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Deviation:
    """Additive perturbation of one player's feedback (dK, dc)."""

    dK: np.ndarray
    dc: np.ndarray
    entry: int = -1
    delta: float = 0.0

    @classmethod
    def entry_shift(cls, d: int, entry: int, delta: float) -> "Deviation":
        """entry < d*d indexes K row-major; d*d <= entry < d*d + d indexes c."""
        if not 0 <= entry < d * d + d:
            raise SpecParseError("deviation_entry", f"entry {entry} outside [0, {d * d + d})")
        dK = np.zeros((d, d))
        dc = np.zeros(d)
        if entry < d * d:
            dK.flat[entry] = delta
        else:
            dc[entry - d * d] = delta
        return cls(dK=dK, dc=dc, entry=entry, delta=delta)


@dataclass(frozen=True)
class DeviationOutcome:
    deviation: Deviation
    lam: float
    skipped: bool
    reason: Optional[str] = None
    cost_hat: Optional[float] = None
    cost_se: Optional[float] = None
    exact_cost: Optional[float] = None
    passes: bool = True

    @property
    def strictly_above(self) -> Optional[bool]:
        return None if self.exact_cost is None else self.exact_cost > self.lam


def nash_deviation_test(
    game: AnyGame,
    solution: EquilibriumSolution,
    player_index: int,
    deviations: Sequence[Deviation],
    config: SimConfig,
    x0: Optional[np.ndarray] = None,
) -> List[DeviationOutcome]:
    """Simulated and exact cost of each unilateral deviation against lambda^i."""
    base = ClosedLoop.from_solution(game, solution)
    cost = running_cost_for(game, solution)
    population = solution.players[0].measure if isinstance(game, MeanFieldGame) else None
    lam = solution.players[player_index].lam
    x0 = np.stack([p.measure.mu for p in solution.players]) if x0 is None else x0
    factor = settings.sim_se_factor

    out: List[DeviationOutcome] = []
    for dev in deviations:
        K = base.K[player_index] + dev.dK
        c = base.c[player_index] + dev.dc
        loop = base.with_feedback(player_index, K, c)
        if not is_stable(loop.M[player_index]):
            logger.warning(
                "[simulate] skipping deviation (entry %d, delta %.3g): A - K is not stable",
                dev.entry, dev.delta,
            )
            out.append(DeviationOutcome(deviation=dev, lam=lam, skipped=True, reason="unstable"))
            continue
        exact = exact_ergodic_cost(game, loop, player_index, population)
        est = euler_maruyama(loop, cost, x0, config).estimate
        ch, se = float(est.cost_hat[player_index]), float(est.cost_se[player_index])
        out.append(
            DeviationOutcome(
                deviation=dev,
                lam=lam,
                skipped=False,
                cost_hat=ch,
                cost_se=se,
                exact_cost=exact,
                passes=ch >= lam - factor * se,
            )
        )
    return out
