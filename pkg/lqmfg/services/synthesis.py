# lqmfg/services/synthesis.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm, qmc

from lqmfg.core.contracts import (
    ConditionReport,
    FamilyDoc,
    PlayerDoc,
    ResidualDoc,
    SolutionDoc,
)
from lqmfg.core.errors import (
    ConditionsFail,
    DimensionMismatch,
    FamilyMemberOutOfRange,
    HypothesisViolation,
    IllConditioned,
)
from lqmfg.core.matlin import (
    as_vector,
    min_norm_solve,
    null_space_basis,
    rank_consistent,
    require_stable,
    spd_inv,
    symmetrize,
)
from lqmfg.core.settings import settings
from lqmfg.services.games import (
    AnyGame,
    MeanFieldGame,
    MeasureMoments,
    NearlyIdenticalGame,
    NPersonGame,
    eval_Vhat,
    expand_nearly_identical,
    validate_H,
)
from lqmfg.services.riccati import AREProblem, solve_are_spd, sylvester_residual

logger = logging.getLogger(__name__)

SolutionKind = Literal["n_person", "nearly_identical", "mean_field"]


# ──────────────────────────────────────────────────────────────
# Solution types
# ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class QuadraticValue:
    """v(x) = x^T Lambda x / 2 + rho^T x."""

    Lambda: np.ndarray
    rho: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(x)
        return 0.5 * np.einsum("ni,ij,nj->n", X, self.Lambda, X) + X @ self.rho

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_2d(x) @ self.Lambda.T + self.rho


@dataclass(frozen=True)
class GaussianMeasure:
    """N(mu, Sigma^-1); Sigma is the precision matrix."""

    mu: np.ndarray
    Sigma: np.ndarray

    @property
    def d(self) -> int:
        return int(self.mu.shape[0])

    @property
    def gamma(self) -> float:
        return float((2.0 * np.pi) ** (-self.d / 2.0) * np.sqrt(np.linalg.det(self.Sigma)))

    @property
    def covariance(self) -> np.ndarray:
        return spd_inv(self.Sigma)

    def density(self, x: np.ndarray) -> np.ndarray:
        Y = np.atleast_2d(x) - self.mu
        return self.gamma * np.exp(-0.5 * np.einsum("ni,ij,nj->n", Y, self.Sigma, Y))

    def moments(self) -> MeasureMoments:
        return MeasureMoments.gaussian(self.mu, self.Sigma)


@dataclass(frozen=True)
class AffineFeedback:
    """alpha(x) = K x + c."""

    K: np.ndarray
    c: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_2d(x) @ self.K.T + self.c


@dataclass(frozen=True)
class PlayerSolution:
    value: QuadraticValue
    measure: GaussianMeasure
    lam: float
    feedback: AffineFeedback


@dataclass(frozen=True)
class SolutionFamily:
    """mu = particular + basis @ t; basis columns are orthonormal."""

    particular: np.ndarray
    basis: np.ndarray
    selected_member: Optional[int] = None
    coefficients: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return int(self.basis.shape[1])

    def mu(self, coefficients: Sequence[float]) -> np.ndarray:
        t = as_vector(coefficients, self.dim, "family coefficients")
        return self.particular + self.basis @ t

    def member_coefficients(self, k: int, step: float = 1.0) -> np.ndarray:
        """k = 0: the minimum-norm particular solution; k >= 1: step along basis vector k."""
        if k < 0 or k > self.dim:
            raise FamilyMemberOutOfRange(
                "family_member", f"family member {k} out of range [0, {self.dim}]"
            )
        t = np.zeros(self.dim)
        if k > 0:
            t[k - 1] = step
        return t


@dataclass(frozen=True)
class EquilibriumSolution:
    kind: SolutionKind
    players: Tuple[PlayerSolution, ...]
    conditions: ConditionReport
    family: Optional[SolutionFamily] = None

    @property
    def N(self) -> int:
        return len(self.players)

    def mu_stack(self) -> np.ndarray:
        return np.concatenate([p.measure.mu for p in self.players])


# ──────────────────────────────────────────────────────────────
# Linear systems
# ──────────────────────────────────────────────────────────────

def assemble_B_P(
    game: NPersonGame, Sigma: Optional[Sequence[np.ndarray]] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    B_ab = -Q^a_ab - delta_ab (A^a)^T R^a A^a / 2, P_a = -sum_j Q^a_aj Xbar_a^j.

    With Sigma given the diagonal blocks use the Riccati rewrite
    -Sigma^a nu^a R^a nu^a Sigma^a / 2 (equal to the plain form for ARE solutions).
    """
    N, d = game.N, game.d
    if Sigma is not None and len(Sigma) != N:
        raise DimensionMismatch("sigma_count", f"expected {N} precision matrices, got {len(Sigma)}")
    nu = game.nu
    Bm = np.zeros((N * d, N * d))
    P = np.zeros(N * d)
    for a in range(N):
        rows = slice(a * d, (a + 1) * d)
        for b in range(N):
            Bm[rows, b * d:(b + 1) * d] = -game.block(a, a, b)
        if Sigma is None:
            Bm[rows, rows] -= symmetrize(game.A[a].T @ game.R[a] @ game.A[a]) / 2.0
        else:
            S = np.asarray(Sigma[a], dtype=float)
            if S.shape != (d, d):
                raise DimensionMismatch("shape_mismatch", f"Sigma[{a}]: expected {(d, d)}, got {S.shape}")
            Bm[rows, rows] = -symmetrize(S @ nu[a] @ game.R[a] @ nu[a] @ S) / 2.0
        P[rows] = -sum(game.block(a, a, j) @ game.ref(a, j) for j in range(N))
    return Bm, P


def assemble_B_P_nearly_identical(game: NearlyIdenticalGame) -> Tuple[np.ndarray, np.ndarray]:
    """B' = Q + A^T R A/2 - (1-N) B/2, P' = -Q H + (1-N)(B/2) Delta; mu solves -B' mu = P'."""
    AtRA = symmetrize(game.A.T @ game.R @ game.A) / 2.0
    Bp = symmetrize(game.Q) + AtRA - (1 - game.N) * game.B / 2.0
    Pp = -game.Q @ game.H + (1 - game.N) * (game.B / 2.0) @ game.Delta
    return Bp, Pp


def assemble_B_P_mean_field(mfg: MeanFieldGame) -> Tuple[np.ndarray, np.ndarray]:
    """B_inf = Qhat + A^T R A/2 + Bhat/2, P_inf = -Qhat H - (Bhat/2) Delta; mu solves -B_inf mu = P_inf."""
    AtRA = symmetrize(mfg.A.T @ mfg.R @ mfg.A) / 2.0
    Binf = symmetrize(mfg.Qhat) + AtRA + mfg.Bhat / 2.0
    Pinf = -mfg.Qhat @ mfg.H - (mfg.Bhat / 2.0) @ mfg.Delta
    return Binf, Pinf


# ──────────────────────────────────────────────────────────────
# Condition analysis
# ──────────────────────────────────────────────────────────────

@dataclass
class _Analysis:
    report: ConditionReport
    sigmas: List[np.ndarray] = field(default_factory=list)
    Bm: Optional[np.ndarray] = None
    P: Optional[np.ndarray] = None
    sign: float = 1.0  # system is sign * Bm @ mu = P
    cutoff: float = 0.0


def _players(game: AnyGame) -> List[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
    """(A, nu, R, Q_own) per Riccati equation."""
    if isinstance(game, NPersonGame):
        nu = game.nu
        return [(game.A[i], nu[i], game.R[i], game.block(i, i, i)) for i in range(game.N)]
    if isinstance(game, NearlyIdenticalGame):
        return [(game.A, game.nu, game.R, game.Q)]
    return [(game.A, game.nu, game.R, game.Qhat)]


def _analyze(game: AnyGame, relaxed: bool = False) -> _Analysis:
    hyp = validate_H(game, relaxed=relaxed)
    if not hyp.ok:
        raise HypothesisViolation("hypothesis_h", "; ".join(hyp.violations))

    if isinstance(game, NPersonGame):
        which = "E/U"
    elif isinstance(game, NearlyIdenticalGame):
        which = "E'/U'"
    else:
        which = "Einf/Uinf"

    sigmas: List[np.ndarray] = []
    residuals: List[float] = []
    tols: List[float] = []
    are_solved = True
    failure: Optional[str] = None
    for k, (A, nu, R, Q_own) in enumerate(_players(game)):
        try:
            S = solve_are_spd(AREProblem.from_player(A, nu, R, Q_own))
        except IllConditioned as exc:
            are_solved = False
            failure = f"riccati (player {k + 1}): {exc.message}"
            break
        sigmas.append(S)
        residuals.append(sylvester_residual(S, nu, R, A))
        tols.append(settings.sylvester_rtol * (1.0 + float(np.linalg.norm(R @ A, 2))))

    if isinstance(game, NPersonGame):
        Bm, P = assemble_B_P(game)
        sign = 1.0
    elif isinstance(game, NearlyIdenticalGame):
        Bm, P = assemble_B_P_nearly_identical(game)
        sign = -1.0
    else:
        Bm, P = assemble_B_P_mean_field(game)
        sign = -1.0

    ranks = rank_consistent(Bm, P)
    n = Bm.shape[0]
    invertible = ranks.rank_B == n
    syl_ok = are_solved and all(r < t for r, t in zip(residuals, tols))

    clauses = [] if failure is None else [failure]
    if are_solved and not syl_ok:
        bad = [(k, r, t) for k, (r, t) in enumerate(zip(residuals, tols)) if r >= t]
        clauses.extend(
            f"sylvester (player {k + 1}): residual {r:.3e} >= tol {t:.3e}" for k, r, t in bad
        )
    if not ranks.consistent:
        clauses.append(f"rank: rank(B) = {ranks.rank_B} < rank([B, P]) = {ranks.rank_BP}")

    exists = syl_ok and ranks.consistent
    report = ConditionReport(
        which=which,
        are_solved=are_solved,
        sylvester_residual=residuals,
        sylvester_tol=tols,
        rank_B=ranks.rank_B,
        rank_BP=ranks.rank_BP,
        size=n,
        B_invertible=invertible,
        verdict_exists=exists,
        verdict_unique=invertible,
        null_dim=n - ranks.rank_B,
        failing_clause="; ".join(clauses) if clauses else None,
    )
    logger.info(
        "[synthesis] %s exists=%s unique=%s rank=%d/%d",
        which, exists, invertible, ranks.rank_B, ranks.rank_BP,
    )
    return _Analysis(report=report, sigmas=sigmas, Bm=Bm, P=P, sign=sign, cutoff=ranks.cutoff)


def check_conditions(game: AnyGame, relaxed: bool = False) -> ConditionReport:
    return _analyze(game, relaxed=relaxed).report


def _solve_mu(an: _Analysis) -> Tuple[np.ndarray, Optional[SolutionFamily]]:
    if not an.report.verdict_exists:
        raise ConditionsFail("conditions_fail", an.report.failing_clause or "existence conditions fail")
    M = an.sign * an.Bm
    if an.report.B_invertible:
        return np.linalg.solve(M, an.P), None
    particular = min_norm_solve(M, an.P, cutoff=an.cutoff)
    basis = null_space_basis(M, cutoff=an.cutoff)
    logger.info("[synthesis] singular system: family of dimension %d", basis.shape[1])
    return particular, SolutionFamily(particular=particular, basis=basis)


# ──────────────────────────────────────────────────────────────
# Player assembly
# ──────────────────────────────────────────────────────────────

def feedback_from_value(
    v: QuadraticValue, R: np.ndarray, A: Optional[np.ndarray] = None
) -> AffineFeedback:
    """K = R^-1 Lambda, c = R^-1 rho; with A given, A - K must be stable."""
    K = np.linalg.solve(R, v.Lambda)
    c = np.linalg.solve(R, v.rho)
    if A is not None:
        require_stable(A - K, "closed-loop drift A - K")
    return AffineFeedback(K=K, c=c)


def _player(A, nu, R, Sigma, mu, lam) -> PlayerSolution:
    Lam = symmetrize(R @ (nu @ Sigma + A))
    rho = -R @ nu @ Sigma @ mu
    value = QuadraticValue(Lambda=Lam, rho=rho)
    return PlayerSolution(
        value=value,
        measure=GaussianMeasure(mu=mu, Sigma=Sigma),
        lam=float(lam),
        feedback=feedback_from_value(value, R, A),
    )


def _lambda_tail(A, nu, R, Sigma, mu) -> float:
    """-mu^T (Sigma nu R nu Sigma / 2) mu + Tr(nu R nu Sigma + nu R A)."""
    S = Sigma @ nu @ R @ nu @ Sigma / 2.0
    return float(-mu @ S @ mu + np.trace(nu @ R @ nu @ Sigma + nu @ R @ A))


@dataclass(frozen=True)
class FExpansion:
    """f^i(x) = x^T F2 x + x^T F11 + F12 x + F0."""

    F2: np.ndarray
    F11: np.ndarray
    F12: np.ndarray
    F0: float


def f_expansion(game: NPersonGame, i: int, mus: Sequence[np.ndarray], sigmas: Sequence[np.ndarray]) -> FExpansion:
    """Coefficients of the averaged cost of player i against N(mu_j, Sigma_j^-1), j != i."""
    N = game.N
    def Q(j: int, k: int) -> np.ndarray:
        return game.block(i, j, k)

    own = game.ref(i, i)
    w = [mus[j] - game.ref(i, j) for j in range(N)]
    others = [j for j in range(N) if j != i]

    F11 = -Q(i, i) @ own + sum((Q(i, j) @ w[j] for j in others), np.zeros(game.d))
    F12 = -own @ Q(i, i) + sum((w[j] @ Q(j, i) for j in others), np.zeros(game.d))
    F0 = float(own @ Q(i, i) @ own)
    F0 -= float(own @ sum((Q(i, j) @ w[j] for j in others), np.zeros(game.d)))
    F0 -= float(sum((w[j] @ Q(j, i) for j in others), np.zeros(game.d)) @ own)
    for j in others:
        for k in others:
            if j != k:
                F0 += float(w[j] @ Q(j, k) @ w[k])
        F0 += float(np.trace(Q(j, j) @ spd_inv(sigmas[j])) + w[j] @ Q(j, j) @ w[j])
    return FExpansion(F2=Q(i, i).copy(), F11=F11, F12=F12, F0=F0)


def _assemble_n_person(game: NPersonGame, sigmas: Sequence[np.ndarray], mu_stack: np.ndarray) -> Tuple[PlayerSolution, ...]:
    d = game.d
    nu = game.nu
    mus = [mu_stack[i * d:(i + 1) * d] for i in range(game.N)]
    out = []
    for i in range(game.N):
        fx = f_expansion(game, i, mus, sigmas)
        lam = fx.F0 + _lambda_tail(game.A[i], nu[i], game.R[i], sigmas[i], mus[i])
        out.append(_player(game.A[i], nu[i], game.R[i], sigmas[i], mus[i], lam))
    return tuple(out)


def nearly_identical_F0(game: NearlyIdenticalGame, i: int, Sigma: np.ndarray, mu: np.ndarray) -> float:
    n1 = game.N - 1
    half_B = game.B / 2.0
    w = mu - game.Delta
    H = game.H
    cov = spd_inv(Sigma)
    return float(
        H @ game.Q @ H
        - n1 * (H @ half_B @ w + w @ half_B @ H)
        + n1 * np.trace(game.C[i] @ cov)
        + n1 * (w @ game.C[i] @ w)
        + n1 * (n1 - 1) * (w @ game.D[i] @ w)
    )


def _assemble_nearly_identical(game: NearlyIdenticalGame, Sigma: np.ndarray, mu: np.ndarray) -> Tuple[PlayerSolution, ...]:
    nu = game.nu
    tail = _lambda_tail(game.A, nu, game.R, Sigma, mu)
    return tuple(
        _player(game.A, nu, game.R, Sigma, mu, nearly_identical_F0(game, i, Sigma, mu) + tail)
        for i in range(game.N)
    )


def mean_field_F0(mfg: MeanFieldGame, Sigma: np.ndarray, mu: np.ndarray) -> float:
    return float(eval_Vhat(mfg, MeasureMoments.gaussian(mu, Sigma), np.zeros(mfg.d)))


def _assemble_mean_field(mfg: MeanFieldGame, Sigma: np.ndarray, mu: np.ndarray) -> Tuple[PlayerSolution, ...]:
    nu = mfg.nu
    lam = mean_field_F0(mfg, Sigma, mu) + _lambda_tail(mfg.A, nu, mfg.R, Sigma, mu)
    return (_player(mfg.A, nu, mfg.R, Sigma, mu, lam),)


# ──────────────────────────────────────────────────────────────
# Solvers
# ──────────────────────────────────────────────────────────────

def solve_n_person(game: NPersonGame, relaxed: bool = False) -> EquilibriumSolution:
    an = _analyze(game, relaxed=relaxed)
    mu_stack, family = _solve_mu(an)
    players = _assemble_n_person(game, an.sigmas, mu_stack)
    return EquilibriumSolution(kind="n_person", players=players, conditions=an.report, family=family)


def solve_nearly_identical(game: NearlyIdenticalGame, relaxed: bool = False) -> EquilibriumSolution:
    an = _analyze(game, relaxed=relaxed)
    mu, family = _solve_mu(an)
    players = _assemble_nearly_identical(game, an.sigmas[0], mu)
    return EquilibriumSolution(kind="nearly_identical", players=players, conditions=an.report, family=family)


def solve_mean_field(mfg: MeanFieldGame, relaxed: bool = False) -> EquilibriumSolution:
    an = _analyze(mfg, relaxed=relaxed)
    mu, family = _solve_mu(an)
    players = _assemble_mean_field(mfg, an.sigmas[0], mu)
    return EquilibriumSolution(kind="mean_field", players=players, conditions=an.report, family=family)


def solve(game: AnyGame, relaxed: bool = False) -> EquilibriumSolution:
    if isinstance(game, NPersonGame):
        return solve_n_person(game, relaxed)
    if isinstance(game, NearlyIdenticalGame):
        return solve_nearly_identical(game, relaxed)
    return solve_mean_field(game, relaxed)


def family_member(
    solution: EquilibriumSolution,
    game: AnyGame,
    coefficients: Sequence[float],
    selected_member: Optional[int] = None,
) -> EquilibriumSolution:
    """Re-assemble rho, lambda and c for mu = particular + basis @ coefficients."""
    fam = solution.family
    if fam is None:
        if selected_member not in (None, 0):
            raise FamilyMemberOutOfRange("family_member", "solution is unique; only member 0 exists")
        return solution
    t = as_vector(coefficients, fam.dim, "family coefficients")
    mu = fam.mu(t)
    sigmas = [p.measure.Sigma for p in solution.players]
    if isinstance(game, NPersonGame):
        players = _assemble_n_person(game, sigmas, mu)
    elif isinstance(game, NearlyIdenticalGame):
        players = _assemble_nearly_identical(game, sigmas[0], mu)
    else:
        players = _assemble_mean_field(game, sigmas[0], mu)
    return replace(
        solution,
        players=players,
        family=replace(fam, selected_member=selected_member, coefficients=t),
    )


# ──────────────────────────────────────────────────────────────
# HJB / KFP residuals
# ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ResidualReport:
    hjb: List[float]
    kfp: List[float]
    mass: List[float]
    points: int

    @property
    def hjb_max(self) -> float:
        return max(self.hjb)

    @property
    def kfp_max(self) -> float:
        return max(self.kfp)

    @property
    def mass_error(self) -> float:
        return max(self.mass)

    def to_document(self) -> ResidualDoc:
        return ResidualDoc(hjb_max=self.hjb_max, kfp_max=self.kfp_max, mass_error=self.mass_error, points=self.points)


def sample_box(measure: GaussianMeasure, n: Optional[int] = None, sd: Optional[float] = None) -> np.ndarray:
    """Quasi-random points in the box mu +- sd * |Sigma^-1|^(1/2)."""
    n = settings.residual_points if n is None else n
    sd = settings.residual_box_sd if sd is None else sd
    half = sd * np.sqrt(float(np.linalg.norm(measure.covariance, 2)))
    u = qmc.Halton(d=measure.d, scramble=False).random(n + 1)[1:]
    return measure.mu + half * (2.0 * u - 1.0)


def density_mass(measure: GaussianMeasure, n: Optional[int] = None) -> float:
    """
    |integral of density - 1| by quasi-Monte Carlo, importance-sampled from
    N(mu, Sigma^-1) through the Cholesky factor of the covariance.
    """
    n = settings.residual_points if n is None else n
    u = qmc.Halton(d=measure.d, scramble=False).random(n + 1)[1:]
    z = norm.ppf(u)
    L = np.linalg.cholesky(measure.covariance)
    x = measure.mu + z @ L.T
    log_norm = 0.5 * measure.d * np.log(2.0 * np.pi) + float(np.sum(np.log(np.diag(L))))
    log_q = -0.5 * np.einsum("ni,ni->n", z, z) - log_norm
    w = measure.density(x) * np.exp(-log_q)
    return abs(float(np.mean(w)) - 1.0)


def _averaged_cost_n_person(game: NPersonGame, i: int, players: Sequence[PlayerSolution], X: np.ndarray) -> np.ndarray:
    """f^i evaluated directly: E[(Z - Xbar_i)^T Q^i (Z - Xbar_i)] with Z_i = x, Z_j ~ m^j."""
    d = game.d
    means = np.concatenate([p.measure.mu for p in players])
    M = np.repeat(means[None, :], X.shape[0], axis=0)
    M[:, i * d:(i + 1) * d] = X
    W = M - game.Xbar[i]
    trace = sum(
        float(np.trace(game.block(i, j, j) @ players[j].measure.covariance))
        for j in range(game.N)
        if j != i
    )
    return np.einsum("ni,ij,nj->n", W, game.Q[i], W) + trace


def _pde_residuals(A, nu, R, player: PlayerSolution, f_vals: np.ndarray, X: np.ndarray) -> Tuple[float, float]:
    Lam, rho = player.value.Lambda, player.value.rho
    G = player.value.gradient(X)                        # grad v
    Rinv_G = np.linalg.solve(R, G.T).T
    hjb = (
        -np.trace(nu @ Lam)
        + 0.5 * np.einsum("ni,ni->n", G, Rinv_G)
        - np.einsum("ni,ni->n", G, X @ A.T)
        + player.lam
        - f_vals
    )

    # KFP divided by the density: -Tr(nu D2m)/m - div(m b)/m with b = R^-1 grad v - A x
    S, mu = player.measure.Sigma, player.measure.mu
    Y = X - mu
    SY = Y @ S.T
    b = Rinv_G - X @ A.T
    Db = np.linalg.solve(R, Lam) - A
    d2m_over_m = np.einsum("ni,ij,nj->n", SY, nu, SY) - np.trace(nu @ S)
    div_over_m = -np.einsum("ni,ni->n", SY, b) + np.trace(Db)
    kfp = -d2m_over_m - div_over_m

    return float(np.max(np.abs(hjb))), float(np.max(np.abs(kfp)))


def hjb_kfp_residual(
    solution: EquilibriumSolution,
    game: AnyGame,
    sample_points: Optional[Sequence[np.ndarray]] = None,
) -> ResidualReport:
    """
    Evaluate both stationary PDEs in closed form at sample points (per player).
    The KFP residual is reported relative to the density.
    """
    if isinstance(game, NearlyIdenticalGame):
        game = expand_nearly_identical(game)

    hjb: List[float] = []
    kfp: List[float] = []
    mass: List[float] = []
    n_points = 0

    for i, player in enumerate(solution.players):
        X = sample_box(player.measure) if sample_points is None else np.atleast_2d(sample_points[i])
        n_points = max(n_points, X.shape[0])
        if isinstance(game, NPersonGame):
            if game.N != solution.N:
                raise DimensionMismatch("player_count", f"game has {game.N} players, solution {solution.N}")
            A, nu, R = game.A[i], game.nu[i], game.R[i]
            f_vals = _averaged_cost_n_person(game, i, solution.players, X)
        else:
            A, nu, R = game.A, game.nu, game.R
            f_vals = np.atleast_1d(eval_Vhat(game, player.measure.moments(), X))
        h, k = _pde_residuals(A, nu, R, player, f_vals, X)
        hjb.append(h)
        kfp.append(k)
        mass.append(density_mass(player.measure))

    return ResidualReport(hjb=hjb, kfp=kfp, mass=mass, points=n_points)


# ──────────────────────────────────────────────────────────────
# Documents
# ──────────────────────────────────────────────────────────────

def player_document(p: PlayerSolution) -> PlayerDoc:
    return PlayerDoc(
        Lambda=p.value.Lambda.tolist(),
        rho=p.value.rho.tolist(),
        mu=p.measure.mu.tolist(),
        Sigma=p.measure.Sigma.tolist(),
        lam=p.lam,
        K=p.feedback.K.tolist(),
        c=p.feedback.c.tolist(),
    )


def solution_document(
    solution: EquilibriumSolution,
    spec_key: str,
    residuals: Optional[ResidualReport] = None,
    include_family: bool = True,
) -> SolutionDoc:
    fam = solution.family
    family_doc = None
    if fam is not None and include_family:
        family_doc = FamilyDoc(
            dim=fam.dim,
            particular=fam.particular.tolist(),
            basis=fam.basis.T.tolist(),
            selected_member=fam.selected_member,
            coefficients=None if fam.coefficients is None else fam.coefficients.tolist(),
        )
    return SolutionDoc(
        spec_key=spec_key,
        algo_version=settings.algo_version,
        kind=solution.kind,
        players=[player_document(p) for p in solution.players],
        family=family_doc,
        residuals=None if residuals is None else residuals.to_document(),
        conditions=solution.conditions,
    )


def solution_from_document(doc: SolutionDoc) -> EquilibriumSolution:
    players = []
    for p in doc.players:
        Lam = np.array(p.Lambda, dtype=float)
        d = Lam.shape[0]
        players.append(
            PlayerSolution(
                value=QuadraticValue(Lambda=Lam, rho=as_vector(p.rho, d, "rho")),
                measure=GaussianMeasure(mu=as_vector(p.mu, d, "mu"), Sigma=np.array(p.Sigma, dtype=float)),
                lam=float(p.lam),
                feedback=AffineFeedback(K=np.array(p.K, dtype=float), c=as_vector(p.c, d, "c")),
            )
        )
    family = None
    if doc.family is not None:
        family = SolutionFamily(
            particular=np.array(doc.family.particular, dtype=float),
            basis=np.array(doc.family.basis, dtype=float).reshape(doc.family.dim, len(doc.family.particular)).T,
            selected_member=doc.family.selected_member,
            coefficients=None if doc.family.coefficients is None else np.array(doc.family.coefficients),
        )
    return EquilibriumSolution(kind=doc.kind, players=tuple(players), conditions=doc.conditions, family=family)
