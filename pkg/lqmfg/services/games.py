# lqmfg/services/games.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, Iterator, List, Optional, Sequence, Union

import numpy as np

from lqmfg.core.errors import DimensionMismatch, NotNearlyIdentical, NotSPD
from lqmfg.core.matlin import (
    as_matrix,
    as_vector,
    is_spd,
    is_symmetric,
    null_space_basis,
    symmetrize,
)
from lqmfg.core.settings import settings

logger = logging.getLogger(__name__)


def _stack(mats: Sequence[object], d: int, name: str) -> np.ndarray:
    return np.stack([as_matrix(m, f"{name}[{i}]", shape=(d, d)) for i, m in enumerate(mats)])


def _nu(sigma: np.ndarray) -> np.ndarray:
    return 0.5 * sigma @ np.swapaxes(sigma, -1, -2)


# ──────────────────────────────────────────────────────────────
# Game data
# ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class NPersonGame:
    """
    General N-player game.

    Shapes: A, sigma, R are (N, d, d); Q is (N, Nd, Nd) with the block
    Q[i][j*d:(j+1)*d, k*d:(k+1)*d] = Q^i_jk; Xbar is (N, Nd) with Xbar_i^j
    at Xbar[i][j*d:(j+1)*d].
    """

    N: int
    d: int
    A: np.ndarray
    sigma: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    Xbar: np.ndarray

    def __post_init__(self) -> None:
        N, d = self.N, self.d
        if N < 2 or d < 1:
            raise DimensionMismatch("bad_sizes", f"need N >= 2 and d >= 1, got N={N}, d={d}")
        for name, arr, shape in (
            ("A", self.A, (N, d, d)),
            ("sigma", self.sigma, (N, d, d)),
            ("R", self.R, (N, d, d)),
            ("Q", self.Q, (N, N * d, N * d)),
            ("Xbar", self.Xbar, (N, N * d)),
        ):
            if arr.shape != shape:
                raise DimensionMismatch("shape_mismatch", f"{name}: expected {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise DimensionMismatch("non_finite", f"{name}: entries must be finite")

    @classmethod
    def from_blocks(
        cls,
        A: Sequence[object],
        sigma: Sequence[object],
        R: Sequence[object],
        Q_blocks: Sequence[Sequence[Sequence[object]]],
        Xbar: Sequence[Sequence[object]],
    ) -> "NPersonGame":
        N = len(A)
        if N == 0:
            raise DimensionMismatch("no_players", "at least one player is required")
        d = as_matrix(A[0], "A[0]").shape[0]
        for name, seq in (("sigma", sigma), ("R", R), ("Q_blocks", Q_blocks), ("Xbar", Xbar)):
            if len(seq) != N:
                raise DimensionMismatch("player_count", f"{name}: expected {N} entries, got {len(seq)}")

        Q = np.zeros((N, N * d, N * d))
        X = np.zeros((N, N * d))
        for i in range(N):
            if len(Q_blocks[i]) != N or any(len(row) != N for row in Q_blocks[i]):
                raise DimensionMismatch("block_grid", f"Q_blocks[{i}]: expected an {N}x{N} grid of blocks")
            for j in range(N):
                for k in range(N):
                    Q[i, j * d:(j + 1) * d, k * d:(k + 1) * d] = as_matrix(
                        Q_blocks[i][j][k], f"Q_blocks[{i}][{j}][{k}]", shape=(d, d)
                    )
                X[i, j * d:(j + 1) * d] = as_vector(Xbar[i][j], d, f"Xbar[{i}][{j}]")

        return cls(
            N=N,
            d=d,
            A=_stack(A, d, "A"),
            sigma=_stack(sigma, d, "sigma"),
            R=_stack(R, d, "R"),
            Q=Q,
            Xbar=X,
        )

    @property
    def nu(self) -> np.ndarray:
        return _nu(self.sigma)

    def block(self, i: int, j: int, k: int) -> np.ndarray:
        d = self.d
        return self.Q[i, j * d:(j + 1) * d, k * d:(k + 1) * d]

    def ref(self, i: int, j: int) -> np.ndarray:
        d = self.d
        return self.Xbar[i, j * d:(j + 1) * d]


@dataclass(frozen=True)
class NearlyIdenticalGame:
    N: int
    d: int
    A: np.ndarray
    sigma: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    B: np.ndarray
    H: np.ndarray
    Delta: np.ndarray
    C: np.ndarray  # (N, d, d)
    D: np.ndarray  # (N, d, d)

    def __post_init__(self) -> None:
        N, d = self.N, self.d
        if N < 2 or d < 1:
            raise DimensionMismatch("bad_sizes", f"need N >= 2 and d >= 1, got N={N}, d={d}")
        for name, arr, shape in (
            ("A", self.A, (d, d)),
            ("sigma", self.sigma, (d, d)),
            ("R", self.R, (d, d)),
            ("Q", self.Q, (d, d)),
            ("B", self.B, (d, d)),
            ("H", self.H, (d,)),
            ("Delta", self.Delta, (d,)),
            ("C", self.C, (N, d, d)),
            ("D", self.D, (N, d, d)),
        ):
            if arr.shape != shape:
                raise DimensionMismatch("shape_mismatch", f"{name}: expected {shape}, got {arr.shape}")

    @classmethod
    def build(
        cls,
        N: int,
        A: object,
        sigma: object,
        R: object,
        Q: object,
        B: object,
        H: object,
        Delta: object,
        C: object,
        D: object,
    ) -> "NearlyIdenticalGame":
        """C and D accept one shared d x d matrix or a per-player list."""
        A = as_matrix(A, "A")
        d = A.shape[0]
        return cls(
            N=int(N),
            d=d,
            A=A,
            sigma=as_matrix(sigma, "sigma", shape=(d, d)),
            R=as_matrix(R, "R", shape=(d, d)),
            Q=as_matrix(Q, "Q", shape=(d, d)),
            B=as_matrix(B, "B", shape=(d, d)),
            H=as_vector(H, d, "H"),
            Delta=as_vector(Delta, d, "Delta"),
            C=_per_player(C, int(N), d, "C"),
            D=_per_player(D, int(N), d, "D"),
        )

    @property
    def nu(self) -> np.ndarray:
        return _nu(self.sigma)


def _per_player(M: object, N: int, d: int, name: str) -> np.ndarray:
    arr = np.array(M, dtype=float)
    if arr.ndim <= 2:
        return np.repeat(as_matrix(arr, name, shape=(d, d))[None, :, :], N, axis=0)
    if arr.shape != (N, d, d):
        raise DimensionMismatch("shape_mismatch", f"{name}: expected {(N, d, d)}, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class MeanFieldGame:
    d: int
    A: np.ndarray
    sigma: np.ndarray
    R: np.ndarray
    Qhat: np.ndarray
    Bhat: np.ndarray
    Chat: np.ndarray
    Dhat: np.ndarray
    H: np.ndarray
    Delta: np.ndarray

    @classmethod
    def build(
        cls,
        A: object,
        sigma: object,
        R: object,
        Qhat: object,
        Bhat: object,
        Chat: object,
        Dhat: object,
        H: object,
        Delta: object,
    ) -> "MeanFieldGame":
        A = as_matrix(A, "A")
        d = A.shape[0]
        return cls(
            d=d,
            A=A,
            sigma=as_matrix(sigma, "sigma", shape=(d, d)),
            R=as_matrix(R, "R", shape=(d, d)),
            Qhat=as_matrix(Qhat, "Qhat", shape=(d, d)),
            Bhat=as_matrix(Bhat, "Bhat", shape=(d, d)),
            Chat=as_matrix(Chat, "Chat", shape=(d, d)),
            Dhat=as_matrix(Dhat, "Dhat", shape=(d, d)),
            H=as_vector(H, d, "H"),
            Delta=as_vector(Delta, d, "Delta"),
        )

    @property
    def nu(self) -> np.ndarray:
        return _nu(self.sigma)


AnyGame = Union[NPersonGame, NearlyIdenticalGame, MeanFieldGame]


# ──────────────────────────────────────────────────────────────
# Measures (first and second moments are all the costs see)
# ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class MeasureMoments:
    """mean and raw second moment E[xi xi^T]."""

    mean: np.ndarray
    second_moment: np.ndarray

    def __post_init__(self) -> None:
        cov = self.covariance
        w = np.linalg.eigvalsh(cov)
        if float(w[0]) < -1e-9 * (1.0 + float(np.max(np.abs(w)))):
            raise NotSPD("moments_not_psd", "second moment minus mean outer product is not PSD")

    @property
    def covariance(self) -> np.ndarray:
        return symmetrize(self.second_moment - np.outer(self.mean, self.mean))

    def centered(self, point: np.ndarray) -> np.ndarray:
        """E[(xi - point)(xi - point)^T]."""
        dm = self.mean - point
        return self.covariance + np.outer(dm, dm)

    @classmethod
    def gaussian(cls, mu: object, precision: object) -> "MeasureMoments":
        mu = as_vector(mu)
        cov = np.linalg.inv(as_matrix(precision, "precision", shape=(mu.size, mu.size)))
        return cls(mean=mu, second_moment=symmetrize(cov) + np.outer(mu, mu))

    @classmethod
    def point_mass(cls, x: object) -> "MeasureMoments":
        x = as_vector(x)
        return cls(mean=x, second_moment=np.outer(x, x))

    @classmethod
    def empirical(cls, points: object) -> "MeasureMoments":
        P = np.atleast_2d(np.array(points, dtype=float))
        return cls(mean=P.mean(axis=0), second_moment=symmetrize(P.T @ P / P.shape[0]))


# ──────────────────────────────────────────────────────────────
# Hypotheses
# ──────────────────────────────────────────────────────────────

@dataclass
class HypothesisReport:
    violations: List[str] = field(default_factory=list)
    relaxed: bool = False

    @property
    def ok(self) -> bool:
        return not self.violations


def _sigma_singular(sigma: np.ndarray) -> bool:
    return int(np.linalg.matrix_rank(sigma)) < sigma.shape[0]


def validate_H(game: AnyGame, relaxed: bool = False) -> HypothesisReport:
    """List every violated standing hypothesis; never raises."""
    rep = HypothesisReport(relaxed=relaxed)
    v = rep.violations

    if isinstance(game, NPersonGame):
        for i in range(game.N):
            p = i + 1
            A, R = game.A[i], game.R[i]
            if _sigma_singular(game.sigma[i]):
                v.append(f"sigma singular, player {p}")
            if not is_spd(R):
                v.append(f"R not SPD, player {p}")
            if not is_symmetric(game.Q[i]):
                v.append(f"Q not symmetric, player {p}")
            Qii = symmetrize(game.block(i, i, i))
            if relaxed:
                if not is_spd(Qii + symmetrize(A.T @ R @ A) / 2.0):
                    v.append(f"Q_ii + A^T R A/2 not SPD, player {p}")
            elif not is_spd(Qii):
                v.append(f"Q_ii not SPD, player {p}")
        return rep

    if isinstance(game, NearlyIdenticalGame):
        if _sigma_singular(game.sigma):
            v.append("sigma singular")
        if not is_spd(game.R):
            v.append("R not SPD")
        if relaxed:
            if not is_spd(symmetrize(game.Q) + symmetrize(game.A.T @ game.R @ game.A) / 2.0):
                v.append("Q + A^T R A/2 not SPD")
        elif not is_spd(game.Q):
            v.append("Q not SPD")
        if not is_symmetric(game.B):
            v.append("B not symmetric")
        for i in range(game.N):
            if not is_symmetric(game.C[i]):
                v.append(f"C not symmetric, player {i + 1}")
            if not is_symmetric(game.D[i]):
                v.append(f"D not symmetric, player {i + 1}")
        return rep

    if _sigma_singular(game.sigma):
        v.append("sigma singular")
    if not is_spd(game.R):
        v.append("R not SPD")
    if relaxed:
        if not is_spd(symmetrize(game.Qhat) + symmetrize(game.A.T @ game.R @ game.A) / 2.0):
            v.append("Qhat + A^T R A/2 not SPD")
    elif not is_spd(game.Qhat):
        v.append("Qhat not SPD")
    for name in ("Bhat", "Chat", "Dhat"):
        if not is_symmetric(getattr(game, name)):
            v.append(f"{name} not symmetric")
    return rep


# ──────────────────────────────────────────────────────────────
# Symmetry (S) and the nearly-identical reduction
# ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SymmetryDecomposition:
    B: np.ndarray      # (N, d, d)
    C: np.ndarray      # (N, d, d)
    D: np.ndarray      # (N, d, d); zero when N = 2
    Delta: np.ndarray  # (N, d)


@dataclass(frozen=True)
class SymmetryCheck:
    decomposition: Optional[SymmetryDecomposition] = None
    failure: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.decomposition is not None


def _close(X: np.ndarray, Y: np.ndarray, scale: float, rtol: float) -> bool:
    return float(np.max(np.abs(X - Y), initial=0.0)) <= rtol * scale


def check_symmetry_S(game: NPersonGame, rtol: Optional[float] = None) -> SymmetryCheck:
    """
    Extract B_i = 2 Q^i_ij, C_i = Q^i_jj, D_i = Q^i_jk, Delta_i = Xbar_i^j (j, k != i)
    when constant over the index ranges; otherwise name the first offending pair.
    """
    rtol = settings.block_rtol if rtol is None else rtol
    N, d = game.N, game.d
    B = np.zeros((N, d, d))
    C = np.zeros((N, d, d))
    D = np.zeros((N, d, d))
    Delta = np.zeros((N, d))

    for i in range(N):
        p = i + 1
        scale = 1.0 + float(np.max(np.abs(game.Q[i]), initial=0.0))
        others = [j for j in range(N) if j != i]
        j0 = others[0]

        for j in others[1:]:
            if not _close(game.ref(i, j), game.ref(i, j0), 1.0 + float(np.max(np.abs(game.Xbar[i]))), rtol):
                return SymmetryCheck(failure=f"player {p}: references Xbar_{p}^{j0 + 1}/Xbar_{p}^{j + 1} differ")
        for j in others:
            if not _close(game.block(i, i, j), game.block(i, j, i).T, scale, rtol):
                return SymmetryCheck(failure=f"player {p}: blocks ({p},{j + 1})/({j + 1},{p}) not transposes")
            if j != j0 and not _close(game.block(i, i, j), game.block(i, i, j0), scale, rtol):
                return SymmetryCheck(failure=f"player {p}: blocks ({p},{j0 + 1})/({p},{j + 1}) differ")
            if j != j0 and not _close(game.block(i, j, j), game.block(i, j0, j0), scale, rtol):
                return SymmetryCheck(
                    failure=f"player {p}: blocks ({j0 + 1},{j0 + 1})/({j + 1},{j + 1}) differ"
                )

        pairs = [(j, k) for j in others for k in others if j != k]
        if pairs:
            j1, k1 = pairs[0]
            for j, k in pairs[1:]:
                if not _close(game.block(i, j, k), game.block(i, j1, k1), scale, rtol):
                    return SymmetryCheck(
                        failure=f"player {p}: blocks ({j1 + 1},{k1 + 1})/({j + 1},{k + 1}) differ"
                    )
            D[i] = game.block(i, j1, k1)

        B[i] = 2.0 * game.block(i, i, j0)
        C[i] = game.block(i, j0, j0)
        Delta[i] = game.ref(i, j0)

    return SymmetryCheck(decomposition=SymmetryDecomposition(B=B, C=C, D=D, Delta=Delta))


def reduce_to_nearly_identical(game: NPersonGame, rtol: Optional[float] = None) -> NearlyIdenticalGame:
    rtol = settings.block_rtol if rtol is None else rtol
    chk = check_symmetry_S(game, rtol)
    if not chk.ok:
        raise NotNearlyIdentical("symmetry_s", f"assumption (S) fails: {chk.failure}")
    dec = chk.decomposition

    own_refs = np.stack([game.ref(i, i) for i in range(game.N)])
    own_Q = np.stack([game.block(i, i, i) for i in range(game.N)])
    for name, arr in (
        ("A", game.A),
        ("sigma", game.sigma),
        ("R", game.R),
        ("Q_ii", own_Q),
        ("B", dec.B),
        ("Xbar_i^i", own_refs),
        ("Delta", dec.Delta),
    ):
        scale = 1.0 + float(np.max(np.abs(arr), initial=0.0))
        for i in range(1, game.N):
            if not _close(arr[i], arr[0], scale, rtol):
                raise NotNearlyIdentical(
                    "field_differs", f"{name} differs between players 1 and {i + 1}"
                )

    return NearlyIdenticalGame(
        N=game.N,
        d=game.d,
        A=game.A[0].copy(),
        sigma=game.sigma[0].copy(),
        R=game.R[0].copy(),
        Q=own_Q[0].copy(),
        B=dec.B[0].copy(),
        H=own_refs[0].copy(),
        Delta=dec.Delta[0].copy(),
        C=dec.C.copy(),
        D=dec.D.copy(),
    )


def expand_nearly_identical(game: NearlyIdenticalGame) -> NPersonGame:
    N, d = game.N, game.d
    Q_blocks = []
    Xbar = []
    for i in range(N):
        rows = []
        for j in range(N):
            row = []
            for k in range(N):
                if j == i and k == i:
                    row.append(game.Q)
                elif j == i or k == i:
                    row.append(game.B / 2.0)
                elif j == k:
                    row.append(game.C[i])
                else:
                    row.append(game.D[i])
            rows.append(row)
        Q_blocks.append(rows)
        Xbar.append([game.H if j == i else game.Delta for j in range(N)])
    return NPersonGame.from_blocks(
        A=[game.A] * N, sigma=[game.sigma] * N, R=[game.R] * N, Q_blocks=Q_blocks, Xbar=Xbar
    )


# ──────────────────────────────────────────────────────────────
# Consensus constructors
# ──────────────────────────────────────────────────────────────

def build_consensus_game(N: int, P_N: object, A: object, sigma: object, R: object) -> NearlyIdenticalGame:
    """F^i = average over j != i of (X^i - X^j)^T P^N (X^i - X^j)."""
    P = as_matrix(P_N, "P_N")
    if not is_spd(P):
        raise NotSPD("consensus_p_not_spd", "P_N must be symmetric positive definite")
    d = P.shape[0]
    zero = np.zeros(d)
    return NearlyIdenticalGame.build(
        N=N,
        A=A,
        sigma=sigma,
        R=R,
        Q=P,
        B=-2.0 * P / (N - 1),
        H=zero,
        Delta=zero,
        C=P / (N - 1),
        D=np.zeros((d, d)),
    )


def build_consensus_n_person(
    N: int,
    P: object,
    A_list: Sequence[object],
    sigma_list: Sequence[object],
    R_list: Sequence[object],
) -> NPersonGame:
    """Consensus cost with player-specific dynamics and control costs."""
    P = as_matrix(P, "P")
    if not is_spd(P):
        raise NotSPD("consensus_p_not_spd", "P must be symmetric positive definite")
    d = P.shape[0]
    zero_block = np.zeros((d, d))
    Q_blocks = []
    for i in range(N):
        rows = []
        for j in range(N):
            row = []
            for k in range(N):
                if j == i and k == i:
                    row.append(P)
                elif j == i or k == i:
                    row.append(-P / (N - 1))
                elif j == k:
                    row.append(P / (N - 1))
                else:
                    row.append(zero_block)
            rows.append(row)
        Q_blocks.append(rows)
    Xbar = [[np.zeros(d)] * N for _ in range(N)]
    return NPersonGame.from_blocks(A=A_list, sigma=sigma_list, R=R_list, Q_blocks=Q_blocks, Xbar=Xbar)


def consensus_kernel(A_list: Sequence[object]) -> np.ndarray:
    """Orthonormal basis (columns) of the intersection of ker(A^alpha)."""
    stacked = np.vstack([as_matrix(A, f"A[{i}]") for i, A in enumerate(A_list)])
    return null_space_basis(stacked)


def build_consensus_mean_field(P_hat: object, A: object, sigma: object, R: object) -> MeanFieldGame:
    P = as_matrix(P_hat, "P_hat")
    if not is_spd(P):
        raise NotSPD("consensus_p_not_spd", "P_hat must be symmetric positive definite")
    d = P.shape[0]
    return MeanFieldGame.build(
        A=A,
        sigma=sigma,
        R=R,
        Qhat=P,
        Bhat=-2.0 * P,
        Chat=P,
        Dhat=np.zeros((d, d)),
        H=np.zeros(d),
        Delta=np.zeros(d),
    )


# ──────────────────────────────────────────────────────────────
# Costs
# ──────────────────────────────────────────────────────────────

def eval_F(game: NPersonGame, i: int, X: object) -> float:
    """F^i(X) = (X - Xbar_i)^T Q^i (X - Xbar_i) for the stacked state X."""
    x = as_vector(X, game.N * game.d, "X")
    w = x - game.Xbar[i]
    return float(w @ game.Q[i] @ w)


def eval_Vi(game: NearlyIdenticalGame, i: int, m: MeasureMoments, x: object) -> float:
    """Per-player operator V^i[m](x) with the (N-1) factors of the N-player game."""
    x = as_vector(x, game.d, "x")
    n1 = game.N - 1
    y = x - game.H
    mc = m.mean - game.Delta
    half_B = game.B / 2.0
    return float(
        y @ game.Q @ y
        + n1 * (y @ half_B @ mc + mc @ half_B @ y)
        + n1 * np.trace((game.C[i] - game.D[i]) @ m.centered(game.Delta))
        + (n1 * mc) @ game.D[i] @ (n1 * mc)
    )


def eval_Vhat(mfg: MeanFieldGame, m: MeasureMoments, x: object) -> Union[float, np.ndarray]:
    """
    V_hat[m](x) = (x-H)^T Qhat (x-H) + (x-H)^T Bhat/2 (mbar-Delta) + (mbar-Delta)^T Bhat/2 (x-H)
                  + E_m[(xi-Delta)^T Chat (xi-Delta)] + (mbar-Delta)^T Dhat (mbar-Delta).

    Accepts one point (d,) or a batch (n, d).
    """
    X = np.array(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != mfg.d:
        raise DimensionMismatch("shape_mismatch", f"x: expected dimension {mfg.d}, got {X.shape[1]}")
    Y = X - mfg.H
    mc = m.mean - mfg.Delta
    half_B = mfg.Bhat / 2.0
    const = float(np.trace(mfg.Chat @ m.centered(mfg.Delta)) + mc @ mfg.Dhat @ mc)
    vals = (
        np.einsum("ni,ij,nj->n", Y, mfg.Qhat, Y)
        + Y @ (half_B @ mc)
        + (mc @ half_B) @ Y.T
        + const
    )
    return float(vals[0]) if single else vals


def expect_Vhat(mfg: MeanFieldGame, m: MeasureMoments, n: MeasureMoments) -> float:
    """Integral of V_hat[m] against n, from the moments of n."""
    yc = n.mean - mfg.H
    mc = m.mean - mfg.Delta
    half_B = mfg.Bhat / 2.0
    return float(
        np.trace(mfg.Qhat @ n.centered(mfg.H))
        + yc @ half_B @ mc
        + mc @ half_B @ yc
        + np.trace(mfg.Chat @ m.centered(mfg.Delta))
        + mc @ mfg.Dhat @ mc
    )


def monotonicity_gap(mfg: MeanFieldGame, m: MeasureMoments, n: MeasureMoments) -> float:
    """Integral of (V_hat[m] - V_hat[n]) d(m - n) = (mbar - nbar)^T Bhat (mbar - nbar)."""
    dm = m.mean - n.mean
    return float(dm @ symmetrize(mfg.Bhat) @ dm)


# ──────────────────────────────────────────────────────────────
# Scaling families
# ──────────────────────────────────────────────────────────────

COEFFICIENTS = ("Q", "B", "C", "D")


@dataclass(frozen=True)
class ScalingRule:
    """
    Default: Q^N = Qhat, B^N = Bhat/(N-1), C_i^N = Chat/(N-1), D_i^N = Dhat/(N-1)^2.

    perturb: coefficients multiplied by (1 + 1/N).
    frozen: coefficients kept at their limit value for every N (breaks the scaling).
    heterogeneity: C_i^N picks up the factor (1 + h (i+1)/N^2).
    """

    perturb: FrozenSet[str] = frozenset()
    frozen: FrozenSet[str] = frozenset()
    heterogeneity: float = 0.0

    def __post_init__(self) -> None:
        bad = (set(self.perturb) | set(self.frozen)) - set(COEFFICIENTS)
        if bad:
            raise DimensionMismatch("scaling_rule", f"unknown coefficients in scaling rule: {sorted(bad)}")

    def factor(self, name: str, N: int) -> float:
        return 1.0 + 1.0 / N if name in self.perturb else 1.0


@dataclass(frozen=True)
class ScalingFamily:
    target: MeanFieldGame
    rule: ScalingRule = ScalingRule()

    def game(self, N: int) -> NearlyIdenticalGame:
        if N < 2:
            raise DimensionMismatch("bad_sizes", f"scaling family needs N >= 2, got {N}")
        t, rule = self.target, self.rule
        n1 = float(N - 1)

        def scaled(name: str, M: np.ndarray, power: int) -> np.ndarray:
            base = M if name in rule.frozen else M / n1 ** power
            return rule.factor(name, N) * base

        C_shared = scaled("C", t.Chat, 1)
        C = np.stack([C_shared * (1.0 + rule.heterogeneity * (i + 1) / N ** 2) for i in range(N)])
        D = np.repeat(scaled("D", t.Dhat, 2)[None, :, :], N, axis=0)

        return NearlyIdenticalGame(
            N=N,
            d=t.d,
            A=t.A,
            sigma=t.sigma,
            R=t.R,
            Q=rule.factor("Q", N) * t.Qhat,
            B=scaled("B", t.Bhat, 1),
            H=t.H,
            Delta=t.Delta,
            C=C,
            D=D,
        )

    def games(self, N_list: Iterable[int]) -> Iterator[NearlyIdenticalGame]:
        for N in N_list:
            yield self.game(N)


def scaled_family(mfg: MeanFieldGame, rule: Optional[ScalingRule] = None) -> ScalingFamily:
    return ScalingFamily(target=mfg, rule=rule or ScalingRule())


def consensus_family(
    P_hat: object, A: object, sigma: object, R: object, schedule: str = "harmonic"
) -> ScalingFamily:
    """P^N = P_hat ("constant") or (1 + 1/N) P_hat ("harmonic") through the consensus blocks."""
    if schedule not in ("constant", "harmonic"):
        raise DimensionMismatch("schedule", f"unknown consensus schedule {schedule!r}")
    perturb = frozenset(COEFFICIENTS) if schedule == "harmonic" else frozenset()
    return ScalingFamily(target=build_consensus_mean_field(P_hat, A, sigma, R), rule=ScalingRule(perturb=perturb))
