# lqmfg/services/symmetrize.py
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from lqmfg.core.errors import Defective, NotSymmetrizable, StructureMismatch
from lqmfg.core.matlin import as_matrix, is_spd, null_space_basis, symmetrize
from lqmfg.core.settings import settings
from lqmfg.services.games import NearlyIdenticalGame
from lqmfg.services.synthesis import (
    AffineFeedback,
    EquilibriumSolution,
    GaussianMeasure,
    PlayerSolution,
    QuadraticValue,
    SolutionFamily,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Symmetrizer:
    """
    Y SPD with Y M = M^T Y, factored as Y = P^T Z^2 P (P orthogonal, Z diagonal).
    The change of coordinates is xi = T x with T = Z P.
    """

    M: np.ndarray
    Y: np.ndarray
    P_orth: np.ndarray
    Z: np.ndarray

    @classmethod
    def from_Y(cls, M: np.ndarray, Y: np.ndarray) -> "Symmetrizer":
        w, W = np.linalg.eigh(symmetrize(Y))
        return cls(M=M, Y=symmetrize(Y), P_orth=W.T, Z=np.diag(np.sqrt(w)))

    @property
    def T(self) -> np.ndarray:
        return self.Z @ self.P_orth

    @property
    def T_inv(self) -> np.ndarray:
        return self.P_orth.T @ np.diag(1.0 / np.diag(self.Z))

    @property
    def transformed_drift(self) -> np.ndarray:
        """Z^-1 P Y M P^T Z^-1 (= T M T^-1)."""
        Zi = np.diag(1.0 / np.diag(self.Z))
        return Zi @ self.P_orth @ self.Y @ self.M @ self.P_orth.T @ Zi

    def residual(self, M: Optional[np.ndarray] = None) -> float:
        M = self.M if M is None else M
        return float(np.linalg.norm(self.Y @ M - M.T @ self.Y, 2))


def _symmetric_basis(d: int) -> np.ndarray:
    """(k, d, d) basis of symmetric matrices."""
    out = []
    for a in range(d):
        for b in range(a, d):
            E = np.zeros((d, d))
            E[a, b] = E[b, a] = 1.0
            out.append(E)
    return np.stack(out)


def _commuting_cone(M: np.ndarray) -> np.ndarray:
    """(k, d, d) basis of {Y = Y^T : Y M = M^T Y}."""
    E = _symmetric_basis(M.shape[0])
    L = np.stack([(Ek @ M - M.T @ Ek).reshape(-1) for Ek in E], axis=1)
    coeffs = null_space_basis(L)
    return np.einsum("kab,kn->nab", E, coeffs)


def find_symmetrizer(M: object, cond_max: Optional[float] = None) -> Symmetrizer:
    """
    SPD Y with Y M = M^T Y for a non-defective M with real spectrum.

    Solves the linear constraint, then maximizes the smallest eigenvalue of a
    unit-Frobenius combination of the solution basis, starting from
    V^-T V^-1 built on the right eigenvectors.
    """
    cond_max = settings.symmetrizer_cond_max if cond_max is None else cond_max
    M = as_matrix(M, "M")
    d = M.shape[0]

    w, V = np.linalg.eig(M)
    cond = float(np.linalg.cond(V))
    if not np.isfinite(cond) or cond > cond_max:
        raise Defective("defective", f"eigenvector matrix condition {cond:.3e} exceeds {cond_max:.1e}")
    spread = 1.0 + float(np.max(np.abs(w)))
    if float(np.max(np.abs(w.imag))) > settings.imag_tol * spread:
        raise NotSymmetrizable(
            "complex_spectrum", "drift has non-real eigenvalues; no SPD symmetrizer exists"
        )

    Vinv = np.linalg.inv(V.real)
    Y0 = symmetrize(Vinv.T @ Vinv)

    basis = _commuting_cone(M)
    k = basis.shape[0]
    flat = basis.reshape(k, -1).T
    c0, *_ = np.linalg.lstsq(flat, Y0.reshape(-1), rcond=None)

    def combine(c: np.ndarray) -> np.ndarray:
        Y = np.einsum("k,kab->ab", c, basis)
        return Y * (np.sqrt(d) / max(float(np.linalg.norm(Y)), 1e-300))

    def objective(c: np.ndarray) -> float:
        return -float(np.linalg.eigvalsh(combine(c))[0])

    best = c0
    if k > 1:
        res = minimize(objective, c0, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
        if res.fun <= objective(c0):
            best = res.x

    Y = symmetrize(combine(best))
    if not is_spd(Y):
        Y = symmetrize(combine(c0))
    if not is_spd(Y):
        raise NotSymmetrizable("no_spd_point", "no SPD point found in the symmetrizer cone")

    sym = Symmetrizer.from_Y(M, Y)
    tol = settings.sym_rtol * (1.0 + float(np.linalg.norm(M, 2)))
    if sym.residual() > tol:
        raise NotSymmetrizable("symmetrizer_residual", f"|YM - M^T Y| = {sym.residual():.3e} exceeds {tol:.3e}")
    logger.debug("[symmetrize] d=%d cone_dim=%d cond(V)=%.2e", d, k, cond)
    return sym


def common_symmetrizer(A_list: Sequence[object]) -> Symmetrizer:
    """Symmetrizer of A^1 that also symmetrizes every other drift, or StructureMismatch."""
    mats = [as_matrix(A, f"A[{i}]") for i, A in enumerate(A_list)]
    sym = find_symmetrizer(mats[0])
    for i, A in enumerate(mats[1:], start=2):
        tol = settings.structure_rtol * (1.0 + float(np.linalg.norm(A, 2)))
        if sym.residual(A) > tol:
            raise StructureMismatch(
                "no_common_symmetrizer", f"symmetrizer of A^1 does not symmetrize A^{i}"
            )
    return sym


# ──────────────────────────────────────────────────────────────
# Structured games (sigma = s P^T Z^-1, R = r Y)
# ──────────────────────────────────────────────────────────────

def structured_game(
    A: object,
    Q: object,
    B: object,
    C: object,
    D: object,
    H: object,
    Delta: object,
    N: int,
    s: float,
    r: float,
) -> Tuple[NearlyIdenticalGame, Symmetrizer]:
    sym = find_symmetrizer(A)
    Zi = np.diag(1.0 / np.diag(sym.Z))
    game = NearlyIdenticalGame.build(
        N=N,
        A=sym.M,
        sigma=s * sym.P_orth.T @ Zi,
        R=r * sym.Y,
        Q=Q,
        B=B,
        H=H,
        Delta=Delta,
        C=C,
        D=D,
    )
    return game, sym


def _congruence(T_inv: np.ndarray, M: np.ndarray) -> np.ndarray:
    return symmetrize(T_inv.T @ M @ T_inv)


def transform_game(
    game: NearlyIdenticalGame,
    s: float,
    r: float,
    symmetrizer: Optional[Symmetrizer] = None,
) -> Tuple[NearlyIdenticalGame, Symmetrizer]:
    """
    Rewrite the game in xi = Z P x. Requires R = r Y for a symmetrizer Y of A and
    sigma sigma^T = s^2 Y^-1 (sigma = s P^T Z^-1 up to a right orthogonal factor).
    Without an explicit symmetrizer, Y is read off R / r.
    """
    rtol = settings.structure_rtol
    A = game.A
    if symmetrizer is None:
        Y = symmetrize(game.R / r)
        if not is_spd(Y):
            raise StructureMismatch("r_structure", "R / r is not positive definite")
        symmetrizer = Symmetrizer.from_Y(A, Y)
        if symmetrizer.residual() > rtol * (1.0 + float(np.linalg.norm(A, 2))) * (1.0 + float(np.linalg.norm(Y, 2))):
            raise StructureMismatch("r_structure", "R is not r times a symmetrizer of A")
    else:
        if float(np.max(np.abs(game.R - r * symmetrizer.Y))) > rtol * (1.0 + float(np.max(np.abs(game.R)))):
            raise StructureMismatch("r_structure", "R does not equal r Y")

    sym = symmetrizer
    target = s * s * np.linalg.inv(sym.Y)
    if float(np.max(np.abs(game.sigma @ game.sigma.T - target))) > rtol * (1.0 + float(np.max(np.abs(target)))):
        raise StructureMismatch("sigma_structure", "sigma is not s P^T Z^-1")

    T, Ti = sym.T, sym.T_inv
    At = T @ A @ Ti
    if float(np.max(np.abs(At - At.T))) > 1e-10 * (1.0 + float(np.max(np.abs(At)))):
        raise StructureMismatch("drift_not_symmetric", "transformed drift is not symmetric")

    out = NearlyIdenticalGame(
        N=game.N,
        d=game.d,
        A=symmetrize(At),
        sigma=T @ game.sigma,
        R=_congruence(Ti, game.R),
        Q=_congruence(Ti, game.Q),
        B=_congruence(Ti, game.B),
        H=T @ game.H,
        Delta=T @ game.Delta,
        C=np.stack([_congruence(Ti, C) for C in game.C]),
        D=np.stack([_congruence(Ti, D) for D in game.D]),
    )
    logger.info("[symmetrize] transformed game to symmetric drift (d=%d)", game.d)
    return out, sym


def pull_back(solution: EquilibriumSolution, T: Symmetrizer) -> EquilibriumSolution:
    """Map a xi-coordinate solution back to x = (Z P)^-1 xi."""
    Tm, Ti = T.T, T.T_inv
    players = []
    for p in solution.players:
        players.append(
            PlayerSolution(
                value=QuadraticValue(
                    Lambda=symmetrize(Tm.T @ p.value.Lambda @ Tm),
                    rho=Tm.T @ p.value.rho,
                ),
                measure=GaussianMeasure(
                    mu=Ti @ p.measure.mu,
                    Sigma=symmetrize(Tm.T @ p.measure.Sigma @ Tm),
                ),
                lam=p.lam,
                feedback=AffineFeedback(K=Ti @ p.feedback.K @ Tm, c=Ti @ p.feedback.c),
            )
        )
    family = solution.family
    if family is not None:
        # keep the particular orthogonal to the re-orthonormalized basis; the
        # shift and the triangular factor move into the coefficients
        Qb, Rb = np.linalg.qr(Ti @ family.basis)
        base = Ti @ family.particular
        shift = Qb.T @ base
        t = np.zeros(family.dim) if family.coefficients is None else family.coefficients
        family = SolutionFamily(
            particular=base - Qb @ shift,
            basis=Qb,
            selected_member=family.selected_member,
            coefficients=shift + Rb @ t,
        )
    return replace(solution, players=tuple(players), family=family)
