# lqmfg/services/riccati.py
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from lqmfg.core.errors import DimensionMismatch, IllConditioned, NotPD
from lqmfg.core.matlin import as_matrix, is_spd, require_spd, require_symmetric, spd_sqrt, symmetrize
from lqmfg.core.settings import settings

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AREProblem:
    """
    Y Rcal Y = Qcal, with Rcal = nu R nu / 2 and Qcal = A^T R A / 2 + Q_ii.
    """

    Rcal: np.ndarray
    Qcal: np.ndarray

    @property
    def d(self) -> int:
        return int(self.Rcal.shape[0])

    @classmethod
    def from_player(cls, A: np.ndarray, nu: np.ndarray, R: np.ndarray, Q_own: np.ndarray) -> "AREProblem":
        return cls(
            Rcal=symmetrize(nu @ R @ nu) / 2.0,
            Qcal=symmetrize(A.T @ R @ A) / 2.0 + symmetrize(Q_own),
        )


@dataclass(frozen=True)
class HamiltonianBlock:
    H: np.ndarray

    @property
    def d(self) -> int:
        return int(self.H.shape[0] // 2)


def build_hamiltonian(p: AREProblem) -> HamiltonianBlock:
    Rcal = as_matrix(p.Rcal, "Rcal")
    Qcal = as_matrix(p.Qcal, "Qcal")
    if Rcal.shape != Qcal.shape or Rcal.shape[0] != Rcal.shape[1]:
        raise DimensionMismatch(
            "are_shape", f"Rcal {Rcal.shape} and Qcal {Qcal.shape} must be equal square shapes"
        )
    d = Rcal.shape[0]
    H = np.zeros((2 * d, 2 * d))
    H[:d, d:] = Rcal
    H[d:, :d] = Qcal
    return HamiltonianBlock(H=H)


def solve_are_spd(
    p: AREProblem,
    *,
    cond_max: Optional[float] = None,
    imag_tol: Optional[float] = None,
    residual_rtol: Optional[float] = None,
) -> np.ndarray:
    """
    Unique SPD solution of Y Rcal Y = Qcal from the positive-spectrum
    invariant subspace of [[0, Rcal], [Qcal, 0]]: Y = X2 X1^-1.
    """
    cond_max = settings.are_cond_max if cond_max is None else cond_max
    imag_tol = settings.imag_tol if imag_tol is None else imag_tol
    residual_rtol = settings.are_residual_rtol if residual_rtol is None else residual_rtol

    hb = build_hamiltonian(p)
    d = hb.d
    Rcal = require_spd(as_matrix(p.Rcal), "Rcal")
    Qcal = require_symmetric(as_matrix(p.Qcal), "Qcal")
    if not is_spd(Qcal):
        raise NotPD("qcal_not_pd", "Qcal must be positive definite for the SPD branch")

    w = np.linalg.eigvals(hb.H)
    spread = 1.0 + float(np.max(np.abs(w)))
    if float(np.max(np.abs(w.imag))) > imag_tol * spread:
        raise NotPD("complex_spectrum", "Hamiltonian spectrum is not real; Qcal is not positive definite")

    # ordered real Schur form: the leading d columns span the positive-spectrum subspace
    _, Zs, sdim = scipy.linalg.schur(hb.H, output="real", sort="rhp")
    if sdim != d:
        raise IllConditioned("no_stable_split", f"Hamiltonian has {sdim} positive eigenvalues, expected {d}")

    X1, X2 = Zs[:d, :d], Zs[d:, :d]
    cond = float(np.linalg.cond(X1))
    if not np.isfinite(cond) or cond > cond_max:
        raise IllConditioned("x1_ill_conditioned", f"cond(X1) = {cond:.3e} exceeds {cond_max:.1e}")

    Y = symmetrize(np.linalg.solve(X1.T, X2.T).T)

    resid = float(np.linalg.norm(Y @ Rcal @ Y - Qcal, 2))
    # backward-error scale of the quadratic form
    scale = float(np.linalg.norm(Qcal, 2)) + float(np.linalg.norm(Y, 2)) ** 2 * float(np.linalg.norm(Rcal, 2))
    if resid > residual_rtol * scale:
        raise IllConditioned("are_residual", f"ARE residual {resid:.3e} too large (scale {scale:.3e})")
    if not is_spd(Y):
        raise IllConditioned("are_not_spd", "invariant-subspace solution is not positive definite")

    logger.debug("[riccati] solved d=%d cond(X1)=%.2e residual=%.2e", d, cond, resid)
    return Y


def closed_form_sigma(A: np.ndarray, Q: np.ndarray, r: float, nubar: float) -> np.ndarray:
    """Sigma = (1/nubar) sqrt((2/r) Q + A^2) for symmetric A, nu = nubar I, R = r I."""
    A = require_symmetric(as_matrix(A, "A"), "A")
    Q = as_matrix(Q, "Q", shape=A.shape)
    if r <= 0 or nubar <= 0:
        raise NotPD("nonpositive_scalar", "r and nubar must be positive")
    return spd_sqrt((2.0 / r) * Q + A @ A) / nubar


def sylvester_residual(Y: np.ndarray, nu: np.ndarray, R: np.ndarray, A: np.ndarray) -> float:
    """|Y nu R - R nu Y - (R A - A^T R)|_2, i.e. the skew part of R (nu Y + A) doubled."""
    Y = as_matrix(Y, "Y")
    d = Y.shape[0]
    nu = as_matrix(nu, "nu", shape=(d, d))
    R = as_matrix(R, "R", shape=(d, d))
    A = as_matrix(A, "A", shape=(d, d))
    S = Y @ nu @ R - R @ nu @ Y - (R @ A - A.T @ R)
    return float(np.linalg.norm(S, 2))


def are_residual(Y: np.ndarray, p: AREProblem) -> float:
    return float(np.linalg.norm(Y @ p.Rcal @ Y - p.Qcal, 2))
