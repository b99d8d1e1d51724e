from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg

from lqmfg.core.errors import DimensionMismatch, NonSymmetric, NotSPD, Unstable
from lqmfg.core.settings import settings


# ──────────────────────────────────────────────────────────────
# Coercion
# ──────────────────────────────────────────────────────────────

def as_matrix(M: object, name: str = "M", shape: Optional[tuple[int, int]] = None) -> np.ndarray:
    """Float64 2-D copy with finite entries; scalars become 1x1."""
    arr = np.array(M, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionMismatch("not_a_matrix", f"{name}: expected a 2-D array, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise DimensionMismatch("non_finite", f"{name}: entries must be finite")
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionMismatch(
            "shape_mismatch", f"{name}: expected shape {tuple(shape)}, got {arr.shape}"
        )
    return arr


def as_vector(v: object, d: Optional[int] = None, name: str = "v") -> np.ndarray:
    arr = np.array(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise DimensionMismatch("non_finite", f"{name}: entries must be finite")
    if d is not None and arr.shape[0] != d:
        raise DimensionMismatch("shape_mismatch", f"{name}: expected length {d}, got {arr.shape[0]}")
    return arr


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _sym_scale(M: np.ndarray) -> float:
    return 1.0 + float(np.max(np.abs(M))) if M.size else 1.0


# ──────────────────────────────────────────────────────────────
# Symmetry / definiteness
# ──────────────────────────────────────────────────────────────

def is_symmetric(M: np.ndarray, rtol: Optional[float] = None) -> bool:
    rtol = settings.sym_rtol if rtol is None else rtol
    if M.shape[0] != M.shape[1]:
        return False
    return float(np.max(np.abs(M - M.T), initial=0.0)) <= rtol * _sym_scale(M)


def require_symmetric(M: np.ndarray, name: str = "M", rtol: Optional[float] = None) -> np.ndarray:
    if not is_symmetric(M, rtol):
        gap = float(np.max(np.abs(M - M.T))) if M.shape[0] == M.shape[1] else float("inf")
        raise NonSymmetric("non_symmetric", f"{name}: asymmetry {gap:.3e} exceeds tolerance")
    return symmetrize(M)


def min_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(M))[0])


def is_spd(M: np.ndarray, rtol: Optional[float] = None) -> bool:
    rtol = settings.spd_rtol if rtol is None else rtol
    if not is_symmetric(M):
        return False
    w = np.linalg.eigvalsh(symmetrize(M))
    return float(w[0]) > rtol * (1.0 + float(np.max(np.abs(w))))


def require_spd(M: np.ndarray, name: str = "M", rtol: Optional[float] = None) -> np.ndarray:
    if not is_symmetric(M):
        raise NotSPD("not_symmetric", f"{name}: not symmetric")
    if not is_spd(M, rtol):
        raise NotSPD("not_spd", f"{name}: minimum eigenvalue {min_eig(M):.3e} is not positive")
    return symmetrize(M)


def is_psd(M: np.ndarray, rtol: Optional[float] = None) -> bool:
    rtol = settings.spd_rtol if rtol is None else rtol
    w = np.linalg.eigvalsh(symmetrize(M))
    return float(w[0]) >= -rtol * (1.0 + float(np.max(np.abs(w), initial=0.0)))


# ──────────────────────────────────────────────────────────────
# Spectra
# ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: List[complex]
    min_real_part: float
    max_abs: float
    is_symmetric: bool
    is_spd: bool


def spectral_report(M: np.ndarray) -> SpectralReport:
    M = as_matrix(M)
    eig = np.linalg.eigvals(M)
    sym = is_symmetric(M)
    return SpectralReport(
        eigenvalues=[complex(z) for z in eig],
        min_real_part=float(np.min(eig.real)),
        max_abs=float(np.max(np.abs(eig))),
        is_symmetric=sym,
        is_spd=sym and is_spd(M),
    )


def spectral_norm(M: np.ndarray) -> float:
    """max |lambda| over the (real) spectrum of a symmetric matrix."""
    S = require_symmetric(as_matrix(M))
    return float(np.max(np.abs(np.linalg.eigvalsh(S))))


def max_real_part(M: np.ndarray) -> float:
    return float(np.max(np.linalg.eigvals(M).real))


def is_stable(M: np.ndarray, tol: Optional[float] = None) -> bool:
    tol = settings.stability_tol if tol is None else tol
    return max_real_part(M) < -tol


def require_stable(M: np.ndarray, name: str = "M", tol: Optional[float] = None) -> None:
    if not is_stable(M, tol):
        raise Unstable(
            "unstable", f"{name}: eigenvalue with real part {max_real_part(M):.3e} is not negative"
        )


# ──────────────────────────────────────────────────────────────
# Square roots / inverses
# ──────────────────────────────────────────────────────────────

def spd_sqrt(M: np.ndarray) -> np.ndarray:
    S = require_spd(as_matrix(M), "spd_sqrt input")
    w, V = np.linalg.eigh(S)
    return symmetrize((V * np.sqrt(w)) @ V.T)


def spd_inv(M: np.ndarray) -> np.ndarray:
    S = require_spd(as_matrix(M), "spd_inv input")
    c, low = scipy.linalg.cho_factor(S)
    return symmetrize(scipy.linalg.cho_solve((c, low), np.eye(S.shape[0])))


# ──────────────────────────────────────────────────────────────
# Lyapunov
# ──────────────────────────────────────────────────────────────

def solve_lyapunov(M: np.ndarray, C: np.ndarray) -> np.ndarray:
    """
    Unique V with M V + V M^T + C = 0 for stable M.

    Row-major vectorization: vec(MV) = (M kron I) vec(V), vec(V M^T) = (I kron M) vec(V).
    Larger problems go to Bartels-Stewart in SciPy.
    """
    M = as_matrix(M, "M")
    d = M.shape[0]
    C = require_symmetric(as_matrix(C, "C", shape=(d, d)), "C")
    require_stable(M, "M")

    if d <= settings.lyapunov_kron_max_d:
        eye = np.eye(d)
        L = np.kron(M, eye) + np.kron(eye, M)
        V = np.linalg.solve(L, -C.reshape(-1)).reshape(d, d)
    else:
        V = scipy.linalg.solve_continuous_lyapunov(M, -C)
    return symmetrize(V)


# ──────────────────────────────────────────────────────────────
# Rank consistency (Rouché–Capelli)
# ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class RankReport:
    rank_B: int
    rank_BP: int
    cutoff: float

    @property
    def consistent(self) -> bool:
        return self.rank_B == self.rank_BP


def rank_consistent(B: np.ndarray, P: Sequence[float], rtol: Optional[float] = None) -> RankReport:
    """
    Ranks of B and [B, P] from singular values with one shared cutoff
    rtol * sigma_max([B, P]) * max(rows, cols).
    """
    rtol = settings.rank_rtol if rtol is None else rtol
    B = as_matrix(B, "B")
    if B.shape[0] != B.shape[1]:
        raise DimensionMismatch("not_square", f"B: expected square, got {B.shape}")
    P = as_vector(P, B.shape[0], "P")
    BP = np.column_stack([B, P])

    s_BP = np.linalg.svd(BP, compute_uv=False)
    s_B = np.linalg.svd(B, compute_uv=False)
    smax = float(s_BP[0]) if s_BP.size else 0.0
    cutoff = rtol * smax * max(BP.shape)

    return RankReport(
        rank_B=int(np.sum(s_B > cutoff)),
        rank_BP=int(np.sum(s_BP > cutoff)),
        cutoff=cutoff,
    )


def null_space_basis(
    B: np.ndarray, rtol: Optional[float] = None, cutoff: Optional[float] = None
) -> np.ndarray:
    """
    Orthonormal basis of ker(B) as columns. Pass the RankReport cutoff to
    agree with rank_consistent; otherwise rtol * sigma_max(B) * max(rows, cols).
    """
    rtol = settings.rank_rtol if rtol is None else rtol
    B = as_matrix(B, "B")
    _, s, Vh = np.linalg.svd(B)
    if cutoff is None:
        cutoff = rtol * (float(s[0]) if s.size else 0.0) * max(B.shape)
    rank = int(np.sum(s > cutoff))
    return Vh[rank:].T.copy()


def min_norm_solve(
    B: np.ndarray, P: np.ndarray, rtol: Optional[float] = None, cutoff: Optional[float] = None
) -> np.ndarray:
    rtol = settings.rank_rtol if rtol is None else rtol
    B = as_matrix(B, "B")
    if cutoff is None:
        return np.linalg.pinv(B, rcond=rtol * max(B.shape)) @ P
    U, s, Vh = np.linalg.svd(B)
    keep = s > cutoff
    return Vh[keep].T @ ((U[:, keep].T @ P) / s[keep])
