from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from lqmfg.services.games import MeanFieldGame, NearlyIdenticalGame, NPersonGame

SPECS_DIR = Path(__file__).resolve().parent.parent / "lqmfg" / "data" / "specs"
SQRT2 = float(np.sqrt(2.0))


def spec_path(name: str) -> str:
    return str(SPECS_DIR / name)


def random_spd(rng: np.random.Generator, d: int, lo: float = 0.5, hi: float = 3.0) -> np.ndarray:
    Qo, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return Qo @ np.diag(rng.uniform(lo, hi, d)) @ Qo.T


def random_symmetric(rng: np.random.Generator, d: int) -> np.ndarray:
    G = rng.standard_normal((d, d))
    return 0.5 * (G + G.T)


def random_stable(rng: np.random.Generator, d: int, margin: float = 0.5) -> np.ndarray:
    G = rng.standard_normal((d, d))
    return G - (float(np.max(np.linalg.eigvals(G).real)) + margin) * np.eye(d)


def random_real_spectrum(rng: np.random.Generator, d: int) -> np.ndarray:
    """Non-defective drift with well-separated real eigenvalues."""
    while True:
        V = rng.standard_normal((d, d)) + 2.0 * np.eye(d)
        if np.linalg.cond(V) < 50:
            break
    eigs = np.linspace(-1.5, 1.0, d) + rng.uniform(-0.1, 0.1, d)
    return V @ np.diag(eigs) @ np.linalg.inv(V)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def canonical_mfg() -> MeanFieldGame:
    """d=1, A=0, nu=1, R=1, Qhat=1, no coupling."""
    return MeanFieldGame.build(
        A=[[0.0]], sigma=[[SQRT2]], R=[[1.0]], Qhat=[[1.0]],
        Bhat=[[0.0]], Chat=[[0.0]], Dhat=[[0.0]], H=[0.0], Delta=[0.0],
    )


@pytest.fixture
def symmetric_ni() -> NearlyIdenticalGame:
    """Symmetric drift, nu = I/2, R = I, B PSD: existence and uniqueness hold."""
    return NearlyIdenticalGame.build(
        N=3,
        A=[[-0.5, 0.2], [0.2, 0.3]],
        sigma=np.eye(2),
        R=np.eye(2),
        Q=[[2.0, 0.3], [0.3, 1.5]],
        B=[[0.4, 0.0], [0.0, 0.2]],
        H=[1.0, -1.0],
        Delta=[0.5, 0.5],
        C=[[0.3, 0.0], [0.0, 0.3]],
        D=[[0.1, 0.0], [0.0, 0.1]],
    )


@pytest.fixture
def two_player_identity() -> NPersonGame:
    """d=1, N=2, A=0, nu=1, R=1, identity blocks, zero references."""
    one, zero = [[1.0]], [[0.0]]
    blocks = [[one, zero], [zero, one]]
    return NPersonGame.from_blocks(
        A=[[[0.0]]] * 2,
        sigma=[[[SQRT2]]] * 2,
        R=[[[1.0]]] * 2,
        Q_blocks=[blocks, blocks],
        Xbar=[[[0.0], [0.0]], [[0.0], [0.0]]],
    )
