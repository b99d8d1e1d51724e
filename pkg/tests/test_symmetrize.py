from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lqmfg.core.errors import Defective, NotSymmetrizable, StructureMismatch
from lqmfg.core.matlin import is_spd
from lqmfg.services.games import NearlyIdenticalGame
from lqmfg.services.riccati import closed_form_sigma
from lqmfg.services.symmetrize import (
    common_symmetrizer,
    find_symmetrizer,
    pull_back,
    structured_game,
    transform_game,
)
from lqmfg.services.synthesis import family_member, solve_nearly_identical
from tests.conftest import random_real_spectrum, random_spd

seeds = st.integers(min_value=0, max_value=2**32 - 1)

SKEWED = np.array([[0.0, 1.0], [2.0, 0.0]])


def test_symmetrizer_of_skewed_swap():
    sym = find_symmetrizer(SKEWED)
    Y = sym.Y
    assert is_spd(Y)
    assert sym.residual() < 1e-10
    assert Y[0, 0] / Y[1, 1] == pytest.approx(2.0, rel=1e-4)
    assert abs(Y[0, 1]) / Y[1, 1] < 1e-3


def test_symmetric_drift_gets_identity_like_symmetrizer():
    sym = find_symmetrizer(np.diag([1.0, 2.0]))
    np.testing.assert_allclose(sym.Y, np.eye(2), atol=1e-5)


def test_complex_spectrum_is_not_symmetrizable():
    with pytest.raises(NotSymmetrizable):
        find_symmetrizer([[0.0, -1.0], [1.0, 0.0]])


def test_jordan_block_is_defective():
    with pytest.raises(Defective):
        find_symmetrizer([[1.0, 1.0], [0.0, 1.0]])


@settings(max_examples=25, deadline=None)
@given(seed=seeds, d=st.integers(min_value=2, max_value=4))
def test_random_real_spectrum_symmetrizes(seed, d):
    rng = np.random.default_rng(seed)
    M = random_real_spectrum(rng, d)
    sym = find_symmetrizer(M)

    assert is_spd(sym.Y)
    assert sym.residual() < 1e-8 * (1.0 + np.linalg.norm(M, 2))
    np.testing.assert_allclose(sym.T @ sym.T_inv, np.eye(d), atol=1e-8)
    Mt = sym.transformed_drift
    np.testing.assert_allclose(Mt, Mt.T, atol=1e-7 * (1.0 + np.abs(Mt).max()))
    np.testing.assert_allclose(Mt, sym.T @ M @ sym.T_inv, atol=1e-7 * (1.0 + np.abs(Mt).max()))


def test_common_symmetrizer_for_polynomial_family():
    A2 = SKEWED @ SKEWED + 3.0 * SKEWED
    sym = common_symmetrizer([SKEWED, A2])
    assert sym.residual(A2) < 1e-8


def test_common_symmetrizer_mismatch():
    with pytest.raises(StructureMismatch):
        common_symmetrizer([np.diag([1.0, 2.0]), [[0.0, 1.0], [0.0, 0.0]]])


# ──────────────────────────────────────────────────────────────
# Structured games
# ──────────────────────────────────────────────────────────────

def _structured(s: float = 1.2, r: float = 0.8):
    rng = np.random.default_rng(11)
    return structured_game(
        A=SKEWED,
        Q=random_spd(rng, 2),
        B=random_spd(rng, 2, lo=0.1, hi=0.5),
        C=0.3 * np.eye(2),
        D=np.array([[0.1, 0.05], [0.05, 0.2]]),
        H=[1.0, -0.5],
        Delta=[0.25, 0.75],
        N=3,
        s=s,
        r=r,
    )


def test_transformed_game_has_symmetric_isotropic_data():
    s, r = 1.2, 0.8
    game, sym = _structured(s, r)
    out, _ = transform_game(game, s, r)
    np.testing.assert_allclose(out.A, out.A.T, atol=1e-10)
    np.testing.assert_allclose(out.nu, (s * s / 2.0) * np.eye(2), atol=1e-9)
    np.testing.assert_allclose(out.R, r * np.eye(2), atol=1e-9)

    sol = solve_nearly_identical(out)
    expected = closed_form_sigma(out.A, out.Q, r, s * s / 2.0)
    np.testing.assert_allclose(sol.players[0].measure.Sigma, expected, rtol=1e-7, atol=1e-9)


def test_pull_back_matches_direct_solution():
    s, r = 1.2, 0.8
    game, sym = _structured(s, r)
    direct = solve_nearly_identical(game)
    out, sym2 = transform_game(game, s, r, symmetrizer=sym)
    back = pull_back(solve_nearly_identical(out), sym2)

    for a, b in zip(direct.players, back.players):
        np.testing.assert_allclose(b.measure.Sigma, a.measure.Sigma, rtol=1e-7, atol=1e-9)
        np.testing.assert_allclose(b.measure.mu, a.measure.mu, rtol=1e-7, atol=1e-9)
        assert b.lam == pytest.approx(a.lam, rel=1e-7)
        np.testing.assert_allclose(b.feedback.K, a.feedback.K, rtol=1e-7, atol=1e-9)
        np.testing.assert_allclose(b.feedback.c, a.feedback.c, rtol=1e-7, atol=1e-9)


def test_transform_rejects_unstructured_control_cost():
    game = NearlyIdenticalGame.build(
        N=2, A=SKEWED, sigma=np.eye(2), R=np.eye(2), Q=np.eye(2), B=np.zeros((2, 2)),
        H=np.zeros(2), Delta=np.zeros(2), C=np.zeros((2, 2)), D=np.zeros((2, 2)),
    )
    with pytest.raises(StructureMismatch):
        transform_game(game, 1.0, 1.0)


def test_transform_rejects_unstructured_noise():
    game, sym = _structured()
    bad = NearlyIdenticalGame(
        N=game.N, d=game.d, A=game.A, sigma=np.eye(2), R=game.R, Q=game.Q, B=game.B,
        H=game.H, Delta=game.Delta, C=game.C, D=game.D,
    )
    with pytest.raises(StructureMismatch, match="sigma"):
        transform_game(bad, 1.2, 0.8, symmetrizer=sym)


def test_transform_rejects_rotation_drift_through_control_cost():
    game = NearlyIdenticalGame.build(
        N=2, A=[[0.0, -1.0], [1.0, 0.0]], sigma=np.eye(2), R=np.eye(2), Q=np.eye(2), B=np.zeros((2, 2)),
        H=np.zeros(2), Delta=np.zeros(2), C=np.zeros((2, 2)), D=np.zeros((2, 2)),
    )
    with pytest.raises(StructureMismatch, match="symmetrizer"):
        transform_game(game, 1.0, 1.0)


def _kernel_structured(s: float = 1.2, r: float = 0.8):
    # B' = A^T R A / 2 with ker A = span(e1); P' = Delta lies in range(A^T)
    return structured_game(
        A=[[0.0, 1.0], [0.0, 1.0]],
        Q=np.eye(2),
        B=-np.eye(2),
        C=0.3 * np.eye(2),
        D=0.1 * np.eye(2),
        H=[0.0, 0.0],
        Delta=[0.0, 0.5],
        N=3,
        s=s,
        r=r,
    )


def test_pull_back_keeps_family_consistent_with_players():
    s, r = 1.2, 0.8
    game, sym = _kernel_structured(s, r)
    out, sym2 = transform_game(game, s, r, symmetrizer=sym)
    base = solve_nearly_identical(out)
    assert base.family.dim == 1
    member = family_member(base, out, base.family.member_coefficients(1, 1.5), selected_member=1)
    direct = solve_nearly_identical(game)

    for sol in (base, member):
        back = pull_back(sol, sym2)
        fam = back.family
        mu = fam.particular + fam.basis @ fam.coefficients
        for p in back.players:
            np.testing.assert_allclose(mu, p.measure.mu, atol=1e-10)
        np.testing.assert_allclose(fam.basis.T @ fam.basis, np.eye(1), atol=1e-12)
        assert abs(float(fam.basis[:, 0] @ fam.particular)) < 1e-10
        np.testing.assert_allclose(game.A @ fam.basis, 0.0, atol=1e-10)
        # the pulled-back particular is the minimum-norm member in x
        np.testing.assert_allclose(fam.particular, direct.family.particular, atol=1e-9)

    assert pull_back(member, sym2).family.selected_member == 1
