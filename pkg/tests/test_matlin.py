from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from lqmfg.core.errors import NonSymmetric, NotSPD, Unstable
from lqmfg.core.matlin import (
    is_spd,
    min_norm_solve,
    null_space_basis,
    rank_consistent,
    solve_lyapunov,
    spd_sqrt,
    spectral_norm,
    spectral_report,
)
from tests.conftest import random_spd, random_stable, random_symmetric

seeds = st.integers(min_value=0, max_value=2**32 - 1)


# ──────────────────────────────────────────────────────────────
# spectral_norm
# ──────────────────────────────────────────────────────────────

def test_spectral_norm_simple_cases():
    assert spectral_norm(np.eye(3)) == pytest.approx(1.0)
    assert spectral_norm(np.diag([2.0, -5.0])) == pytest.approx(5.0)


def test_spectral_norm_rejects_asymmetric():
    with pytest.raises(NonSymmetric):
        spectral_norm(np.array([[0.0, 1.0], [0.0, 0.0]]))


@settings(max_examples=50, deadline=None)
@given(seed=seeds)
def test_spectral_norm_matches_eigensolve_and_is_a_norm(seed):
    rng = np.random.default_rng(seed)
    S1, S2 = random_symmetric(rng, 4), random_symmetric(rng, 4)
    t = float(rng.uniform(-3, 3))

    assert spectral_norm(S1) == pytest.approx(float(np.max(np.abs(np.linalg.eigvalsh(S1)))), rel=1e-12)
    assert spectral_norm(S1 + S2) <= spectral_norm(S1) + spectral_norm(S2) + 1e-12
    assert spectral_norm(t * S1) == pytest.approx(abs(t) * spectral_norm(S1), rel=1e-10, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=seeds, d=st.integers(min_value=1, max_value=6))
def test_product_of_symmetric_and_spd_has_real_spectrum_with_same_inertia(seed, d):
    rng = np.random.default_rng(seed)
    Qo, _ = np.linalg.qr(rng.standard_normal((d, d)))
    signs = rng.choice([-1.0, 1.0], size=d)
    H = Qo @ np.diag(signs * rng.uniform(0.5, 2.0, d)) @ Qo.T
    K = random_spd(rng, d)

    w = np.linalg.eigvals(H @ K)
    assert np.max(np.abs(w.imag)) < 1e-8 * (1.0 + np.max(np.abs(w)))
    assert int(np.sum(w.real > 0)) == int(np.sum(signs > 0))
    assert int(np.sum(w.real < 0)) == int(np.sum(signs < 0))


def test_order_is_monotone_on_psd_pairs(rng):
    for _ in range(20):
        K = random_spd(rng, 3, lo=0.1, hi=1.0)
        H = K + random_spd(rng, 3, lo=0.0, hi=1.0)
        L = random_spd(rng, 3)
        assert spectral_norm(H) >= spectral_norm(K) - 1e-12
        assert np.max(np.linalg.eigvals(H @ L).real) >= np.max(np.linalg.eigvals(K @ L).real) - 1e-10


def test_spectral_report_flags():
    rep = spectral_report(np.diag([1.0, 2.0]))
    assert rep.is_symmetric and rep.is_spd
    assert rep.max_abs == pytest.approx(2.0)
    assert rep.min_real_part == pytest.approx(1.0)

    rep = spectral_report(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    assert not rep.is_symmetric and not rep.is_spd


# ──────────────────────────────────────────────────────────────
# spd_sqrt
# ──────────────────────────────────────────────────────────────

def test_spd_sqrt_closed_forms():
    np.testing.assert_allclose(spd_sqrt(np.eye(2)), np.eye(2), atol=1e-14)
    np.testing.assert_allclose(spd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)


def test_spd_sqrt_residual(rng):
    M = random_spd(rng, 5)
    E = spd_sqrt(M)
    assert is_spd(E)
    assert np.linalg.norm(E @ E - M) < 1e-10 * np.linalg.norm(M)


def test_spd_sqrt_rejects_indefinite():
    with pytest.raises(NotSPD):
        spd_sqrt(np.diag([1.0, -1.0]))


# ──────────────────────────────────────────────────────────────
# solve_lyapunov
# ──────────────────────────────────────────────────────────────

def test_lyapunov_scalar_and_diagonal():
    np.testing.assert_allclose(solve_lyapunov(np.array([[-1.0]]), np.array([[2.0]])), [[1.0]])
    np.testing.assert_allclose(
        solve_lyapunov(np.diag([-1.0, -2.0]), np.eye(2)), np.diag([0.5, 0.25]), atol=1e-14
    )


@settings(max_examples=40, deadline=None)
@given(seed=seeds, d=st.integers(min_value=1, max_value=6))
def test_lyapunov_residual_and_kronecker_agreement(seed, d):
    rng = np.random.default_rng(seed)
    M = random_stable(rng, d)
    S = rng.standard_normal((d, d))
    C = S @ S.T

    V = solve_lyapunov(M, C)
    np.testing.assert_allclose(V, V.T, rtol=0, atol=1e-12 * (1.0 + np.abs(V).max()))
    resid = np.linalg.norm(M @ V + V @ M.T + C)
    assert resid < 1e-10 * (np.linalg.norm(M) * np.linalg.norm(V) + np.linalg.norm(C))
    np.testing.assert_allclose(V, scipy.linalg.solve_continuous_lyapunov(M, -C), rtol=1e-8, atol=1e-10)
    assert np.min(np.linalg.eigvalsh(V)) >= -1e-10 * (1.0 + np.abs(V).max())


def test_lyapunov_rejects_unstable_drift():
    with pytest.raises(Unstable):
        solve_lyapunov(np.array([[0.5]]), np.array([[1.0]]))


# ──────────────────────────────────────────────────────────────
# rank consistency
# ──────────────────────────────────────────────────────────────

def test_rank_consistent_cases():
    rep = rank_consistent(np.eye(3), [1.0, 2.0, 3.0])
    assert (rep.rank_B, rep.rank_BP, rep.consistent) == (3, 3, True)

    rep = rank_consistent(np.zeros((2, 2)), [0.0, 0.0])
    assert (rep.rank_B, rep.rank_BP, rep.consistent) == (0, 0, True)

    rep = rank_consistent(np.array([[1.0, 0.0], [0.0, 0.0]]), [0.0, 1.0])
    assert (rep.rank_B, rep.rank_BP, rep.consistent) == (1, 2, False)


def test_min_norm_solution_and_null_space():
    B = np.array([[1.0, 1.0], [1.0, 1.0]])
    P = np.array([2.0, 2.0])
    x = min_norm_solve(B, P)
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-12)

    N = null_space_basis(B)
    assert N.shape == (2, 1)
    np.testing.assert_allclose(B @ N, 0.0, atol=1e-12)
    assert abs(float(x @ N[:, 0])) < 1e-12


def test_null_space_shares_the_rank_cutoff():
    # sigma_max([B, P]) = 100 pushes the cutoff past the small singular value of B
    B = np.diag([1.0, 1e-6])
    P = np.array([100.0, 0.0])
    rep = rank_consistent(B, P)
    assert (rep.rank_B, rep.rank_BP) == (1, 1)

    N = null_space_basis(B, cutoff=rep.cutoff)
    assert N.shape == (2, 2 - rep.rank_B)
    np.testing.assert_allclose(np.abs(N[:, 0]), [0.0, 1.0], atol=1e-12)
    # relative to sigma_max(B) alone the small direction would count as rank
    assert null_space_basis(B).shape == (2, 0)

    x = min_norm_solve(B, P, cutoff=rep.cutoff)
    np.testing.assert_allclose(x, [100.0, 0.0], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=seeds, n=st.integers(min_value=2, max_value=6), k=st.integers(min_value=0, max_value=5))
def test_null_dimension_agrees_with_rank_report(seed, n, k):
    rng = np.random.default_rng(seed)
    k = min(k, n)
    B = rng.standard_normal((n, k)) @ rng.standard_normal((k, n))
    P = B @ rng.standard_normal(n)
    rep = rank_consistent(B, P)
    N = null_space_basis(B, cutoff=rep.cutoff)
    assert rep.consistent
    assert N.shape[1] == n - rep.rank_B
    np.testing.assert_allclose(B @ N, 0.0, atol=1e-8 * (1.0 + np.linalg.norm(B, 2)))
    x = min_norm_solve(B, P, cutoff=rep.cutoff)
    np.testing.assert_allclose(B @ x, P, atol=1e-8 * (1.0 + np.linalg.norm(P)))
