from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lqmfg.core.errors import DimensionMismatch, NotPD
from lqmfg.core.matlin import is_spd, spd_inv, spd_sqrt
from lqmfg.services.riccati import (
    AREProblem,
    are_residual,
    build_hamiltonian,
    closed_form_sigma,
    solve_are_spd,
    sylvester_residual,
)
from tests.conftest import random_spd, random_symmetric

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_scalar_riccati():
    # nu = 1, R = 1, A = 0, Q = 1: Y^2 / 2 = 1
    p = AREProblem.from_player(np.zeros((1, 1)), np.eye(1), np.eye(1), np.eye(1))
    np.testing.assert_allclose(solve_are_spd(p), [[np.sqrt(2.0)]], rtol=1e-12)


def test_hamiltonian_layout():
    p = AREProblem(Rcal=np.diag([1.0, 2.0]), Qcal=np.diag([3.0, 4.0]))
    H = build_hamiltonian(p).H
    assert H.shape == (4, 4)
    np.testing.assert_array_equal(H[:2, :2], 0.0)
    np.testing.assert_array_equal(H[:2, 2:], np.diag([1.0, 2.0]))
    np.testing.assert_array_equal(H[2:, :2], np.diag([3.0, 4.0]))


def test_hamiltonian_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        build_hamiltonian(AREProblem(Rcal=np.eye(2), Qcal=np.eye(3)))


@settings(max_examples=40, deadline=None)
@given(seed=seeds, d=st.integers(min_value=1, max_value=6))
def test_spd_solution_residual_and_sandwich_formula(seed, d):
    rng = np.random.default_rng(seed)
    p = AREProblem(Rcal=random_spd(rng, d), Qcal=random_spd(rng, d))

    Y = solve_are_spd(p)
    assert is_spd(Y)
    assert are_residual(Y, p) < 1e-8 * (1.0 + np.linalg.norm(p.Qcal, 2))

    Rh = spd_sqrt(p.Rcal)
    Rh_inv = spd_inv(Rh)
    expected = Rh_inv @ spd_sqrt(Rh @ p.Qcal @ Rh) @ Rh_inv
    np.testing.assert_allclose(Y, expected, rtol=1e-7, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(seed=seeds, d=st.integers(min_value=1, max_value=5))
def test_spectrum_matches_positive_hamiltonian_half_and_solution_is_isolated(seed, d):
    rng = np.random.default_rng(seed)
    p = AREProblem(Rcal=random_spd(rng, d), Qcal=random_spd(rng, d))
    Y = solve_are_spd(p)

    w = np.linalg.eigvals(build_hamiltonian(p).H).real
    positive = np.sort(w[w > 0.0])
    assert positive.size == d
    np.testing.assert_allclose(np.sort(np.linalg.eigvals(p.Rcal @ Y).real), positive, rtol=1e-8, atol=1e-10)

    # any symmetric move away from Y breaks the equation
    dY = random_symmetric(rng, d)
    dY *= 1e-3 / np.linalg.norm(dY, 2)
    assert are_residual(Y + dY, p) > are_residual(Y, p)


def test_indefinite_qcal_is_rejected():
    p = AREProblem(Rcal=np.eye(2), Qcal=np.diag([1.0, -1.0]))
    with pytest.raises(NotPD):
        solve_are_spd(p)


@settings(max_examples=30, deadline=None)
@given(
    seed=seeds,
    d=st.integers(min_value=1, max_value=4),
    r=st.floats(min_value=0.2, max_value=5.0),
    nubar=st.floats(min_value=0.2, max_value=3.0),
)
def test_closed_form_for_symmetric_isotropic_data(seed, d, r, nubar):
    rng = np.random.default_rng(seed)
    A = random_symmetric(rng, d)
    Q = random_spd(rng, d)
    nu, R = nubar * np.eye(d), r * np.eye(d)

    Y = solve_are_spd(AREProblem.from_player(A, nu, R, Q))
    np.testing.assert_allclose(Y, closed_form_sigma(A, Q, r, nubar), rtol=1e-7, atol=1e-9)
    # symmetric A with isotropic nu and R satisfies the commutation condition
    assert sylvester_residual(Y, nu, R, A) < 1e-7 * (1.0 + np.linalg.norm(Y, 2))


def test_sylvester_residual_detects_asymmetric_drift():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    nu, R, Q = np.eye(2) / 2.0, np.eye(2), np.eye(2)
    Y = solve_are_spd(AREProblem.from_player(A, nu, R, Q))
    assert sylvester_residual(Y, nu, R, A) > 1e-3


def test_closed_form_rejects_nonpositive_scalars():
    with pytest.raises(NotPD):
        closed_form_sigma(np.eye(2), np.eye(2), r=0.0, nubar=1.0)
