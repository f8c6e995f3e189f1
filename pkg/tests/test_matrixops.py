"""Adjugate/determinant identity suite: these run as independent oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothmpc.matrixops import (
    SingularSubmatrixError,
    adjugate,
    all_sigmas,
    annihilation_checks,
    det_diag_perturbation,
    inverse_decomposition,
    padded_adjugate,
    padded_inverse,
    rank_one_adjugate_update,
)

RNG = np.random.default_rng(20240901)


def random_psd(n, rng, rank=None):
    k = rank if rank is not None else n
    L = rng.standard_normal((n, k))
    return L @ L.T


def test_adjugate_2x2_closed_form():
    M = np.array([[3.0, -2.0], [5.0, 7.0]])
    expected = np.array([[7.0, 2.0], [-5.0, 3.0]])
    assert np.allclose(adjugate(M), expected)


def test_adjugate_identity_matrix():
    assert np.allclose(adjugate(np.eye(4)), np.eye(4))


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_adjugate_defining_identity(n):
    for _ in range(20):
        M = RNG.standard_normal((n, n))
        scale = max(1.0, abs(np.linalg.det(M)))
        assert np.abs(adjugate(M) @ M - np.linalg.det(M) * np.eye(n)).max() <= 1e-8 * scale


def test_adjugate_symmetric_is_symmetric():
    for _ in range(20):
        A = random_psd(4, RNG) - 2.0 * np.eye(4)
        adj = adjugate(A)
        assert np.allclose(adj, adj.T, atol=1e-9 * max(1.0, np.abs(adj).max()))


def test_matrix_determinant_lemma_rank_one():
    for _ in range(30):
        M = RNG.standard_normal((4, 4))
        u = RNG.standard_normal(4)
        v = RNG.standard_normal(4)
        lhs = np.linalg.det(M + np.outer(u, v))
        rhs = np.linalg.det(M) + v @ adjugate(M) @ u
        assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(lhs))


def test_sherman_morrison_woodbury():
    for _ in range(20):
        A = random_psd(5, RNG) + np.eye(5)
        U = RNG.standard_normal((5, 2))
        C = random_psd(2, RNG) + np.eye(2)
        V = RNG.standard_normal((2, 5))
        lhs = np.linalg.inv(A + U @ C @ V)
        rhs = np.linalg.inv(A) - np.linalg.inv(A) @ U @ np.linalg.inv(
            np.linalg.inv(C) + V @ np.linalg.inv(A) @ U) @ V @ np.linalg.inv(A)
        assert np.abs(lhs - rhs).max() <= 1e-8 * max(1.0, np.abs(lhs).max())


def test_padded_all_ones_is_plain_inverse_adjugate():
    M = random_psd(3, RNG) + np.eye(3)
    ones = np.ones(3, dtype=bool)
    assert np.allclose(padded_inverse(M, ones), np.linalg.inv(M))
    assert np.allclose(padded_adjugate(M, ones), adjugate(M))


def test_padded_empty_sigma_conventions():
    M = random_psd(3, RNG)
    zeros = np.zeros(3, dtype=bool)
    assert np.allclose(padded_inverse(M, zeros), 0.0)
    assert np.allclose(padded_adjugate(M, zeros), 0.0)


def test_padded_inverse_embeds_block():
    M = random_psd(3, RNG) + np.eye(3)
    sigma = np.array([True, False, True])
    sub = M[np.ix_(sigma, sigma)]
    out = padded_inverse(M, sigma)
    assert np.allclose(out[np.ix_(sigma, sigma)], np.linalg.inv(sub))
    assert np.allclose(out[1, :], 0.0) and np.allclose(out[:, 1], 0.0)


def test_padded_inverse_singular_raises():
    L = np.array([[1.0, 0.0], [1.0, 0.0]])
    M = L @ L.T
    with pytest.raises(SingularSubmatrixError):
        padded_inverse(M, np.ones(2, dtype=bool))


def test_det_diag_perturbation_2x2_hand():
    A = np.ones((2, 2))
    lam = np.array([0.7, 1.3])
    direct = np.linalg.det(A + np.diag(lam))
    assert abs(det_diag_perturbation(A, lam) - direct) <= 1e-12
    assert abs(direct - (lam[0] * lam[1] + lam[0] + lam[1])) <= 1e-12


def test_det_diag_perturbation_zero_lambda():
    A = random_psd(4, RNG)
    assert abs(det_diag_perturbation(A, np.zeros(4)) - np.linalg.det(A)) <= 1e-9


def test_det_diag_perturbation_random_psd():
    for _ in range(10):
        A = random_psd(6, RNG, rank=4)  # singular A exercises the zero-det terms
        lam = RNG.uniform(0.1, 2.0, size=6)
        direct = np.linalg.det(A + np.diag(lam))
        assert abs(det_diag_perturbation(A, lam) - direct) <= 1e-8 * max(1.0, abs(direct))


def test_inverse_decomposition_scalar():
    A = np.array([[2.0]])
    lam = np.array([0.5])
    dec = inverse_decomposition(A, lam)
    assert abs(dec.reconstruction[0, 0] - 1.0 / 2.5) <= 1e-12
    assert abs(dec.h - 2.5) <= 1e-12


def test_inverse_decomposition_rank_one():
    g = RNG.standard_normal(3)
    A = np.outer(g, g)
    lam = RNG.uniform(0.2, 1.5, size=3)
    dec = inverse_decomposition(A, lam)
    direct = np.linalg.inv(A + np.diag(lam))
    assert np.abs(dec.reconstruction - direct).max() <= 1e-8
    assert dec.c_sigma, "rank-1 A must produce singular-subset adjugate terms"


def test_inverse_decomposition_random_and_h_matches_det():
    for _ in range(5):
        A = random_psd(5, RNG)
        lam = RNG.uniform(0.1, 2.0, size=5)
        dec = inverse_decomposition(A, lam)
        direct = np.linalg.inv(A + np.diag(lam))
        assert np.abs(dec.reconstruction - direct).max() <= 1e-8 * max(1.0, np.abs(direct).max())
        det = np.linalg.det(A + np.diag(lam))
        assert abs(dec.h - det) <= 1e-8 * max(1.0, abs(det))
        assert abs(dec.h - det_diag_perturbation(A, lam)) <= 1e-8 * max(1.0, abs(det))


def test_annihilation_hand_example():
    L = np.array([[1.0, 0.0], [1.0, 0.0]])
    A = L @ L.T
    assert np.allclose(adjugate(A), np.array([[1.0, -1.0], [-1.0, 1.0]]))
    assert np.abs(adjugate(A) @ L).max() <= 1e-12


def test_annihilation_duplicated_rows():
    G = np.vstack([RNG.standard_normal((2, 3)), RNG.standard_normal((1, 3))])
    G = np.vstack([G, G[0]])  # duplicate row forces a singular Gram submatrix
    H = random_psd(3, RNG) + np.eye(3)
    sigma = np.array([True, False, False, True])
    rep = annihilation_checks(G, H, sigma)
    assert rep.applicable and rep.satisfied


def test_annihilation_nonsingular_skipped():
    G = RNG.standard_normal((3, 4))
    H = random_psd(4, RNG) + np.eye(4)
    rep = annihilation_checks(G, H, np.array([True, False, True]))
    assert not rep.applicable and rep.satisfied


def test_annihilation_general_rank_deficient():
    for _ in range(20):
        L = RNG.standard_normal((4, 2))  # rank <= 2 < 3 selected rows
        A = L @ L.T
        det3 = np.linalg.det(A[:3, :3])
        assert abs(det3) <= 1e-9
        assert np.abs(padded_adjugate(A, np.array([1, 1, 1, 0], dtype=bool)) @ L).max() <= 1e-9 * max(
            1.0, np.abs(L).max())


def test_rank_one_adjugate_update_2x2():
    A = np.array([[1.0, 2.0], [2.0, -1.0]])
    lam = 1.0
    direct = adjugate(A + lam * np.outer([1, 0], [1, 0]))
    assert np.abs(rank_one_adjugate_update(A, lam, 0) - direct).max() <= 1e-9


def test_rank_one_adjugate_update_zero_lambda():
    A = random_psd(4, RNG)
    assert np.allclose(rank_one_adjugate_update(A, 0.0, 0), adjugate(A))


@pytest.mark.parametrize("index", [0, 2])
def test_rank_one_adjugate_update_random(index):
    for _ in range(10):
        A = random_psd(4, RNG) - 0.5 * np.eye(4)
        lam = float(RNG.uniform(-2, 2))
        e = np.zeros(4)
        e[index] = 1.0
        direct = adjugate(A + lam * np.outer(e, e))
        got = rank_one_adjugate_update(A, lam, index)
        assert np.abs(got - direct).max() <= 1e-9 * max(1.0, np.abs(direct).max())


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=4), st.integers(min_value=0, max_value=10_000))
def test_decomposition_matches_direct_inverse_property(n, seed):
    rng = np.random.default_rng(seed)
    rank = rng.integers(1, n + 1)
    A = random_psd(n, rng, rank=int(rank))
    lam = rng.uniform(0.1, 3.0, size=n)
    dec = inverse_decomposition(A, lam)
    direct = np.linalg.inv(A + np.diag(lam))
    assert np.abs(dec.reconstruction - direct).max() <= 1e-7 * max(1.0, np.abs(direct).max())


def test_all_sigmas_count():
    assert sum(1 for _ in all_sigmas(4)) == 16
