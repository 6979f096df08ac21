import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anderson_msa import numerics
from anderson_msa.schur import (BlockPartition, Eliminator, NearSingularElimination, SpectralWindow,
                                count_in_window, dense_spectrum, fixed_point_eigenvalues,
                                lift_eigenvector, relative_residual, schur_complement,
                                spectral_distance)

K2 = np.array([[0.0, 1.0], [1.0, 2.0]])
P2 = BlockPartition((0,), (1,))


def test_schur_examples():
    assert schur_complement(np.diag([0.3, 2.0]), P2, 0.7).matrix[0, 0] == 0.3
    assert schur_complement(K2, P2, 0.0).matrix[0, 0] == -0.5
    d = abs(schur_complement(K2, P2, 0.1).matrix[0, 0] - schur_complement(K2, P2, 0.0).matrix[0, 0])
    assert d == pytest.approx(abs(-1 / 1.9 + 0.5), rel=1e-12)
    assert d <= 2 * (1 / 2) ** 2 * 0.1


def test_near_singular_is_rejected():
    with pytest.raises(NearSingularElimination):
        schur_complement(K2, P2, 2.0)


def test_partition_must_cover():
    with pytest.raises(ValueError):
        BlockPartition((0,), (0, 1))


def test_dense_spectrum_examples():
    assert np.allclose(dense_spectrum(np.eye(3))[0], [1, 1, 1])
    assert np.allclose(dense_spectrum(np.array([[0.0, 1], [1, 0]]))[0], [-1, 1])
    J = np.array([[0.0, 1, 0], [1, 0, 1], [0, 1, 0]])
    assert np.allclose(dense_spectrum(J)[0], [-math.sqrt(2), 0, math.sqrt(2)])
    with pytest.raises(ValueError):
        dense_spectrum(np.array([[0.0, 1], [0, 0]]))


def test_distance_and_count():
    assert spectral_distance(np.diag([0.4, 0.6]), 0.5) == pytest.approx(0.1)
    assert spectral_distance(np.diag([0.4, 0.6]), 0.6) == 0
    assert spectral_distance(K2, 0.0) == pytest.approx(math.sqrt(2) - 1)
    M = np.diag([0.49, 0.502, 0.60])
    assert count_in_window(M, SpectralWindow(0.5, 0.005)) == 1
    assert count_in_window(M, SpectralWindow(0.5, 0.011)) == 2
    assert count_in_window(M, SpectralWindow(0.55, 0.0)) == 0
    assert count_in_window(M, SpectralWindow(0.5, 10)) == 3


def test_fixed_point_example_and_lift():
    fps = fixed_point_eigenvalues(K2, P2, SpectralWindow(0.0, 0.5))
    assert len(fps) == 1
    lam = fps[0].value
    assert lam == pytest.approx(1 - math.sqrt(2), abs=1e-12)
    psi = lift_eigenvector(K2, P2, lam, np.array([1.0]))
    assert np.allclose(psi, [1, 1 - math.sqrt(2)], atol=1e-12)
    assert relative_residual(K2, lam, psi) < 1e-12
    assert fixed_point_eigenvalues(K2, P2, SpectralWindow(1.0, 0.1)) == []


def test_decoupled_lift_pads_zeros():
    K = np.diag([0.3, 0.5, 2.0])
    part = BlockPartition((0, 1), (2,))
    psi = lift_eigenvector(K, part, 0.3, np.array([1.0, 0.0]))
    assert np.array_equal(psi, [1.0, 0.0, 0.0])


def _random_case(seed, n=8):
    rng = np.random.default_rng(seed)
    K = rng.normal(size=(n, n)) * 0.05
    K = K + K.T + np.diag(rng.uniform(0, 1, n))
    m = int(rng.integers(1, n))
    keep = tuple(sorted(rng.choice(n, m, replace=False).tolist()))
    return K, BlockPartition.from_keep(n, keep)


@given(st.integers(0, 10**6))
def test_fixed_points_match_oracle(seed):
    K, part = _random_case(seed)
    w = np.linalg.eigvalsh(K)
    window = SpectralWindow(0.5, 0.2)
    try:
        fps = fixed_point_eigenvalues(K, part, window)
    except NearSingularElimination:
        return
    elim = Eliminator(K, part)
    poles = elim.poles
    inside = [v for v in w if window.lo <= v <= window.hi]
    found = sorted(fp.value for fp in fps)
    # eigenvalues of K that coincide with a pole of D are invisible to F
    inside = [v for v in inside if np.min(np.abs(poles - v), initial=np.inf) > 1e-6]
    found = [v for v in found if np.min(np.abs(poles - v), initial=np.inf) > 1e-6]
    assert len(found) == len(inside)
    assert np.allclose(found, inside, atol=1e-10)
    for fp in fps:
        psi = lift_eigenvector(K, part, fp.value, fp.vector)
        assert relative_residual(K, fp.value, psi) < 1e-9


@given(st.integers(0, 10**6), st.floats(-0.1, 0.1), st.floats(-0.1, 0.1))
def test_lipschitz_bound(seed, a, b):
    K, part = _random_case(seed)
    elim = Eliminator(K, part)
    lam, E = 0.5 + a, 0.5 + b
    try:
        Fl, FE = elim.at(lam), elim.at(E)
    except NearSingularElimination:
        return
    if min(Fl.elimination_margin, FE.elimination_margin) < 0.3:
        return
    # the margin over the segment is attained at an endpoint only if no pole lies between
    if np.any((elim.poles - min(lam, E)) * (elim.poles - max(lam, E)) <= 0):
        return
    diff = np.linalg.norm(Fl.matrix - FE.matrix, 2)
    g = np.linalg.norm(elim.B, 2)
    eps = min(Fl.elimination_margin, FE.elimination_margin)
    assert diff <= 2 * (g / eps) ** 2 * abs(lam - E) + 1e-14


@given(st.integers(0, 10**6))
def test_staged_equals_one_shot(seed):
    K, _ = _random_case(seed, n=9)
    K = K + np.diag([0, 0, 0, 3, 3, 3, 3, 3, 3])
    S, T = (0, 1), (2, 3, 4)
    one = schur_complement(K, BlockPartition.from_keep(9, S), 0.5).matrix
    mid = schur_complement(K, BlockPartition.from_keep(9, S + T), 0.5).matrix
    two = schur_complement(mid, BlockPartition.from_keep(5, (0, 1)), 0.5).matrix
    assert np.allclose(one, two, atol=1e-12)


def test_mp_fixed_points():
    K, part = _random_case(3)
    with numerics.working_precision(200):
        Km = numerics.mp_array(K)
        fps = fixed_point_eigenvalues(Km, part, SpectralWindow(numerics.to_mp(0.5), numerics.to_mp(0.2)))
        w = numerics.eigvalsh(Km)
        for fp in fps:
            assert min(abs(fp.value - x) for x in w) < numerics.to_mp(10) ** -50


def test_spectral_agreement():
    K, part = _random_case(11)
    elim = Eliminator(K, part)
    E = 0.5
    F = elim.at(E)
    eps = F.elimination_margin
    g = np.linalg.norm(elim.B, 2)
    mu = np.linalg.eigvalsh(F.matrix)
    for lam in np.linalg.eigvalsh(K):
        if abs(lam - E) <= eps / 2:
            assert np.min(np.abs(mu - lam)) <= 2 * (g / eps) ** 2 * abs(lam - E) + 1e-14
