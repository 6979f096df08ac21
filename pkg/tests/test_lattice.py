import numpy as np
import pytest
from hypothesis import given, strategies as st

from anderson_msa import numerics
from anderson_msa.lattice import (Hamiltonian, build_geometry, build_hamiltonian, disorder_from_levels,
                                  sample_disorder, spectral_bounds)


def test_geometry_counts():
    g = build_geometry(1, [3])
    assert (g.size, g.diam) == (3, 2)
    g = build_geometry(2, [4, 4])
    assert (g.size, g.diam) == (16, 6)
    assert g.distance(g.index((0, 0)), g.index((3, 3))) == 6


@pytest.mark.parametrize("d,sides", [(0, []), (1, [0]), (2, [3]), (2, [3, -1])])
def test_geometry_rejects_bad_input(d, sides):
    with pytest.raises(ValueError):
        build_geometry(d, sides)


@given(st.lists(st.integers(1, 5), min_size=1, max_size=3))
def test_index_roundtrip(sides):
    g = build_geometry(len(sides), sides)
    for i in range(g.size):
        assert g.index(g.coord(i)) == i
    assert g.size == int(np.prod(sides))


def test_neighbourhood_and_boundary():
    g = build_geometry(1, [21])
    assert g.neighbourhood([5], 8) == tuple(range(0, 14))
    assert g.exterior_boundary(range(0, 14)) == (14,)
    g2 = build_geometry(2, [3, 3])
    corner = g2.index((0, 0))
    assert set(g2.exterior_boundary([corner])) == {g2.index((0, 1)), g2.index((1, 0))}
    assert g2.set_diameter(range(9)) == 4


def test_adjacency_degrees():
    g = build_geometry(2, [3, 4])
    J = g.adjacency()
    assert np.array_equal(J, J.T)
    deg = J.sum(1)
    interior = [g.index((1, j)) for j in (1, 2)]
    assert deg.max() == 4 and all(deg[i] == 4 for i in interior)
    assert deg.min() == 2


def test_disorder_grid_and_determinism():
    g = build_geometry(1, [200])
    assert set(sample_disorder(g, 2, 1).values) <= {0.0, 1.0}
    v = sample_disorder(g, 11, 4).values
    assert np.allclose(v * 10, np.round(v * 10), atol=1e-15) and v.min() >= 0 and v.max() <= 1
    a, b = sample_disorder(g, 11, 9), sample_disorder(g, 11, 9)
    assert np.array_equal(a.levels, b.levels) and a == b
    with pytest.raises(ValueError):
        sample_disorder(g, 1, 0)


def test_path_graph_spectrum():
    g = build_geometry(1, [3])
    H = build_hamiltonian(g, disorder_from_levels(2, [0, 0, 0]), 0.1)
    assert np.allclose(np.diag(H.matrix), 0.2)
    assert H.matrix[0, 1] == -0.1 and H.matrix[0, 2] == 0
    w = np.linalg.eigvalsh(H.matrix)
    assert np.allclose(w, [0.2 - 0.1 * np.sqrt(2), 0.2, 0.2 + 0.1 * np.sqrt(2)], atol=1e-15)


def test_square_spectrum():
    g = build_geometry(2, [2, 2])
    H = build_hamiltonian(g, disorder_from_levels(2, [0] * 4), 0.1)
    assert np.allclose(np.diag(H.matrix), 0.4)
    assert np.allclose(np.linalg.eigvalsh(H.matrix), [0.2, 0.4, 0.4, 0.6])


def test_decoupled_spectrum_is_potential():
    g = build_geometry(1, [12])
    dis = sample_disorder(g, 7, 3)
    H = build_hamiltonian(g, dis, 0.0)
    assert np.array_equal(np.sort(np.linalg.eigvalsh(H.matrix)), np.sort(dis.values))


@given(st.integers(1, 2), st.integers(2, 6), st.integers(2, 20), st.floats(0, 0.2), st.integers(0, 10**6))
def test_spectrum_confined(d, side, N, gamma, seed):
    g = build_geometry(d, [side] * d)
    H = build_hamiltonian(g, sample_disorder(g, N, seed), gamma)
    lo, hi = spectral_bounds(d, gamma)
    w = np.linalg.eigvalsh(H.matrix)
    assert w.min() >= lo - 1e-12 and w.max() <= hi + 1e-12
    H2 = build_hamiltonian(g, sample_disorder(g, N, seed), gamma)
    assert np.array_equal(H.matrix, H2.matrix)


def test_mp_matches_float_and_roundtrip():
    g = build_geometry(1, [6])
    dis = sample_disorder(g, 9, 2)
    Hf = build_hamiltonian(g, dis, 0.01)
    Hm = build_hamiltonian(g, dis, 0.01, precision=128)
    assert np.allclose(numerics.to_float(Hm.matrix), Hf.matrix, atol=1e-16)
    back = Hamiltonian.from_dict(Hf.to_dict())
    assert np.array_equal(back.matrix, Hf.matrix)


def test_with_level_changes_one_entry():
    g = build_geometry(1, [5])
    H = build_hamiltonian(g, disorder_from_levels(5, [0, 1, 2, 3, 4]), 0.1)
    H2 = H.with_level(2, 4)
    diff = H2.matrix - H.matrix
    assert diff[2, 2] == pytest.approx(0.5) and np.count_nonzero(diff) == 1
    assert H.disorder.levels[2] == 2
