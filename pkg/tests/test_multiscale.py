import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anderson_msa import numerics
from anderson_msa.lattice import build_geometry, build_hamiltonian, disorder_from_levels, sample_disorder
from anderson_msa.multiscale import (Block, advance_scale, build_collar, connected_components,
                                     fixed_energy_cascade, kernel_entries, lipschitz_samples,
                                     localized_operator, make_schedule, resonance_test,
                                     resonant_sites_step1, start_cascade, truncation_error)


def test_schedule_ladders():
    s = make_schedule(2, 0.1, 4)
    assert s.eps1 == pytest.approx(1 / 9)
    assert [s.length(k) for k in (1, 2, 3)] == [4, 8, 16]
    assert s.window(2) == pytest.approx(s.eps1 / 8)
    p = make_schedule(2, 0.1, 4, kind="power", precision=128)
    assert p.window(2) == pytest.approx(10 ** -12.8, rel=1e-12)
    assert float(p.window(2, mp=True)) == pytest.approx(10 ** -12.8, rel=1e-12)


@pytest.mark.parametrize("kwargs", [dict(L0=0, gamma=0.1, N=4), dict(L0=2, gamma=0.1, N=1),
                                    dict(L0=2, gamma=0.0, N=4, kind="power"),
                                    dict(L0=2, gamma=0.1, N=4, ratio=0.5)])
def test_schedule_rejects(kwargs):
    with pytest.raises(ValueError):
        make_schedule(**kwargs)


def test_float_schedule_truncates_with_warning():
    with pytest.warns(RuntimeWarning):
        s = make_schedule(2, 0.01, 8, kind="power", kmax=6)
    assert s.kmax < 6 and s.notes


def test_decay_ladder_and_kbar():
    s = make_schedule(2, 0.1, 4)
    assert s.decay(1) == 0.9
    assert any("decay ladder" in n for n in s.notes)
    big = make_schedule(64, 0.1, 4)
    assert all(0 < big.decay(k + 1) < big.decay(k) for k in range(1, 5))
    assert s.k_bar(1) == 2
    assert 5.1 * s.length(s.k_bar(100) - 1) >= 100 > 5.1 * s.length(s.k_bar(100) - 2)


def test_connected_components_examples():
    g = build_geometry(2, [4, 4])
    a, b = g.index((0, 0)), g.index((2, 2))
    assert len(connected_components(g, [a, b], 3.9)) == 2
    assert len(connected_components(g, [a, b], 4)) == 1
    g1 = build_geometry(1, [10])
    assert connected_components(g1, [0, 3], 2.83) == [(0,), (3,)]
    assert connected_components(g1, [0, 3], 3) == [(0, 3)]
    assert connected_components(g1, [], 1) == []


@given(st.sets(st.integers(0, 29), max_size=12), st.floats(1, 6))
def test_components_partition(sites, r):
    g = build_geometry(1, [30])
    comps = connected_components(g, sites, r)
    assert sorted(s for c in comps for s in c) == sorted(sites)
    for c1, c2 in zip(comps, comps[1:]):
        assert g.set_distance(c1, c2) > r


def test_collar_examples():
    g = build_geometry(1, [21])
    s = make_schedule(2, 0.1, 4)
    H = build_hamiltonian(g, disorder_from_levels(4, [0] * 21), 0.1)
    state = start_cascade(H, s, 0.2)
    info = build_collar(state.levels, (5,), 1, g, s, k_bar=10)
    assert info["collar"] == tuple(range(14))
    info = build_collar(state.levels, (0,), 1, g, s, k_bar=10)
    assert info["collar"] == tuple(range(9))
    assert info["touches_boundary"]


def test_single_site_operator_formula():
    g = build_geometry(1, [21])
    s = make_schedule(2, 0.05, 8)
    H = build_hamiltonian(g, sample_disorder(g, 8, 3), 0.05)
    state = start_cascade(H, s, 0.5)
    b = Block(1, (10,), tuple(range(2, 19)), (), 0, 16, True)
    lam = 0.37
    F = localized_operator(H, b, lam).matrix
    inner = [i for i in range(2, 19) if i != 10]
    D = H.submatrix(inner) - lam * np.eye(len(inner))
    c = H.submatrix(inner, [10])
    expected = H.matrix[10, 10] - (c.T @ np.linalg.solve(D, c))[0, 0]
    assert F[0, 0] == pytest.approx(expected, abs=1e-14)
    assert state.k == 1


def test_resonance_test_closed():
    assert resonance_test(np.diag([0.5, 0.7]), 0.6, 0.1)
    assert not resonance_test(np.diag([0.5, 0.7]), 0.6, 0.0999)
    with pytest.raises(ValueError):
        resonance_test(np.zeros((0, 0)), 0.0, 1.0)


def test_decoupled_cascade_is_static():
    g = build_geometry(1, [40])
    H = build_hamiltonian(g, sample_disorder(g, 8, 5), 0.0)
    s = make_schedule(1, 0.0, 8, diam=g.diam)
    E = H.diagonal_energy(0)
    state = fixed_energy_cascade(H, s, E)
    first = state.levels[0].resonant
    assert first == resonant_sites_step1(H, E, s)
    for lv in state.levels:
        assert lv.resonant == first
    assert all(b.fate in ("survives", None) for lv in state.levels for b in lv.blocks)


def test_advance_rejects_large_shift():
    g = build_geometry(1, [20])
    H = build_hamiltonian(g, sample_disorder(g, 8, 1), 0.01)
    s = make_schedule(1, 0.01, 8)
    state = start_cascade(H, s, 0.5)
    with pytest.raises(ValueError):
        advance_scale(state, 0.5 + s.window(1) / 2)


@given(st.integers(0, 10**6))
def test_resonant_sets_nest(seed):
    g = build_geometry(1, [48])
    H = build_hamiltonian(g, sample_disorder(g, 6, seed), 0.01)
    s = make_schedule(1, 0.01, 6, diam=g.diam)
    state = fixed_energy_cascade(H, s, 0.4)
    for a, b in zip(state.levels, state.levels[1:]):
        assert set(b.resonant) <= set(a.resonant)
        for blk in a.blocks:
            assert set(blk.sites) <= set(blk.collar)


def test_measured_bounds():
    g = build_geometry(1, [32])
    H = build_hamiltonian(g, sample_disorder(g, 16, 2), 1e-3, precision=160)
    s = make_schedule(1, 1e-3, 16, precision=160, diam=g.diam)
    with numerics.working_precision(160):
        E = H.diagonal_energy(7)
        state = advance_scale(start_cascade(H, s, E), E)
        assert truncation_error(state, E, 1) < 1e-10
        blk = state.levels[0].blocks[0]
        samples = lipschitz_samples(H, blk, E, s.window(1) / 2)
        assert all(d <= 2 * 1e-3 * x for x, d in samples)
        entries = kernel_entries(H, blk, E)
        far = [e for e in entries if e[2] >= 3]
        assert all(e[3] <= numerics.to_mp(1e-3) ** (0.85 * e[2]) for e in far)
