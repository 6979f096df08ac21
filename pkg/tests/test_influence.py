import numpy as np
import pytest
from hypothesis import given, strategies as st

from anderson_msa import numerics
from anderson_msa.experiments import trial_seed
from anderson_msa.influence import (CollarExhaustsLattice, influence_profile, level_gaps,
                                    movement_decomposition, prepare_influence_trial,
                                    prepare_movement_trial, sweep_vbar)
from anderson_msa.lattice import build_geometry, build_hamiltonian, disorder_from_levels, sample_disorder
from anderson_msa.multiscale import Block, make_schedule


def _ham(sides, gamma=0.05, N=8, seed=0):
    g = build_geometry(len(sides), sides)
    return build_hamiltonian(g, sample_disorder(g, N, seed), gamma)


def test_single_neighbour_influence():
    H = _ham([10])
    b = Block(1, (2,), (0, 1, 2, 3, 4), (), 0, 4, True)
    prof = influence_profile(H, b, H.diagonal_energy(2))
    assert set(prof.influences) == {5}
    assert prof.influences[5] == pytest.approx(abs(prof.psi[4]), abs=0)
    assert prof.ybar == 5 and prof.n_hat == 1


def test_corner_influence_sums_two_neighbours():
    H = _ham([4, 4])
    g = H.geometry
    collar = tuple(sorted([g.index((0, 0)), g.index((0, 1)), g.index((1, 0))]))
    b = Block(1, (g.index((0, 0)),), collar, (), 0, 2, True)
    prof = influence_profile(H, b, H.diagonal_energy(g.index((0, 0))))
    y = g.index((1, 1))
    pos = {s: i for i, s in enumerate(collar)}
    expected = abs(prof.psi[pos[g.index((0, 1))]] + prof.psi[pos[g.index((1, 0))]])
    assert prof.influences[y] == pytest.approx(expected, rel=1e-14)
    assert len(prof.neighbours[y]) == 2


def test_whole_lattice_collar_rejected():
    H = _ham([6])
    b = Block(1, (2,), tuple(range(6)), (), 0, 5, True)
    with pytest.raises(CollarExhaustsLattice):
        influence_profile(H, b, 0.3)


def test_ybar_tie_goes_to_smallest_site():
    g = build_geometry(1, [7])
    H = build_hamiltonian(g, disorder_from_levels(2, [1, 1, 1, 0, 1, 1, 1]), 0.05)
    b = Block(1, (3,), (2, 3, 4), (), 0, 2, True)
    prof = influence_profile(H, b, H.diagonal_energy(3))
    assert prof.influences[1] == pytest.approx(prof.influences[5], rel=1e-12)
    assert prof.ybar == 1


@given(st.integers(2, 64), st.floats(0, 1), st.floats(0, 0.01))
def test_level_gaps_at_least_one_over_n(N, lam, gamma):
    g = build_geometry(1, [3])
    H = build_hamiltonian(g, disorder_from_levels(N, [0, 0, 0]), gamma)
    assert level_gaps(H, lam + 2 * gamma) >= 1 / N


MOVE = dict(size=41, N=64, gamma=1e-3, L0=1, precision=256, k=2)


def _movement_setups(count):
    geom = build_geometry(1, [MOVE["size"]])
    sched = make_schedule(MOVE["L0"], MOVE["gamma"], MOVE["N"], kind="power", diam=geom.diam,
                          precision=MOVE["precision"])
    out, reasons = [], set()
    for i in range(4 * count):
        H = build_hamiltonian(geom, sample_disorder(geom, MOVE["N"], trial_seed(0, i)), MOVE["gamma"],
                              precision=MOVE["precision"])
        setup, reason = prepare_movement_trial(H, sched, MOVE["size"] // 2, MOVE["k"])
        reasons.add(reason)
        if setup is not None:
            out.append(setup)
        if len(out) == count:
            break
    return out, reasons


@pytest.fixture(scope="module")
def setups():
    out, _ = _movement_setups(4)
    assert len(out) == 4
    return out


def test_decomposition_reconstructs_direct_difference(setups):
    for s in setups:
        dec = movement_decomposition(s)
        assert dec.reconstruction_error < 1e-10
        assert dec.kernel_error < 1e-10
        assert dec.norms["constant"] <= dec.bounds["constant"]
        assert dec.norms["remainder"] <= dec.bounds["remainder"]


def test_sweep_is_monotone_and_moves(setups):
    for s in setups:
        sw = sweep_vbar(s)
        assert len(sw.levels) == MOVE["N"]
        assert sw.monotone
        assert sw.unchanged <= 1
        assert sw.ybar == s.profile.ybar


def test_influence_trial_has_fixed_point():
    geom = build_geometry(1, [MOVE["size"]])
    sched = make_schedule(MOVE["L0"], MOVE["gamma"], MOVE["N"], kind="power", diam=geom.diam,
                          precision=MOVE["precision"])
    found = 0
    for i in range(10):
        H = build_hamiltonian(geom, sample_disorder(geom, MOVE["N"], trial_seed(0, i)), MOVE["gamma"],
                              precision=MOVE["precision"])
        state, prev, lam, reason = prepare_influence_trial(H, sched, MOVE["size"] // 2)
        if state is None:
            assert reason
            continue
        found += 1
        with numerics.working_precision(MOVE["precision"]):
            assert abs(lam - state.current.energy) <= sched.window(2, mp=True) / 2
    assert found > 0
