import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anderson_msa.experiments import (ExperimentConfig, correlator_observable, dos_observable,
                                      min_spacing_observable, run_ensemble, spacing_vs_N, trial_seed,
                                      write_report)
from anderson_msa.lattice import build_geometry, build_hamiltonian, disorder_from_levels, sample_disorder


def _ham(n=32, N=16, gamma=0.01, seed=0):
    g = build_geometry(1, [n])
    return build_hamiltonian(g, sample_disorder(g, N, seed), gamma)


def test_dos_examples():
    H = _ham()
    assert dos_observable(H, 0.5, 10.0) == 32
    w = np.linalg.eigvalsh(H.matrix)
    assert dos_observable(H, 0.5, 0.01) == int(np.sum(np.abs(w - 0.5) <= 0.01))
    H0 = _ham(gamma=0.0, N=11)
    assert dos_observable(H0, 0.55, 0.04) == 0


@given(st.floats(0, 1), st.floats(1e-4, 0.5), st.floats(1e-4, 0.5))
def test_dos_monotone_in_delta(E, a, b):
    H = _ham(n=12)
    lo, hi = sorted((a, b))
    assert dos_observable(H, E, lo) <= dos_observable(H, E, hi)


def test_correlator_examples():
    H = _ham()
    S, X = correlator_observable(H, 3, 3)
    assert S == pytest.approx(1.0, abs=1e-12)
    H0 = _ham(gamma=0.0)
    assert correlator_observable(H0, 2, 9) == (0.0, 0.0)


@given(st.integers(0, 31), st.integers(0, 31))
def test_correlator_symmetric_and_bounded(x, y):
    H = _ham(n=32, seed=4)
    S1, _ = correlator_observable(H, x, y)
    S2, _ = correlator_observable(H, y, x)
    assert S1 == pytest.approx(S2, abs=1e-14)
    assert 0 <= S1 <= 1 + 1e-12


def test_min_spacing_examples():
    assert min_spacing_observable(np.diag([0.1, 0.2, 0.35])) == pytest.approx(0.1)
    assert min_spacing_observable(np.diag([0.3, 0.3, 0.5])) == 0
    g = build_geometry(1, [4])
    H = build_hamiltonian(g, disorder_from_levels(2, [0, 1, 0, 1]), 0.0)
    assert min_spacing_observable(H) == 0


def test_trial_seed_deterministic_and_distinct():
    assert trial_seed(7, 3) == trial_seed(7, 3)
    assert len({trial_seed(0, i) for i in range(200)}) == 200
    assert trial_seed(0, 1) != trial_seed(1, 0)


def _small(**kw):
    base = dict(sides=(16,), N=8, gamma=0.01, trials=6, base_seed=3,
                deltas=(1e-3, 1e-2, 1e-1), observables=("dos", "correlator", "spacing", "blocks"))
    base.update(kw)
    return ExperimentConfig(**base)


def test_single_trial_aggregates_equal_observables():
    cfg = _small(trials=1, observables=("dos", "spacing"))
    rep = run_ensemble(cfg).to_dict()
    g = build_geometry(1, [16])
    H = build_hamiltonian(g, sample_disorder(g, 8, trial_seed(3, 0)), 0.01)
    for row in rep["observables"]["dos"]:
        assert row["mean"] == dos_observable(H, row["E"], row["delta"])
    sp = min_spacing_observable(H)
    for row in rep["observables"]["spacing"]["table"]:
        assert row["probability"] == float(sp < row["delta"])


def test_report_is_deterministic(tmp_path):
    cfg = _small()
    a, b = run_ensemble(cfg).to_json(), run_ensemble(cfg).to_json()
    assert a == b
    paths = write_report(run_ensemble(cfg), tmp_path)
    assert all(p.exists() for p in paths)
    assert json.loads((tmp_path / "report.json").read_text())["config"]["trials"] == 6


def test_dos_mean_monotone_in_report():
    rep = run_ensemble(_small(trials=4, observables=("dos",))).to_dict()
    means = [r["mean"] for r in rep["observables"]["dos"]]
    assert means == sorted(means)


def test_validate_rejects():
    with pytest.raises(ValueError):
        _small(deltas=(2.0,)).validate()
    with pytest.raises(ValueError):
        _small(observables=("nope",)).validate()
    with pytest.raises(ValueError):
        _small(trials=0).validate()


def test_spacing_vs_N_rows():
    cfg = _small(trials=5, observables=("spacing",), spacing_deltas=(0.5,))
    one = spacing_vs_N(cfg, [8])
    assert len(one["rows"]) == 1 and one.get("ordered") is None
    two = spacing_vs_N(cfg, [2, 64])
    assert [r["N"] for r in two["rows"]] == [2, 64]
    assert all(r["probability"] == 1.0 for r in two["rows"])
    assert two["ordered"] is False
