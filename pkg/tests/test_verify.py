import json

import numpy as np
import pytest

from anderson_msa import verify
from anderson_msa.schur import count_in_window, SpectralWindow


def test_select_patterns():
    assert verify.select(None) == list(verify.CHECKS)
    assert verify.select("decoupled") == ["decoupled-family", "decoupled-control"]
    assert verify.select("strict-decay,schur-equivalence") == ["strict-decay", "schur-equivalence"]
    with pytest.raises(KeyError):
        verify.select("zzz")


def test_acceptance_names_registered():
    assert len(verify.ACCEPTANCE) == 10
    assert set(verify.ACCEPTANCE) <= set(verify.CHECKS)


def test_random_window_matrix_preconditions():
    rng = np.random.default_rng(0)
    for _ in range(50):
        K, part, window = verify.random_window_matrix(rng)
        assert np.array_equal(K, K.T)
        D = K[np.ix_(part.eliminate, part.eliminate)]
        B = K[np.ix_(part.keep, part.eliminate)]
        assert np.linalg.norm(B, 2) <= 0.05 + 1e-15
        assert count_in_window(D, SpectralWindow(window.center, window.half_width + 0.5)) == 0


def test_decoupled_checks_pass():
    assert verify.check_decoupled_family().passed
    assert verify.check_decoupled_control().passed


def test_check_result_line_and_dict():
    r = verify.CheckResult("x", "desc", "regime", True, False, {"a": 0.123456789012345}, {"b": 1}, 1.5)
    assert r.line().startswith("[FAIL] x")
    d = r.to_dict()
    assert "seconds" not in d
    json.dumps(d)


def test_golden_fixtures_cover_every_subcommand():
    fixtures = verify.load_golden()
    assert set(fixtures) == set(verify.GOLDEN_COMMANDS)
    for name, entry in fixtures.items():
        assert entry["argv"][0] == name


@pytest.mark.parametrize("name", sorted(verify.GOLDEN_COMMANDS))
def test_golden_regression(name):
    match, expected, actual = verify.golden_regression(name)
    assert match, f"{name}: expected {expected}, got {actual}"
