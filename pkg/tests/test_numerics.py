import numpy as np
from hypothesis import given, strategies as st

from anderson_msa import numerics


def test_mp_eigh_residual():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(9, 9))
    A = A + A.T
    with numerics.working_precision(200):
        M = numerics.mp_array(A)
        w, V = numerics.eigh(M)
        R = M @ V - V * w
        assert float(max(abs(x) for x in R.ravel())) < 1e-50
        assert np.allclose(numerics.to_float(w), np.linalg.eigvalsh(A), atol=1e-12)


def test_mp_solve():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(7, 7)) + 7 * np.eye(7)
    b = rng.normal(size=(7, 2))
    with numerics.working_precision(160):
        x = numerics.solve(numerics.mp_array(A), numerics.mp_array(b))
        r = numerics.mp_array(A) @ x - numerics.mp_array(b)
        assert float(max(abs(v) for v in r.ravel())) < 1e-40


def test_to_mp_uses_decimal_value():
    with numerics.working_precision(128):
        assert numerics.decimal_string(numerics.to_mp(0.1), 20).startswith("1.0000000000000000000")


@given(st.integers(2, 6), st.integers(0, 1000))
def test_float_eigh_orthonormal(n, seed):
    A = np.random.default_rng(seed).normal(size=(n, n))
    w, V = numerics.eigh(A + A.T)
    assert np.allclose(V.T @ V, np.eye(n), atol=1e-12)
    assert list(w) == sorted(w)
