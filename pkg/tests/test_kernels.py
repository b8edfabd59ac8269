import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm

from bifdetect import _kernels_py as py
from bifdetect import kernels

core = pytest.importorskip("bifdetect._core")

states = arrays(np.float64, st.tuples(st.integers(1, 12), st.just(2)),
                elements=st.floats(-1, 1, allow_nan=False))


@given(X=states, alpha=st.floats(-5, 1), nsteps=st.integers(0, 40))
def test_pitchfork_parity(X, alpha, nsteps):
    a = core.rk4_pitchfork(X, alpha, 0.01, nsteps, 10.0)
    b = py.rk4_pitchfork(X, alpha, 0.01, nsteps, 10.0)
    np.testing.assert_allclose(np.asarray(a[0]), b[0], rtol=1e-12, atol=1e-14)
    assert a[1:] == b[1:]


@given(X=states, A=arrays(np.float64, (2, 2), elements=st.floats(-3, 3)),
       nsteps=st.integers(0, 40))
def test_linear_parity(X, A, nsteps):
    a = core.rk4_linear(X, A, 0.01, nsteps, 10.0)
    b = py.rk4_linear(X, A, 0.01, nsteps, 10.0)
    np.testing.assert_allclose(np.asarray(a[0]), b[0], rtol=1e-12, atol=1e-14)
    assert a[1:] == b[1:]


@pytest.mark.parametrize("mod", [core, py], ids=["compiled", "fallback"])
def test_failure_index(mod):
    X = np.array([[0.1, 0.0], [0.9, 0.9], [0.5, 0.5]])
    out, orbit, step = mod.rk4_pitchfork(X, 5.0, 0.01, 1000, 10.0)
    assert orbit == 1 and 1 <= step < 1000
    assert np.abs(np.asarray(out)[1]).max() > 10.0


@pytest.mark.parametrize("mod", [core, py], ids=["compiled", "fallback"])
def test_linear_matches_exponential(mod):
    A = np.array([[-1.0, 0.5], [0.0, -2.0]])
    X = np.array([[1.0, -1.0], [0.3, 0.2]])
    out, orbit, _ = mod.rk4_linear(X, A, 1e-3, 1000, 10.0)
    np.testing.assert_allclose(np.asarray(out), X @ expm(A).T, rtol=1e-10)
    assert orbit == -1


def random_barrier_input(seed, m=20, N=5, n=2, scale=0.05):
    rng = np.random.default_rng(seed)
    C = np.zeros((m, N, n))
    C[:, :n, :] = np.eye(n)
    C += scale * rng.standard_normal(C.shape)
    Theta = np.zeros((N, n))
    Theta[:n] = np.eye(n)
    Theta += scale * rng.standard_normal(Theta.shape)
    return Theta, C


@given(seed=st.integers(0, 10 ** 6), scale=st.sampled_from([0.01, 0.1, 0.3, 1.0]),
       need_grad=st.booleans())
def test_barrier_parity(seed, scale, need_grad):
    Theta, C = random_barrier_input(seed, scale=scale)
    a = core.barrier_terms(Theta, C, need_grad, 1e-12)
    b = py.barrier_terms(Theta, C, need_grad, 1e-12)
    assert a[0] == b[0] and a[3] == b[3]
    if b[0]:
        assert a[1] == pytest.approx(b[1], rel=1e-10, abs=1e-12)
        if need_grad:
            np.testing.assert_allclose(a[2], b[2], rtol=1e-9, atol=1e-12)
    else:
        assert a[1] == np.inf and a[2] is None


def test_barrier_infeasible():
    Theta, C = random_barrier_input(0)
    for mod in (core, py):
        assert mod.barrier_terms(-Theta, C, True, 1e-12) == (False, np.inf, None, 0)


@pytest.mark.skipif(os.environ.get("BIFDETECT_PURE_PYTHON", "") not in ("", "0"),
                    reason="fallback forced by environment")
def test_compiled_backend_selected():
    assert kernels.BACKEND == "cython"


def test_env_forces_fallback():
    env = dict(os.environ, BIFDETECT_PURE_PYTHON="1")
    proc = subprocess.run([sys.executable, "-c", "import bifdetect; print(bifdetect.BACKEND)"],
                          capture_output=True, text=True, env=env)
    assert proc.stdout.strip() == "python"
