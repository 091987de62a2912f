import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphkernels import _accel
from sphkernels.kernels import KernelSpec
from sphkernels.series import kernel_series
from sphkernels.sphharm import jacobi_quadrature

pytestmark = pytest.mark.skipif(not _accel.HAS_NUMBA, reason="numba not importable")


@settings(max_examples=25)
@given(st.integers(3, 9), st.integers(0, 120), st.integers(1, 50), st.integers(0, 2**16))
def test_legendre_table_backends_agree(d, k_max, n, seed):
    t = np.random.default_rng(seed).uniform(-1, 1, n)
    a = _accel.legendre_table_numba(d, k_max, t)
    b = _accel.legendre_table_numpy(d, k_max, t)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


@settings(max_examples=25)
@given(st.integers(1, 40), st.integers(1, 500), st.integers(0, 2**16))
def test_weighted_row_sums_backends_agree(rows, cols, seed):
    rng = np.random.default_rng(seed)
    table = rng.standard_normal((rows, cols))
    v = rng.uniform(0, 1, cols)
    a = _accel.weighted_row_sums_numba(table, v)
    b = _accel.weighted_row_sums_numpy(table, v)
    scale = np.abs(table * v).sum(axis=1)
    assert np.all(np.abs(a - b) <= 4 * np.finfo(float).eps * scale)


@pytest.mark.parametrize("spec", [KernelSpec.ntk(3), KernelSpec.rf(3), KernelSpec.arccos0(), KernelSpec.gauss(2.0)], ids=str)
@pytest.mark.parametrize("d", [3, 5])
def test_series_project_backends_agree(spec, d):
    b = np.asarray(kernel_series(spec, 20000).coeffs)
    a1 = _accel.series_project_numba(b, float(d), 200)
    a2 = _accel.series_project_numpy(b, float(d), 200)
    np.testing.assert_allclose(a1, a2, rtol=1e-12, atol=1e-300)


def test_quadrature_sum_matches_fsum_on_cancelling_rows():
    rule = jacobi_quadrature(3, 400, desingularize=True)
    table = _accel.legendre_table_numpy(3, 300, rule.nodes)
    a = _accel.weighted_row_sums_numba(table, rule.weights)
    b = _accel.weighted_row_sums_numpy(table, rule.weights)
    # rows k >= 1 integrate to zero up to node rounding; the two summations agree far below that
    assert np.max(np.abs(a[1:])) <= 1e-13 and np.max(np.abs(b[1:])) <= 1e-13
    assert np.max(np.abs(a - b)) <= 1e-17
    assert a[0] == pytest.approx(2.0, rel=1e-15)


@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_env_flag_selects_backend(backend):
    env = dict(os.environ, SPHKERNELS_BACKEND=backend)
    code = (
        "from sphkernels import _accel, mu_series, KernelSpec;"
        "print(_accel.BACKEND, repr(float(mu_series(KernelSpec.rf(3), 3, 3).mu[3])))"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout
    name, value = out.split()
    assert name == backend
    assert float(value) == pytest.approx(0.0022414651087716966006, rel=1e-6)


def test_env_flag_rejects_unknown_backend():
    env = dict(os.environ, SPHKERNELS_BACKEND="cuda")
    proc = subprocess.run([sys.executable, "-c", "import sphkernels"], env=env, capture_output=True, text=True)
    assert proc.returncode != 0 and "SPHKERNELS_BACKEND" in proc.stderr
