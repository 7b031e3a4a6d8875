"""The compiled kernels and the numpy fallback must agree."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp

from entropic_hwi import _core
from entropic_hwi._core import _fallback

try:
    from entropic_hwi._core import _ckernels
except ImportError:  # pragma: no cover - build without the extension
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")


def test_backend_reported():
    assert _core.BACKEND in ("cython", "python")


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 2**31 - 1))
def test_lse_matvec_matches_scipy(rows, cols, seed):
    rng = np.random.default_rng(seed)
    k = rng.normal(scale=50, size=(rows, cols))
    k[rng.random((rows, cols)) < 0.2] = -np.inf
    w = rng.normal(scale=50, size=cols)
    ref = logsumexp(k + w[None, :], axis=1)
    np.testing.assert_allclose(_fallback.lse_matvec(k, w), ref, rtol=1e-13, atol=1e-12)
    if _ckernels is not None:
        np.testing.assert_allclose(_ckernels.lse_matvec(k, w), ref, rtol=1e-13, atol=1e-12)


def test_lse_matvec_empty_row():
    k = np.array([[-np.inf, -np.inf], [0.0, 1.0]])
    out = _core.lse_matvec(k, np.zeros(2))
    assert out[0] == -np.inf and np.isclose(out[1], np.log(1 + np.e))


def _tridiag(n, periodic, rng):
    up = rng.uniform(0.5, 1.5, n)
    down = rng.uniform(0.5, 1.5, n)
    if not periodic:
        up[-1] = 0.0
        down[0] = 0.0
    lam = (up + down).max()
    with np.errstate(divide="ignore"):
        return up, down, lam, np.log(down / lam), np.log(1 - (up + down) / lam), np.log(up / lam)


@needs_ext
@pytest.mark.parametrize("periodic", [False, True])
def test_uniformized_apply_backends_agree(periodic, rng):
    n = 40
    _, _, lam, lo, mid, hi = _tridiag(n, periodic, rng)
    w = rng.normal(scale=30, size=n)
    w[:10] = -np.inf
    a, ka = _fallback.log_uniformized_apply(lo, mid, hi, w, lam * 3.0, periodic)
    b, kb = _ckernels.log_uniformized_apply(lo, mid, hi, w, lam * 3.0, periodic)
    assert ka == kb
    np.testing.assert_allclose(a, b, rtol=1e-13)


@pytest.mark.parametrize("periodic", [False, True])
def test_uniformized_apply_matches_expm(periodic, rng):
    from scipy.linalg import expm

    n = 25
    up, down, lam, lo, mid, hi = _tridiag(n, periodic, rng)
    L = np.diag(-(up + down))
    for i in range(n):
        if periodic or i < n - 1:
            L[i, (i + 1) % n] += up[i]
        if periodic or i > 0:
            L[i, (i - 1) % n] += down[i]
    f = rng.uniform(0.1, 2.0, n)
    ref = np.log(expm(0.7 * L) @ f)
    out, _ = _core.log_uniformized_apply(lo, mid, hi, np.log(f), lam * 0.7, periodic)
    np.testing.assert_allclose(out, ref, rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2**31 - 1))
def test_w2_sweep_backends_agree(n, seed):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.normal(size=n))
    a = rng.random(n)
    b = rng.random(n)
    a[rng.random(n) < 0.3] = 0.0
    a[0] += 0.1
    a /= a.sum()
    b /= b.sum()
    ref = _fallback.w2_sweep(x, a, b)
    assert ref >= 0
    if _ckernels is not None:
        assert abs(_ckernels.w2_sweep(x, a, b) - ref) <= 1e-12 * (1 + ref)
