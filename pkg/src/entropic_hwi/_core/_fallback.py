"""Pure numpy implementations of the hot kernels.

These define the reference semantics; ``_ckernels.pyx`` mirrors them loop for
loop and the test-suite checks that both agree.
"""
from __future__ import annotations

import math

import numpy as np

NEG_INF = -np.inf


def lse_matvec(log_k: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Return ``out[i] = log(sum_j exp(log_k[i, j] + w[j]))``.

    Rows where every term is ``-inf`` give ``-inf``.
    """
    log_k = np.asarray(log_k, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    z = log_k + w[None, :]
    zmax = z.max(axis=1)
    finite = np.isfinite(zmax)
    shift = np.where(finite, zmax, 0.0)
    with np.errstate(under="ignore"):
        s = np.exp(z - shift[:, None]).sum(axis=1)
    with np.errstate(divide="ignore"):
        out = np.log(s) + shift
    out[~finite] = zmax[~finite]
    return out


def _lse3(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    mx = np.maximum(np.maximum(a, b), c)
    finite = np.isfinite(mx)
    shift = np.where(finite, mx, 0.0)
    with np.errstate(under="ignore", invalid="ignore"):
        s = np.exp(a - shift) + np.exp(b - shift) + np.exp(c - shift)
    with np.errstate(divide="ignore"):
        out = np.log(s) + shift
    out[~finite] = NEG_INF
    return out


def log_poisson_pmf(k: int, lam: float) -> float:
    if lam == 0.0:
        return 0.0 if k == 0 else NEG_INF
    return -lam + k * math.log(lam) - math.lgamma(k + 1.0)


def log_poisson_tail(k: int, lam: float) -> float:
    """Upper bound on ``log P(N >= k)`` for ``N ~ Poisson(lam)``."""
    if k <= lam + 1.0:
        return 0.0
    # geometric bound on the ratio of consecutive pmf terms
    return log_poisson_pmf(k, lam) - math.log1p(-lam / (k + 1.0))


def log_uniformized_apply(
    log_lo: np.ndarray,
    log_mid: np.ndarray,
    log_hi: np.ndarray,
    w: np.ndarray,
    lam_t: float,
    periodic: bool,
    rel_tol: float = 36.0,
    rel_floor: float = 800.0,
    max_steps: int = 200_000,
) -> tuple[np.ndarray, int]:
    """Log of ``exp(t L) exp(w)`` by uniformization in the log semiring.

    ``log_lo``, ``log_mid``, ``log_hi`` are the logs of the stochastic
    tridiagonal matrix ``I + L / lam`` (sub-, main and super-diagonal by row)
    and ``lam_t = lam * t``.  Every partial sum is a sum of nonnegative terms,
    so the result keeps relative accuracy in the far tails.

    Summation stops once the Poisson tail bound times ``max(exp(w))`` is below
    ``exp(-rel_tol)`` relative to every output value, where outputs more than
    ``rel_floor`` below the largest one are only resolved to that floor.
    Returns ``(log_out, steps)``.
    """
    w = np.asarray(w, dtype=np.float64)
    n = w.shape[0]
    wmax = float(np.max(w))
    if not np.isfinite(wmax):
        raise ValueError("input field has no finite entry")
    v = w.copy()
    acc = v + log_poisson_pmf(0, lam_t)
    pad = np.full(1, NEG_INF)
    k = 0
    while True:
        if k >= max_steps:
            raise RuntimeError(f"uniformization did not terminate in {max_steps} steps")
        k += 1
        if periodic:
            prev = np.roll(v, 1)
            nxt = np.roll(v, -1)
        else:
            prev = np.concatenate([pad, v[:-1]])
            nxt = np.concatenate([v[1:], pad])
        v = _lse3(log_lo + prev, log_mid + v, log_hi + nxt)
        acc = np.logaddexp(acc, v + log_poisson_pmf(k, lam_t))
        tail = log_poisson_tail(k + 1, lam_t) + wmax
        if tail > 0.0 or not np.all(np.isfinite(acc)):
            continue
        amax = float(acc.max())
        threshold = float(np.min(np.maximum(acc, amax - rel_floor))) - rel_tol
        if tail < threshold:
            break
    assert acc.shape == (n,)
    return acc, k


def w2_sweep(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Squared W2 between ``sum a_i delta_{x_i}`` and ``sum b_j delta_{x_j}``.

    Both weight vectors must carry the same total mass; ``x`` must be sorted.
    """
    x = np.asarray(x, dtype=np.float64)
    ca = np.cumsum(a)
    cb = np.cumsum(b)
    top = min(ca[-1], cb[-1])
    u = np.union1d(ca[ca < top], cb[cb < top])
    u = np.concatenate([[0.0], u, [top]])
    mids = 0.5 * (u[1:] + u[:-1])
    du = np.diff(u)
    ia = np.minimum(np.searchsorted(ca, mids, side="left"), x.size - 1)
    ib = np.minimum(np.searchsorted(cb, mids, side="left"), x.size - 1)
    return float(np.sum(du * (x[ia] - x[ib]) ** 2))
