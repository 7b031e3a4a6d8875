"""Heat semigroup ``T_t = exp(t L)`` and its kernel with respect to ``m``.

Two evaluation paths are provided.  The spectral factorization of the
symmetrized generator is exact up to rounding in absolute terms and gives
``T_t`` at any ``t`` cheaply.  Small kernel entries lose all relative accuracy
there, so the log-domain routines (``log_kernel``, ``log_apply``) use
uniformization instead, which only ever adds nonnegative terms.
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal, LinAlgError

from . import _core
from .space import Generator

log = logging.getLogger(__name__)

CLAMP_MASS_LIMIT = 1e-8


class SemigroupError(RuntimeError):
    pass


class _ClampCounter:
    """Process-wide tally of negative undershoot removed by ``apply``."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0
        self.mass = 0.0

    def add(self, count: int, mass: float):
        with self._lock:
            self.count += count
            self.mass += mass

    def reset(self):
        with self._lock:
            self.count = 0
            self.mass = 0.0


clamp_counter = _ClampCounter()


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    modes: np.ndarray
    sqrt_m: np.ndarray
    inv_sqrt_m: np.ndarray

    @property
    def spectral_gap(self) -> float:
        return float(-self.eigenvalues[1])


def symmetrized_matrix(gen: Generator) -> np.ndarray:
    n = gen.n
    a = np.diag(gen.diag)
    off = gen.symmetric_offdiag
    idx = np.arange(n - 1)
    a[idx, idx + 1] = off[: n - 1]
    a[idx + 1, idx] = off[: n - 1]
    if gen.grid.periodic:
        a[n - 1, 0] += off[n - 1]
        a[0, n - 1] += off[n - 1]
    return a


def decompose(gen: Generator) -> SpectralDecomposition:
    try:
        if gen.grid.periodic:
            lam, u = eigh(symmetrized_matrix(gen))
        else:
            lam, u = eigh_tridiagonal(gen.diag, gen.symmetric_offdiag)
    except (LinAlgError, ValueError) as exc:
        raise SemigroupError(f"eigensolver failed: {exc}") from exc
    order = np.argsort(lam)[::-1]
    lam, u = lam[order], u[:, order]
    if abs(lam[0]) > 1e-10:
        raise SemigroupError(f"top eigenvalue {lam[0]:.3e} is not zero")
    sqrt_m = np.exp(0.5 * gen.measure.log_weights)
    if u[:, 0] @ sqrt_m < 0:
        u[:, 0] = -u[:, 0]
    return SpectralDecomposition(lam, u, sqrt_m, 1.0 / sqrt_m)


def apply(spec: SpectralDecomposition, t: float, f) -> np.ndarray:
    """``T_t f`` through the spectral factorization."""
    if t < 0:
        raise ValueError(f"negative time {t}")
    f = np.asarray(f, dtype=float)
    if np.isnan(f).any():
        raise ValueError("NaN in input field")
    if t == 0:
        return f.copy()
    u = spec.modes
    # T_t c = c for constants; shifting by f[0] makes that exact in floating point
    base = f[0]
    coef = u.T @ (spec.sqrt_m * (f - base))
    out = base + spec.inv_sqrt_m * (u @ (np.exp(t * spec.eigenvalues) * coef))
    if f.min() >= 0:
        neg = out < 0
        if neg.any():
            m = spec.sqrt_m**2
            mass = float(-(out[neg] * m[neg]).sum())
            clamp_counter.add(int(neg.sum()), mass)
            if mass > CLAMP_MASS_LIMIT:
                raise SemigroupError(f"clamped undershoot mass {mass:.3e} exceeds {CLAMP_MASS_LIMIT:g}")
            out[neg] = 0.0
    return out


def kernel_matrix(spec: SpectralDecomposition, t: float, floor: float = 1e-300) -> np.ndarray:
    """Heat kernel ``r_t(i, j)`` with ``(T_t f)_i = sum_j r_t(i, j) f_j m_j``.

    Entries below ``floor`` (spectral round-off territory) are raised to it;
    use ``log_kernel`` when the small entries matter.
    """
    if t <= 0:
        raise ValueError(f"kernel needs t > 0, got {t}")
    u = spec.modes
    r = (u * np.exp(t * spec.eigenvalues)) @ u.T
    r = spec.inv_sqrt_m[:, None] * r * spec.inv_sqrt_m[None, :]
    r = 0.5 * (r + r.T)
    return np.maximum(r, floor)


def log_kernel(gen: Generator, t: float, terms: int = 40, base_rate: float = 0.5) -> np.ndarray:
    """Log transition matrix ``log P_t(i, j) = log r_t(i, j) + log m_j``, relatively accurate.

    The symmetrized operator is uniformized, ``exp(sA) = e^{-z} sum_k z^k/k! B^k``
    with ``B = I + A/lam`` entrywise nonnegative and ``z = lam s <= base_rate``;
    then ``q`` squarings reach ``t = 2^q s``.  Entries below ~1e-308 become -inf.
    """
    if t <= 0:
        raise ValueError(f"kernel needs t > 0, got {t}")
    n = gen.n
    lam = gen.rate_bound
    q = max(0, int(np.ceil(np.log2(lam * t / base_rate))))
    z = lam * t / 2**q
    bdiag = 1.0 + gen.diag / lam
    boff = gen.symmetric_offdiag / lam
    lo = boff[: n - 1, None]
    term = np.eye(n)
    acc = term.copy()
    for k in range(1, terms + 1):
        new = bdiag[:, None] * term
        new[1:] += lo * term[:-1]
        new[:-1] += lo * term[1:]
        if gen.grid.periodic:
            new[0] += boff[n - 1] * term[n - 1]
            new[n - 1] += boff[n - 1] * term[0]
        term = new * (z / k)
        acc += term
    acc *= np.exp(-z)
    for _ in range(q):
        acc = acc @ acc
        acc = 0.5 * (acc + acc.T)
    lm = gen.measure.log_weights
    with np.errstate(divide="ignore"):
        return np.log(acc) - 0.5 * lm[:, None] + 0.5 * lm[None, :]


class LogKernelCache:
    """Memoizes ``log_kernel`` per time for one generator."""

    def __init__(self, gen: Generator, max_entries: int = 4):
        self.gen = gen
        self.max_entries = max_entries
        self._store: dict[float, np.ndarray] = {}

    def __call__(self, t: float) -> np.ndarray:
        key = float(t)
        if key not in self._store:
            if len(self._store) >= self.max_entries:
                self._store.pop(next(iter(self._store)))
            self._store[key] = log_kernel(self.gen, key)
        return self._store[key]


def _stochastic_log_diagonals(gen: Generator):
    lam = gen.rate_bound
    with np.errstate(divide="ignore"):
        return np.log(gen.down / lam), np.log(np.maximum(1.0 + gen.diag / lam, 0.0)), np.log(gen.up / lam)


def log_apply(gen: Generator, t: float, log_f) -> np.ndarray:
    """``log(T_t e^u)`` for ``u = log f`` (``-inf`` allowed) by log-domain uniformization."""
    log_f = np.asarray(log_f, dtype=float)
    if t < 0:
        raise ValueError(f"negative time {t}")
    if t == 0:
        return log_f.copy()
    lo, mid, hi = _stochastic_log_diagonals(gen)
    out, _ = _core.log_uniformized_apply(lo, mid, hi, log_f, gen.rate_bound * t, gen.grid.periodic)
    return out


def log_apply_kernel(log_p: np.ndarray, log_f) -> np.ndarray:
    """``log(P e^u)`` for a precomputed log transition matrix."""
    return _core.lse_matvec(log_p, np.asarray(log_f, dtype=float))


def bakry_emery_defect(spec: SpectralDecomposition, gen: Generator, kappa: float, f, t: float) -> float:
    """``max_i [Gamma(T_t f) - e^{-2 kappa t} T_t Gamma(f)]_i``.

    With the factor 1/2 carried by ``L`` the sharp continuum rate is
    ``e^{-kappa t}``: for ``V = x^2/2`` and ``f = x`` the defect is
    ``e^{-t} - e^{-2t} > 0``.  Localized ``f`` still give a small defect.
    """
    f = np.asarray(f, dtype=float)
    tf = apply(spec, t, f)
    lhs = gen.gamma(tf, tf)
    rhs = np.exp(-2 * kappa * t) * apply(spec, t, gen.gamma(f, f))
    return float(np.max(lhs - rhs))
