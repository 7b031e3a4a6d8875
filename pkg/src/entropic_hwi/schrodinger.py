"""Schrodinger system solver, static coupling and entropic interpolation path.

The system ``rho0 = f T_eps g``, ``rho1 = g T_eps f`` is solved by iterative
proportional fitting on ``log f`` and ``log g``.  All kernel products are
log-sum-exp reductions against a relatively accurate log kernel, so nothing
overflows even when ``psi / eps`` spans hundreds of units.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson, trapezoid

from . import semigroup
from .functionals import DensityError, DensityField, relative_entropy
from .space import Generator

log = logging.getLogger(__name__)

DEFAULT_TIMES = 65


class NotConvergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class SchrodingerSolution:
    epsilon: float
    generator: Generator = field(repr=False)
    rho0: DensityField = field(repr=False)
    rho1: DensityField = field(repr=False)
    log_f: np.ndarray = field(repr=False)
    log_g: np.ndarray = field(repr=False)
    cost: float
    iterations: int
    marginal_error: float
    gauge: float
    converged: bool
    defect_history: tuple = field(default=(), repr=False)
    log_transition: np.ndarray | None = field(default=None, repr=False)

    @property
    def f(self) -> np.ndarray:
        return np.exp(self.log_f)

    @property
    def g(self) -> np.ndarray:
        return np.exp(self.log_g)

    @property
    def phi(self) -> np.ndarray:
        """``eps log f`` on the support of ``rho0``, NaN elsewhere."""
        return np.where(self.rho0.support, self.epsilon * self.log_f, np.nan)

    @property
    def psi(self) -> np.ndarray:
        return np.where(self.rho1.support, self.epsilon * self.log_g, np.nan)

    def with_gauge(self, c: float) -> "SchrodingerSolution":
        """The equivalent solution ``(c f, g / c)``."""
        lc = float(np.log(c))
        lf = self.log_f + lc
        lg = self.log_g - lc
        return replace(self, log_f=lf, log_g=lg, gauge=self.gauge + lc,
                       cost=_cost(self.epsilon, lf, lg, self.rho0, self.rho1))


def _cost(eps, lf, lg, rho0: DensityField, rho1: DensityField) -> float:
    s0, s1 = rho0.support, rho1.support
    return float(eps * (np.sum(lf[s0] * rho0.probabilities[s0]) + np.sum(lg[s1] * rho1.probabilities[s1])))


def _block_operator(gen: Generator, eps: float, log_p, rows: np.ndarray, cols: np.ndarray) -> Callable:
    """``u -> log(T_eps e^u)`` restricted to ``rows``, for ``u`` supported on ``cols``."""
    block = np.ascontiguousarray(log_p[np.ix_(rows, cols)]) if log_p is not None else None
    if block is not None and np.all(np.isfinite(block.max(axis=1))):
        return lambda u: semigroup.log_apply_kernel(block, u)
    # some target row lies beyond the reach of the dense kernel's exponent range
    log.info("dense kernel underflows on a block row; using uniformized application")
    n = gen.n

    def op(u):
        full = np.full(n, -np.inf)
        full[cols] = u
        return semigroup.log_apply(gen, eps, full)[rows]

    return op


def solve_ipfp(
    rho0: DensityField,
    rho1: DensityField,
    epsilon: float,
    generator: Generator,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    kernel: semigroup.LogKernelCache | np.ndarray | None = None,
    init_log_g: np.ndarray | None = None,
) -> SchrodingerSolution:
    """Log-domain iterative proportional fitting for the Schrodinger system.

    The returned potentials are gauged so that ``sum phi rho0 m = sum psi rho1 m``.
    A run that exhausts ``max_iter`` is returned with ``converged=False``.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not (rho0.support.any() and rho1.support.any()):
        raise DensityError("marginal with empty support")
    gen = generator
    if kernel is None:
        log_p = semigroup.log_kernel(gen, epsilon)
    elif isinstance(kernel, semigroup.LogKernelCache):
        log_p = kernel(epsilon)
    else:
        log_p = np.asarray(kernel)
    s0 = np.flatnonzero(rho0.support)
    s1 = np.flatnonzero(rho1.support)
    t01 = _block_operator(gen, epsilon, log_p, s0, s1)
    t10 = _block_operator(gen, epsilon, log_p, s1, s0)
    l0, l1 = rho0.log_rho[s0], rho1.log_rho[s1]
    p0, p1 = rho0.probabilities[s0], rho1.probabilities[s1]

    if init_log_g is not None:
        lg = np.asarray(init_log_g, dtype=float)[s1].copy()
        if not np.all(np.isfinite(lg)):
            lg = np.zeros(s1.size)
    else:
        lg = np.zeros(s1.size)
    lTg = t01(lg)
    history = []
    it = 0
    err = np.inf
    while it < max_iter:
        it += 1
        lf = l0 - lTg
        lTf = t10(lf)
        lg = l1 - lTf
        lTg = t01(lg)
        # row marginal defect; the column marginal is exact right after the g update
        err = 0.5 * float(np.sum(p0 * np.abs(np.expm1(lf + lTg - l0))))
        history.append(err)
        if err <= tol:
            break
    col_err = 0.5 * float(np.sum(p1 * np.abs(np.expm1(lg + t10(lf) - l1))))
    marginal_error = max(err, col_err)
    converged = marginal_error <= tol
    if not converged:
        log.warning("IPFP stopped after %d iterations with defect %.3e > %.1e", it, marginal_error, tol)

    # symmetric gauge: sum phi mu0 = sum psi mu1
    shift = 0.5 * (np.sum(lg * p1) - np.sum(lf * p0))
    lf = lf + shift
    lg = lg - shift
    log_f = np.full(gen.n, -np.inf)
    log_g = np.full(gen.n, -np.inf)
    log_f[s0] = lf
    log_g[s1] = lg
    return SchrodingerSolution(
        epsilon=float(epsilon),
        generator=gen,
        rho0=rho0,
        rho1=rho1,
        log_f=log_f,
        log_g=log_g,
        cost=_cost(epsilon, log_f, log_g, rho0, rho1),
        iterations=it,
        marginal_error=marginal_error,
        gauge=float(shift),
        converged=converged,
        defect_history=tuple(history),
        log_transition=log_p,
    )


def _log_transition(sol: SchrodingerSolution) -> np.ndarray:
    if sol.log_transition is not None:
        return sol.log_transition
    return semigroup.log_kernel(sol.generator, sol.epsilon)


def log_static_coupling(sol: SchrodingerSolution) -> np.ndarray:
    lm = sol.generator.measure.log_weights
    return (lm + sol.log_f)[:, None] + _log_transition(sol) + sol.log_g[None, :]


def static_coupling(sol: SchrodingerSolution) -> np.ndarray:
    """``pi(i, j) = f_i r_eps(i, j) g_j m_i m_j``."""
    return np.exp(log_static_coupling(sol))


def coupling_entropic_cost(sol: SchrodingerSolution) -> float:
    """``eps H(pi | R01)`` evaluated directly on the coupling matrix."""
    lpi = log_static_coupling(sol)
    lm = sol.generator.measure.log_weights
    lref = lm[:, None] + _log_transition(sol)
    mask = np.isfinite(lpi)
    pi = np.exp(lpi[mask])
    return float(sol.epsilon * np.sum(pi * (lpi[mask] - lref[mask])))


# -- interpolation path -------------------------------------------------------------


@dataclass(frozen=True)
class InterpolationPath:
    times: np.ndarray
    log_f: np.ndarray = field(repr=False)
    log_g: np.ndarray = field(repr=False)
    epsilon: float
    solution: SchrodingerSolution = field(repr=False)

    @property
    def generator(self) -> Generator:
        return self.solution.generator

    @property
    def log_rho(self) -> np.ndarray:
        return self.log_f + self.log_g

    @property
    def rho(self) -> np.ndarray:
        return np.exp(self.log_rho)

    @property
    def f(self) -> np.ndarray:
        return np.exp(self.log_f)

    @property
    def g(self) -> np.ndarray:
        return np.exp(self.log_g)

    @property
    def theta(self) -> np.ndarray:
        """``(psi_t - phi_t)/2``; NaN where either factor vanishes."""
        with np.errstate(invalid="ignore"):
            th = 0.5 * self.epsilon * (self.log_g - self.log_f)
        return np.where(np.isfinite(th), th, np.nan)

    @property
    def masses(self) -> np.ndarray:
        lm = self.generator.measure.log_weights
        return np.exp(self.log_rho + lm[None, :]).sum(axis=1)

    def density(self, k: int) -> DensityField:
        return DensityField.from_log(self.log_rho[k], self.generator.measure)

    def index_of(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if not np.isclose(self.times[k], t, rtol=0, atol=1e-12):
            raise ValueError(f"time {t} is not on the path grid")
        return k

    def with_gauge(self, c: float) -> "InterpolationPath":
        lc = float(np.log(c))
        return replace(self, log_f=self.log_f + lc, log_g=self.log_g - lc, solution=self.solution.with_gauge(c))


def _validate_times(times) -> np.ndarray:
    if times is None:
        times = DEFAULT_TIMES
    if np.isscalar(times):
        count = int(times)
        if count < 3:
            raise ValueError("a path needs at least 3 time nodes")
        return np.linspace(0.0, 1.0, count)
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0) or t[0] < 0 or t[-1] > 1:
        raise ValueError("times must be strictly increasing within [0, 1]")
    return t


def build_path(sol: SchrodingerSolution, times: Sequence[float] | int | None = None) -> InterpolationPath:
    """``f_t = T_{eps t} f`` and ``g_t = T_{eps (1-t)} g`` on a time grid."""
    if not sol.converged:
        raise NotConvergedError("cannot build a path from a non-converged solution")
    t = _validate_times(times)
    gen, eps = sol.generator, sol.epsilon
    nt = t.size
    lf = np.empty((nt, gen.n))
    lg = np.empty((nt, gen.n))
    prev_t, cur = 0.0, sol.log_f
    for k in range(nt):
        cur = semigroup.log_apply(gen, eps * (t[k] - prev_t), cur)
        lf[k] = cur
        prev_t = t[k]
    prev_s, cur = 0.0, sol.log_g
    for k in range(nt - 1, -1, -1):
        s = 1.0 - t[k]
        cur = semigroup.log_apply(gen, eps * (s - prev_s), cur)
        lg[k] = cur
        prev_s = s
    path = InterpolationPath(t, lf, lg, eps, sol)
    mass = path.masses
    if np.max(np.abs(mass - 1.0)) > max(1e-9, 10 * sol.marginal_error):
        log.warning("path mass drifts by %.3e", np.max(np.abs(mass - 1.0)))
    return path


# -- time integrands ----------------------------------------------------------------


def _weighted_sum(values: np.ndarray, log_weight: np.ndarray) -> float:
    """``sum values * exp(log_weight)`` over nodes with positive weight; inf/NaN propagate."""
    s = np.isfinite(log_weight)
    return float(np.sum(values[s] * np.exp(log_weight[s])))


@dataclass(frozen=True)
class PathIntegrands:
    """Per-time spatial sums along a path (before any time quadrature)."""

    times: np.ndarray
    kinetic_density: np.ndarray      # sum Gamma(theta) rho m
    fisher: np.ndarray               # I(mu_t | m), ratio form
    fisher_log: np.ndarray           # sum Gamma(log rho) rho m
    q_exact: np.ndarray              # -eps^2 sum Gamma(f, g) m


def path_integrands(path: InterpolationPath) -> PathIntegrands:
    gen = path.generator
    lm = gen.measure.log_weights
    eps = path.epsilon
    nt = path.times.size
    kin = np.empty(nt)
    fis = np.empty(nt)
    fis_log = np.empty(nt)
    qex = np.empty(nt)
    theta = path.theta
    for k in range(nt):
        lr = path.log_rho[k]
        lw = lr + lm
        with np.errstate(invalid="ignore"):
            g_theta = gen.gamma(theta[k], theta[k])
            kin[k] = _weighted_sum(g_theta, lw)
            fis[k] = _weighted_sum(gen.gamma_ratio(lr, lr), lw)
            fis_log[k] = _weighted_sum(gen.gamma(lr, lr), lw)
            qex[k] = -eps**2 * _weighted_sum(gen.gamma_ratio(path.log_f[k], path.log_g[k]), lw)
    return PathIntegrands(path.times.copy(), kin, fis, fis_log, qex)


def _fill_endpoints(times: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Replace non-finite endpoint values by linear extrapolation from the interior."""
    y = np.array(y, dtype=float)
    if y.size >= 4:
        if not np.isfinite(y[0]):
            y[0] = y[1] + (y[1] - y[2]) * (times[0] - times[1]) / (times[1] - times[2])
        if not np.isfinite(y[-1]):
            y[-1] = y[-2] + (y[-2] - y[-3]) * (times[-1] - times[-2]) / (times[-2] - times[-3])
    return y


def time_integral(times: np.ndarray, y: np.ndarray, quadrature: str = "simpson") -> float:
    y = _fill_endpoints(times, y)
    if quadrature == "simpson":
        return float(simpson(y, x=times))
    if quadrature == "trapezoid":
        return float(trapezoid(y, x=times))
    raise ValueError(f"unknown quadrature rule {quadrature!r}")


@dataclass(frozen=True)
class DynamicTerms:
    kinetic: float
    fisher_integral: float
    entropy_endpoints: float
    dynamic_total: float
    cost: float

    @property
    def residual(self) -> float:
        return abs(self.dynamic_total - self.cost)


def dynamic_cost_terms(path: InterpolationPath, quadrature: str = "simpson",
                       integrands: PathIntegrands | None = None) -> DynamicTerms:
    """Terms of the dynamic representation of the entropic cost.

    ``kinetic = int sum Gamma(theta)/2 rho m dt``,
    ``fisher_integral = int I(mu_t) dt``,
    ``entropy_endpoints = eps (H0 + H1) / 2``.
    """
    if path.times.size < 3:
        raise ValueError("need at least 3 time nodes")
    ig = integrands or path_integrands(path)
    eps = path.epsilon
    kinetic = time_integral(ig.times, 0.5 * ig.kinetic_density, quadrature)
    fisher_int = time_integral(ig.times, ig.fisher, quadrature)
    sol = path.solution
    ent = 0.5 * eps * (relative_entropy(sol.rho0) + relative_entropy(sol.rho1))
    total = ent + kinetic + eps**2 / 8.0 * fisher_int
    return DynamicTerms(kinetic, fisher_int, ent, total, sol.cost)
