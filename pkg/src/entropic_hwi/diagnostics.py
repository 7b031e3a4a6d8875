"""Identities along entropic interpolations and the small-epsilon experiments.

Potential-based quantities are evaluated at interior times only; the
potentials need not be regular at ``t = 0`` or ``t = 1`` off the supports.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .functionals import DensityField, wasserstein2_squared
from .schrodinger import (
    InterpolationPath,
    PathIntegrands,
    build_path,
    dynamic_cost_terms,
    path_integrands,
    solve_ipfp,
    time_integral,
)
from .space import Generator

log = logging.getLogger(__name__)

RHO_FLOOR = 1e-8


def interior_indices(times: np.ndarray) -> np.ndarray:
    return np.flatnonzero((times > 0.0) & (times < 1.0))


@dataclass(frozen=True)
class ConservationReport:
    times: np.ndarray
    Q_exact: np.ndarray
    Q_velocity: np.ndarray
    spread_exact: float
    spread_velocity: float
    chain_rule_defect: float

    @property
    def relative_spread(self) -> float:
        return self.spread_exact / (1.0 + abs(float(np.mean(self.Q_exact))))


def conservation_report(path: InterpolationPath, gen: Generator | None = None,
                        integrands: PathIntegrands | None = None) -> ConservationReport:
    """``Q_exact = -eps^2 sum Gamma(f_t, g_t) m`` next to its velocity form.

    ``Q_velocity = sum Gamma(theta_t) rho_t m - eps^2/4 I(mu_t)``.  The first is
    conserved exactly by the discrete dynamics, the second up to an O(h)
    chain-rule defect.
    """
    idx = interior_indices(path.times)
    if idx.size < 3:
        raise ValueError("conservation report needs at least 3 interior times")
    ig = integrands or path_integrands(path)
    eps = path.epsilon
    qe = ig.q_exact[idx]
    qv = ig.kinetic_density[idx] - eps**2 / 4.0 * ig.fisher[idx]
    return ConservationReport(
        times=path.times[idx],
        Q_exact=qe,
        Q_velocity=qv,
        spread_exact=float(np.ptp(qe)),
        spread_velocity=float(np.ptp(qv)),
        chain_rule_defect=float(np.max(np.abs(qe - qv))),
    )


def _interior_index(path: InterpolationPath, t: float) -> int:
    k = path.index_of(t)
    if path.times[k] <= 0.0 or path.times[k] >= 1.0:
        raise ValueError(f"time {t} is not interior")
    return k


def _kinetic_and_fisher(path: InterpolationPath, k: int) -> tuple[float, float]:
    gen = path.generator
    lr = path.log_rho[k]
    w = np.exp(lr + gen.measure.log_weights)
    th = path.theta[k]
    return float(np.sum(gen.gamma(th, th) * w)), float(np.sum(gen.gamma_ratio(lr, lr) * w))


def hamiltonian(path: InterpolationPath, gen: Generator | None, t: float) -> float:
    """``sum Gamma(theta_t) rho_t m / 2 - eps^2/8 I(mu_t)``."""
    kin, fis = _kinetic_and_fisher(path, _interior_index(path, t))
    return 0.5 * kin - path.epsilon**2 / 8.0 * fis


def q_velocity(path: InterpolationPath, t: float) -> float:
    kin, fis = _kinetic_and_fisher(path, _interior_index(path, t))
    return kin - path.epsilon**2 / 4.0 * fis


def density_time_derivative(path: InterpolationPath, k: int) -> np.ndarray:
    """Exact ``d rho_t / dt = eps (g_t L f_t - f_t L g_t)``."""
    gen = path.generator
    lf, lg = path.log_f[k], path.log_g[k]
    return path.epsilon * path.rho[k] * (gen.log_ratio_apply(lf) - gen.log_ratio_apply(lg))


def continuity_residual(path: InterpolationPath, gen: Generator | None, t: float,
                        test_fields: Sequence[np.ndarray]) -> float:
    """Weak-form residual of ``d rho/dt + div(rho grad theta) = 0`` against test fields.

    The divergence is defined by duality against ``Gamma``:
    ``max_u |sum (d rho/dt) u m - sum Gamma(theta, u) rho m| / (1 + |u|_inf)``.
    """
    if len(test_fields) == 0:
        raise ValueError("empty test set")
    k = _interior_index(path, t)
    g = path.generator
    m = g.measure.weights
    drho = density_time_derivative(path, k)
    rho = path.rho[k]
    th = path.theta[k]
    worst = 0.0
    for u in test_fields:
        u = np.asarray(u, dtype=float)
        res = np.sum(drho * u * m) - np.sum(g.gamma(th, u) * rho * m)
        worst = max(worst, abs(float(res)) / (1.0 + float(np.max(np.abs(u)))))
    return worst


def hjb_residual(path: InterpolationPath, gen: Generator | None, t: float) -> tuple[float, float]:
    """Residuals of ``d phi/dt = Gamma(phi)/2 + eps L phi`` and ``-d psi/dt = Gamma(psi)/2 + eps L psi``.

    Time derivatives are centered differences over the neighbouring path
    times; the residuals are L2(mu_t) norms over nodes with ``rho_t >= 1e-8``.
    """
    k = _interior_index(path, t)
    if k == 0 or k == path.times.size - 1:
        raise ValueError("time has no neighbours on the path grid")
    g = path.generator
    eps = path.epsilon
    ts = path.times
    dt = ts[k + 1] - ts[k - 1]
    phi = eps * path.log_f
    psi = eps * path.log_g
    dphi = (phi[k + 1] - phi[k - 1]) / dt
    dpsi = (psi[k + 1] - psi[k - 1]) / dt
    r_fwd = dphi - (0.5 * g.gamma(phi[k], phi[k]) + eps * g.apply(phi[k]))
    r_bwd = -dpsi - (0.5 * g.gamma(psi[k], psi[k]) + eps * g.apply(psi[k]))
    rho = path.rho[k]
    keep = rho >= RHO_FLOOR
    w = rho[keep] * g.measure.weights[keep]
    return float(np.sqrt(np.sum(w * r_fwd[keep] ** 2))), float(np.sqrt(np.sum(w * r_bwd[keep] ** 2)))


@dataclass(frozen=True)
class NelsonVelocities:
    v_fwd: np.ndarray
    v_bwd: np.ndarray
    v_cur: np.ndarray
    v_osm: np.ndarray


def nelson_velocities(path: InterpolationPath, eps: float | None, v_prime, t: float) -> NelsonVelocities:
    """Forward, backward, current and osmotic velocities at an interior time.

    ``v_fwd = grad psi - (eps/2) V'`` and ``v_bwd = grad phi - (eps/2) V'``, so
    ``v_cur = grad theta`` and ``v_osm = (eps/2) grad log(rho_t e^{-V})``,
    the latter being the Lebesgue density of ``mu_t`` up to a constant.
    Gradients are centered differences.
    """
    k = _interior_index(path, t)
    eps = path.epsilon if eps is None else float(eps)
    g = path.generator
    drift = 0.5 * eps * np.asarray(v_prime, dtype=float)
    v_fwd = g.gradient(eps * path.log_g[k]) - drift
    v_bwd = g.gradient(eps * path.log_f[k]) - drift
    return NelsonVelocities(v_fwd, v_bwd, 0.5 * (v_fwd - v_bwd), 0.5 * (v_fwd + v_bwd))


# -- epsilon sweep --------------------------------------------------------------------


@dataclass(frozen=True)
class EpsSweepRow:
    epsilon: float
    cost: float
    kinetic: float
    t_weighted_kinetic: float
    fisher_integral: float
    t_weighted_fisher: float
    Q: float
    w2_squared: float
    theta1_energy: float
    iterations: int
    marginal_error: float
    converged: bool

    def as_dict(self) -> dict:
        return asdict(self)


SWEEP_COLUMNS = tuple(EpsSweepRow.__dataclass_fields__)


def endpoint_index(times: np.ndarray) -> int:
    """Last interior node, used in place of ``t = 1`` for potential-based terms."""
    return int(interior_indices(times)[-1])


def sweep_row(path: InterpolationPath, w2_sq: float, quadrature: str = "simpson") -> EpsSweepRow:
    ig = path_integrands(path)
    terms = dynamic_cost_terms(path, quadrature, ig)
    ts = ig.times
    sol = path.solution
    gen = path.generator
    k1 = endpoint_index(ts)
    th1 = path.theta[k1]
    theta1_energy = float(np.sum(gen.gamma(th1, th1) * sol.rho1.probabilities))
    idx = interior_indices(ts)
    return EpsSweepRow(
        epsilon=path.epsilon,
        cost=sol.cost,
        kinetic=terms.kinetic,
        t_weighted_kinetic=time_integral(ts, 0.5 * ts * ig.kinetic_density, quadrature),
        fisher_integral=terms.fisher_integral,
        t_weighted_fisher=time_integral(ts, ts * ig.fisher, quadrature),
        Q=float(np.mean(ig.q_exact[idx])),
        w2_squared=w2_sq,
        theta1_energy=theta1_energy,
        iterations=sol.iterations,
        marginal_error=sol.marginal_error,
        converged=sol.converged,
    )


def _failed_row(eps: float, w2_sq: float, sol) -> EpsSweepRow:
    nan = float("nan")
    return EpsSweepRow(eps, sol.cost, nan, nan, nan, nan, nan, w2_sq, nan,
                       sol.iterations, sol.marginal_error, False)


def solve_row(rho0: DensityField, rho1: DensityField, eps: float, gen: Generator, tol: float = 1e-10,
              max_iter: int = 100_000, times=None, init_log_g=None, quadrature: str = "simpson"):
    """One sweep row; returns ``(row, solution)``."""
    w2_sq = wasserstein2_squared(rho0, rho1)
    sol = solve_ipfp(rho0, rho1, eps, gen, tol=tol, max_iter=max_iter, init_log_g=init_log_g)
    if not sol.converged:
        return _failed_row(eps, w2_sq, sol), sol
    return sweep_row(build_path(sol, times), w2_sq, quadrature), sol


def eps_sweep(rho0: DensityField, rho1: DensityField, eps_list: Sequence[float], gen: Generator,
              tol: float = 1e-10, max_iter: int = 100_000, times=None, warm_start: bool = True,
              quadrature: str = "simpson") -> list[EpsSweepRow]:
    """Solve and integrate at every epsilon, warm-starting each solve from the previous one."""
    eps_arr = np.asarray(eps_list, dtype=float)
    if eps_arr.size == 0 or np.any(eps_arr <= 0) or np.any(np.diff(eps_arr) >= 0):
        raise ValueError("eps_list must be positive and strictly decreasing")
    rows = []
    init = None
    for eps in eps_arr:
        row, sol = solve_row(rho0, rho1, float(eps), gen, tol, max_iter, times, init, quadrature)
        rows.append(row)
        if warm_start and sol.converged:
            # psi_prev / eps_new as the starting log g
            init = sol.log_g * (sol.epsilon / float(eps))
        log.info("eps=%g cost=%.8g iterations=%d converged=%s", eps, row.cost, row.iterations, row.converged)
    return rows


def fit_order(xs, ys) -> float:
    """Least-squares slope of ``log |y|`` against ``log x``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.abs(np.asarray(ys, dtype=float))
    ok = (xs > 0) & (ys > 0) & np.isfinite(ys)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(xs[ok]), np.log(ys[ok]), 1)[0])


def sweep_summary(rows: Sequence[EpsSweepRow]) -> dict:
    good = [r for r in rows if r.converged]
    eps = np.array([r.epsilon for r in good])
    w2 = good[0].w2_squared if good else float("nan")
    cost_gap = np.array([abs(r.cost - 0.5 * r.w2_squared) for r in good])
    q_gap = np.array([abs(r.Q - r.w2_squared) for r in good])
    fis = np.array([r.epsilon**2 * r.fisher_integral for r in good])
    bb = np.array([2 * r.kinetic - r.w2_squared for r in good])
    ratio = [r.t_weighted_kinetic / r.kinetic if r.kinetic > 0 else float("nan") for r in good]

    def _gaps(v):
        return [float(x) for x in v]

    return {
        "rows": len(rows),
        "converged_rows": len(good),
        "w2_squared": float(w2),
        "cost_gap": _gaps(cost_gap),
        "q_gap": _gaps(q_gap),
        "eps2_fisher": _gaps(fis),
        "benamou_brenier_slack": _gaps(bb),
        "t_weighted_kinetic_ratio": _gaps(ratio),
        "order_cost_gap": fit_order(eps, cost_gap),
        "order_q_gap": fit_order(eps, q_gap),
        "order_eps2_fisher": fit_order(eps, fis),
    }


def refinement_orders(ns: Sequence[int], values: Sequence[float]) -> list[float]:
    """Observed orders ``log2(|e_k| / |e_{k+1}|)`` between consecutive nested grids (h halves)."""
    v = np.abs(np.asarray(values, dtype=float))
    out = []
    for a, b in zip(v[:-1], v[1:]):
        out.append(float(np.log2(a / b)) if a > 0 and b > 0 else float("nan"))
    return out


def theta_gauge_check(path: InterpolationPath, c: float = 7.3) -> float:
    """Largest change of ``Gamma(theta)`` under the gauge ``(c f, g / c)``."""
    gen = path.generator
    other = path.with_gauge(c)
    idx = interior_indices(path.times)
    diff = 0.0
    for k in idx:
        a = gen.gamma(path.theta[k], path.theta[k])
        b = gen.gamma(other.theta[k], other.theta[k])
        diff = max(diff, float(np.max(np.abs(a - b))))
    return diff


__all__ = [
    "ConservationReport",
    "EpsSweepRow",
    "NelsonVelocities",
    "SWEEP_COLUMNS",
    "conservation_report",
    "continuity_residual",
    "eps_sweep",
    "fit_order",
    "hamiltonian",
    "hjb_residual",
    "nelson_velocities",
    "q_velocity",
    "refinement_orders",
    "sweep_summary",
    "sweep_row",
]
