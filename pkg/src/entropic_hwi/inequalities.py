"""Both sides of the entropy/transport/information inequalities, with margins.

Every report keeps the terms of its right-hand side in ``components`` so the
margin can be recomputed from the report alone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .diagnostics import EpsSweepRow, endpoint_index, interior_indices
from .functionals import (
    DensityField,
    fisher_information,
    reference_density,
    relative_entropy,
    wasserstein2_squared,
)
from .schrodinger import InterpolationPath, path_integrands, time_integral
from .space import Generator

OK = "ok"
VIOLATED = "violated"
NOT_APPLICABLE = "not_applicable"
VACUOUS = "vacuous"


@dataclass(frozen=True)
class InequalityReport:
    name: str
    lhs: float
    rhs: float
    kappa_used: float
    epsilon: float | None = None
    components: dict = field(default_factory=dict)
    status: str = OK

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def judged(self, tol: float) -> "InequalityReport":
        """Copy with status set from the margin (applicable reports only)."""
        if self.status in (NOT_APPLICABLE, VACUOUS):
            return self
        status = OK if self.margin >= -tol else VIOLATED
        return InequalityReport(self.name, self.lhs, self.rhs, self.kappa_used, self.epsilon,
                                dict(self.components), status)

    def as_dict(self) -> dict:
        def clean(v):
            v = float(v)
            return v if math.isfinite(v) else None

        return {
            "name": self.name,
            "lhs": clean(self.lhs),
            "rhs": clean(self.rhs),
            "margin": clean(self.margin),
            "kappa_used": clean(self.kappa_used),
            "epsilon": None if self.epsilon is None else clean(self.epsilon),
            "components": {k: clean(v) for k, v in self.components.items()},
            "status": self.status,
        }


def _report(name, lhs, components: dict, kappa, epsilon=None, status=OK) -> InequalityReport:
    rhs = float(sum(components.values()))
    return InequalityReport(name, float(lhs), rhs, float(kappa), epsilon, components, status)


def entropy_endpoint_check(path: InterpolationPath, gen: Generator | None, kappa: float,
                           rho1: DensityField | None = None) -> InequalityReport:
    """Finite-epsilon entropy bound between the endpoints of an interpolation.

    ``H1 - H0 <= sum Gamma(theta_1, rho1) m - kappa int t Gamma(theta) dmu dt
    - kappa eps^2/4 int t Gamma(log rho) dmu dt``, with ``theta_1`` taken at
    the last interior time node.
    """
    sol = path.solution
    rho1 = sol.rho1 if rho1 is None else rho1
    g = path.generator
    eps = path.epsilon
    ts = path.times
    ig = path_integrands(path)
    th1 = path.theta[endpoint_index(ts)]
    boundary = float(np.sum(g.gamma(th1, rho1.rho) * g.measure.weights))
    with np.errstate(invalid="ignore"):
        # 0 * inf at a compactly supported endpoint is extrapolated away
        t_kin = time_integral(ts, ts * ig.kinetic_density)
        t_fis = time_integral(ts, ts * ig.fisher_log)
    lhs = relative_entropy(rho1) - relative_entropy(sol.rho0)
    comps = {
        "boundary_term": boundary,
        "curvature_kinetic": -kappa * t_kin,
        "curvature_fisher": -kappa * eps**2 / 4.0 * t_fis,
    }
    return _report("key_lemma", lhs, comps, kappa, eps)


def hwi_star_check(rho0: DensityField | None, rho1: DensityField | None, kappa: float, w2: float,
                   fisher1: float, h0: float, h1: float) -> InequalityReport:
    """``H1 - H0 <= W2 sqrt(I1) - (kappa/2) W2^2``."""
    lhs = h1 - h0
    if math.isinf(fisher1):
        return InequalityReport("hwi_star", lhs, math.inf, float(kappa), None,
                                {"transport_information": math.inf, "curvature": -0.5 * kappa * w2**2},
                                VACUOUS)
    comps = {"transport_information": w2 * math.sqrt(fisher1), "curvature": -0.5 * kappa * w2**2}
    return _report("hwi_star", lhs, comps, kappa)


def hwi_star_from_densities(rho0: DensityField, rho1: DensityField, gen: Generator,
                            kappa: float | None = None) -> InequalityReport:
    kappa = gen.measure.kappa if kappa is None else kappa
    w2 = math.sqrt(wasserstein2_squared(rho0, rho1))
    return hwi_star_check(rho0, rho1, kappa, w2, fisher_information(rho1, gen),
                          relative_entropy(rho0), relative_entropy(rho1))


def theorem_suite(nu: DensityField, gen: Generator, kappa: float | None = None) -> list[InequalityReport]:
    """HWI, Talagrand and log-Sobolev for ``nu`` against the reference measure.

    Talagrand and log-Sobolev need ``kappa > 0`` and are reported as not
    applicable otherwise.
    """
    kappa = gen.measure.kappa if kappa is None else float(kappa)
    m = reference_density(gen.measure)
    ent = relative_entropy(nu)
    w2_sq = wasserstein2_squared(nu, m)
    w2 = math.sqrt(max(w2_sq, 0.0))
    fis = fisher_information(nu, gen)
    out = [_report("hwi", ent, {"transport_information": w2 * math.sqrt(fis), "curvature": -0.5 * kappa * w2_sq},
                   kappa)]
    if kappa > 0:
        out.append(_report("talagrand", 0.5 * kappa * w2_sq, {"entropy": ent}, kappa))
        out.append(_report("log_sobolev", ent, {"information": fis / (2.0 * kappa)}, kappa))
    else:
        nan = float("nan")
        out.append(InequalityReport("talagrand", 0.5 * kappa * w2_sq, nan, kappa, None, {}, NOT_APPLICABLE))
        out.append(InequalityReport("log_sobolev", ent, nan, kappa, None, {}, NOT_APPLICABLE))
    return out


@dataclass(frozen=True)
class CauchySchwarzBridge:
    inner: float
    bound: float

    @property
    def holds(self) -> bool:
        # an infinite bound (support with an edge) holds vacuously
        return math.isinf(self.bound) or self.inner <= self.bound + 1e-10


def cauchy_schwarz_terms(gen: Generator, theta, rho1: DensityField, fisher1: float | None = None) -> CauchySchwarzBridge:
    """``sum Gamma(theta, log rho1) rho1 m`` against ``sqrt(sum Gamma(theta) rho1 m) sqrt(I1)``.

    ``fisher1`` defaults to the log form ``sum Gamma(log rho1) rho1 m``, for
    which the bound is the exact discrete Cauchy-Schwarz inequality.
    """
    theta = np.asarray(theta, dtype=float)
    p = rho1.probabilities
    if fisher1 is None:
        fisher1 = fisher_information(rho1, gen, form="log")
    if not rho1.support.all():
        return CauchySchwarzBridge(float("nan"), math.inf)
    lr = rho1.log_rho
    inner = float(np.sum(gen.gamma(theta, lr) * p))
    energy = float(np.sum(gen.gamma(theta, theta) * p))
    return CauchySchwarzBridge(inner, math.sqrt(max(energy, 0.0)) * math.sqrt(fisher1))


def cauchy_schwarz_bridge(path: InterpolationPath, rho1: DensityField | None = None,
                          fisher1: float | None = None) -> CauchySchwarzBridge:
    rho1 = path.solution.rho1 if rho1 is None else rho1
    th1 = path.theta[endpoint_index(path.times)]
    return cauchy_schwarz_terms(path.generator, th1, rho1, fisher1)


@dataclass(frozen=True)
class QLimitBridge:
    epsilons: list
    column: list          # sum Gamma(theta_{t~1}) rho1 m per row
    predicted: list       # Q + eps^2/4 I(mu1)
    relative_defects: list
    w2_squared: float
    first_gap: float
    final_gap: float

    @property
    def max_relative_defect(self) -> float:
        return max(self.relative_defects) if self.relative_defects else float("nan")

    @property
    def final_relative_gap(self) -> float:
        return self.final_gap / self.w2_squared

    @property
    def improvement(self) -> float:
        return self.first_gap / self.final_gap if self.final_gap > 0 else math.inf


def q_limit_bridge(rows: Sequence[EpsSweepRow], rho1_fisher: float) -> QLimitBridge:
    """Checks ``sum Gamma(theta_1) dmu1 = Q + eps^2/4 I(mu1)`` per row and its limit ``W2^2``."""
    good = [r for r in rows if r.converged]
    if not good:
        raise ValueError("no converged sweep rows")
    if any(not math.isfinite(r.theta1_energy) for r in good):
        raise ValueError("sweep rows lack the theta1_energy column")
    col = [r.theta1_energy for r in good]
    pred = [r.Q + r.epsilon**2 / 4.0 * rho1_fisher for r in good]
    rel = [abs(c - p) / max(abs(p), 1e-300) for c, p in zip(col, pred)]
    w2 = good[0].w2_squared
    return QLimitBridge(
        epsilons=[r.epsilon for r in good],
        column=col,
        predicted=pred,
        relative_defects=rel,
        w2_squared=w2,
        first_gap=abs(col[0] - w2),
        final_gap=abs(col[-1] - w2),
    )


# name used by the public interface
lemma_h11_check = entropy_endpoint_check

__all__ = [
    "InequalityReport",
    "cauchy_schwarz_bridge",
    "cauchy_schwarz_terms",
    "entropy_endpoint_check",
    "hwi_star_check",
    "hwi_star_from_densities",
    "interior_indices",
    "lemma_h11_check",
    "q_limit_bridge",
    "theorem_suite",
]
