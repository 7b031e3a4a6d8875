"""Relative entropy, Fisher information and the exact 1-D quadratic Wasserstein distance.

Densities are taken with respect to the reference measure ``m``: a
``DensityField`` describes the probability ``rho_i m_i`` on the grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from . import _core
from .space import Generator, ReferenceMeasure

MASS_TOL = 1e-12


class DensityError(ValueError):
    pass


@dataclass(frozen=True)
class DensityField:
    """Nonnegative density with respect to ``m`` carrying unit mass.

    ``log_rho`` is kept alongside ``rho`` so that densities spanning hundreds
    of orders of magnitude stay usable in log-domain computations.
    """

    log_rho: np.ndarray
    measure: ReferenceMeasure

    def __post_init__(self):
        lr = np.asarray(self.log_rho, dtype=float)
        if lr.shape != self.measure.log_weights.shape:
            raise DensityError("density and measure sizes differ")
        if np.isnan(lr).any() or np.isposinf(lr).any():
            raise DensityError("density has NaN or infinite entries")
        object.__setattr__(self, "log_rho", lr)
        mass = self.mass
        if abs(mass - 1.0) > MASS_TOL:
            raise DensityError(f"density has mass {mass!r}, expected 1")

    @classmethod
    def from_log(cls, log_rho, measure: ReferenceMeasure, normalize: bool = True) -> "DensityField":
        lr = np.asarray(log_rho, dtype=float)
        if normalize:
            total = logsumexp(lr + measure.log_weights)
            if not np.isfinite(total):
                raise DensityError("density has empty support")
            lr = lr - total
        return cls(lr, measure)

    @classmethod
    def from_values(cls, rho, measure: ReferenceMeasure, normalize: bool = True) -> "DensityField":
        rho = np.asarray(rho, dtype=float)
        if (rho < 0).any():
            raise DensityError("negative density")
        with np.errstate(divide="ignore"):
            return cls.from_log(np.log(rho), measure, normalize)

    @property
    def rho(self) -> np.ndarray:
        return np.exp(self.log_rho)

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_rho + self.measure.log_weights)

    @property
    def support(self) -> np.ndarray:
        return np.isfinite(self.log_rho)

    @property
    def mass(self) -> float:
        return float(self.probabilities.sum())


# -- builders: Lebesgue densities truncated to the grid, then divided by m ----------


def _from_lebesgue_log(log_pdf, measure: ReferenceMeasure) -> DensityField:
    grid = measure.grid
    # probability of node i is proportional to pdf(x_i) h; divide by m_i
    lr = np.asarray(log_pdf, dtype=float) + np.log(grid.h) - measure.log_weights
    return DensityField.from_log(lr, measure)


def gaussian(measure: ReferenceMeasure, mean: float, std: float) -> DensityField:
    if std <= 0:
        raise DensityError("gaussian std must be positive")
    return _from_lebesgue_log(norm.logpdf(measure.grid.nodes, mean, std), measure)


def bump(measure: ReferenceMeasure, center: float, width: float) -> DensityField:
    """Compactly supported ``(1 - ((x-c)/w)^2)^3`` profile."""
    if width <= 0:
        raise DensityError("bump width must be positive")
    s = (measure.grid.nodes - center) / width
    inner = (1.0 - s) * (1.0 + s)
    # nodes on the edge up to rounding belong outside the support; otherwise a
    # node with mass ~1e-46 next to a regular one dominates the Fisher information
    inner[inner < 1e-9] = 0.0
    prof = inner**3
    if not (prof > 0).any():
        raise DensityError(f"bump at {center} with width {width} misses every node")
    with np.errstate(divide="ignore"):
        return _from_lebesgue_log(np.log(prof), measure)


def uniform(measure: ReferenceMeasure, lo: float, hi: float) -> DensityField:
    x = measure.grid.nodes
    inside = (x >= lo) & (x <= hi)
    if not inside.any():
        raise DensityError(f"uniform support [{lo}, {hi}] contains no node")
    return _from_lebesgue_log(np.where(inside, 0.0, -np.inf), measure)


def mixture(components: Sequence[DensityField], weights: Sequence[float]) -> DensityField:
    if len(components) == 0 or len(components) != len(weights):
        raise DensityError("mixture needs matching non-empty components and weights")
    w = np.asarray(weights, dtype=float)
    if (w < 0).any() or w.sum() <= 0:
        raise DensityError("mixture weights must be nonnegative with positive sum")
    w = w / w.sum()
    measure = components[0].measure
    with np.errstate(divide="ignore"):
        stacked = np.array([c.log_rho + np.log(wi) for c, wi in zip(components, w)])
    return DensityField.from_log(logsumexp(stacked, axis=0), measure)


def reference_density(measure: ReferenceMeasure) -> DensityField:
    return DensityField(np.zeros(measure.grid.n), measure)


# -- functionals ------------------------------------------------------------------


def relative_entropy(rho: DensityField) -> float:
    """``H(rho m | m) = sum rho log rho m`` with ``0 log 0 = 0``."""
    s = rho.support
    p = rho.probabilities[s]
    return float(np.sum(p * rho.log_rho[s]))


FisherForm = Literal["ratio", "sqrt", "log"]


def fisher_information(rho: DensityField, gen: Generator, form: FisherForm = "ratio") -> float:
    """Fisher information ``I(rho m | m)``.

    ``ratio``: ``sum Gamma(rho)/rho m``, set to 0 where ``rho = 0``;
    ``sqrt``: ``4 sum Gamma(sqrt rho) m``;
    ``log``: ``sum rho Gamma(log rho) m``, infinite if the support has an edge.
    The three agree to O(h) on smooth positive densities.
    """
    lr = rho.log_rho
    lm = rho.measure.log_weights
    if form == "ratio":
        s = rho.support
        # Gamma(rho)/rho = rho * sum_j L_ij expm1(lr_j - lr_i)^2; a zero neighbour
        # gives expm1(-inf) = -1, so the sum stays finite on the support
        ratio = gen.gamma_ratio(lr, lr)
        return float(np.sum(ratio[s] * np.exp(lr[s] + lm[s])))
    if form == "sqrt":
        r = np.exp(0.5 * lr)
        return float(4.0 * np.sum(gen.gamma(r, r) * np.exp(lm)))
    if form == "log":
        if not rho.support.all():
            return float("inf")
        return float(np.sum(gen.gamma(lr, lr) * rho.probabilities))
    raise ValueError(f"unknown Fisher information form {form!r}")


def wasserstein2_squared(mu: DensityField, nu: DensityField) -> float:
    """Exact ``W_2^2`` of the two grid measures through the monotone coupling."""
    if mu.measure.grid != nu.measure.grid:
        raise DensityError("densities live on different grids")
    a, b = mu.probabilities, nu.probabilities
    if abs(a.sum() - b.sum()) > 1e-10:
        raise DensityError(f"mass mismatch {a.sum() - b.sum():.3e}")
    return _core.w2_sweep(mu.measure.grid.nodes, a, b)


def wasserstein2_1d(mu: DensityField, nu: DensityField) -> float:
    return float(np.sqrt(max(wasserstein2_squared(mu, nu), 0.0)))


def entropy_variational_gap(rho: DensityField, f) -> float:
    """``H(rho) - [sum f rho m - log sum e^f m]``; nonnegative for every bounded ``f``."""
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("test function must be finite")
    p = rho.probabilities
    log_mgf = logsumexp(f + rho.measure.log_weights)
    return relative_entropy(rho) - (float(np.sum(f * p)) - float(log_mgf))
