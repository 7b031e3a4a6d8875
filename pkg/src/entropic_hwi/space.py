"""Discrete state space: grid, potential, reference measure and generator.

The generator discretizes ``L = (f'' - V' f') / 2`` with the geometric-mean
stencil ``L[i, i+-1] = sqrt(m[i+-1] / m[i]) / (2 h^2)``.  It is reversible with
respect to ``m`` by construction, which every conservation identity downstream
relies on.  ``gamma`` and ``gamma2`` carry no factor 1/2.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import logsumexp

log = logging.getLogger(__name__)

Boundary = Literal["reflecting", "periodic"]

TAIL_MASS_LIMIT = 1e-12


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on ``[a, b]``.

    With a reflecting boundary the endpoints are nodes and ``h = (b-a)/(n-1)``;
    with a periodic boundary ``b`` is identified with ``a`` and ``h = (b-a)/n``.
    """

    a: float
    b: float
    n: int
    boundary: Boundary = "reflecting"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise GridError(f"grid needs n >= 3 nodes, got {self.n}")
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or self.b <= self.a:
            raise GridError(f"invalid interval [{self.a}, {self.b}]")
        if self.boundary not in ("reflecting", "periodic"):
            raise GridError(f"unknown boundary {self.boundary!r}")

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    @property
    def h(self) -> float:
        span = self.b - self.a
        return span / self.n if self.periodic else span / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.n)

    def refined(self, levels: int = 1) -> "Grid1D":
        """Nested refinement: every existing node survives, ``2**levels`` cells per cell."""
        k = 2**levels
        n = self.n * k if self.periodic else (self.n - 1) * k + 1
        return Grid1D(self.a, self.b, n, self.boundary)


@dataclass(frozen=True)
class PotentialSpec:
    """Confining potential ``V``; evaluated values are shifted so ``min V = 0`` on the grid.

    kinds and their parameters:

    * ``quadratic``: ``(kappa0,)`` with ``V = kappa0 x^2 / 2``
    * ``double_well``: ``(alpha, beta)`` with ``V = alpha x^4 - beta x^2``
    * ``polynomial``: ascending coefficients
    * ``tabulated``: node values; derivatives by centered differences
    * ``flat``: ``V = 0``
    """

    kind: str
    params: tuple = ()
    shift: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind == "quadratic" and len(self.params) != 1:
            raise ValueError("quadratic potential takes one parameter (kappa0)")
        if self.kind == "double_well" and len(self.params) != 2:
            raise ValueError("double_well potential takes (alpha, beta)")
        if self.kind in ("polynomial", "tabulated") and not self.params:
            raise ValueError(f"{self.kind} potential needs coefficients/values")
        if self.kind not in ("quadratic", "double_well", "polynomial", "tabulated", "flat"):
            raise ValueError(f"unknown potential kind {self.kind!r}")

    @classmethod
    def quadratic(cls, kappa0: float = 1.0) -> "PotentialSpec":
        return cls("quadratic", (kappa0,))

    @classmethod
    def double_well(cls, alpha: float, beta: float) -> "PotentialSpec":
        return cls("double_well", (alpha, beta))

    @classmethod
    def polynomial(cls, coeffs: Sequence[float]) -> "PotentialSpec":
        return cls("polynomial", tuple(coeffs))

    @classmethod
    def tabulated(cls, values: Sequence[float]) -> "PotentialSpec":
        return cls("tabulated", tuple(values))

    @classmethod
    def flat(cls) -> "PotentialSpec":
        return cls("flat")

    def _poly(self) -> Polynomial:
        if self.kind == "quadratic":
            return Polynomial([0.0, 0.0, 0.5 * self.params[0]])
        if self.kind == "double_well":
            alpha, beta = self.params
            return Polynomial([0.0, 0.0, -beta, 0.0, alpha])
        if self.kind == "polynomial":
            return Polynomial(self.params)
        return Polynomial([0.0])

    def evaluate(self, grid: Grid1D) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(V, V', V'')`` at the grid nodes, ``V`` shifted to have minimum 0."""
        x = grid.nodes
        if self.kind == "tabulated":
            v = np.asarray(self.params, dtype=float)
            if v.shape != (grid.n,):
                raise ValueError(f"tabulated potential has {v.size} values for {grid.n} nodes")
            if not np.all(np.isfinite(v)):
                raise ValueError("potential is not finite at every node")
            if grid.periodic:
                d1 = (np.roll(v, -1) - np.roll(v, 1)) / (2 * grid.h)
                d2 = (np.roll(v, -1) - 2 * v + np.roll(v, 1)) / grid.h**2
            else:
                d1 = np.gradient(v, grid.h, edge_order=2)
                d2 = np.gradient(d1, grid.h, edge_order=2)
        else:
            p = self._poly()
            v, d1, d2 = p(x), p.deriv(1)(x), p.deriv(2)(x)
        v = np.asarray(v, dtype=float)
        d1 = np.asarray(d1, dtype=float) * np.ones_like(v)
        d2 = np.asarray(d2, dtype=float) * np.ones_like(v)
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(d1)) and np.all(np.isfinite(d2))):
            raise ValueError("potential is not finite at every node")
        shift = -float(v.min()) if self.shift is None else float(self.shift)
        return v + shift, d1, d2


@dataclass(frozen=True)
class ReferenceMeasure:
    grid: Grid1D
    log_weights: np.ndarray
    kappa: float
    potential: np.ndarray = field(repr=False)
    potential_d1: np.ndarray = field(repr=False)
    potential_d2: np.ndarray = field(repr=False)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def _tail_mass_bound(grid: Grid1D, v, d1, d2) -> float:
    """Upper bound on the e^{-V} mass outside ``[a, b]`` relative to the mass inside.

    Past each endpoint V is bounded below by its tangent line when V is convex
    there, which gives ``exp(-V(b)) / V'(b)`` for the right tail.
    """
    z = float(np.sum(np.exp(-v)) * grid.h)
    total = 0.0
    for value, slope, curv in ((v[-1], d1[-1], d2[-1]), (v[0], -d1[0], d2[0])):
        if slope <= 0 or curv < 0:
            return np.inf
        total += np.exp(-value) / slope
    return total / z


def reference_measure(grid: Grid1D, potential: PotentialSpec, check_tail: bool = True) -> ReferenceMeasure:
    v, d1, d2 = potential.evaluate(grid)
    if check_tail and not grid.periodic:
        tail = _tail_mass_bound(grid, v, d1, d2)
        if not tail <= TAIL_MASS_LIMIT:
            raise GridError(
                f"mass of e^-V outside [{grid.a}, {grid.b}] not certified below "
                f"{TAIL_MASS_LIMIT:g} (bound {tail:.3g}); widen the interval or pass check_tail=False"
            )
    lw = -v + np.log(grid.h)
    lw = lw - logsumexp(lw)
    return ReferenceMeasure(grid, lw, float(d2.min()), v, d1, d2)


@dataclass(frozen=True)
class Generator:
    """Reversible nearest-neighbour generator stored by its two off-diagonals.

    ``up[i] = L[i, i+1]`` and ``down[i] = L[i, i-1]`` (indices mod n when
    periodic; zero across a reflecting end).
    """

    measure: ReferenceMeasure
    up: np.ndarray
    down: np.ndarray

    @property
    def grid(self) -> Grid1D:
        return self.measure.grid

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def diag(self) -> np.ndarray:
        return -(self.up + self.down)

    @property
    def rate_bound(self) -> float:
        """Uniformization rate: the largest exit rate ``max_i |L[i, i]|``."""
        return float((self.up + self.down).max())

    @property
    def symmetric_offdiag(self) -> np.ndarray:
        """Off-diagonal of ``M^{1/2} L M^{-1/2}``; entry i couples nodes i and i+1.

        Length ``n-1`` for reflecting grids, ``n`` for periodic (last entry wraps).
        """
        nxt = np.roll(self.down, -1)
        s = np.sqrt(self.up * nxt)
        return s if self.grid.periodic else s[:-1]

    def _shift_next(self, f):
        if self.grid.periodic:
            return np.roll(f, -1)
        out = np.empty_like(f)
        out[:-1] = f[1:]
        out[-1] = f[-1]
        return out

    def _shift_prev(self, f):
        if self.grid.periodic:
            return np.roll(f, 1)
        out = np.empty_like(f)
        out[1:] = f[:-1]
        out[0] = f[0]
        return out

    def _check(self, *fields):
        out = []
        for f in fields:
            f = np.asarray(f, dtype=float)
            if f.shape != (self.n,):
                raise ValueError(f"field of shape {f.shape} on a grid with {self.n} nodes")
            out.append(f)
        return out

    def apply(self, f) -> np.ndarray:
        (f,) = self._check(f)
        return self.up * (self._shift_next(f) - f) + self.down * (self._shift_prev(f) - f)

    def dense(self) -> np.ndarray:
        n = self.n
        mat = np.zeros((n, n))
        idx = np.arange(n)
        nxt = (idx + 1) % n
        prv = (idx - 1) % n
        if self.grid.periodic:
            mat[idx, nxt] += self.up
            mat[idx, prv] += self.down
        else:
            mat[idx[:-1], nxt[:-1]] = self.up[:-1]
            mat[idx[1:], prv[1:]] = self.down[1:]
        mat[idx, idx] = self.diag
        return mat

    def gamma(self, f, g) -> np.ndarray:
        """Carre du champ ``L(fg) - f Lg - g Lf`` (no factor 1/2)."""
        f, g = self._check(f, g)
        return (
            self.up * ((self._shift_next(f) - f) * (self._shift_next(g) - g))
            + self.down * ((self._shift_prev(f) - f) * (self._shift_prev(g) - g))
        )

    def gamma2(self, f, g) -> np.ndarray:
        f, g = self._check(f, g)
        return self.apply(self.gamma(f, g)) - self.gamma(f, self.apply(g)) - self.gamma(g, self.apply(f))

    def gamma_ratio(self, log_a, log_b) -> np.ndarray:
        """``gamma(e^a, e^b) / (e^a e^b)`` computed from the logs without overflow."""
        log_a, log_b = self._check(log_a, log_b)
        with np.errstate(invalid="ignore", over="ignore"):
            fwd = np.expm1(self._shift_next(log_a) - log_a) * np.expm1(self._shift_next(log_b) - log_b)
            bwd = np.expm1(self._shift_prev(log_a) - log_a) * np.expm1(self._shift_prev(log_b) - log_b)
        return self.up * fwd + self.down * bwd

    def log_ratio_apply(self, log_f) -> np.ndarray:
        """``(L e^u) / e^u`` from ``u = log f``."""
        (u,) = self._check(log_f)
        with np.errstate(invalid="ignore", over="ignore"):
            return self.up * np.expm1(self._shift_next(u) - u) + self.down * np.expm1(self._shift_prev(u) - u)

    def gradient(self, f) -> np.ndarray:
        """Centered difference; one-sided second-order stencils at reflecting ends."""
        (f,) = self._check(f)
        h = self.grid.h
        if self.grid.periodic:
            return (np.roll(f, -1) - np.roll(f, 1)) / (2 * h)
        return np.gradient(f, h, edge_order=2)


def build_generator(grid: Grid1D, potential: PotentialSpec | ReferenceMeasure, check_tail: bool = True) -> Generator:
    measure = potential if isinstance(potential, ReferenceMeasure) else reference_measure(grid, potential, check_tail)
    lm = measure.log_weights
    c = 1.0 / (2.0 * grid.h**2)
    half = 0.5 * (np.roll(lm, -1) - lm)
    # rates straight from the log weights so far tails never form 0/0;
    # m_i L[i,i+1] and m_{i+1} L[i+1,i] agree to a few ulp
    up = c * np.exp(half)
    down = c * np.exp(-np.roll(half, 1))
    if not grid.periodic:
        up[-1] = 0.0
        down[0] = 0.0
    return Generator(measure, up, down)


def standard_setup(n: int = 801, a: float = -8.0, b: float = 8.0, kappa0: float = 1.0) -> Generator:
    """Quadratic potential ``kappa0 x^2/2`` on a reflecting grid."""
    return build_generator(Grid1D(a, b, n), PotentialSpec.quadratic(kappa0))
