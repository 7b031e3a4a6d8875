import math

import numpy as np
import pytest

from entropic_hwi import _core
from entropic_hwi._core import _fallback
from entropic_hwi import inequalities as iq
from entropic_hwi.diagnostics import EpsSweepRow, eps_sweep
from entropic_hwi.functionals import (
    DensityField,
    bump,
    fisher_information,
    gaussian,
    reference_density,
    relative_entropy,
    wasserstein2_squared,
)
from entropic_hwi.schrodinger import build_path, solve_ipfp
from entropic_hwi.space import Grid1D, PotentialSpec, build_generator

import oracles


@pytest.fixture(scope="module")
def gen1201():
    return build_generator(Grid1D(-8, 8, 1201), PotentialSpec.quadratic(1.0))


@pytest.fixture(scope="module")
def double_well():
    return build_generator(Grid1D(-4, 4, 401), PotentialSpec.double_well(0.25, 1.0))


def _recomputed(rep):
    return sum(rep.components.values()) - rep.lhs


def test_lemma_stationary():
    gen = build_generator(Grid1D(-8, 8, 201), PotentialSpec.quadratic(1.0))
    m = reference_density(gen.measure)
    path = build_path(solve_ipfp(m, m, 0.2, gen), 17)
    rep = iq.entropy_endpoint_check(path, gen, 1.0)
    assert abs(rep.lhs) <= 1e-10 and abs(rep.rhs) <= 1e-10 and abs(rep.margin) <= 1e-10


def test_lemma_gaussian_pair(solved801):
    _, path = solved801
    rep = iq.entropy_endpoint_check(path, None, 1.0)
    assert rep.margin >= -1e-3
    assert rep.epsilon == path.epsilon and rep.name == "key_lemma"
    weaker = iq.entropy_endpoint_check(path, None, 0.0)
    assert weaker.margin > rep.margin
    assert rep.margin == pytest.approx(_recomputed(rep), abs=1e-12)


def test_hwi_star_identical_marginals(gen1201):
    nu = gaussian(gen1201.measure, 0.4, 0.8)
    rep = iq.hwi_star_from_densities(nu, nu, gen1201)
    assert rep.lhs == 0.0
    assert abs(rep.components["curvature"]) == 0.0
    assert rep.margin >= 0.0


def test_hwi_star_closed_forms(gen1201):
    m = reference_density(gen1201.measure)
    nu = gaussian(gen1201.measure, 1.0, 0.5)
    rep = iq.hwi_star_from_densities(m, nu, gen1201)
    h = oracles.gaussian_entropy(1, 0.5)
    w2 = math.sqrt(1.25)
    rhs = w2 * math.sqrt(3.25) - 0.625
    assert rep.lhs == pytest.approx(h, abs=1e-3)
    assert rep.rhs == pytest.approx(rhs, abs=2e-3)
    assert rep.margin == pytest.approx(0.5725, abs=2e-3)
    assert rep.status == iq.OK


def test_hwi_star_vacuous():
    rep = iq.hwi_star_check(None, None, 1.0, 0.5, math.inf, 0.0, 0.3)
    assert rep.status == iq.VACUOUS and rep.margin == math.inf
    assert rep.judged(1e-3).status == iq.VACUOUS
    d = rep.as_dict()
    assert d["rhs"] is None and d["status"] == "vacuous"


def test_hwi_star_margin_independent_of_w2_backend(gen1201):
    a = gaussian(gen1201.measure, -0.7, 0.6)
    b = bump(gen1201.measure, 0.8, 1.3)
    x = gen1201.grid.nodes
    w_fast = _core.w2_sweep(x, a.probabilities, b.probabilities)
    w_ref = _fallback.w2_sweep(x, a.probabilities, b.probabilities)
    args = (1.0, fisher_information(b, gen1201), relative_entropy(a), relative_entropy(b))
    m1 = iq.hwi_star_check(a, b, args[0], math.sqrt(w_fast), *args[1:]).margin
    m2 = iq.hwi_star_check(a, b, args[0], math.sqrt(w_ref), *args[1:]).margin
    assert m1 == pytest.approx(m2, abs=1e-10)


def test_hwi_star_random_double_well(double_well):
    rng = np.random.default_rng(7)
    kappa = double_well.measure.kappa
    assert kappa < 0
    for _ in range(5):
        c = rng.uniform(-2, 2, size=2)
        w = rng.uniform(0.5, 1.5, size=2)
        r0, r1 = bump(double_well.measure, c[0], w[0]), bump(double_well.measure, c[1], w[1])
        rep = iq.hwi_star_from_densities(r0, r1, double_well)
        assert rep.margin >= -1e-3
        assert rep.margin == pytest.approx(_recomputed(rep), abs=1e-12)


def test_suite_at_reference(gen1201):
    m = reference_density(gen1201.measure)
    for rep in iq.theorem_suite(m, gen1201):
        assert rep.lhs == 0.0
        assert abs(rep.margin) <= 1e-10


def test_suite_log_sobolev_closed_form(gen1201):
    nu = gaussian(gen1201.measure, 1.0, 0.5)
    hwi, tal, lsi = iq.theorem_suite(nu, gen1201)
    assert lsi.lhs == pytest.approx(0.8181, abs=1e-3)
    assert lsi.rhs == pytest.approx(1.625, abs=1e-3)
    assert lsi.margin == pytest.approx(0.8069, abs=1e-3)
    for rep in (hwi, tal, lsi):
        assert rep.margin >= 0


def test_talagrand_translation_equality(gen1201):
    nu = gaussian(gen1201.measure, 0.5, 1.0)
    _, tal, _ = iq.theorem_suite(nu, gen1201)
    assert tal.lhs == pytest.approx(0.125, abs=1e-4)
    assert tal.rhs == pytest.approx(0.125, abs=1e-4)
    assert abs(tal.margin) <= 1e-4


def test_suite_not_applicable_without_curvature(double_well):
    nu = bump(double_well.measure, 0.5, 1.0)
    hwi, tal, lsi = iq.theorem_suite(nu, double_well)
    assert tal.status == iq.NOT_APPLICABLE and lsi.status == iq.NOT_APPLICABLE
    assert tal.judged(1e-3).status == iq.NOT_APPLICABLE
    assert hwi.status == iq.OK and hwi.kappa_used < 0


def test_inflated_kappa_detected(gen1201):
    nu = gaussian(gen1201.measure, 0.5, 1.0)
    reps = [r.judged(1e-3) for r in iq.theorem_suite(nu, gen1201, kappa=11.0)]
    assert any(r.status == iq.VIOLATED for r in reps)


def test_report_serialization():
    rep = iq.InequalityReport("x", 1.0, 2.0, 1.0, None, {"a": 2.0, "b": float("nan")})
    d = rep.as_dict()
    assert d["margin"] == 1.0 and d["components"]["b"] is None and d["epsilon"] is None
    assert rep.judged(0.0).status == iq.OK
    assert iq.InequalityReport("y", 3.0, 2.0, 1.0).judged(1e-3).status == iq.VIOLATED


def test_cauchy_schwarz_constant_theta(gen1201):
    rho = gaussian(gen1201.measure, 0.2, 0.7)
    cs = iq.cauchy_schwarz_terms(gen1201, np.full(gen1201.n, 2.5), rho)
    assert cs.inner == 0.0 and cs.bound == 0.0 and cs.holds


def test_cauchy_schwarz_random(gen1201):
    rng = np.random.default_rng(11)
    x = gen1201.grid.nodes
    for _ in range(50):
        c = rng.normal(size=5)
        rho = DensityField.from_log(c[0] * np.sin(x) - 0.5 * ((x - c[1]) / (0.6 + abs(c[2]))) ** 2,
                                    gen1201.measure)
        theta = c[3] * x + c[4] * np.cos(2 * x)
        assert iq.cauchy_schwarz_terms(gen1201, theta, rho).holds


def test_cauchy_schwarz_colinear(gen1201):
    rho = gaussian(gen1201.measure, 0.2, 0.7)
    cs = iq.cauchy_schwarz_terms(gen1201, -1.7 * rho.log_rho, rho)
    assert abs(abs(cs.inner) - cs.bound) <= 1e-10 * max(1, cs.bound)
    cs = iq.cauchy_schwarz_terms(gen1201, 0.3 * rho.log_rho, rho)
    assert cs.inner == pytest.approx(cs.bound, abs=1e-10)


def test_cauchy_schwarz_along_path(solved801):
    _, path = solved801
    cs = iq.cauchy_schwarz_bridge(path)
    assert cs.holds and cs.inner > 0


def test_cauchy_schwarz_edge_support(gen1201):
    rho = bump(gen1201.measure, 0.0, 1.0)
    cs = iq.cauchy_schwarz_terms(gen1201, gen1201.grid.nodes, rho)
    assert cs.bound == math.inf and cs.holds


def _row(eps, col, q, w2=1.0, converged=True):
    return EpsSweepRow(eps, 0.0, 0.0, 0.0, 0.0, 0.0, q, w2, col, 1, 0.0, converged)


def test_q_limit_bookkeeping():
    rows = [_row(0.5, 1.5, 1.25), _row(0.1, 1.02, 1.01), _row(0.05, 0.0, 0.0, converged=False)]
    qb = iq.q_limit_bridge(rows, 1.0)
    assert qb.epsilons == [0.5, 0.1]
    assert qb.predicted[0] == pytest.approx(1.25 + 0.0625)
    assert qb.final_gap == pytest.approx(0.02) and qb.first_gap == pytest.approx(0.5)
    assert qb.improvement == pytest.approx(25.0)
    with pytest.raises(ValueError):
        iq.q_limit_bridge([_row(0.5, float("nan"), 1.0)], 1.0)
    with pytest.raises(ValueError):
        iq.q_limit_bridge([], 1.0)


def test_q_limit_stationary():
    gen = build_generator(Grid1D(-8, 8, 201), PotentialSpec.quadratic(1.0))
    m = reference_density(gen.measure)
    rows = eps_sweep(m, m, [0.5, 0.2], gen, times=17)
    qb = iq.q_limit_bridge(rows, fisher_information(m, gen))
    assert max(abs(c) for c in qb.column) <= 1e-12
    assert wasserstein2_squared(m, m) == 0.0
