import numpy as np
import pytest

from entropic_hwi import diagnostics as dg
from entropic_hwi.functionals import gaussian, reference_density
from entropic_hwi.schrodinger import build_path, solve_ipfp
from entropic_hwi.space import Grid1D, PotentialSpec, build_generator

from conftest import gaussian_pair, standard_generator


@pytest.fixture(scope="module")
def stationary():
    gen = build_generator(Grid1D(-8, 8, 201), PotentialSpec.quadratic(1.0))
    m = reference_density(gen.measure)
    sol = solve_ipfp(m, m, 0.2, gen)
    return gen, build_path(sol, 17)


@pytest.fixture(scope="module")
def refined_paths():
    """Gaussian pair at n = 201, 401, 801 with the time step halved alongside h."""
    out = []
    for n, nt in ((201, 17), (401, 33), (801, 65)):
        gen = standard_generator(n)
        sol = solve_ipfp(*gaussian_pair(gen), 0.2, gen)
        out.append((gen, build_path(sol, nt)))
    return out


def test_toy_generator_conservation_identity():
    # d/dt sum Gamma(f_t, g_t) m = eps sum [Gamma(Lf, g) - Gamma(f, Lg)] m = 0 by self-adjointness
    gen = build_generator(Grid1D(-1, 1, 5), PotentialSpec.quadratic(1.0), check_tail=False)
    rng = np.random.default_rng(3)
    f, g = rng.normal(size=5), rng.normal(size=5)
    m = gen.measure.weights
    lhs = np.sum(gen.gamma(gen.apply(f), g) * m)
    rhs = np.sum(gen.gamma(f, gen.apply(g)) * m)
    assert lhs == pytest.approx(rhs, abs=1e-12 * max(1, abs(lhs)))


def test_stationary_identities(stationary):
    gen, path = stationary
    rep = dg.conservation_report(path, gen)
    np.testing.assert_allclose(rep.Q_exact, 0.0, atol=1e-14)
    assert abs(dg.hamiltonian(path, gen, 0.5)) <= 1e-12
    x = gen.grid.nodes
    assert dg.continuity_residual(path, gen, 0.5, [x, x**2, np.sin(x)]) <= 1e-12
    fwd, bwd = dg.hjb_residual(path, gen, 0.5)
    assert fwd <= 1e-10 and bwd <= 1e-10
    v1 = gen.measure.potential_d1
    vel = dg.nelson_velocities(path, None, v1, 0.5)
    np.testing.assert_allclose(vel.v_cur, 0.0, atol=1e-10)
    np.testing.assert_allclose(vel.v_osm, -0.1 * v1, atol=1e-10)


def test_conservation_gaussian_pair(solved801):
    sol, _ = solved801
    path = build_path(sol, 35)
    rep = dg.conservation_report(path)
    assert rep.times.size == 33
    assert rep.spread_exact <= 1e-8 * (1 + abs(np.mean(rep.Q_exact)))
    assert rep.relative_spread <= 1e-8
    assert rep.chain_rule_defect < 1e-3


def test_conservation_needs_interior_times(solved201):
    sol, _ = solved201
    with pytest.raises(ValueError):
        dg.conservation_report(build_path(sol, [0.0, 0.3, 0.6, 1.0]))


def test_chain_rule_defect_refines(refined_paths):
    defects = [dg.conservation_report(p).chain_rule_defect for _, p in refined_paths]
    assert defects[0] > defects[1] > defects[2]
    orders = dg.refinement_orders([201, 401, 801], defects)
    assert min(orders) > 0.8


def test_hamiltonian_is_half_q_velocity(solved801):
    _, path = solved801
    for t in path.times[1:-1]:
        assert dg.hamiltonian(path, None, t) == pytest.approx(dg.q_velocity(path, t) / 2, abs=1e-14)


def test_hamiltonian_constant_up_to_defect(solved801):
    _, path = solved801
    rep = dg.conservation_report(path)
    mid = dg.hamiltonian(path, None, 0.5)
    for t in rep.times:
        assert abs(dg.hamiltonian(path, None, t) - mid) <= rep.chain_rule_defect


def test_interior_time_required(solved201):
    _, path = solved201
    with pytest.raises(ValueError):
        dg.hamiltonian(path, None, 0.0)
    with pytest.raises(ValueError):
        dg.hamiltonian(path, None, 0.123456)


def test_continuity_constant_test_field(solved801):
    _, path = solved801
    gen = path.generator
    assert dg.continuity_residual(path, gen, 0.5, [np.full(gen.n, 3.0)]) <= 1e-12
    with pytest.raises(ValueError):
        dg.continuity_residual(path, gen, 0.5, [])


def test_continuity_refines(refined_paths):
    res = []
    for gen, path in refined_paths:
        x = gen.grid.nodes
        res.append(dg.continuity_residual(path, gen, 0.5, [x, x**2, np.sin(x)]))
    assert res[0] > res[1] > res[2]


def test_hjb_refines(refined_paths):
    res = np.array([dg.hjb_residual(p, g, 0.5) for g, p in refined_paths])
    assert np.all(np.diff(res[:, 0]) < 0)
    assert np.all(np.diff(res[:, 1]) < 0)


def test_hjb_gauge_invariant(solved801):
    _, path = solved801
    a = dg.hjb_residual(path, None, 0.5)
    b = dg.hjb_residual(path.with_gauge(7.3), None, 0.5)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_nelson_identities(solved801):
    _, path = solved801
    gen = path.generator
    v1 = gen.measure.potential_d1
    eps = path.epsilon
    for t in (0.25, 0.5, 0.75):
        vel = dg.nelson_velocities(path, eps, v1, t)
        np.testing.assert_allclose(vel.v_cur, 0.5 * (vel.v_fwd - vel.v_bwd), atol=1e-14, rtol=0)
        np.testing.assert_allclose(vel.v_osm, 0.5 * (vel.v_fwd + vel.v_bwd), atol=1e-14, rtol=0)
        k = path.index_of(t)
        expect = 0.5 * eps * (gen.gradient(path.log_rho[k]) - v1)
        np.testing.assert_allclose(vel.v_osm, expect, atol=1e-10, rtol=0)
        np.testing.assert_allclose(vel.v_cur, gen.gradient(path.theta[k]), atol=1e-10, rtol=0)


def test_diagnostics_gauge_invariant(solved801):
    _, path = solved801
    other = path.with_gauge(7.3)
    assert dg.theta_gauge_check(path, 7.3) <= 1e-12
    a, b = dg.conservation_report(path), dg.conservation_report(other)
    np.testing.assert_allclose(a.Q_exact, b.Q_exact, atol=1e-12, rtol=0)
    np.testing.assert_allclose(a.Q_velocity, b.Q_velocity, atol=1e-12, rtol=0)
    x = path.generator.grid.nodes
    fields = [x, np.sin(x)]
    assert dg.continuity_residual(path, None, 0.5, fields) == pytest.approx(
        dg.continuity_residual(other, None, 0.5, fields), abs=1e-12)
    w2 = 0.1
    ra, rb = dg.sweep_row(path, w2), dg.sweep_row(other, w2)
    for name in ("cost", "kinetic", "t_weighted_kinetic", "fisher_integral", "Q", "theta1_energy"):
        assert getattr(ra, name) == pytest.approx(getattr(rb, name), abs=1e-12)


def test_sweep_identical_marginals():
    gen = standard_generator(201)
    m = reference_density(gen.measure)
    for r in dg.eps_sweep(m, m, [0.5, 0.2], gen, times=17):
        assert r.converged
        for v in (r.cost, r.kinetic, r.Q, r.w2_squared):
            assert abs(v) <= 1e-10
    # for rho0 = rho1 != m the bridge still moves at positive eps; the
    # dynamic terms vanish only in the limit
    rho = gaussian(gen.measure, 0.3, 0.7)
    rows = dg.eps_sweep(rho, rho, [0.5, 0.2, 0.1], gen, times=17)
    assert all(r.converged and r.w2_squared == 0.0 for r in rows)
    assert rows[0].kinetic > rows[1].kinetic > rows[2].kinetic > 0
    assert abs(rows[0].Q) > abs(rows[1].Q) > abs(rows[2].Q)


def test_sweep_validation_and_flags(gen201):
    r0, r1 = gaussian_pair(gen201)
    with pytest.raises(ValueError):
        dg.eps_sweep(r0, r1, [0.1, 0.2], gen201)
    rows = dg.eps_sweep(r0, r1, [0.5, 0.01], gen201, max_iter=40, times=17)
    assert rows[0].converged and not rows[1].converged
    assert np.isnan(rows[1].kinetic)
    summary = dg.sweep_summary(rows)
    assert summary["rows"] == 2 and summary["converged_rows"] == 1
    assert dg.SWEEP_COLUMNS[0] == "epsilon"


def test_warm_start_matches_cold(gen201):
    r0, r1 = gaussian_pair(gen201)
    warm = dg.eps_sweep(r0, r1, [0.4, 0.2], gen201, times=17)
    cold = dg.eps_sweep(r0, r1, [0.4, 0.2], gen201, times=17, warm_start=False)
    assert warm[1].iterations <= cold[1].iterations
    assert warm[1].cost == pytest.approx(cold[1].cost, abs=1e-9)


def test_fit_order_and_refinement_orders():
    xs = np.array([0.4, 0.2, 0.1])
    assert dg.fit_order(xs, 3 * xs**2) == pytest.approx(2.0)
    assert np.isnan(dg.fit_order([1.0], [1.0]))
    np.testing.assert_allclose(dg.refinement_orders([1, 2, 4], [1.0, 0.5, 0.25]), [1.0, 1.0])
    assert np.isnan(dg.refinement_orders([1, 2], [0.0, 1.0])[0])
