"""Command line entry point: ``entropic-hwi {solve,interpolate,verify,sweep-eps,refine}``.

Exit codes: 0 success, 1 configuration error, 2 solver non-convergence,
3 inequality violated beyond ``tolerances.report_tol``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import _core
from . import diagnostics as diag
from . import inequalities as ineq
from .config import ConfigError, ExperimentConfig, load_config
from .functionals import fisher_information, wasserstein2_squared
from .schrodinger import build_path, dynamic_cost_terms, log_static_coupling, path_integrands, solve_ipfp

log = logging.getLogger("entropic_hwi")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NONCONVERGED = 2
EXIT_VIOLATION = 3

COUPLING_FLOOR = 1e-16

CSV_HELP = """\
output files (CSV columns):
  solve        coupling.csv     i, j, x_i, x_j, pi               (entries above 1e-16)
               potentials.csv   x, phi, psi                      (nan off the support)
  interpolate  path.csv         t, x, rho
               diagnostics.csv  t, Q_exact, Q_velocity, hamiltonian, continuity_residual,
                                hjb_forward, hjb_backward
               velocities.csv   t, x, v_fwd, v_bwd, v_cur, v_osm
  sweep-eps    sweep.csv        epsilon, cost, kinetic, t_weighted_kinetic, fisher_integral,
                                t_weighted_fisher, Q, w2_squared, theta1_energy, iterations,
                                marginal_error, converged
  refine       refine.csv       n, h, dynamic_residual, chain_rule_defect, continuity_residual,
                                hjb_forward, hjb_backward, lemma_margin, q_relative_spread
JSON files (solution.json, interpolation.json, inequalities.json, summary.json,
refine.json) follow the schemas shipped in entropic_hwi/schemas; meta.json holds
run metadata and is the only file that changes between identical runs.

exit codes: 0 ok, 1 config error, 2 non-convergence, 3 inequality violation
"""


# -- output helpers ---------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


class Writer:
    def __init__(self, out_dir: Path, formats):
        self.dir = out_dir
        self.formats = set(formats)
        self.dir.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, obj):
        if "json" in self.formats:
            text = json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False)
            (self.dir / name).write_text(text + "\n")

    def csv(self, name: str, header, columns):
        if "csv" not in self.formats:
            return
        data = np.column_stack([np.asarray(c, dtype=float) for c in columns]) if len(columns[0]) else None
        with open(self.dir / name, "w") as fh:
            fh.write(",".join(header) + "\n")
            if data is not None:
                np.savetxt(fh, data, delimiter=",", fmt="%.17g")


def _write_meta(writer: Writer, command: str, config_path: str, started: float, extra=None):
    digest = hashlib.sha256(Path(config_path).read_bytes()).hexdigest()
    meta = {
        "command": command,
        "config": str(config_path),
        "config_sha256": digest,
        "version": __version__,
        "backend": _core.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "wall_seconds": round(time.time() - started, 3),
    }
    meta.update(extra or {})
    (writer.dir / "meta.json").write_text(json.dumps(_clean(meta), indent=2, sort_keys=True) + "\n")


def _single_eps(cfg: ExperimentConfig) -> float:
    if len(cfg.epsilon) != 1:
        raise ConfigError("epsilon: this command needs a single value")
    return cfg.epsilon[0]


def _solve(cfg: ExperimentConfig, eps: float):
    gen = cfg.build_generator()
    rho0, rho1 = cfg.build_marginals(gen)
    sol = solve_ipfp(rho0, rho1, eps, gen, tol=cfg.tolerances.ipfp_tol, max_iter=cfg.tolerances.ipfp_max_iter)
    return gen, rho0, rho1, sol


# -- commands -------------------------------------------------------------------------


def cmd_solve(cfg: ExperimentConfig, writer: Writer, jobs: int = 1) -> int:
    eps = _single_eps(cfg)
    gen, rho0, rho1, sol = _solve(cfg, eps)
    x = gen.grid.nodes
    writer.json("solution.json", {
        "epsilon": sol.epsilon,
        "cost": sol.cost,
        "iterations": sol.iterations,
        "marginal_error": sol.marginal_error,
        "gauge": sol.gauge,
        "converged": sol.converged,
        "n": gen.n,
        "w2_squared": wasserstein2_squared(rho0, rho1),
    })
    lpi = log_static_coupling(sol)
    with np.errstate(under="ignore"):
        pi = np.exp(lpi)
    i, j = np.nonzero(pi > COUPLING_FLOOR)
    writer.csv("coupling.csv", ["i", "j", "x_i", "x_j", "pi"], [i, j, x[i], x[j], pi[i, j]])
    writer.csv("potentials.csv", ["x", "phi", "psi"], [x, sol.phi, sol.psi])
    return EXIT_OK if sol.converged else EXIT_NONCONVERGED


def cmd_interpolate(cfg: ExperimentConfig, writer: Writer, jobs: int = 1) -> int:
    eps = _single_eps(cfg)
    gen, rho0, rho1, sol = _solve(cfg, eps)
    if not sol.converged:
        writer.json("interpolation.json", {"epsilon": eps, "converged": False, "iterations": sol.iterations,
                                           "marginal_error": sol.marginal_error})
        return EXIT_NONCONVERGED
    path = build_path(sol, cfg.time_grid)
    x = gen.grid.nodes
    ts = path.times
    nt, n = ts.size, gen.n
    writer.csv("path.csv", ["t", "x", "rho"], [np.repeat(ts, n), np.tile(x, nt), path.rho.ravel()])

    ig = path_integrands(path)
    idx = diag.interior_indices(ts)
    report = diag.conservation_report(path, integrands=ig) if idx.size >= 3 else None
    tests = [x, x**2, np.sin(x)]
    rows = []
    vel = []
    for k in idx:
        t = float(ts[k])
        qe = float(ig.q_exact[k])
        qv = float(ig.kinetic_density[k] - eps**2 / 4 * ig.fisher[k])
        ham = diag.hamiltonian(path, gen, t)
        cont = diag.continuity_residual(path, gen, t, tests)
        hf, hb = diag.hjb_residual(path, gen, t)
        rows.append((t, qe, qv, ham, cont, hf, hb))
        v = diag.nelson_velocities(path, eps, gen.measure.potential_d1, t)
        vel.append(np.column_stack([np.full(n, t), x, v.v_fwd, v.v_bwd, v.v_cur, v.v_osm]))
    cols = list(zip(*rows)) if rows else [[]] * 7
    writer.csv("diagnostics.csv",
               ["t", "Q_exact", "Q_velocity", "hamiltonian", "continuity_residual", "hjb_forward", "hjb_backward"],
               cols)
    if vel:
        v = np.vstack(vel)
        writer.csv("velocities.csv", ["t", "x", "v_fwd", "v_bwd", "v_cur", "v_osm"], list(v.T))
    terms = dynamic_cost_terms(path, integrands=ig)
    writer.json("interpolation.json", {
        "epsilon": eps,
        "converged": True,
        "iterations": sol.iterations,
        "marginal_error": sol.marginal_error,
        "cost": sol.cost,
        "kinetic": terms.kinetic,
        "fisher_integral": terms.fisher_integral,
        "entropy_endpoints": terms.entropy_endpoints,
        "dynamic_total": terms.dynamic_total,
        "dynamic_residual": terms.residual,
        "q_spread_exact": report.spread_exact if report else None,
        "q_relative_spread": report.relative_spread if report else None,
        "chain_rule_defect": report.chain_rule_defect if report else None,
        "max_mass_error": float(np.max(np.abs(path.masses - 1.0))),
    })
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, writer: Writer, jobs: int = 1) -> int:
    gen = cfg.build_generator()
    rho0, rho1 = cfg.build_marginals(gen)
    kappa = gen.measure.kappa + cfg.kappa_offset
    tol = cfg.tolerances.report_tol
    reports = []
    for label, nu in (("mu0", rho0), ("mu1", rho1)):
        for rep in ineq.theorem_suite(nu, gen, kappa):
            reports.append((f"{rep.name}:{label}", rep))
    reports.append(("hwi_star", ineq.hwi_star_from_densities(rho0, rho1, gen, kappa)))
    status = EXIT_OK
    for eps in cfg.epsilon:
        sol = solve_ipfp(rho0, rho1, eps, gen, tol=cfg.tolerances.ipfp_tol, max_iter=cfg.tolerances.ipfp_max_iter)
        if not sol.converged:
            status = EXIT_NONCONVERGED
            continue
        path = build_path(sol, cfg.time_grid)
        reports.append((f"key_lemma:eps={eps:g}", ineq.entropy_endpoint_check(path, gen, kappa)))
    out = []
    violated = False
    for name, rep in reports:
        rep = rep.judged(tol)
        d = rep.as_dict()
        d["name"] = name
        out.append(d)
        violated |= rep.status == ineq.VIOLATED
    writer.json("inequalities.json", out)
    if violated:
        for d in out:
            if d["status"] == ineq.VIOLATED:
                print(f"violated: {d['name']} margin {d['margin']}", file=sys.stderr)
        return EXIT_VIOLATION
    return status


def _sweep_worker(args):
    cfg, eps = args
    gen = cfg.build_generator()
    rho0, rho1 = cfg.build_marginals(gen)
    row, _ = diag.solve_row(rho0, rho1, eps, gen, cfg.tolerances.ipfp_tol, cfg.tolerances.ipfp_max_iter,
                            cfg.time_grid)
    return row


def cmd_sweep_eps(cfg: ExperimentConfig, writer: Writer, jobs: int = 1) -> int:
    eps_list = sorted(cfg.epsilon, reverse=True)
    if len(set(eps_list)) != len(eps_list):
        raise ConfigError("epsilon: values must be distinct")
    gen = cfg.build_generator()
    rho0, rho1 = cfg.build_marginals(gen)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_worker, [(cfg, e) for e in eps_list]))
        rows.sort(key=lambda r: -r.epsilon)
    else:
        rows = diag.eps_sweep(rho0, rho1, eps_list, gen, cfg.tolerances.ipfp_tol, cfg.tolerances.ipfp_max_iter,
                              cfg.time_grid)
    cols = diag.SWEEP_COLUMNS
    writer.csv("sweep.csv", list(cols), [[float(getattr(r, c)) for r in rows] for c in cols])
    summary = diag.sweep_summary(rows)
    summary["converged"] = [r.converged for r in rows]
    summary["epsilon"] = [r.epsilon for r in rows]
    if any(r.converged for r in rows):
        bridge = ineq.q_limit_bridge(rows, fisher_information(rho1, gen))
        summary["q_limit"] = {
            "max_relative_defect": bridge.max_relative_defect,
            "final_relative_gap": bridge.final_relative_gap,
            "improvement": bridge.improvement,
        }
    writer.json("summary.json", summary)
    return EXIT_OK if any(r.converged for r in rows) else EXIT_NONCONVERGED


REFINE_COLUMNS = ("n", "h", "dynamic_residual", "chain_rule_defect", "continuity_residual",
                  "hjb_forward", "hjb_backward", "lemma_margin", "q_relative_spread")


def _refine_worker(args):
    cfg, level = args
    grid = cfg.grid.refined(level)
    sub = replace(cfg, grid=grid)
    gen = sub.build_generator()
    rho0, rho1 = sub.build_marginals(gen)
    eps = cfg.epsilon[0]
    sol = solve_ipfp(rho0, rho1, eps, gen, tol=cfg.tolerances.ipfp_tol, max_iter=cfg.tolerances.ipfp_max_iter)
    if not sol.converged:
        return None
    path = build_path(sol, cfg.time_grid)
    ig = path_integrands(path)
    rep = diag.conservation_report(path, integrands=ig)
    ts = path.times
    t_mid = float(ts[diag.interior_indices(ts)[len(diag.interior_indices(ts)) // 2]])
    x = gen.grid.nodes
    hf, hb = diag.hjb_residual(path, gen, t_mid)
    return {
        "n": grid.n,
        "h": grid.h,
        "dynamic_residual": dynamic_cost_terms(path, integrands=ig).residual,
        "chain_rule_defect": rep.chain_rule_defect,
        "continuity_residual": diag.continuity_residual(path, gen, t_mid, [x, x**2, np.sin(x)]),
        "hjb_forward": hf,
        "hjb_backward": hb,
        "lemma_margin": ineq.entropy_endpoint_check(path, gen, gen.measure.kappa + cfg.kappa_offset).margin,
        "q_relative_spread": rep.relative_spread,
    }


def cmd_refine(cfg: ExperimentConfig, writer: Writer, jobs: int = 1) -> int:
    tasks = [(cfg, level) for level in range(3)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_refine_worker, tasks))
    else:
        results = [_refine_worker(t) for t in tasks]
    if any(r is None for r in results):
        return EXIT_NONCONVERGED
    writer.csv("refine.csv", list(REFINE_COLUMNS), [[r[c] for r in results] for c in REFINE_COLUMNS])
    ns = [r["n"] for r in results]
    orders = {c: diag.refinement_orders(ns, [r[c] for r in results]) for c in REFINE_COLUMNS[2:]}
    writer.json("refine.json", {"epsilon": cfg.epsilon[0], "levels": results, "orders": orders})
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "interpolate": cmd_interpolate,
    "verify": cmd_verify,
    "sweep-eps": cmd_sweep_eps,
    "refine": cmd_refine,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entropic-hwi",
        description="Entropic interpolations on a weighted line and checks of HWI-type inequalities.",
        epilog=CSV_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="YAML experiment file")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for sweep-eps and refine")
    parser.add_argument("--out", default=None, help="output directory (overrides outputs.dir)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = load_config(args.config)
        writer = Writer(Path(args.out or cfg.output_dir), cfg.formats)
        code = COMMANDS[args.command](cfg, writer, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _write_meta(writer, args.command, args.config, started, {"exit_code": code})
    return code


if __name__ == "__main__":
    raise SystemExit(main())
