"""Experiment configuration: a YAML tree parsed into validated objects."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import functionals as fn
from .space import Generator, Grid1D, GridError, PotentialSpec, build_generator


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _get(tree: dict, key: str, where: str, default: Any = ...):
    if not isinstance(tree, dict):
        raise ConfigError(f"{where}: expected a mapping")
    if key not in tree:
        if default is ...:
            raise ConfigError(f"missing required field {where}.{key}" if where else f"missing required field {key}")
        return default
    return tree[key]


def _num(value, name: str, integer: bool = False):
    try:
        # YAML leaves forms like "1e-10" as strings
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {value!r}") from None
    if not np.isfinite(out):
        raise ConfigError(f"{name}: must be finite")
    if integer:
        if out != int(out):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return int(out)
    return out


def _num_list(value, name: str) -> list[float]:
    if not isinstance(value, (list, tuple)) or len(value) == 0:
        raise ConfigError(f"{name}: expected a non-empty list")
    return [_num(v, f"{name}[{i}]") for i, v in enumerate(value)]


@dataclass(frozen=True)
class Tolerances:
    ipfp_tol: float = 1e-10
    ipfp_max_iter: int = 100_000
    report_tol: float = 1e-3


@dataclass(frozen=True)
class ExperimentConfig:
    grid: Grid1D
    potential: PotentialSpec
    marginals: tuple
    epsilon: tuple
    times: Any
    tolerances: Tolerances = Tolerances()
    output_dir: str = "out"
    formats: tuple = ("csv", "json")
    check_tail: bool = True
    kappa_offset: float = 0.0
    raw: dict = field(default_factory=dict, repr=False)

    def build_generator(self) -> Generator:
        try:
            return build_generator(self.grid, self.potential, check_tail=self.check_tail)
        except (GridError, ValueError) as exc:
            raise ConfigError(f"grid/potential: {exc}") from exc

    def build_marginals(self, gen: Generator) -> tuple:
        return tuple(build_density(spec, gen, f"marginals[{i}]") for i, spec in enumerate(self.marginals))

    @property
    def time_grid(self) -> np.ndarray:
        if isinstance(self.times, int):
            return np.linspace(0.0, 1.0, self.times)
        return np.asarray(self.times, dtype=float)


def build_density(spec: dict, gen: Generator, where: str = "marginal") -> fn.DensityField:
    measure = gen.measure
    kind = _get(spec, "kind", where)
    try:
        if kind == "gaussian":
            return fn.gaussian(measure, _num(_get(spec, "mean", where), f"{where}.mean"),
                               _num(_get(spec, "std", where), f"{where}.std"))
        if kind == "bump":
            return fn.bump(measure, _num(_get(spec, "center", where), f"{where}.center"),
                           _num(_get(spec, "width", where), f"{where}.width"))
        if kind == "uniform":
            lo, hi = _num_list(_get(spec, "support", where), f"{where}.support")
            return fn.uniform(measure, lo, hi)
        if kind == "mixture":
            comps = _get(spec, "components", where)
            if not isinstance(comps, list) or not comps:
                raise ConfigError(f"{where}.components: expected a non-empty list")
            parts = [build_density(c, gen, f"{where}.components[{i}]") for i, c in enumerate(comps)]
            weights = _num_list(_get(spec, "weights", where), f"{where}.weights")
            return fn.mixture(parts, weights)
        if kind == "reference":
            return fn.reference_density(measure)
    except fn.DensityError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}.kind: unknown marginal kind {kind!r}")


def _parse_potential(tree) -> PotentialSpec:
    kind = _get(tree, "kind", "potential")
    try:
        if kind == "quadratic":
            return PotentialSpec.quadratic(_num(tree.get("kappa0", 1.0), "potential.kappa0"))
        if kind == "double_well":
            return PotentialSpec.double_well(_num(_get(tree, "alpha", "potential"), "potential.alpha"),
                                             _num(_get(tree, "beta", "potential"), "potential.beta"))
        if kind == "polynomial":
            return PotentialSpec.polynomial(_num_list(_get(tree, "coeffs", "potential"), "potential.coeffs"))
        if kind == "tabulated":
            return PotentialSpec.tabulated(_num_list(_get(tree, "values", "potential"), "potential.values"))
        if kind == "flat":
            return PotentialSpec.flat()
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"potential: {exc}") from exc
    raise ConfigError(f"potential.kind: unknown potential kind {kind!r}")


def parse_config(tree: dict) -> ExperimentConfig:
    if not isinstance(tree, dict):
        raise ConfigError("configuration root must be a mapping")
    g = _get(tree, "grid", "")
    try:
        grid = Grid1D(
            _num(_get(g, "a", "grid"), "grid.a"),
            _num(_get(g, "b", "grid"), "grid.b"),
            _num(_get(g, "n", "grid"), "grid.n", integer=True),
            str(g.get("boundary", "reflecting")),
        )
    except GridError as exc:
        raise ConfigError(f"grid: {exc}") from exc
    potential = _parse_potential(_get(tree, "potential", ""))

    marg = _get(tree, "marginals", "")
    if not isinstance(marg, list) or len(marg) != 2:
        raise ConfigError("marginals: expected a list of two marginal specs")
    for i, spec in enumerate(marg):
        _get(spec, "kind", f"marginals[{i}]")

    eps_raw = _get(tree, "epsilon", "")
    eps = _num_list(eps_raw, "epsilon") if isinstance(eps_raw, list) else [_num(eps_raw, "epsilon")]
    if any(e <= 0 for e in eps):
        raise ConfigError("epsilon: values must be positive")

    times_raw = tree.get("times", 65)
    if isinstance(times_raw, list):
        times = _num_list(times_raw, "times")
        if np.any(np.diff(times) <= 0) or times[0] < 0 or times[-1] > 1:
            raise ConfigError("times: must be strictly increasing within [0, 1]")
        times = tuple(times)
    else:
        times = _num(times_raw, "times", integer=True)
        if times < 3:
            raise ConfigError("times: need at least 3 time nodes")

    tol_tree = tree.get("tolerances", {}) or {}
    tolerances = Tolerances(
        ipfp_tol=_num(tol_tree.get("ipfp_tol", 1e-10), "tolerances.ipfp_tol"),
        ipfp_max_iter=_num(tol_tree.get("ipfp_max_iter", 100_000), "tolerances.ipfp_max_iter", integer=True),
        report_tol=_num(tol_tree.get("report_tol", 1e-3), "tolerances.report_tol"),
    )
    out_tree = tree.get("outputs", {}) or {}
    formats = tuple(out_tree.get("formats", ["csv", "json"]))
    bad = set(formats) - {"csv", "json"}
    if bad:
        raise ConfigError(f"outputs.formats: unsupported {sorted(bad)}")
    verify_tree = tree.get("verify", {}) or {}
    return ExperimentConfig(
        grid=grid,
        potential=potential,
        marginals=tuple(marg),
        epsilon=tuple(eps),
        times=times,
        tolerances=tolerances,
        output_dir=str(out_tree.get("dir", "out")),
        formats=formats,
        check_tail=bool(g.get("check_tail", True)),
        kappa_offset=_num(verify_tree.get("kappa_offset", 0.0), "verify.kappa_offset"),
        raw=tree,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return parse_config(tree)
