"""Entropic interpolations on a weighted line and numerical checks of HWI-type inequalities."""
from ._core import BACKEND
from .functionals import (
    DensityField,
    bump,
    entropy_variational_gap,
    fisher_information,
    gaussian,
    mixture,
    reference_density,
    relative_entropy,
    uniform,
    wasserstein2_1d,
    wasserstein2_squared,
)
from .schrodinger import (
    InterpolationPath,
    SchrodingerSolution,
    build_path,
    dynamic_cost_terms,
    solve_ipfp,
    static_coupling,
)
from .space import Generator, Grid1D, PotentialSpec, ReferenceMeasure, build_generator, reference_measure

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DensityField",
    "Generator",
    "Grid1D",
    "InterpolationPath",
    "PotentialSpec",
    "ReferenceMeasure",
    "SchrodingerSolution",
    "build_generator",
    "build_path",
    "bump",
    "dynamic_cost_terms",
    "entropy_variational_gap",
    "fisher_information",
    "gaussian",
    "mixture",
    "reference_density",
    "reference_measure",
    "relative_entropy",
    "solve_ipfp",
    "static_coupling",
    "uniform",
    "wasserstein2_1d",
    "wasserstein2_squared",
]
