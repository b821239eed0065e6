"""Multiscale laboratory for discretized fractal measures on R^d."""

__version__ = "0.1.0"

from .combinatorics import (FiniteSet, additive_energy, bsg_extract, component_fractions,
                            component_prob, concentration_check, level_sets,
                            saturation_check)
from .convolution import commute_check, convolve, flattening_experiment, self_power
from .dyadic import (CellIndex, DimEstimate, DyadicMeasure, coarsen, component, dim_fit,
                     discretize, entropy, lq_dimension, lq_norm, lq_power_sum,
                     measure_dimension, restrict_normalize)
from .errors import (BigCountError, BudgetError, ConvergenceError, EmptyMeasureError,
                     FractlabError, GeometryError, InputError, LemmaPreconditionError,
                     ParameterError)
from .fourier import bad_set_scan, ft, ft_many, l2_ball_bound_check, moment
from .nonconc import (AffineSubspace, anc_scan, hyperplane_decay_fit, sqrt_friendly_check,
                      tube_mass)
from .report import ExperimentReport

__all__ = [
    "__version__",
    "AffineSubspace", "BigCountError", "BudgetError", "CellIndex", "ConvergenceError",
    "DimEstimate", "DyadicMeasure", "EmptyMeasureError", "ExperimentReport", "FiniteSet",
    "FractlabError", "GeometryError", "InputError", "LemmaPreconditionError", "ParameterError",
    "additive_energy", "anc_scan", "bad_set_scan", "bsg_extract", "coarsen", "commute_check",
    "component", "component_fractions", "component_prob", "concentration_check", "convolve",
    "dim_fit", "discretize", "entropy", "flattening_experiment", "ft", "ft_many",
    "hyperplane_decay_fit", "l2_ball_bound_check", "level_sets", "lq_dimension", "lq_norm",
    "lq_power_sum", "measure_dimension", "moment", "restrict_normalize", "saturation_check",
    "self_power", "sqrt_friendly_check", "tube_mass",
]
