"""Numerical laboratory for adiabatic traversal of Hamiltonian paths.

The package splits along the natural pipeline: ``model`` declares matrix
families H(s), ``spectral`` turns them into smooth eigenframes, ``pathgeom``
measures ground-curve arc length and builds traversal schedules, ``evolve``
integrates the driven Schrodinger equation (compiled kernels when available,
pure NumPy otherwise), ``metrics`` scores a traversal, and ``nogo`` plus
``asymptotics`` run the rescaling and scaling experiments on top. ``cli``
wraps everything behind JSON configs and deterministic artifacts.
"""

from ._backend import BACKEND
from .model import (
    DegenerateSpectrumError,
    HamiltonianPath,
    PathSpecError,
    direct_sum_path,
    path_from_spec,
    rotating_two_level_path,
    three_level_path,
)
from .pathgeom import (
    ArcLengthMap,
    Schedule,
    arc_length_map,
    make_schedule,
    natural_velocity,
    path_length,
    velocity_from_spec,
)
from .spectral import FrameTransportError, GaugedFrame, transport_frame
from .evolve import ConvergenceError, diabatic_error, integrate, integrate_arc
from .metrics import AdiabaticityCost, adiabaticity_cost, cost_summary
from .nogo import RescaledSystem, pin_gap, rescale, verify_rescaled
from .asymptotics import (
    ScalingFit,
    counterexample_scaling_experiment,
    fit_power_law,
    periodic_scaling_experiment,
    switching_coefficient,
)

__version__ = "0.1.0"

__all__ = [
    "AdiabaticityCost",
    "ArcLengthMap",
    "BACKEND",
    "ConvergenceError",
    "DegenerateSpectrumError",
    "FrameTransportError",
    "GaugedFrame",
    "HamiltonianPath",
    "PathSpecError",
    "RescaledSystem",
    "ScalingFit",
    "Schedule",
    "__version__",
    "adiabaticity_cost",
    "arc_length_map",
    "cost_summary",
    "counterexample_scaling_experiment",
    "diabatic_error",
    "direct_sum_path",
    "fit_power_law",
    "integrate",
    "integrate_arc",
    "make_schedule",
    "natural_velocity",
    "path_from_spec",
    "path_length",
    "periodic_scaling_experiment",
    "pin_gap",
    "rescale",
    "rotating_two_level_path",
    "switching_coefficient",
    "three_level_path",
    "transport_frame",
    "velocity_from_spec",
    "verify_rescaled",
]
