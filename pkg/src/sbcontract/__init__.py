"""Schrodinger bridges by fixed-point recursion, with a-priori contraction bounds."""

from ._backend import BACKEND
from .bridge import (
    BridgeControl,
    DensitySpec,
    DiscreteMeasure,
    discretize_support,
    empirical_contraction,
    hilbert_metric,
    kernel_matrix,
    optimal_control,
    schrodinger_factors,
    simulate_bridge,
    sinkhorn_solve,
)
from .contraction import (
    gamma_classical,
    gamma_from_kernel_bounds,
    gamma_from_separations,
    gamma_linear,
    quadratic_form_bounds,
)
from .dynamics import (
    GramianBundle,
    LinearSystem,
    controllability_gramian,
    make_system,
    min_energy_transfer_cost,
    state_transition,
)
from .geometry import (
    Ball,
    Ellipsoid,
    PointCloud,
    Polytope,
    affine_image,
    linear_separations,
    max_separation,
    min_separation,
    support_function,
)
from .kernels import TransitionKernel, brownian_kernel, kernel_bounds, linear_kernel
from .precondition import compare_gamma, precondition_supports

__version__ = "0.1.0"
