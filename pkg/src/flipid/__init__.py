"""Numerical checks of interaction-flip identities in non-centered Gaussian spin glasses.

Finite models are enumerated exactly; disorder averages use tensor
Gauss-Hermite quadrature or counter-based Monte Carlo.
"""

from .disorder import (
    CouplingAssignment,
    DisorderMeasure,
    QuenchedEstimate,
    disorder_expectation,
    flip_centered,
    flip_full,
    ibp_residual,
    integrate,
    sample_couplings,
)
from .gibbs import (
    ReplicaMoments,
    gibbs_moments,
    log_partition,
    multi_replica_average,
    pressure,
    replica_moments,
    state_energies,
)
from .identities import (
    FunctionalValue,
    IdentityReport,
    ScanResult,
    lemma1_check,
    lemma2_check,
    linear_lemma_check,
    replicon_two_ways,
    theorem1_functional,
    theorem2_mu_average,
    theorem3_linear_functionals,
    volume_scan,
)
from .interpolation import PATHS, get_path, interp_hamiltonian, kernel_eval, pressure_difference, quadrature_2d
from .martingale import MartingaleDecomposition, bound_check, decompose, tail_vanishing_check
from .model import (
    Interaction,
    InteractionModel,
    ModelError,
    build_model,
    chain,
    ea2d,
    explicit,
    hamiltonian_eval,
    magnetization,
    overlap_covariance,
    stability_constant,
)

__version__ = "0.1.0"
