"""Asymptotic spectra and mutual information of multi-RIS assisted MIMO channels.

The package couples an operator-valued fixed-point solver for the Cauchy
transform of the channel Gram matrix with a Monte Carlo simulator used to
validate it.  See README.md for the experiment configuration format.
"""

from .linalg import (
    BlockDiag,
    Partition,
    SingularMatrixError,
    block2x2_inverse,
    block3x3_inverse,
    extract_diag_block,
    hermitian_inverse,
    woodbury_inverse,
)
from .channel import (
    ChannelRealization,
    ChannelSpec,
    LinkSpecF,
    LinkSpecG,
    apply_rician_factor,
    assemble_GF,
    eta,
    eta_tilde,
    los_specular,
    sample_realization,
    upa_steering,
    zeta,
    zeta_tilde,
)
from .solver import SolverOptions, SolverState, cauchy_B, solve_fixed_point, sweep
from .analysis import (
    CauchyEvaluator,
    DeviationNotFound,
    MIResult,
    SpectralResult,
    deviation_snr,
    high_snr_slope,
    mi_from_density,
    mutual_information,
    mutual_information_sweep,
    spectral_density,
    support_edge_estimate,
)
from .montecarlo import (
    MCEstimate,
    empirical_covariance,
    empirical_density,
    empirical_eigenvalues,
    empirical_mutual_information,
)

__version__ = "0.1.0"

__all__ = [
    "BlockDiag",
    "CauchyEvaluator",
    "ChannelRealization",
    "ChannelSpec",
    "DeviationNotFound",
    "LinkSpecF",
    "LinkSpecG",
    "MCEstimate",
    "MIResult",
    "Partition",
    "SingularMatrixError",
    "SolverOptions",
    "SolverState",
    "SpectralResult",
    "apply_rician_factor",
    "assemble_GF",
    "block2x2_inverse",
    "block3x3_inverse",
    "cauchy_B",
    "deviation_snr",
    "empirical_covariance",
    "empirical_density",
    "empirical_eigenvalues",
    "empirical_mutual_information",
    "eta",
    "eta_tilde",
    "extract_diag_block",
    "hermitian_inverse",
    "high_snr_slope",
    "los_specular",
    "mi_from_density",
    "mutual_information",
    "mutual_information_sweep",
    "sample_realization",
    "solve_fixed_point",
    "spectral_density",
    "support_edge_estimate",
    "sweep",
    "upa_steering",
    "woodbury_inverse",
    "zeta",
    "zeta_tilde",
]
