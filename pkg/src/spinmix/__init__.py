"""spinmix: nonlinear spin-mixing interferometry in three-mode condensates.

Exact fixed-total-number sector dynamics, Fisher-information phase
sensitivity, parametric (undepleted-pump) closed forms, two-body losses via
Monte Carlo wave functions, and detection-noise smearing.
"""

from .hilbert import (
    PoissonMixture,
    SectorBasis,
    SectorState,
    poisson_sectors,
    sector_basis,
    vacuum_probe,
)
from .dynamics import (
    PulseSpec,
    SectorPropagator,
    apply_phase,
    build_smd_matrix,
    evolve_smd,
    evolve_smd_dense,
    pair_moments,
    sector_propagator,
)
from .interferometer import (
    OutputDistribution,
    SequenceSpec,
    UnreachableEtaError,
    fringe_center,
    output_moments,
    run_sequence,
    second_pulse,
    sequence_distribution_grid,
    solve_pulse_for_eta,
    transfer_fraction,
)
from .estimation import (
    EstimationResult,
    NoSSNError,
    ZeroSlopeError,
    default_theta_grid,
    error_propagation,
    estimate,
    fisher_at_zero,
    fisher_information,
    fisher_opt,
    ssn_critical_n,
    ssn_critical_n_meanfield_detection,
)
from .meanfield import (
    mf_critical_n,
    mf_critical_n_detection,
    mf_distribution,
    mf_fisher,
    mf_output_moments,
    mf_pair_number,
    mf_probability,
    mf_pulse_area,
    validity_parameter,
)
from .noise import (
    DetectionConfig,
    IntegratorError,
    LossConfig,
    convolve_detection,
    decay_mean_n0,
    fisher_detection,
    lossy_output_distribution,
    lossy_transfer_curve,
    mcwf_trajectory,
    mean_n0_decay,
)
from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
