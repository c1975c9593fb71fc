"""Lengthening dynamics of linear chains of coherent scatterers.

Grow chains by concatenating unitary scattering matrices, follow the
induced dynamical system on the unitary group, and measure its transport
consequences: ballistic versus localised motion, decay-rate statistics
of disordered single-channel chains, and Haar-measure surveys of
multi-channel transfer spectra.
"""

from .smatrix import (
    COND_MAX,
    TAU_ROUNDTRIP,
    TAU_UNITARY,
    ChannelMismatchError,
    ResonantCavityError,
    ScatteringError,
    ScatteringMatrix,
    SingularBlockError,
    TransferMatrix,
    TransportStats,
    UnitarityError,
    compose,
    k_matrix,
    load_matrix,
    perfect_transmitter,
    pseudo_unitarity_residual,
    s_to_t,
    save_matrix,
    t_to_s,
    transport,
    unitarity_residual,
    unitarize,
    validate,
)
from .single_channel import (
    ChainState1D,
    DegenerateTransferError,
    DisorderModel,
    Dist,
    FixedPointReport,
    GaussianPrediction,
    MarginalDiscriminantError,
    SingleChannelParams,
    decay_rate_series,
    discriminant,
    eigenvalues_1d,
    fixed_points,
    gaussian_prediction,
    initial_state,
    integral_F,
    integral_F_values,
    log_f,
    noisy_step,
    static_orbit,
    static_step,
)
from .multi_channel import (
    TAU_SPEC,
    ChainTrace,
    SpectralClassification,
    beta_exponent,
    classify,
    eigenvector_structure,
    evolve_chain,
    plateau_transmission,
    x_block_power,
)
from .ensemble import EnsembleStats, MomentSummary, moment_summary, wilson_interval
from .haar import (
    SET_ALIASES,
    SET_IDS,
    CollapseReport,
    FitResult,
    HaarSampler,
    MeasureEstimate,
    canonical_set_id,
    fit_measure_scaling,
    haar_sample,
    measure_estimate,
    measure_estimate_adaptive,
    pmax_distribution,
    pu_distribution,
    sample_with_label,
    scaling_collapse,
    tail_amplitude,
    tail_exponent,
)

__version__ = "0.1.0"
