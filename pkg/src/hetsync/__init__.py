"""Heteroclinic cycles and networks of localized frequency synchrony in
coupled phase-oscillator populations: vector fields, closed-form spectra,
transition-matrix stability theory, and Monte Carlo verification."""

from .dynamics import (
    FULL,
    NONPAIRWISE,
    full_field,
    g,
    g2,
    g4,
    order_parameter,
    reduced_field,
    rhs,
    rhs_full,
    rhs_nonpairwise,
    rhs_reduced,
    rhs_reduced_n2,
    rhs_sd_subspace,
    sd_subspace_field,
)
from .empirics import (
    BasinEstimate,
    EdgeStatistics,
    FrequencyProfile,
    WedgeGrid,
    average_frequencies,
    basin_fraction,
    detect_localized_frequency_synchrony,
    empirical_index_sign,
    frequencies_from_trajectory,
    noisy_network_runs,
    special_equilibria_sd,
    wedge_map,
    wilson_interval,
    windowed_frequencies,
)
from .model import (
    CycleSpec,
    ModelParams,
    PreconditionError,
    all_words,
    builtin_coupling,
    circ_dist,
    cycle_c2,
    cycle_c2_check,
    cycle_c2_hat,
    equilibrium_state,
    lift_phases,
    network_cycles,
    network_edges,
    reduce_phases,
    wrap,
)
from .numerics import (
    EigenData,
    Itinerary,
    ItineraryTracker,
    NumericalError,
    Trajectory,
    classify_omega_limit,
    eigen_small,
    integrate_em,
    integrate_rk4,
    itinerary,
    jacobian_fd,
    noise_stream,
)
from .spectra import (
    SaddleData,
    cycle_exists,
    eigenvalues_closed_form,
    nonresonance_ok,
    saddle_data,
    word_eigenvalues,
)
from .stability import (
    ABCResult,
    NetworkReport,
    StabilityClass,
    StabilityReport,
    TransitionMatrix,
    check_abc,
    classify_m3,
    eigpair_2x2_closed,
    f_ind,
    local_map,
    network_cycle_indices,
    network_report,
    transition_matrix,
)

__version__ = "0.1.0"
