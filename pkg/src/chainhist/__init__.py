"""chainhist: history matrices for continuous-time Markov chains on networks.

Build exact master-equation generators for epidemic and opinion dynamics,
solve them into history matrices (explicit stepping or the equivalent block
linear system), post-process with SVD / Fourier / Haar transforms, check
everything against reproducible Monte Carlo baselines, and evaluate the
resource arithmetic of the quantum history-state solver route.
"""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ChainhistError,
    ModelMismatchError,
    NumericalError,
    ValidationError,
)
from .models import (
    Distancing,
    InitialSpec,
    ModelSpec,
    Network,
    RateMatrix,
    build_distancing_generator,
    build_generator,
    build_opinion_generator,
    build_sis_generator,
    infected_counts,
    make_initial_distribution,
    state_digits,
    state_label,
)
from .lde import (
    HistoryMatrix,
    LinearSystem,
    NormalizedHistory,
    OdeProblem,
    assemble_system,
    euler_step_history,
    normalize_history,
    pad_for_time,
    solve_history,
    stability_margin,
)
from .analysis import (
    PowerSpectrum,
    Spectrum,
    SVDResult,
    WindowPolicy,
    fourier_matrix,
    fourier_time,
    haar_matrix,
    haar_time,
    inverse_transform,
    power_spectrum,
    scaled_singular_vectors,
    svd_history,
    transform_right_vectors,
)
from .sampling import (
    ChainSampler,
    EstimateReport,
    InitialStateSampler,
    LocalDynamics,
    ObservableSpec,
    Trajectory,
    UniformStream,
    collision_gram_estimate,
    convergence_study,
    derive_seed,
    estimate_observable_mc,
    exact_observable,
    fixed_step_sample,
    gillespie_sample,
    indicator_observable,
    measure_pairs_to_first_collision,
    node_count_observable,
    popcount_observable,
    sample_states_at,
    simulate_trajectory,
    table_observable,
)
from .qresource import (
    ResourceEstimate,
    ResourceInputs,
    SuccessBounds,
    TruncationReport,
    choose_delta,
    choose_truncation_order,
    eigenbasis_condition,
    estimate_resources,
    gate_count_estimate,
    mc_sampling_complexity,
    normalized_difference_bound,
    operator_norm,
    qubit_tally,
    recommend_T,
    success_probability_bounds,
    taylor_error_bound,
    validate_truncation,
)
