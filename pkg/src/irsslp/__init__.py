"""Joint symbol-level precoding and reflecting-surface phase design.

A library and CLI that minimize the worst-case symbol-error probability of a
multiuser MISO downlink by jointly optimizing the per-block precoder, the QAM
inter-point spacings, and the unit-modulus coefficients of a passive
reflecting surface, then evaluate the resulting bit-error rate by Monte-Carlo
simulation against baseline precoders.
"""

__version__ = "0.1.0"

from .baselines import (
    SCHEME_SLP_IRS,
    SCHEME_SLP_NO_IRS,
    SCHEME_SLP_RANDOM_THETA,
    SCHEME_ZF,
    VALID_SCHEMES,
    slp_no_irs,
    slp_random_theta,
    zf_design,
    zf_precode,
)
from .channels import (
    Geometry,
    PathLossParams,
    RicianParams,
    Scenario,
    SceneLayout,
    generate_scenario,
    load_scenario,
    path_loss,
    rician_matrix,
    save_scenario,
)
from .constellation import (
    PskMargins,
    PskSpec,
    QamMargins,
    QamSpec,
    psk_detect,
    q_function,
    qam_detect,
    sep_bound_qam,
)
from .config import (
    RunConfig,
    config_from_dict,
    config_hash,
    config_to_dict,
    config_to_sweep_spec,
    load_config,
    save_config,
)
from .model import (
    ChannelSet,
    DesignVariables,
    PowerBudget,
    SymbolBlock,
    SystemDims,
    effective_channel,
    effective_channel_matrix,
    received_signal,
)
from .objective import (
    ObjectiveEval,
    SmoothingConfig,
    exact_objective_psk,
    exact_objective_qam,
    finite_diff_gradient,
    psk_margins,
    qam_margins,
    smooth_max,
    smoothed_objective_psk,
    smoothed_objective_qam,
)
from .optimizer import (
    ApgResult,
    ApgState,
    LineSearchConfig,
    OuterConfig,
    SolverError,
    SolverTrace,
    alternating_minimize,
    apg_solve,
    project_nonnegative,
    project_power_ball,
    project_unit_modulus,
    solve_precoder,
    warm_start,
)
from .sim import (
    BerRecord,
    SweepResult,
    SweepSpec,
    ber_sweep,
    convergence_trace,
    run_block_trial,
    run_realization,
    wilson_interval,
)
