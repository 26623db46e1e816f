"""Blind channel estimation for bursty impulsive-noise channels.

Simulates BPSK transmission over a Markov-Middleton impulsive-noise channel,
infers hidden-state posteriors with a numerically stable forward-backward
(BCJR) pass, and estimates the channel parameters blindly with standard or
constrained Baum-Welch EM. A Monte Carlo harness and CLI aggregate
convergence and robustness statistics across trials.
"""

from .noise_model import (
    MiddletonParams,
    NoiseRealization,
    generate_noise,
    noise_transition_matrix,
    state_probabilities,
    state_variances,
)
from .trellis import (
    ConstraintGroups,
    HmmParams,
    build_constraint_groups,
    build_reference_hmm,
    transmit,
)
from .bcjr import (
    NumericalUnderflowError,
    PosteriorTables,
    emission_likelihood,
    forward_backward,
    symbol_posteriors,
)
from .em import (
    EmConfig,
    EmIteration,
    EmTrace,
    LowOccupancyWarning,
    m_step_constrained,
    m_step_standard,
    run_em,
)
from .metrics import MetricReport, kl_transitions, metric_report, nmse_variances
from .harness import (
    AllTrialsFailedError,
    CellResult,
    ExperimentConfig,
    ExperimentResult,
    SweepSpec,
    TrialRecord,
    render_convergence_csv,
    render_json,
    render_robustness_csv,
    run_experiment,
    run_trial,
)

__version__ = "0.1.0"

__all__ = [
    "MiddletonParams",
    "NoiseRealization",
    "generate_noise",
    "noise_transition_matrix",
    "state_probabilities",
    "state_variances",
    "ConstraintGroups",
    "HmmParams",
    "build_constraint_groups",
    "build_reference_hmm",
    "transmit",
    "NumericalUnderflowError",
    "PosteriorTables",
    "emission_likelihood",
    "forward_backward",
    "symbol_posteriors",
    "EmConfig",
    "EmIteration",
    "EmTrace",
    "LowOccupancyWarning",
    "m_step_constrained",
    "m_step_standard",
    "run_em",
    "MetricReport",
    "kl_transitions",
    "metric_report",
    "nmse_variances",
    "AllTrialsFailedError",
    "CellResult",
    "ExperimentConfig",
    "ExperimentResult",
    "SweepSpec",
    "TrialRecord",
    "render_convergence_csv",
    "render_json",
    "render_robustness_csv",
    "run_experiment",
    "run_trial",
]
