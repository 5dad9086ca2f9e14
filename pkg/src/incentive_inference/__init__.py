"""Incentive design for active type inference under partial observation.

A leader pays nonnegative reward bonuses on selected state-action pairs of
every follower type's MDP so the types' entropy-regularized best responses
become distinguishable through a noisy sensor.  The library solves the
follower planning problems, builds the policy-induced hidden Markov
models, evaluates the conditional entropy of the type given observations
(exactly or by sampling), differentiates everything back to the payment
vector, and descends the resulting objective under box constraints.
"""

__version__ = "0.1.0"

from .errors import ConfigurationError, DivergenceError, ZeroEvidenceError
from .mdp import (
    FollowerSpec,
    SidePayment,
    SoftSolution,
    apply_side_payment,
    evaluate_policy,
    soft_q,
    soft_value_iteration,
    softmax_policy,
    solve,
)
from .q_jacobian import (
    payment_selection,
    policy_transition_operator,
    profile_q_jacobian,
    solve_q_jacobian,
)
from .hmm import (
    AugmentedHmm,
    FollowerHmm,
    SensorModel,
    batch_log_likelihood,
    build_follower_hmm,
    likelihood_gradient,
    sample_observations,
    score_sequences,
    sequence_likelihood,
    sequence_log_likelihood,
)
from .inference import (
    EntropyEstimate,
    PosteriorResult,
    entropy_gradient,
    enumerate_observation_sequences,
    exact_conditional_entropy,
    posterior,
    posterior_entropies,
    posterior_estimator,
    posterior_gradient,
    sampled_conditional_entropy,
    sampled_entropy_gradient_terms,
)
from .optimize import (
    IncentiveProblem,
    ObjectiveConfig,
    OptTrace,
    TraceRecord,
    cost,
    cost_gradient,
    objective,
    optimize,
    solve_profile,
    total_gradient,
)
from .gridworld import (
    ACTIONS,
    Cell,
    GridConfig,
    SensorZone,
    TypeParams,
    build_followers,
    build_problem,
    build_sensor,
    bundled_config,
    cell_index,
    load_config,
    load_config_file,
    reachable_cells,
    state_cells,
    support_pairs,
)

__all__ = [
    "ACTIONS",
    "AugmentedHmm",
    "Cell",
    "ConfigurationError",
    "DivergenceError",
    "EntropyEstimate",
    "FollowerHmm",
    "FollowerSpec",
    "GridConfig",
    "IncentiveProblem",
    "ObjectiveConfig",
    "OptTrace",
    "PosteriorResult",
    "SensorModel",
    "SensorZone",
    "SidePayment",
    "SoftSolution",
    "TraceRecord",
    "TypeParams",
    "ZeroEvidenceError",
    "apply_side_payment",
    "batch_log_likelihood",
    "build_follower_hmm",
    "build_followers",
    "build_problem",
    "build_sensor",
    "bundled_config",
    "cell_index",
    "cost",
    "cost_gradient",
    "entropy_gradient",
    "enumerate_observation_sequences",
    "evaluate_policy",
    "exact_conditional_entropy",
    "likelihood_gradient",
    "load_config",
    "load_config_file",
    "objective",
    "optimize",
    "payment_selection",
    "policy_transition_operator",
    "posterior",
    "posterior_entropies",
    "posterior_estimator",
    "posterior_gradient",
    "profile_q_jacobian",
    "reachable_cells",
    "sample_observations",
    "sampled_conditional_entropy",
    "sampled_entropy_gradient_terms",
    "score_sequences",
    "sequence_likelihood",
    "sequence_log_likelihood",
    "soft_q",
    "soft_value_iteration",
    "softmax_policy",
    "solve",
    "solve_profile",
    "solve_q_jacobian",
    "state_cells",
    "support_pairs",
    "total_gradient",
]
