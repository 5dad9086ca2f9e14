"""Sensitivity of the optimal soft Q-function to reward perturbations.

Each column of the Jacobian dQ*/dR solves a linear fixed point with the
same structure as a policy-evaluation Bellman equation: the equation for
column (s~, a~) is u = e_(s~,a~) + discount * P_pi u, where P_pi is the
softmax-policy-weighted transition operator on state-action pairs.  We
factor (I - discount * P_pi) once per follower and reuse the factors for
every column.
"""

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import ConfigurationError


def policy_transition_operator(spec, policy):
    """Discounted state-action transition operator under a fixed policy.

    Returns the (N*A, N*A) matrix with entry [(s,a), (t,b)] equal to
    discount * P(t | s, a) * pi(b | t); flat indices are row-major (s, a).
    """
    policy = np.asarray(policy, dtype=float)
    n, a = spec.n_states, spec.n_actions
    op = spec.discount * np.einsum("sat,tb->satb", spec.transition, policy)
    return op.reshape(n * a, n * a)


def solve_q_jacobian(spec, solution):
    """Full (N*A, N*A) matrix of dQ*(s,a) / dR(s~,a~).

    Equals (I - discount * P_pi)^-1; entries are nonnegative and every row
    sums to 1 / (1 - discount).
    """
    n_sa = spec.n_states * spec.n_actions
    system = np.eye(n_sa) - policy_transition_operator(spec, solution.policy)
    return lu_solve(lu_factor(system), np.eye(n_sa))


def payment_selection(n_states, n_actions, support):
    """Selection matrix mapping payment coordinates to reward coordinates.

    Column j carries a single 1 in the flat (state, action) row of the j-th
    support pair; this is the (constant) Jacobian of the reward table with
    respect to the payment vector.
    """
    support = tuple(support)
    if len(set(support)) != len(support):
        raise ConfigurationError("support pairs must be distinct")
    matrix = np.zeros((n_states * n_actions, len(support)))
    for j, (s, a) in enumerate(support):
        if not (0 <= s < n_states and 0 <= a < n_actions):
            raise ConfigurationError(
                f"support pair ({s}, {a}) out of range for a "
                f"{n_states}-state, {n_actions}-action MDP"
            )
        matrix[s * n_actions + a, j] = 1.0
    return matrix


def profile_q_jacobian(specs, solutions, payment):
    """Stacked per-type Jacobians of Q* with respect to the payment vector.

    The full derivative of the Q-profile w.r.t. every follower's reward is
    block diagonal (followers do not interact), so chaining with the shared
    selection matrix stacks one (N*A, len(support)) block per follower.
    """
    specs = tuple(specs)
    solutions = tuple(solutions)
    if len(specs) != len(solutions):
        raise ConfigurationError(
            f"got {len(specs)} follower specs but {len(solutions)} solutions"
        )
    if not specs:
        raise ConfigurationError("at least one follower is required")
    n, a = specs[0].n_states, specs[0].n_actions
    for spec in specs:
        if (spec.n_states, spec.n_actions) != (n, a):
            raise ConfigurationError("followers must share state and action spaces")
    selection = payment_selection(n, a, payment.support)
    blocks = []
    for spec, solution in zip(specs, solutions):
        system = np.eye(n * a) - policy_transition_operator(spec, solution.policy)
        blocks.append(lu_solve(lu_factor(system), selection))
    return np.vstack(blocks)
