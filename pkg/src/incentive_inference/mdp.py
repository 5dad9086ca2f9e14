"""Entropy-regularized follower MDPs and leader side payments.

A follower plans in a tabular MDP whose reward may be topped up by the
leader's side payment.  The planning problem is the entropy-regularized
(soft) one: the optimal value function satisfies a log-sum-exp Bellman
equation at temperature ``tau`` and the optimal policy is the softmax of
the optimal Q-function.  All solver outputs are plain numpy arrays; the
dataclasses in this module are immutable and safe to share across threads.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax, xlogy

from .errors import ConfigurationError, DivergenceError

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000

_ROW_SUM_TOL = 1e-12


def _readonly(values, dtype=float):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FollowerSpec:
    """One follower type: tabular MDP plus the soft-Bellman temperature.

    ``transition[s, a, t]`` is the probability of landing in state ``t``
    after taking action ``a`` in state ``s``; ``base_reward[s, a]`` is the
    reward before any side payment; ``initial`` is the start-state
    distribution.
    """

    transition: np.ndarray
    initial: np.ndarray
    discount: float
    base_reward: np.ndarray
    temperature: float = 0.1

    def __post_init__(self):
        transition = _readonly(self.transition)
        initial = _readonly(self.initial)
        reward = _readonly(self.base_reward)
        if transition.ndim != 3 or transition.shape[0] != transition.shape[2]:
            raise ConfigurationError(
                f"transition must have shape (N, A, N), got {transition.shape}"
            )
        n, a = transition.shape[:2]
        if np.any(transition < -_ROW_SUM_TOL) or np.any(transition > 1 + _ROW_SUM_TOL):
            raise ConfigurationError("transition entries must lie in [0, 1]")
        row_sums = transition.sum(axis=2)
        if np.max(np.abs(row_sums - 1.0)) > _ROW_SUM_TOL:
            bad = np.unravel_index(np.argmax(np.abs(row_sums - 1.0)), row_sums.shape)
            raise ConfigurationError(
                f"transition row {bad} sums to {row_sums[bad]!r}, expected 1"
            )
        if initial.shape != (n,):
            raise ConfigurationError(
                f"initial must have shape ({n},), got {initial.shape}"
            )
        if np.any(initial < -_ROW_SUM_TOL) or abs(initial.sum() - 1.0) > _ROW_SUM_TOL:
            raise ConfigurationError("initial must be a probability distribution")
        if reward.shape != (n, a):
            raise ConfigurationError(
                f"base_reward must have shape ({n}, {a}), got {reward.shape}"
            )
        if not 0.0 < self.discount < 1.0:
            raise ConfigurationError(f"discount must lie in (0, 1), got {self.discount}")
        if self.temperature <= 0.0:
            raise ConfigurationError(f"temperature must be positive, got {self.temperature}")
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "base_reward", reward)

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]


@dataclass(frozen=True)
class SidePayment:
    """Nonnegative reward bonuses on a fixed support of (state, action) pairs."""

    support: tuple
    values: np.ndarray
    max_value: float = 10.0

    def __post_init__(self):
        support = tuple((int(s), int(a)) for s, a in self.support)
        values = _readonly(self.values)
        if values.shape != (len(support),):
            raise ConfigurationError(
                f"values must have shape ({len(support)},), got {values.shape}"
            )
        if len(set(support)) != len(support):
            raise ConfigurationError("support pairs must be distinct")
        if any(s < 0 or a < 0 for s, a in support):
            raise ConfigurationError("support indices must be nonnegative")
        if self.max_value <= 0:
            raise ConfigurationError(f"max_value must be positive, got {self.max_value}")
        if np.any(values < 0) or np.any(values > self.max_value):
            raise ConfigurationError(
                f"payment values must lie in [0, {self.max_value}]"
            )
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, support, max_value=10.0):
        return cls(tuple(support), np.zeros(len(tuple(support))), max_value)

    @classmethod
    def constant(cls, support, value, max_value=10.0):
        support = tuple(support)
        return cls(support, np.full(len(support), float(value)), max_value)

    def with_values(self, values):
        return SidePayment(self.support, values, self.max_value)

    def as_table(self, n_states, n_actions):
        """Dense (N, A) table with the payment on its support and 0 elsewhere."""
        table = np.zeros((n_states, n_actions))
        for (s, a), v in zip(self.support, self.values):
            if s >= n_states or a >= n_actions:
                raise ConfigurationError(
                    f"support pair ({s}, {a}) out of range for a "
                    f"{n_states}-state, {n_actions}-action MDP"
                )
            table[s, a] = v
        return table


@dataclass(frozen=True)
class SoftSolution:
    """Converged soft value function, Q-function, and softmax policy."""

    v_star: np.ndarray
    q_star: np.ndarray
    policy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v_star", _readonly(self.v_star))
        object.__setattr__(self, "q_star", _readonly(self.q_star))
        object.__setattr__(self, "policy", _readonly(self.policy))
        rows = self.policy.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > 1e-10:
            raise ConfigurationError("policy rows must sum to 1")

    def validate(self, spec, reward, bellman_tol=1e-9, policy_tol=1e-10):
        """Check softmax consistency and the soft Bellman residual."""
        tau = spec.temperature
        backed_up = tau * logsumexp(self.q_star / tau, axis=1)
        residual = np.max(np.abs(self.v_star - backed_up))
        if residual >= bellman_tol:
            raise DivergenceError(
                f"soft Bellman residual {residual:.3e} exceeds {bellman_tol:.1e}",
                residual=residual,
            )
        gap = np.max(np.abs(self.policy - softmax(self.q_star / tau, axis=1)))
        if gap > policy_tol:
            raise ConfigurationError(
                f"policy deviates from softmax of q_star by {gap:.3e}"
            )


def apply_side_payment(spec, payment):
    """Reward table with the leader's bonus added on the payment support."""
    return spec.base_reward + payment.as_table(spec.n_states, spec.n_actions)


def soft_bellman_backup(spec, reward, v):
    """One synchronous application of the log-sum-exp Bellman operator."""
    q = reward + spec.discount * (spec.transition @ v)
    return spec.temperature * logsumexp(q / spec.temperature, axis=1)


def soft_value_iteration(spec, reward=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Fixed point of the entropy-regularized Bellman equation.

    Synchronous sweeps; stops once successive iterates differ by less than
    ``tol`` in sup norm, which bounds the fixed-point residual of the
    returned vector by ``discount * tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    reward = spec.base_reward if reward is None else np.asarray(reward, dtype=float)
    v = np.zeros(spec.n_states)
    residual = np.inf
    for _ in range(max_iter):
        v_next = soft_bellman_backup(spec, reward, v)
        residual = np.max(np.abs(v_next - v))
        v = v_next
        if residual < tol:
            return v
    raise DivergenceError(
        f"soft value iteration did not reach tol={tol:.1e} within "
        f"{max_iter} sweeps (last residual {residual:.3e})",
        residual=residual,
    )


def soft_q(spec, reward, v_star):
    """Q(s, a) = R(s, a) + discount * E[V*(s') | s, a]."""
    reward = np.asarray(reward, dtype=float)
    return reward + spec.discount * (spec.transition @ np.asarray(v_star, dtype=float))


def softmax_policy(q_star, tau):
    """Row-wise softmax of Q at temperature tau (max-subtracted internally)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return softmax(np.asarray(q_star, dtype=float) / tau, axis=1)


def evaluate_policy(spec, reward, policy):
    """Entropy-regularized value of an arbitrary stochastic policy.

    Solves V = r_pi + discount * P_pi V directly, where r_pi includes the
    policy's entropy bonus -tau * sum_a pi log pi.
    """
    policy = np.asarray(policy, dtype=float)
    rows = policy.sum(axis=1)
    if np.max(np.abs(rows - 1.0)) > 1e-9:
        raise ConfigurationError("policy rows must sum to 1")
    reward = np.asarray(reward, dtype=float)
    r_pi = (policy * reward).sum(axis=1) - spec.temperature * xlogy(policy, policy).sum(axis=1)
    p_pi = np.einsum("sat,sa->st", spec.transition, policy)
    eye = np.eye(spec.n_states)
    return np.linalg.solve(eye - spec.discount * p_pi, r_pi)


def solve(spec, payment=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Solve one follower's soft planning problem under an optional payment."""
    reward = spec.base_reward if payment is None else apply_side_payment(spec, payment)
    v = soft_value_iteration(spec, reward, tol=tol, max_iter=max_iter)
    q = soft_q(spec, reward, v)
    pi = softmax_policy(q, spec.temperature)
    solution = SoftSolution(v_star=v, q_star=q, policy=pi)
    solution.validate(spec, reward)
    return solution
