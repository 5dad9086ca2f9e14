"""Single-level payment objective and projected gradient descent.

The leader's objective is J(x) = H(type | observations; chains induced by
the followers' optimal soft policies under payment x) plus a linear
payment cost beta * ||x||_1.  Its gradient chains three pieces: the
entropy gradient w.r.t. the policy-parameter profile, the per-follower
Jacobian of optimal Q-values w.r.t. rewards, and the constant selection
map from payment coordinates to reward entries.

The descent loop projects every iterate onto the box [0, max_payment] and
derives one sample seed per iteration from the master seed, shared by the
iteration's entropy estimate and gradient (common random numbers), so a
whole run is a deterministic function of the problem and config.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .hmm import AugmentedHmm, build_follower_hmm, sample_observations
from .inference import (
    entropy_gradient,
    exact_conditional_entropy,
    sampled_conditional_entropy,
)
from .mdp import SidePayment, solve
from .q_jacobian import profile_q_jacobian

RESAMPLE_MODES = ("fixed", "fresh")
ENTROPY_MODES = ("exact", "sampled")


@dataclass(frozen=True)
class IncentiveProblem:
    """Follower types, their sensors, the type prior, and the payment support."""

    followers: tuple
    sensors: tuple
    prior: np.ndarray
    support: tuple
    max_payment: float = 10.0

    def __post_init__(self):
        followers = tuple(self.followers)
        sensors = tuple(self.sensors)
        prior = np.array(self.prior, dtype=float)
        prior.setflags(write=False)
        support = tuple((int(s), int(a)) for s, a in self.support)
        if not followers:
            raise ConfigurationError("at least one follower type is required")
        if len(sensors) != len(followers):
            raise ConfigurationError(
                f"got {len(sensors)} sensors for {len(followers)} followers"
            )
        n, a = followers[0].n_states, followers[0].n_actions
        for spec in followers:
            if (spec.n_states, spec.n_actions) != (n, a):
                raise ConfigurationError("followers must share state and action spaces")
        for sensor in sensors:
            if sensor.n_states != n:
                raise ConfigurationError("sensor emission must cover every state")
        if prior.shape != (len(followers),) or np.any(prior < 0) or abs(prior.sum() - 1) > 1e-12:
            raise ConfigurationError("prior must be a distribution over follower types")
        if not support:
            raise ConfigurationError("payment support must be nonempty")
        for s, act in support:
            if not (0 <= s < n and 0 <= act < a):
                raise ConfigurationError(f"support pair ({s}, {act}) out of range")
        if self.max_payment <= 0:
            raise ConfigurationError("max_payment must be positive")
        object.__setattr__(self, "followers", followers)
        object.__setattr__(self, "sensors", sensors)
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "support", support)

    @property
    def n_types(self):
        return len(self.followers)

    def payment(self, values):
        return SidePayment(self.support, np.asarray(values, dtype=float),
                           self.max_payment)


@dataclass(frozen=True)
class ObjectiveConfig:
    """Knobs for evaluating and descending the payment objective."""

    horizon: int = 12
    sample_count: int = 2000
    beta: float = 0.05
    step_size: float = 0.1
    max_iters: int = 200
    grad_tol: float = 1e-4
    seed: int = 0
    entropy_mode: str = "sampled"
    resample: str = "fixed"

    def __post_init__(self):
        if self.horizon < 0:
            raise ConfigurationError("horizon must be nonnegative")
        if self.sample_count < 1:
            raise ConfigurationError("sample_count must be at least 1")
        if self.beta < 0:
            raise ConfigurationError("beta must be nonnegative")
        if self.step_size <= 0:
            raise ConfigurationError("step_size must be positive")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be at least 1")
        if self.grad_tol <= 0:
            raise ConfigurationError("grad_tol must be positive")
        if self.entropy_mode not in ENTROPY_MODES:
            raise ConfigurationError(f"entropy_mode must be one of {ENTROPY_MODES}")
        if self.resample not in RESAMPLE_MODES:
            raise ConfigurationError(f"resample must be one of {RESAMPLE_MODES}")


@dataclass(frozen=True)
class TraceRecord:
    """One evaluated iterate of the descent."""

    iteration: int
    payment: np.ndarray
    entropy: float
    payment_cost: float
    objective: float
    grad_norm: float


@dataclass
class OptTrace:
    """Every evaluated iterate plus the terminal status."""

    records: list = field(default_factory=list)
    status: str = "max_iters"

    @property
    def final(self):
        return self.records[-1]

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])


def cost(payment, beta):
    """Linear payment cost beta * ||x||_1 (x is nonnegative by construction)."""
    return beta * float(np.sum(payment.values))

def cost_gradient(payment, beta):
    """Gradient of the linear cost: beta on every support coordinate."""
    return np.full(len(payment.support), beta)


def solve_profile(problem, payment, tol=1e-10):
    """Per-type soft solutions and induced chains under one payment."""
    solutions = [solve(spec, payment, tol=tol) for spec in problem.followers]
    hmms = [
        build_follower_hmm(spec, sol.policy, sensor)
        for spec, sol, sensor in zip(problem.followers, solutions, problem.sensors)
    ]
    return solutions, AugmentedHmm(hmms=tuple(hmms), prior=problem.prior)


def _entropy_estimate(problem, config, aug, sample_seed):
    if config.entropy_mode == "exact":
        estimate = exact_conditional_entropy(aug, config.horizon)
        return estimate, None
    _, samples = sample_observations(
        aug, config.sample_count, config.horizon, sample_seed
    )
    return sampled_conditional_entropy(aug, samples), samples


def _entropy_profile_gradient(problem, config, aug, samples):
    if config.entropy_mode == "exact":
        return entropy_gradient(
            aug, problem.followers, mode="exact", horizon=config.horizon
        )
    return entropy_gradient(aug, problem.followers, mode="sampled", samples=samples)


def objective(x, problem, config):
    """Evaluate (J, H, h) at payment vector x.

    Standalone sampled-mode calls draw their samples from config.seed, so
    repeat calls with the same config are bitwise identical.
    """
    payment = problem.payment(x)
    _, aug = solve_profile(problem, payment)
    estimate, _ = _entropy_estimate(
        problem, config, aug, np.random.SeedSequence(config.seed)
    )
    h = cost(payment, config.beta)
    return estimate.value + h, estimate.value, h


def total_gradient(x, problem, config):
    """Chain-rule gradient of J at x over the payment support.

    Composes the entropy gradient w.r.t. the Q-profile with the per-type
    Q-vs-reward Jacobians restricted to the support, then adds the cost
    gradient.  Sampled mode uses the same seed-derived samples as
    ``objective`` with the same config.
    """
    payment = problem.payment(x)
    solutions, aug = solve_profile(problem, payment)
    _, samples = _entropy_estimate(
        problem, config, aug, np.random.SeedSequence(config.seed)
    )
    dh_dtheta = _entropy_profile_gradient(problem, config, aug, samples)
    jac = profile_q_jacobian(problem.followers, solutions, payment)
    return dh_dtheta @ jac + cost_gradient(payment, config.beta)


def _projected_gradient_norm(x, grad, step, upper):
    moved = np.clip(x - step * grad, 0.0, upper)
    return float(np.linalg.norm((x - moved) / step))


def optimize(problem, config, x0=None):
    """Projected gradient descent on J(x) over the box [0, max_payment].

    Starts from all-ones by default.  In 'fixed' resample mode, iteration t
    draws one sample set from the t-th child of the master seed and reuses
    it for both the entropy value and its gradient; 'fresh' mode gives the
    gradient its own child seed.  Records every evaluated iterate and stops
    when the projected-gradient norm drops below grad_tol.
    """
    upper = problem.max_payment
    if x0 is None:
        x = np.ones(len(problem.support))
    else:
        x = np.array(x0, dtype=float)
        if x.shape != (len(problem.support),):
            raise ConfigurationError(
                f"x0 must have shape ({len(problem.support)},), got {x.shape}"
            )
        if np.any(x < 0) or np.any(x > upper):
            raise ConfigurationError(f"x0 must lie in [0, {upper}]")
    seeds = np.random.SeedSequence(config.seed).spawn(2 * config.max_iters)
    trace = OptTrace()
    for t in range(config.max_iters):
        payment = problem.payment(x)
        solutions, aug = solve_profile(problem, payment)
        estimate, samples = _entropy_estimate(problem, config, aug, seeds[2 * t])
        if config.entropy_mode == "sampled" and config.resample == "fresh":
            _, samples = sample_observations(
                aug, config.sample_count, config.horizon, seeds[2 * t + 1]
            )
        dh_dtheta = _entropy_profile_gradient(problem, config, aug, samples)
        jac = profile_q_jacobian(problem.followers, solutions, payment)
        grad = dh_dtheta @ jac + cost_gradient(payment, config.beta)
        h = cost(payment, config.beta)
        gnorm = _projected_gradient_norm(x, grad, config.step_size, upper)
        trace.records.append(
            TraceRecord(
                iteration=t,
                payment=x.copy(),
                entropy=estimate.value,
                payment_cost=h,
                objective=estimate.value + h,
                grad_norm=gnorm,
            )
        )
        if gnorm < config.grad_tol:
            trace.status = "converged"
            return trace
        x = np.clip(x - config.step_size * grad, 0.0, upper)
    trace.status = "max_iters"
    return trace
