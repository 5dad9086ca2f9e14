"""Policy-induced hidden Markov models and their observable operators.

A follower's softmax policy turns its MDP into a Markov chain; composing
the chain with the leader's sensor gives a hidden Markov model.  For each
observation symbol ``o`` the observable operator ``A_o[i, j]`` is the
probability of emitting ``o`` at state ``j`` and then moving to state
``i``; chained operator products give sequence likelihoods, and
differentiating the chain through the softmax policy gives likelihood
gradients with respect to the policy parameters (the follower's Q-table,
flattened row-major over (state, action)).

Observation sequences are plain 1-D integer arrays of alphabet indices;
a sequence for horizon T has T + 1 symbols (one emission per visited
state, emitted before the transition).  Likelihoods are computed with
per-step scaling so long sequences neither underflow nor lose gradient
accuracy; zero-probability sequences report a log-likelihood of -inf and
a zero gradient.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

_COL_SUM_TOL = 1e-12
_TRANS_COL_TOL = 1e-10


def _readonly(values, dtype=float):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SensorModel:
    """Leader's observation channel: emission[o, s] = P(symbol o | state s)."""

    emission: np.ndarray
    labels: tuple = None

    def __post_init__(self):
        emission = _readonly(self.emission)
        if emission.ndim != 2:
            raise ConfigurationError(f"emission must be 2-D, got shape {emission.shape}")
        if np.any(emission < -_COL_SUM_TOL) or np.any(emission > 1 + _COL_SUM_TOL):
            raise ConfigurationError("emission entries must lie in [0, 1]")
        cols = emission.sum(axis=0)
        if np.max(np.abs(cols - 1.0)) > _COL_SUM_TOL:
            raise ConfigurationError("each emission column must sum to 1")
        if self.labels is not None:
            labels = tuple(str(x) for x in self.labels)
            if len(labels) != emission.shape[0]:
                raise ConfigurationError(
                    f"got {len(labels)} labels for {emission.shape[0]} symbols"
                )
            object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "emission", emission)

    @property
    def n_obs(self):
        return self.emission.shape[0]

    @property
    def n_states(self):
        return self.emission.shape[1]


@dataclass(frozen=True)
class FollowerHmm:
    """Markov chain induced by one follower's policy, plus the sensor.

    ``trans`` is the transposed chain: trans[i, j] = P(next = i | cur = j),
    so columns sum to 1.  ``operators[o] = trans @ diag(emission[o])``.
    ``policy`` is kept so likelihood gradients can flow back through the
    softmax parametrization.
    """

    trans: np.ndarray
    emission: np.ndarray
    init: np.ndarray
    policy: np.ndarray = None

    def __post_init__(self):
        trans = _readonly(self.trans)
        emission = _readonly(self.emission)
        init = _readonly(self.init)
        n = trans.shape[0]
        if trans.shape != (n, n):
            raise ConfigurationError(f"trans must be square, got {trans.shape}")
        cols = trans.sum(axis=0)
        if np.max(np.abs(cols - 1.0)) > _TRANS_COL_TOL:
            raise ConfigurationError("columns of trans must sum to 1")
        if emission.shape[1] != n:
            raise ConfigurationError(
                f"emission has {emission.shape[1]} state columns, expected {n}"
            )
        if init.shape != (n,) or abs(init.sum() - 1.0) > _COL_SUM_TOL or np.any(init < -_COL_SUM_TOL):
            raise ConfigurationError("init must be a length-N probability vector")
        operators = trans[None, :, :] * emission[:, None, :]
        operators.setflags(write=False)
        object.__setattr__(self, "trans", trans)
        object.__setattr__(self, "emission", emission)
        object.__setattr__(self, "init", init)
        object.__setattr__(self, "operators", operators)
        if self.policy is not None:
            object.__setattr__(self, "policy", _readonly(self.policy))

    @property
    def n_states(self):
        return self.trans.shape[0]

    @property
    def n_obs(self):
        return self.emission.shape[0]


@dataclass(frozen=True)
class AugmentedHmm:
    """Joint model over (state, type): one chain per type plus a type prior."""

    hmms: tuple
    prior: np.ndarray

    def __post_init__(self):
        hmms = tuple(self.hmms)
        prior = _readonly(self.prior)
        if not hmms:
            raise ConfigurationError("at least one follower hmm is required")
        n, m = hmms[0].n_states, hmms[0].n_obs
        for h in hmms:
            if (h.n_states, h.n_obs) != (n, m):
                raise ConfigurationError("all follower hmms must share shapes")
        if prior.shape != (len(hmms),):
            raise ConfigurationError(
                f"prior must have shape ({len(hmms)},), got {prior.shape}"
            )
        if np.any(prior < 0) or abs(prior.sum() - 1.0) > _COL_SUM_TOL:
            raise ConfigurationError("prior must be a probability distribution")
        object.__setattr__(self, "hmms", hmms)
        object.__setattr__(self, "prior", prior)

    @property
    def n_types(self):
        return len(self.hmms)

    @property
    def n_states(self):
        return self.hmms[0].n_states

    @property
    def n_obs(self):
        return self.hmms[0].n_obs

    def joint_initial(self):
        """(N, T) array with entry (s, i) = init_i(s) * prior(i)."""
        return np.stack([h.init for h in self.hmms], axis=1) * self.prior[None, :]


def build_follower_hmm(spec, policy, sensor):
    """Collapse an MDP under a fixed policy into a FollowerHmm."""
    policy = np.asarray(policy, dtype=float)
    chain = np.einsum("sat,sa->st", spec.transition, policy)
    return FollowerHmm(
        trans=chain.T,
        emission=sensor.emission,
        init=spec.initial,
        policy=policy,
    )


def _validated_sequences(hmm, seqs):
    seqs = np.atleast_2d(np.asarray(seqs, dtype=int))
    if seqs.shape[1] == 0:
        raise ValueError("observation sequences must be nonempty")
    if np.any(seqs < 0) or np.any(seqs >= hmm.n_obs):
        raise ValueError(
            f"observation symbols must lie in [0, {hmm.n_obs - 1}]"
        )
    return seqs


def _batched_forward(hmm, seqs):
    """Scaled forward vectors for a batch of sequences.

    Returns (loglik, F, C): F[k, t] is the normalized distribution after
    applying the first t operators, C[k, t] the scaling factor consumed at
    step t, and loglik[k] = sum_t log C[k, t] (-inf once any factor is 0).
    """
    count, length = seqs.shape
    n = hmm.n_states
    forward = np.zeros((count, length + 1, n))
    scale = np.zeros((count, length))
    forward[:, 0, :] = hmm.init
    for t in range(length):
        prev = forward[:, t, :]
        nxt = np.zeros((count, n))
        for o in range(hmm.n_obs):
            mask = seqs[:, t] == o
            if mask.any():
                nxt[mask] = prev[mask] @ hmm.operators[o].T
        c = nxt.sum(axis=1)
        scale[:, t] = c
        alive = c > 0
        forward[alive, t + 1, :] = nxt[alive] / c[alive, None]
    alive = (scale > 0).all(axis=1)
    loglik = np.full(count, -np.inf)
    if alive.any():
        loglik[alive] = np.log(scale[alive]).sum(axis=1)
    return loglik, forward, scale


def _batched_backward(hmm, seqs):
    """Normalized suffix row-vectors 1^T A_{o_T} ... A_{o_(m+1)} per position m."""
    count, length = seqs.shape
    n = hmm.n_states
    backward = np.zeros((count, length, n))
    backward[:, length - 1, :] = 1.0
    for m in range(length - 2, -1, -1):
        nxt = backward[:, m + 1, :]
        cur = np.zeros((count, n))
        for o in range(hmm.n_obs):
            mask = seqs[:, m + 1] == o
            if mask.any():
                cur[mask] = nxt[mask] @ hmm.operators[o]
        s = cur.sum(axis=1)
        alive = s > 0
        backward[alive, m, :] = cur[alive] / s[alive, None]
    return backward


def batch_log_likelihood(hmm, seqs):
    """log P(y) for each row of seqs; -inf for impossible sequences."""
    seqs = _validated_sequences(hmm, seqs)
    loglik, _, _ = _batched_forward(hmm, seqs)
    return loglik


def sequence_log_likelihood(hmm, y):
    return float(batch_log_likelihood(hmm, np.asarray(y, dtype=int)[None, :])[0])


def sequence_likelihood(hmm, y):
    """P(y) = 1^T A_{o_T} ... A_{o_0} init, evaluated with scaling."""
    return float(np.exp(sequence_log_likelihood(hmm, y)))


def score_sequences(hmm, spec, seqs):
    """Batched gradients of log P(y) with respect to the policy parameters.

    Returns (loglik, scores) with scores of shape (K, N * A).  The gradient
    flows through every operator position: the derivative of the chain in
    parameter (s, a) rescales column s by pi(a|s) (P(.|s,a) - chain(.|s)) / tau,
    and each position's contribution is evaluated in the scaled basis where
    the forward/backward normalizations cancel.
    """
    seqs = _validated_sequences(hmm, seqs)
    if hmm.policy is None:
        raise ConfigurationError("hmm must carry the policy it was built from")
    count = seqs.shape[0]
    loglik, forward, scale = _batched_forward(hmm, seqs)
    backward = _batched_backward(hmm, seqs)
    pi = hmm.policy
    tau = spec.temperature

    # denom[k, m] = b_m . A_{o_m} f_m in the scaled basis
    denom = scale * np.einsum("kmi,kmi->km", backward, forward[:, 1:, :])
    emis = hmm.emission[seqs, :]                       # (K, L, N)
    weight = forward[:, :-1, :] * emis                 # f_m[s] * O[o_m, s]
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where(denom[:, :, None] > 0, weight / denom[:, :, None], 0.0)
    bp = np.einsum("kmi,sai->kmsa", backward, spec.transition)
    bc = np.einsum("kmi,is->kms", backward, hmm.trans)
    scores = np.einsum("kms,kmsa,sa->ksa", weight, bp - bc[:, :, :, None], pi) / tau
    scores = scores.reshape(count, -1)
    scores[loglik == -np.inf] = 0.0
    return loglik, scores


def likelihood_gradient(hmm, y, spec):
    """Gradient of P(y) with respect to this follower's Q-table entries."""
    y = np.asarray(y, dtype=int)
    loglik, scores = score_sequences(hmm, spec, y[None, :])
    if loglik[0] == -np.inf:
        return np.zeros(hmm.n_states * spec.n_actions)
    return np.exp(loglik[0]) * scores[0]


def sample_observations(aug, count, horizon, seed, true_type=None):
    """Draw (type, observation sequence) pairs from the augmented model.

    Each sample uses its own child seed stream (spawned from ``seed``, an
    int or a numpy SeedSequence), so results do not depend on evaluation
    order.  ``true_type`` fixes the type instead of drawing it from the
    prior.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if true_type is not None and not 0 <= true_type < aug.n_types:
        raise ValueError(f"true_type must lie in [0, {aug.n_types - 1}]")
    length = horizon + 1
    n_types, n, m = aug.n_types, aug.n_states, aug.n_obs
    cum_prior = np.cumsum(aug.prior)
    cum_init = [np.cumsum(h.init) for h in aug.hmms]
    cum_emis = [np.cumsum(h.emission, axis=0) for h in aug.hmms]
    cum_next = [np.cumsum(h.trans, axis=0) for h in aug.hmms]

    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    types = np.empty(count, dtype=int)
    seqs = np.empty((count, length), dtype=int)
    for k, child in enumerate(seed.spawn(count)):
        u = np.random.default_rng(child).random(2 + 2 * length)
        if true_type is None:
            ti = min(int(np.searchsorted(cum_prior, u[0], side="right")), n_types - 1)
        else:
            ti = true_type
        s = min(int(np.searchsorted(cum_init[ti], u[1], side="right")), n - 1)
        emis, nxt = cum_emis[ti], cum_next[ti]
        for t in range(length):
            seqs[k, t] = min(int(np.searchsorted(emis[:, s], u[2 + 2 * t], side="right")), m - 1)
            s = min(int(np.searchsorted(nxt[:, s], u[3 + 2 * t], side="right")), n - 1)
        types[k] = ti
    return types, seqs
