"""Type posteriors, conditional entropy, and their policy-parameter gradients.

Entropy is reported in bits.  The exact estimators enumerate every
observation sequence of the requested length (refusing above a hard cap);
the sampled estimators average over sequences drawn from the augmented
model.  Gradients are taken with respect to the concatenated policy
parameters of all follower types (each type's Q-table, flattened
row-major), and the cross-type blocks of each per-type likelihood
gradient are identically zero.

All posterior arithmetic runs on log-likelihoods from the scaled forward
pass, so horizons as long as the experiments use (T = 12) stay well away
from underflow.  The convention 0 * log 0 = 0 applies throughout.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, xlogy

from .errors import ZeroEvidenceError
from .hmm import batch_log_likelihood, score_sequences

DEFAULT_ENUM_CAP = 10**6

_LN2 = np.log(2.0)


@dataclass(frozen=True)
class PosteriorResult:
    """Posterior over types for one observation sequence."""

    probs: np.ndarray
    log_likes: np.ndarray
    evidence: float


@dataclass(frozen=True)
class EntropyEstimate:
    """Conditional entropy of the type given observations, in bits."""

    value: float
    mode: str
    sample_count: int = None
    std_error: float = None


def enumerate_observation_sequences(n_obs, length, cap=DEFAULT_ENUM_CAP):
    """All alphabet^length sequences as an integer array, capped for safety."""
    if length < 1:
        raise ValueError("length must be at least 1")
    total = n_obs**length
    if total > cap:
        raise ValueError(
            f"enumerating {total} sequences exceeds the cap of {cap}; "
            "use the sampled estimator instead"
        )
    idx = np.arange(total)
    return np.stack(np.unravel_index(idx, (n_obs,) * length), axis=1)


def _profile_log_likelihoods(aug, seqs):
    """(K, n_types) matrix of per-type log-likelihoods."""
    return np.stack([batch_log_likelihood(h, seqs) for h in aug.hmms], axis=1)


def _posteriors_from_log_likelihoods(aug, loglikes):
    """Row-wise posteriors and log-evidences; rows with zero evidence get -inf."""
    with np.errstate(divide="ignore"):
        log_prior = np.log(aug.prior)
    logw = log_prior[None, :] + loglikes
    log_evidence = logsumexp(logw, axis=1)
    post = np.zeros_like(logw)
    alive = log_evidence > -np.inf
    if alive.any():
        post[alive] = np.exp(logw[alive] - log_evidence[alive, None])
        post[alive] /= post[alive].sum(axis=1, keepdims=True)
    return post, log_evidence


def posterior(aug, y):
    """Bayes posterior over types given one observation sequence."""
    y = np.asarray(y, dtype=int)
    loglikes = _profile_log_likelihoods(aug, y[None, :])
    post, log_evidence = _posteriors_from_log_likelihoods(aug, loglikes)
    if log_evidence[0] == -np.inf:
        raise ZeroEvidenceError(
            "observation sequence has probability zero under every type"
        )
    return PosteriorResult(
        probs=post[0],
        log_likes=loglikes[0],
        evidence=float(np.exp(log_evidence[0])),
    )


def posterior_entropies(aug, seqs):
    """Per-sequence posterior entropies -sum_i P(i|y) log2 P(i|y), in bits."""
    loglikes = _profile_log_likelihoods(aug, np.asarray(seqs, dtype=int))
    post, log_evidence = _posteriors_from_log_likelihoods(aug, loglikes)
    if np.any(log_evidence == -np.inf):
        raise ZeroEvidenceError(
            "a sampled sequence has probability zero under every type"
        )
    return -xlogy(post, post).sum(axis=1) / _LN2, post


def exact_conditional_entropy(aug, horizon, cap=DEFAULT_ENUM_CAP):
    """H(type | observations) by full enumeration of sequences of T+1 symbols."""
    seqs = enumerate_observation_sequences(aug.n_obs, horizon + 1, cap)
    loglikes = _profile_log_likelihoods(aug, seqs)
    joint = aug.prior[None, :] * np.exp(loglikes)
    evidence = joint.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        post = np.where(evidence[:, None] > 0, joint / evidence[:, None], 0.0)
    value = -np.sum(xlogy(joint, post)) / _LN2
    return EntropyEstimate(value=max(0.0, float(value)), mode="exact")


def sampled_conditional_entropy(aug, samples):
    """Monte Carlo estimate of H(type | observations) from model samples."""
    samples = np.asarray(samples, dtype=int)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("samples must be a nonempty (K, T+1) array")
    entropies, _ = posterior_entropies(aug, samples)
    count = samples.shape[0]
    std_error = float(entropies.std(ddof=1) / np.sqrt(count)) if count > 1 else 0.0
    return EntropyEstimate(
        value=max(0.0, float(entropies.mean())),
        mode="sampled",
        sample_count=count,
        std_error=std_error,
    )


def _profile_scores(aug, specs, seqs):
    """Per-type log-likelihoods and score vectors (gradients of log P(y|i))."""
    specs = tuple(specs)
    if len(specs) != aug.n_types:
        raise ValueError(f"expected {aug.n_types} follower specs, got {len(specs)}")
    loglikes = []
    scores = []
    for h, spec in zip(aug.hmms, specs):
        ll, sc = score_sequences(h, spec, seqs)
        loglikes.append(ll)
        scores.append(sc)
    return np.stack(loglikes, axis=1), scores


def posterior_gradient(aug, y, specs):
    """Gradient of each P(type = i | y) w.r.t. the full policy-parameter profile.

    Row i is the gradient of the i-th posterior probability; block j of that
    row comes from the quotient rule applied to prior_i P(y|i) / P(y), with
    the likelihood ratios evaluated in the scaled basis:
    grad[i, block j] = P(i|y) (1[i = j] - P(j|y)) * dlog P(y|j)/dtheta_j.
    """
    y = np.asarray(y, dtype=int)
    loglikes, scores = _profile_scores(aug, specs, y[None, :])
    post, log_evidence = _posteriors_from_log_likelihoods(aug, loglikes)
    if log_evidence[0] == -np.inf:
        raise ZeroEvidenceError(
            "observation sequence has probability zero under every type"
        )
    post = post[0]
    n_types = aug.n_types
    dims = [sc.shape[1] for sc in scores]
    grad = np.zeros((n_types, sum(dims)))
    offsets = np.concatenate([[0], np.cumsum(dims)])
    for i in range(n_types):
        for j in range(n_types):
            coef = post[i] * ((1.0 if i == j else 0.0) - post[j])
            grad[i, offsets[j] : offsets[j + 1]] = coef * scores[j][0]
    return grad


def _bracket_coefficients(post):
    """Per-type coefficient of the entropy-gradient expansion.

    For each sequence, block j of the gradient integrand is coef[..., j]
    times the score of type j.  The three terms mirror the product-rule
    expansion of -sum_i P(i, y) log2 P(i | y): the posterior-gradient term,
    the evidence-gradient term, and the 1/ln 2 correction from
    differentiating the logarithm.
    """
    plog = xlogy(post, post) / _LN2
    sum_plog = plog.sum(axis=-1, keepdims=True)
    total = post.sum(axis=-1, keepdims=True)
    term1 = plog - post * sum_plog
    term2 = post * sum_plog
    term3 = (post - post * total) / _LN2
    return term1 + term2 + term3


def _assemble_entropy_gradient(coef, scores):
    """-sum over sequences of coef[., j] * score_j, concatenated over blocks."""
    return np.concatenate([-(coef[:, j] @ sc) for j, sc in enumerate(scores)])


def sampled_entropy_gradient_terms(aug, specs, samples):
    """Per-sample integrands of the sampled entropy gradient, one row each.

    The sampled gradient estimate is the row mean; exposing the rows lets
    callers attach standard errors to every component.
    """
    samples = np.asarray(samples, dtype=int)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("samples must be a nonempty (K, T+1) array")
    loglikes, scores = _profile_scores(aug, specs, samples)
    post, log_evidence = _posteriors_from_log_likelihoods(aug, loglikes)
    if np.any(log_evidence == -np.inf):
        raise ZeroEvidenceError(
            "a sampled sequence has probability zero under every type"
        )
    coef = _bracket_coefficients(post)
    return np.concatenate(
        [-coef[:, j, None] * sc for j, sc in enumerate(scores)], axis=1
    )


def entropy_gradient(aug, specs, mode="exact", horizon=None, samples=None,
                     cap=DEFAULT_ENUM_CAP):
    """Gradient of H(type | observations) w.r.t. the policy-parameter profile.

    Exact mode enumerates all sequences of horizon+1 symbols and weights
    each integrand by the sequence probability; sampled mode averages the
    same integrand over the provided model samples.
    """
    if mode == "exact":
        if horizon is None:
            raise ValueError("exact mode requires a horizon")
        seqs = enumerate_observation_sequences(aug.n_obs, horizon + 1, cap)
        loglikes, scores = _profile_scores(aug, specs, seqs)
        post, log_evidence = _posteriors_from_log_likelihoods(aug, loglikes)
        weights = np.where(log_evidence > -np.inf, np.exp(log_evidence), 0.0)
        coef = _bracket_coefficients(post) * weights[:, None]
        return _assemble_entropy_gradient(coef, scores)
    if mode == "sampled":
        if samples is None:
            raise ValueError("sampled mode requires samples")
        terms = sampled_entropy_gradient_terms(aug, specs, samples)
        return terms.mean(axis=0)
    raise ValueError(f"mode must be 'exact' or 'sampled', got {mode!r}")


def posterior_estimator(aug, samples):
    """Average posterior over a batch of sequences from one (fixed) true type.

    Returns the per-type means (1/M) sum_k P(type = i | y_k); the entries
    sum to 1 because each per-sample posterior does.
    """
    samples = np.asarray(samples, dtype=int)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("samples must be a nonempty (K, T+1) array")
    _, post = posterior_entropies(aug, samples)
    return post.mean(axis=0)
