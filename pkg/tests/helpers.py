"""Shared test oracles.

Everything here is deliberately naive: exhaustive enumeration and plain
loops, written independently of the library's vectorized code paths so the
two can be compared.
"""

import numpy as np

from burstem import HmmParams


def gaussian_density(y, mean, var):
    return np.exp(-0.5 * (y - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)


def enumerate_posteriors(y, theta):
    """Exact posteriors and log evidence by summing over every state path.

    Exponential in T, so only usable for tiny instances. No density
    flooring: the values are the mathematically exact float64 quantities.

    Returns
    -------
    (state_post, pair_post, log_evidence)
    """
    y = np.asarray(y, dtype=float)
    t_len = len(y)
    s = theta.num_states
    like = gaussian_density(y[:, None], theta.means[None, :],
                            theta.variances[None, :])
    paths = np.stack(
        np.meshgrid(*([np.arange(s)] * t_len), indexing="ij"), axis=0
    ).reshape(t_len, -1)
    weight = theta.initial_dist[paths[0]] * like[0, paths[0]]
    for t in range(1, t_len):
        weight = weight * theta.transitions[paths[t - 1], paths[t]] \
            * like[t, paths[t]]
    evidence = weight.sum()
    state_post = np.zeros((t_len, s))
    for t in range(t_len):
        np.add.at(state_post[t], paths[t], weight)
    pair_post = np.zeros((t_len - 1, s, s))
    for t in range(t_len - 1):
        np.add.at(pair_post[t], (paths[t], paths[t + 1]), weight)
    return state_post / evidence, pair_post / evidence, float(np.log(evidence))


def naive_m_step(y, state_post, pair_post, theta_prev, estimate_means,
                 variance_floor):
    """Weighted-ML re-estimation written as plain loops.

    Assumes every state and transition row has usable posterior mass.
    """
    y = np.asarray(y, dtype=float)
    t_len, s = state_post.shape
    means = np.array(theta_prev.means, dtype=float)
    if estimate_means:
        for j in range(s):
            num = sum(state_post[t, j] * y[t] for t in range(t_len))
            den = sum(state_post[t, j] for t in range(t_len))
            means[j] = num / den
    variances = np.empty(s)
    for j in range(s):
        num = sum(state_post[t, j] * (y[t] - means[j]) ** 2
                  for t in range(t_len))
        den = sum(state_post[t, j] for t in range(t_len))
        variances[j] = max(num / den, variance_floor)
    transitions = np.empty((s, s))
    for i in range(s):
        den = sum(pair_post[t, i, j]
                  for t in range(t_len - 1) for j in range(s))
        for j in range(s):
            num = sum(pair_post[t, i, j] for t in range(t_len - 1))
            transitions[i, j] = num / den
    return means, variances, transitions


def random_hmm(rng, num_states=4):
    """Arbitrary valid parameters, nothing tied."""
    return HmmParams(
        means=rng.uniform(-2.0, 2.0, num_states),
        variances=rng.uniform(0.2, 30.0, num_states),
        transitions=rng.dirichlet(np.ones(num_states), size=num_states),
        initial_dist=rng.dirichlet(np.ones(num_states)),
    )
