"""Markov-Middleton bursty impulsive noise: closed-form statistics and sampling.

The Markov-Middleton model mixes a small number of zero-mean Gaussian noise
states: state 0 is the Gaussian background, higher states add impulsive
power. State occupation follows a first-order Markov chain whose stationary
law is a truncated Poisson profile, and whose diagonal is inflated by a
correlation parameter so that impulsive bursts persist over consecutive
samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import gammaln, logsumexp

__all__ = [
    "MiddletonParams",
    "NoiseRealization",
    "state_probabilities",
    "state_variances",
    "noise_transition_matrix",
    "generate_noise",
]


@dataclass(frozen=True)
class MiddletonParams:
    """Physical parameters of a Markov-Middleton impulsive-noise channel.

    Parameters
    ----------
    impulsive_index : float
        Strictly positive. Larger values make the impulsive states more
        probable.
    power_ratio : float
        Impulsive-to-background average noise power ratio, strictly positive.
    correlation : float
        Burstiness in ``[0, 1)``. At 0 consecutive noise states are
        independent; close to 1 the chain rarely leaves its current state.
    num_noise_states : int
        Total number of noise states, at least 2 (state 0 is the background).
    background_variance : float
        Variance of the background state, strictly positive.
    """

    impulsive_index: float
    power_ratio: float
    correlation: float
    num_noise_states: int = 2
    background_variance: float = 1.0

    def __post_init__(self) -> None:
        if not self.impulsive_index > 0:
            raise ValueError(f"impulsive_index must be > 0, got {self.impulsive_index}")
        if not self.power_ratio > 0:
            raise ValueError(f"power_ratio must be > 0, got {self.power_ratio}")
        if not 0.0 <= self.correlation < 1.0:
            raise ValueError(f"correlation must lie in [0, 1), got {self.correlation}")
        if self.num_noise_states < 2:
            raise ValueError(f"num_noise_states must be >= 2, got {self.num_noise_states}")
        if not self.background_variance > 0:
            raise ValueError(
                f"background_variance must be > 0, got {self.background_variance}"
            )


@dataclass(frozen=True)
class NoiseRealization:
    """A sampled noise sequence together with its hidden state path.

    Attributes
    ----------
    states : ndarray of int
        Noise state index at each time step.
    samples : ndarray of float
        Noise amplitude at each time step.
    """

    states: np.ndarray
    samples: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", np.asarray(self.states, dtype=np.int64))
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        if self.states.ndim != 1 or self.samples.ndim != 1:
            raise ValueError("states and samples must be one-dimensional")
        if self.states.shape != self.samples.shape:
            raise ValueError(
                f"states and samples must have equal length, got "
                f"{self.states.shape[0]} and {self.samples.shape[0]}"
            )

    def __len__(self) -> int:
        return self.samples.shape[0]


def state_probabilities(params: MiddletonParams) -> np.ndarray:
    """Stationary probability of each noise state.

    Truncated Poisson weights in the impulsive index, normalized over the
    ``num_noise_states`` retained states. Computed in log space so large
    state counts cannot overflow the factorials.

    Returns
    -------
    ndarray of shape (num_noise_states,)
        Strictly positive, sums to 1.
    """
    j = np.arange(params.num_noise_states)
    # e^{-A} cancels in the normalization, so only j*log(A) - log(j!) is needed.
    log_weights = j * np.log(params.impulsive_index) - gammaln(j + 1)
    return np.exp(log_weights - logsumexp(log_weights))


def state_variances(params: MiddletonParams) -> np.ndarray:
    """Noise variance of each state.

    State 0 carries exactly the background variance; each higher state adds
    ``power_ratio / impulsive_index`` background units per step, so the
    result is strictly increasing in the state index.

    Returns
    -------
    ndarray of shape (num_noise_states,)
    """
    j = np.arange(params.num_noise_states)
    scale = 1.0 + j * (params.power_ratio / params.impulsive_index)
    return scale * params.background_variance


def noise_transition_matrix(params: MiddletonParams) -> np.ndarray:
    """Row-stochastic transition matrix of the noise-state chain.

    Every row is the stationary profile scaled by ``1 - correlation``, with
    ``correlation`` added on the diagonal. By construction the stationary
    distribution of this matrix is exactly :func:`state_probabilities`.

    Returns
    -------
    ndarray of shape (num_noise_states, num_noise_states)
    """
    w = params.num_noise_states
    probs = state_probabilities(params)
    return params.correlation * np.eye(w) + (1.0 - params.correlation) * np.tile(
        probs, (w, 1)
    )


def generate_noise(params: MiddletonParams, num_samples: int, seed) -> NoiseRealization:
    """Draw a bursty noise realization of length ``num_samples``.

    The initial state is drawn from the stationary distribution, subsequent
    states from the transition matrix, and each amplitude from a zero-mean
    Gaussian with that state's variance. The draw order is fixed (all state
    uniforms first, then all amplitudes), so a given seed always reproduces
    the same realization.

    Parameters
    ----------
    params : MiddletonParams
    num_samples : int
        Sequence length, at least 1.
    seed : int, SeedSequence, or Generator
        Anything accepted by :func:`numpy.random.default_rng`.
    """
    if num_samples < 1:
        raise ValueError(f"num_samples must be >= 1, got {num_samples}")
    rng = np.random.default_rng(seed)
    initial_cdf = np.cumsum(state_probabilities(params))
    row_cdf = np.cumsum(noise_transition_matrix(params), axis=1)
    uniforms = rng.random(num_samples)
    states = _sample_state_chain(uniforms, initial_cdf, row_cdf)
    sigma = np.sqrt(state_variances(params))
    samples = rng.standard_normal(num_samples) * sigma[states]
    return NoiseRealization(states=states, samples=samples)


@njit(cache=True)
def _sample_state_chain(uniforms, initial_cdf, row_cdf):
    n = uniforms.shape[0]
    w = initial_cdf.shape[0]
    states = np.empty(n, np.int64)
    states[0] = _invert_cdf(initial_cdf, uniforms[0], w)
    for t in range(1, n):
        states[t] = _invert_cdf(row_cdf[states[t - 1]], uniforms[t], w)
    return states


@njit(cache=True)
def _invert_cdf(cdf, u, w):
    # Linear scan; w is tiny. Last bin absorbs any rounding at the top.
    for j in range(w - 1):
        if u < cdf[j]:
            return j
    return w - 1
