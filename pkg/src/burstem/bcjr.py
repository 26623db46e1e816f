"""Scaled forward-backward inference over the joint symbol x noise trellis.

Implements the standard per-step normalized recursions. The running scale
factors give the log evidence as a sum of logs, so sequences of any length
stay in the representable range. Emission densities are floored at a tiny
positive constant so a single outlier observation cannot zero out an entire
time step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .trellis import HmmParams

__all__ = [
    "NumericalUnderflowError",
    "PosteriorTables",
    "emission_likelihood",
    "forward_backward",
    "symbol_posteriors",
]

# Smallest density kept after flooring. Well above the subnormal range so
# products of a few floored values still round to something positive.
_DENSITY_FLOOR = 1e-300


class NumericalUnderflowError(FloatingPointError):
    """Raised when a forward scale factor underflows to zero.

    Attributes
    ----------
    time_index : int
        First time step whose normalizer vanished.
    """

    def __init__(self, time_index: int):
        self.time_index = int(time_index)
        super().__init__(
            f"forward recursion underflowed at time step {self.time_index}"
        )


@dataclass(frozen=True)
class PosteriorTables:
    """Posterior marginals produced by one forward-backward pass.

    Attributes
    ----------
    state_post : ndarray of shape (T, S)
        ``state_post[t, i]`` is the posterior probability of state ``i`` at
        time ``t`` given the whole observation sequence.
    pair_post : ndarray of shape (T - 1, S, S), optional
        ``pair_post[t, i, j]`` is the joint posterior of state ``i`` at time
        ``t`` and state ``j`` at time ``t + 1``. Summing over the first
        state axis recovers ``state_post[t + 1]``. ``None`` unless pairwise
        marginals were requested.
    log_evidence : float
        Log probability of the observations under the model.
    """

    state_post: np.ndarray
    pair_post: Optional[np.ndarray]
    log_evidence: float


def emission_likelihood(y: float, theta: HmmParams, state: int) -> float:
    """Gaussian density of one observation under one state's emission model."""
    mean = theta.means[state]
    variance = theta.variances[state]
    d = y - mean
    return float(
        np.exp(-0.5 * d * d / variance) / np.sqrt(2.0 * np.pi * variance)
    )


def _emission_matrix(y: np.ndarray, theta: HmmParams) -> np.ndarray:
    """Per-time, per-state emission densities, floored away from zero."""
    d = y[:, None] - theta.means[None, :]
    var = theta.variances[None, :]
    dens = np.exp(-0.5 * d * d / var) / np.sqrt(2.0 * np.pi * var)
    np.maximum(dens, _DENSITY_FLOOR, out=dens)
    return dens


@njit(cache=True)
def _scaled_forward(likelihoods, transitions, initial_dist):
    t_len, s = likelihoods.shape
    alpha = np.empty((t_len, s))
    scale = np.empty(t_len)
    c = 0.0
    for i in range(s):
        alpha[0, i] = initial_dist[i] * likelihoods[0, i]
        c += alpha[0, i]
    scale[0] = c
    if c <= 0.0:
        return alpha, scale, 0
    inv = 1.0 / c
    for i in range(s):
        alpha[0, i] *= inv
    for t in range(1, t_len):
        c = 0.0
        for j in range(s):
            acc = 0.0
            for i in range(s):
                acc += alpha[t - 1, i] * transitions[i, j]
            acc *= likelihoods[t, j]
            alpha[t, j] = acc
            c += acc
        scale[t] = c
        if c <= 0.0:
            return alpha, scale, t
        inv = 1.0 / c
        for j in range(s):
            alpha[t, j] *= inv
    return alpha, scale, -1


@njit(cache=True)
def _scaled_backward(likelihoods, transitions, scale):
    t_len, s = likelihoods.shape
    beta = np.empty((t_len, s))
    for i in range(s):
        beta[t_len - 1, i] = 1.0
    for t in range(t_len - 2, -1, -1):
        inv = 1.0 / scale[t + 1]
        for i in range(s):
            acc = 0.0
            for j in range(s):
                acc += transitions[i, j] * likelihoods[t + 1, j] * beta[t + 1, j]
            beta[t, i] = acc * inv
    return beta


@njit(cache=True)
def _pairwise_posteriors(alpha, beta, likelihoods, transitions, scale):
    t_len, s = alpha.shape
    pair = np.empty((t_len - 1, s, s))
    for t in range(t_len - 1):
        inv = 1.0 / scale[t + 1]
        for i in range(s):
            a = alpha[t, i]
            for j in range(s):
                pair[t, i, j] = (
                    a
                    * transitions[i, j]
                    * likelihoods[t + 1, j]
                    * beta[t + 1, j]
                    * inv
                )
    return pair


def forward_backward(
    y: np.ndarray,
    theta: HmmParams,
    include_pairwise: bool = False,
) -> PosteriorTables:
    """Posterior state (and optionally state-pair) marginals for a sequence.

    Parameters
    ----------
    y : ndarray of shape (T,)
        Observed sequence, ``T >= 1``.
    theta : HmmParams
        Model to run inference under.
    include_pairwise : bool
        Also compute the pairwise posterior table (needed by EM; costs an
        extra ``(T - 1) x S x S`` array).

    Raises
    ------
    NumericalUnderflowError
        If a normalizer underflows to exactly zero. With floored emission
        densities this requires a pathological model, but EM treats it as a
        per-trial failure rather than a crash.
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] < 1:
        raise ValueError("y must be a nonempty 1-D sequence")
    likelihoods = _emission_matrix(y, theta)
    alpha, scale, bad_t = _scaled_forward(
        likelihoods, theta.transitions, theta.initial_dist
    )
    if bad_t >= 0:
        raise NumericalUnderflowError(bad_t)
    beta = _scaled_backward(likelihoods, theta.transitions, scale)
    state_post = alpha * beta
    pair = None
    if include_pairwise:
        pair = _pairwise_posteriors(
            alpha, beta, likelihoods, theta.transitions, scale
        )
    return PosteriorTables(
        state_post=state_post,
        pair_post=pair,
        log_evidence=float(np.log(scale).sum()),
    )


def symbol_posteriors(tables: PosteriorTables, num_noise_states: int) -> np.ndarray:
    """Collapse state posteriors onto the two BPSK symbols.

    Returns
    -------
    ndarray of shape (T, 2)
        Column 0 is the posterior of symbol -1, column 1 of symbol +1.
    """
    t_len, s = tables.state_post.shape
    w = int(num_noise_states)
    if s != 2 * w:
        raise ValueError(f"expected {2 * w} states for {w} noise states, got {s}")
    return tables.state_post.reshape(t_len, 2, w).sum(axis=2)
