"""Joint BPSK-symbol x noise-state hidden Markov model.

Combining the transmitted symbol with the noise state gives a single HMM
with ``S = 2 * W`` states over which forward-backward inference and EM run.

State layout contract: state ``j`` encodes symbol index ``k = j // W`` and
noise state ``u = j % W``, i.e. states ``0..W-1`` carry symbol -1 and states
``W..2W-1`` carry symbol +1. All parameter-tying index arithmetic in this
package relies on this layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .noise_model import (
    MiddletonParams,
    NoiseRealization,
    noise_transition_matrix,
    state_probabilities,
    state_variances,
)

__all__ = [
    "HmmParams",
    "ConstraintGroups",
    "build_reference_hmm",
    "build_constraint_groups",
    "transmit",
]

_ROW_SUM_TOL = 1e-10


@dataclass(frozen=True)
class HmmParams:
    """Gaussian-emission HMM parameters over the joint symbol x noise states.

    Attributes
    ----------
    means : ndarray of shape (S,)
        Per-state emission means.
    variances : ndarray of shape (S,)
        Per-state emission variances, strictly positive.
    transitions : ndarray of shape (S, S)
        Row-stochastic state transition matrix.
    initial_dist : ndarray of shape (S,)
        Distribution of the first state. Carried for inference but never
        re-estimated by EM.
    """

    means: np.ndarray
    variances: np.ndarray
    transitions: np.ndarray
    initial_dist: np.ndarray

    def __post_init__(self) -> None:
        means = np.asarray(self.means, dtype=np.float64)
        variances = np.asarray(self.variances, dtype=np.float64)
        transitions = np.asarray(self.transitions, dtype=np.float64)
        initial = np.asarray(self.initial_dist, dtype=np.float64)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "initial_dist", initial)

        if means.ndim != 1:
            raise ValueError("means must be one-dimensional")
        s = means.shape[0]
        if s < 4 or s % 2 != 0:
            raise ValueError(f"state count must be even and >= 4, got {s}")
        if variances.shape != (s,):
            raise ValueError("variances must match the shape of means")
        if transitions.shape != (s, s):
            raise ValueError(f"transitions must have shape ({s}, {s})")
        if initial.shape != (s,):
            raise ValueError("initial_dist must match the shape of means")
        if not np.all(variances > 0):
            raise ValueError("all variances must be strictly positive")
        if np.any(transitions < 0) or np.any(initial < 0):
            raise ValueError("probabilities must be nonnegative")
        row_sums = transitions.sum(axis=1)
        if np.max(np.abs(row_sums - 1.0)) > _ROW_SUM_TOL:
            raise ValueError("each transition row must sum to 1")
        if abs(initial.sum() - 1.0) > _ROW_SUM_TOL:
            raise ValueError("initial_dist must sum to 1")

    @property
    def num_states(self) -> int:
        return self.means.shape[0]

    def to_dict(self) -> dict:
        """Plain-list representation with stable field names for JSON dumps."""
        return {
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "transitions": self.transitions.tolist(),
            "initial_dist": self.initial_dist.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HmmParams":
        return cls(
            means=data["means"],
            variances=data["variances"],
            transitions=data["transitions"],
            initial_dist=data["initial_dist"],
        )


@dataclass(frozen=True)
class ConstraintGroups:
    """Index sets of HMM parameters that share a single underlying value.

    ``mean_groups`` ties states carrying the same symbol, ``variance_groups``
    ties states carrying the same noise state, and ``transition_groups`` ties
    transition entries that differ only in the symbol halves of their
    endpoint states.
    """

    mean_groups: tuple
    variance_groups: tuple
    transition_groups: tuple

    def __post_init__(self) -> None:
        mean_groups = tuple(tuple(g) for g in self.mean_groups)
        variance_groups = tuple(tuple(g) for g in self.variance_groups)
        transition_groups = tuple(
            tuple((int(i), int(j)) for i, j in g) for g in self.transition_groups
        )
        object.__setattr__(self, "mean_groups", mean_groups)
        object.__setattr__(self, "variance_groups", variance_groups)
        object.__setattr__(self, "transition_groups", transition_groups)

        w = len(mean_groups[0]) if mean_groups else 0
        if w < 2 or len(mean_groups) != 2:
            raise ValueError("mean_groups must be 2 groups of size >= 2")
        s = 2 * w
        flat_means = [i for g in mean_groups for i in g]
        if sorted(flat_means) != list(range(s)):
            raise ValueError("mean_groups must partition the state indices")
        flat_vars = [i for g in variance_groups for i in g]
        if len(variance_groups) != w or any(len(g) != 2 for g in variance_groups):
            raise ValueError(f"variance_groups must be {w} groups of size 2")
        if sorted(flat_vars) != list(range(s)):
            raise ValueError("variance_groups must partition the state indices")
        flat_trans = [e for g in transition_groups for e in g]
        if len(transition_groups) != w * w or any(
            len(g) != 4 for g in transition_groups
        ):
            raise ValueError(f"transition_groups must be {w * w} groups of size 4")
        expected = [(i, j) for i in range(s) for j in range(s)]
        if sorted(flat_trans) != expected:
            raise ValueError("transition_groups must partition all matrix entries")

    @property
    def num_noise_states(self) -> int:
        return len(self.mean_groups[0])


def build_constraint_groups(num_noise_states: int) -> ConstraintGroups:
    """Constraint groups for the joint BPSK x noise trellis with ``W`` states.

    For ``W = 2`` the result ties means over ``{0, 1}`` and ``{2, 3}``,
    variances over ``{0, 2}`` and ``{1, 3}``, and transitions over the four
    entries that share the same (noise-from, noise-to) pair.
    """
    w = int(num_noise_states)
    if w < 2:
        raise ValueError(f"num_noise_states must be >= 2, got {w}")
    mean_groups = tuple(tuple(range(k * w, (k + 1) * w)) for k in range(2))
    variance_groups = tuple((k, k + w) for k in range(w))
    transition_groups = tuple(
        tuple((i, j) for i in (u, u + w) for j in (v, v + w))
        for u in range(w)
        for v in range(w)
    )
    return ConstraintGroups(
        mean_groups=mean_groups,
        variance_groups=variance_groups,
        transition_groups=transition_groups,
    )


def build_reference_hmm(params: MiddletonParams, symbol_prior: float = 0.5) -> HmmParams:
    """Closed-form joint HMM implied by the physical noise parameters.

    Parameters
    ----------
    params : MiddletonParams
    symbol_prior : float
        Prior probability of symbol +1. The default 1/2 matches independent
        equiprobable bits; the parameter-tying math assumes this value.

    Returns
    -------
    HmmParams
        Means are the BPSK symbols, variances repeat the noise-state
        variances for each symbol, and both the transition matrix and the
        stationary initial distribution factor into the noise chain times
        the symbol prior.
    """
    if not 0.0 < symbol_prior < 1.0:
        raise ValueError(f"symbol_prior must lie in (0, 1), got {symbol_prior}")
    w = params.num_noise_states
    prior = np.repeat([1.0 - symbol_prior, symbol_prior], w)
    means = np.repeat([-1.0, 1.0], w)
    variances = np.tile(state_variances(params), 2)
    transitions = np.tile(noise_transition_matrix(params), (2, 2)) * prior[None, :]
    initial = np.tile(state_probabilities(params), 2) * prior
    return HmmParams(
        means=means,
        variances=variances,
        transitions=transitions,
        initial_dist=initial,
    )


def transmit(bits, noise: NoiseRealization) -> np.ndarray:
    """Map bits to BPSK symbols (0 -> -1, 1 -> +1) and add the noise samples.

    Raises
    ------
    ValueError
        If the bit and noise sequences differ in length, or bits are not
        binary.
    """
    bits = np.asarray(bits)
    if bits.ndim != 1 or bits.shape[0] != len(noise):
        raise ValueError(
            f"bits and noise must have equal length, got "
            f"{bits.shape} and {len(noise)}"
        )
    if not np.isin(bits, (0, 1)).all():
        raise ValueError("bits must contain only 0 and 1")
    return (2.0 * bits - 1.0) + noise.samples
