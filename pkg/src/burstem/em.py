"""Baum-Welch estimation with an optional parameter-tying constraint.

Two M-step variants share the same E-step (scaled forward-backward):

* ``standard`` re-estimates every mean, variance, and transition entry
  independently, treating the chain as a generic Gaussian HMM.
* ``constrained`` first runs the standard update, then averages parameters
  across the index groups implied by the symbol x noise product structure,
  collapsing the effective parameter count to that of the underlying noise
  model.

The initial-state distribution is never re-estimated: a single sequence
carries almost no information about it, and leaving it fixed keeps the
update well conditioned.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bcjr import NumericalUnderflowError, PosteriorTables, forward_backward
from .trellis import ConstraintGroups, HmmParams

__all__ = [
    "EmConfig",
    "EmIteration",
    "EmTrace",
    "LowOccupancyWarning",
    "m_step_standard",
    "m_step_constrained",
    "run_em",
]

# States (or transition rows) with posterior mass below this keep their
# previous parameters instead of dividing by ~0.
_OCCUPANCY_FLOOR = 1e-12


class LowOccupancyWarning(UserWarning):
    """A state or transition row had too little posterior mass to update."""


@dataclass(frozen=True)
class EmConfig:
    """Knobs for one EM run.

    Attributes
    ----------
    variant : str
        ``"standard"`` or ``"constrained"``.
    estimate_means : bool
        Re-estimate emission means. Off by default: the symbol alphabet is
        known at the receiver, so only variances and transitions are blind.
    convergence_threshold : float
        Stop once the log-evidence improvement falls below this.
    max_iterations : int
        Hard cap on M-step updates.
    variance_floor : float
        Lower bound applied to re-estimated variances.
    transition_floor : float
        Lower bound applied to re-estimated transition probabilities before
        row renormalization. Zero disables flooring.
    """

    variant: str = "constrained"
    estimate_means: bool = False
    convergence_threshold: float = 1e-6
    max_iterations: int = 100
    variance_floor: float = 1e-6
    transition_floor: float = 0.0

    def __post_init__(self) -> None:
        if self.variant not in ("standard", "constrained"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.convergence_threshold <= 0:
            raise ValueError("convergence_threshold must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.variance_floor <= 0:
            raise ValueError("variance_floor must be positive")
        if self.transition_floor < 0:
            raise ValueError("transition_floor must be nonnegative")


@dataclass(frozen=True)
class EmIteration:
    """Snapshot taken after one E-step.

    Iteration 0 holds the initial parameters and their evidence; iteration
    ``n`` holds the parameters produced by the n-th M-step. ``wall_time``
    is the seconds spent producing this iteration (M-step plus E-step); it
    is deliberately left out of :meth:`to_dict` so serialized results stay
    identical across reruns.
    """

    index: int
    theta: HmmParams
    log_evidence: float
    notes: tuple = field(default_factory=tuple)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "theta": self.theta.to_dict(),
            "log_evidence": self.log_evidence,
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class EmTrace:
    """Full record of one EM run.

    ``stop_reason`` is one of ``"threshold"``, ``"max_iterations"``, or
    ``"error"`` (an E-step underflowed; the trace ends at the last iteration
    whose evidence could still be evaluated).
    """

    iterations: tuple
    converged: bool
    stop_reason: str

    @property
    def n_iterations(self) -> int:
        """Number of M-step updates actually applied."""
        return max(len(self.iterations) - 1, 0)

    @property
    def final_theta(self) -> HmmParams:
        return self.iterations[-1].theta

    @property
    def log_evidence_curve(self) -> np.ndarray:
        return np.array([it.log_evidence for it in self.iterations])

    def to_dict(self) -> dict:
        return {
            "iterations": [it.to_dict() for it in self.iterations],
            "converged": self.converged,
            "stop_reason": self.stop_reason,
        }


def _check_tables(tables: PosteriorTables) -> None:
    if tables.pair_post is None:
        raise ValueError("M-step needs pairwise posteriors; "
                         "run forward_backward with include_pairwise=True")


def m_step_standard(
    y: np.ndarray,
    tables: PosteriorTables,
    theta_prev: HmmParams,
    config: EmConfig,
) -> HmmParams:
    """Unconstrained maximum-likelihood update from one E-step's posteriors.

    States whose total posterior occupancy (or transition rows whose total
    outgoing mass) falls below an internal floor keep their previous values
    and a :class:`LowOccupancyWarning` is emitted.
    """
    _check_tables(tables)
    y = np.asarray(y, dtype=np.float64)
    gamma = tables.state_post
    xi = tables.pair_post

    occ = gamma.sum(axis=0)
    starved = occ < _OCCUPANCY_FLOOR
    safe_occ = np.where(starved, 1.0, occ)

    if config.estimate_means:
        means = (gamma.T @ y) / safe_occ
        means = np.where(starved, theta_prev.means, means)
    else:
        means = theta_prev.means

    d = y[:, None] - means[None, :]
    variances = np.einsum("ts,ts->s", gamma, d * d) / safe_occ
    variances = np.maximum(variances, config.variance_floor)
    variances = np.where(starved, theta_prev.variances, variances)

    xi_sum = xi.sum(axis=0)
    row_mass = xi_sum.sum(axis=1)
    starved_rows = row_mass < _OCCUPANCY_FLOOR
    safe_mass = np.where(starved_rows, 1.0, row_mass)
    transitions = xi_sum / safe_mass[:, None]
    if config.transition_floor > 0:
        transitions = np.maximum(transitions, config.transition_floor)
    row_sums = transitions.sum(axis=1, keepdims=True)
    # starved rows can be all zero here; they are replaced below anyway
    transitions = transitions / np.where(row_sums > 0, row_sums, 1.0)
    if starved_rows.any():
        transitions[starved_rows] = theta_prev.transitions[starved_rows]

    if starved.any():
        warnings.warn(
            f"states {np.flatnonzero(starved).tolist()} kept previous "
            f"parameters (posterior occupancy below {_OCCUPANCY_FLOOR:g})",
            LowOccupancyWarning,
            stacklevel=2,
        )
    if starved_rows.any():
        warnings.warn(
            f"transition rows {np.flatnonzero(starved_rows).tolist()} kept "
            f"previous values (outgoing mass below {_OCCUPANCY_FLOOR:g})",
            LowOccupancyWarning,
            stacklevel=2,
        )

    return HmmParams(
        means=means,
        variances=variances,
        transitions=transitions,
        initial_dist=theta_prev.initial_dist,
    )


def m_step_constrained(
    y: np.ndarray,
    tables: PosteriorTables,
    theta_prev: HmmParams,
    groups: ConstraintGroups,
    config: EmConfig,
) -> HmmParams:
    """Standard update followed by averaging over tied-parameter groups.

    Group members receive the identical float, and the final row
    renormalization maps tied rows through the same arithmetic, so ties
    present in the group structure hold bitwise in the result.
    """
    if 2 * groups.num_noise_states != theta_prev.num_states:
        raise ValueError(
            f"groups describe {2 * groups.num_noise_states} states but the "
            f"model has {theta_prev.num_states}"
        )
    base = m_step_standard(y, tables, theta_prev, config)

    means = base.means.copy()
    if config.estimate_means:
        for g in groups.mean_groups:
            idx = list(g)
            means[idx] = means[idx].mean()

    variances = base.variances.copy()
    for g in groups.variance_groups:
        idx = list(g)
        variances[idx] = variances[idx].mean()

    transitions = base.transitions.copy()
    for g in groups.transition_groups:
        rows = [i for i, _ in g]
        cols = [j for _, j in g]
        transitions[rows, cols] = transitions[rows, cols].mean()
    # Mathematically each row already sums to 1 again; this only cleans up
    # float rounding, and identical rows stay identical through it.
    transitions = transitions / transitions.sum(axis=1, keepdims=True)

    return HmmParams(
        means=means,
        variances=variances,
        transitions=transitions,
        initial_dist=theta_prev.initial_dist,
    )


def run_em(
    y: np.ndarray,
    theta_init: HmmParams,
    groups: Optional[ConstraintGroups] = None,
    config: Optional[EmConfig] = None,
) -> EmTrace:
    """Iterate E- and M-steps from an initial guess until convergence.

    Parameters
    ----------
    y : ndarray of shape (T,)
        Observed sequence.
    theta_init : HmmParams
        Starting point. Recorded as iteration 0 together with its evidence.
    groups : ConstraintGroups, optional
        Required for the constrained variant, ignored otherwise.
    config : EmConfig, optional

    Returns
    -------
    EmTrace
        One entry per accepted parameter set. A terminal update whose
        evidence improvement falls below the threshold is recorded only if
        it did not decrease the evidence, so the trace is monotone. Low
        occupancy warnings raised inside an M-step are captured onto that
        iteration's ``notes`` instead of reaching the caller.
    """
    if config is None:
        config = EmConfig()
    if config.variant == "constrained" and groups is None:
        raise ValueError("constrained variant requires constraint groups")
    y = np.ascontiguousarray(y, dtype=np.float64)

    tic = time.perf_counter()
    try:
        tables = forward_backward(y, theta_init, include_pairwise=True)
    except NumericalUnderflowError:
        return EmTrace(iterations=(), converged=False, stop_reason="error")
    iterations = [
        EmIteration(0, theta_init, tables.log_evidence,
                    wall_time=time.perf_counter() - tic)
    ]

    theta = theta_init
    converged = False
    stop_reason = "max_iterations"
    for n in range(1, config.max_iterations + 1):
        tic = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if config.variant == "constrained":
                theta = m_step_constrained(y, tables, theta, groups, config)
            else:
                theta = m_step_standard(y, tables, theta, config)
        notes = tuple(
            str(w.message)
            for w in caught
            if issubclass(w.category, LowOccupancyWarning)
        )
        try:
            tables = forward_backward(y, theta, include_pairwise=True)
        except NumericalUnderflowError:
            stop_reason = "error"
            break
        improvement = tables.log_evidence - iterations[-1].log_evidence
        if improvement < config.convergence_threshold:
            converged = True
            stop_reason = "threshold"
            # The constrained variant's unweighted averaging is not an exact
            # likelihood maximizer, so the terminal step can reduce the
            # evidence slightly. Keep such a step only if it did not; the
            # recorded trace is then never worse than monotone.
            if improvement >= 0.0:
                iterations.append(
                    EmIteration(n, theta, tables.log_evidence, notes,
                                wall_time=time.perf_counter() - tic)
                )
            break
        iterations.append(
            EmIteration(n, theta, tables.log_evidence, notes,
                        wall_time=time.perf_counter() - tic)
        )

    return EmTrace(
        iterations=tuple(iterations),
        converged=converged,
        stop_reason=stop_reason,
    )
