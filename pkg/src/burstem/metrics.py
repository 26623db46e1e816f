"""Estimation-quality metrics comparing a fitted model to the reference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trellis import HmmParams

__all__ = [
    "MetricReport",
    "nmse_variances",
    "kl_transitions",
    "metric_report",
]


@dataclass(frozen=True)
class MetricReport:
    """Summary of how closely estimated parameters match the reference."""

    nmse_variance: float
    kl_transition: float

    def to_dict(self) -> dict:
        return {
            "nmse_variance": self.nmse_variance,
            "kl_transition": self.kl_transition,
        }


def _as_variances(x) -> np.ndarray:
    if isinstance(x, HmmParams):
        return x.variances
    return np.asarray(x, dtype=np.float64)


def _as_transitions(x) -> np.ndarray:
    if isinstance(x, HmmParams):
        return x.transitions
    return np.asarray(x, dtype=np.float64)


def nmse_variances(estimated, reference) -> float:
    """Mean squared relative error of the per-state variances.

    Accepts full parameter sets or bare variance vectors. Each state's
    error is normalized by the reference variance before squaring, so heavy
    impulsive states and the background state contribute on the same scale.
    """
    est = _as_variances(estimated)
    ref = _as_variances(reference)
    if est.shape != ref.shape or est.ndim != 1:
        raise ValueError("estimated and reference variances must be equal-length 1-D")
    if not np.all(ref > 0):
        raise ValueError("reference variances must be strictly positive")
    rel = (est - ref) / ref
    return float(np.mean(rel * rel))


def kl_transitions(reference, estimated) -> float:
    """KL divergence (nats) from the reference transition matrix to another.

    Accepts full parameter sets or bare matrices. Summed over all matrix
    entries, which equals the sum of per-row divergences because every row
    is a distribution. Entries where the reference is zero contribute
    nothing regardless of the estimate.

    Raises
    ------
    ValueError
        If the estimate assigns zero probability to a transition the
        reference uses, making the divergence infinite.
    """
    ref = _as_transitions(reference)
    est = _as_transitions(estimated)
    if ref.shape != est.shape or ref.ndim != 2 or ref.shape[0] != ref.shape[1]:
        raise ValueError("transition matrices must be square and equal-shaped")
    support = ref > 0
    if np.any(est[support] <= 0):
        raise ValueError(
            "estimated matrix has zero mass on a transition the reference uses"
        )
    total = float(np.sum(ref[support] * np.log(ref[support] / est[support])))
    # Rounding can push a near-zero divergence a hair negative.
    return max(total, 0.0)


def metric_report(estimated: HmmParams, reference: HmmParams) -> MetricReport:
    """Bundle the variance NMSE and transition KL for one fitted model."""
    return MetricReport(
        nmse_variance=nmse_variances(estimated.variances, reference.variances),
        kl_transition=kl_transitions(reference.transitions, estimated.transitions),
    )
