"""Monte Carlo benchmark harness for the blind estimators.

A run is a grid of cells: one per (estimator variant, sweep point). Every
cell replays the same trial data, because trial data depends only on the
reference parameters, the frame length, and (base seed, trial index). That
makes variant and sweep comparisons paired rather than independent.

Aggregation is deterministic: trials are sorted by index before any
statistic is computed, so results do not depend on worker scheduling.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .em import EmConfig, run_em
from .metrics import metric_report
from .noise_model import MiddletonParams, generate_noise
from .trellis import build_constraint_groups, build_reference_hmm, transmit

__all__ = [
    "AllTrialsFailedError",
    "SweepSpec",
    "ExperimentConfig",
    "TrialRecord",
    "CellResult",
    "ExperimentResult",
    "run_trial",
    "run_experiment",
    "render_convergence_csv",
    "render_robustness_csv",
    "render_json",
]

_VARIANTS = ("standard", "constrained")


class AllTrialsFailedError(RuntimeError):
    """Every trial in some cell failed, leaving nothing to aggregate."""


@dataclass(frozen=True)
class SweepSpec:
    """One initialization parameter varied across a set of values.

    The sweep perturbs the EM starting point only; the reference channel
    generating the data stays fixed, so each point measures sensitivity to
    initialization mismatch.
    """

    param: str
    values: tuple

    def __post_init__(self) -> None:
        valid = ("impulsive_index", "power_ratio", "correlation")
        if self.param not in valid:
            raise ValueError(f"sweep param must be one of {valid}, got {self.param!r}")
        values = tuple(float(v) for v in self.values)
        if not values:
            raise ValueError("sweep needs at least one value")
        object.__setattr__(self, "values", values)

    def apply(self, base: MiddletonParams, value: float) -> MiddletonParams:
        return replace(base, **{self.param: value})


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of a Monte Carlo run.

    ``em_config.variant`` selects the estimator for :func:`run_trial`;
    :func:`run_experiment` overrides it per cell with each entry of
    ``variants``, and applies ``sweep`` values to ``init_params``.
    """

    reference_params: MiddletonParams
    init_params: MiddletonParams
    frame_length: int = 32768
    num_trials: int = 100
    base_seed: int = 0
    em_config: EmConfig = field(default_factory=EmConfig)
    variants: tuple = _VARIANTS
    sweep: Optional[SweepSpec] = None

    def __post_init__(self) -> None:
        if self.frame_length < 1:
            raise ValueError("frame_length must be at least 1")
        if self.num_trials < 1:
            raise ValueError("num_trials must be at least 1")
        if self.base_seed < 0:
            raise ValueError("base_seed must be nonnegative")
        variants = tuple(self.variants)
        if not variants or any(v not in _VARIANTS for v in variants):
            raise ValueError(f"variants must be a nonempty subset of {_VARIANTS}")
        object.__setattr__(self, "variants", variants)

    def to_dict(self) -> dict:
        return {
            "reference_params": asdict(self.reference_params),
            "init_params": asdict(self.init_params),
            "frame_length": self.frame_length,
            "num_trials": self.num_trials,
            "base_seed": self.base_seed,
            "em_config": asdict(self.em_config),
            "variants": list(self.variants),
            "sweep": asdict(self.sweep) if self.sweep else None,
        }


@dataclass(frozen=True)
class TrialRecord:
    """Outcome of one EM run on one simulated frame.

    The metric curves have one entry per recorded EM iteration, starting
    from the initial guess, so ``nmse_curve[0]`` scores the initialization
    itself. ``error`` is ``None`` for a usable trial; failed trials carry a
    reason and empty curves.
    """

    trial_index: int
    converged: bool
    stop_reason: str
    n_iterations: int
    nmse_curve: tuple
    kl_curve: tuple
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def final_nmse(self) -> float:
        return self.nmse_curve[-1]

    @property
    def final_kl(self) -> float:
        return self.kl_curve[-1]

    def to_dict(self) -> dict:
        return {
            "trial_index": self.trial_index,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "n_iterations": self.n_iterations,
            "nmse_curve": list(self.nmse_curve),
            "kl_curve": list(self.kl_curve),
            "error": self.error,
        }


@dataclass(frozen=True)
class CellResult:
    """All usable trials for one (variant, sweep point) cell."""

    variant: str
    swept_param: Optional[str]
    swept_value: Optional[float]
    records: tuple
    num_failed: int

    def curve_rows(self) -> list:
        """Per-iteration aggregate rows with carry-forward past convergence.

        Trials that stopped early contribute their final value to later
        iterations, so the aggregate at iteration ``i`` always averages the
        same number of trials. ``trials_converged`` counts trials that had
        converged by iteration ``i``.
        """
        max_len = max(len(r.nmse_curve) for r in self.records)
        rows = []
        for i in range(max_len):
            nmse = np.array(
                [r.nmse_curve[min(i, len(r.nmse_curve) - 1)] for r in self.records]
            )
            kl = np.array(
                [r.kl_curve[min(i, len(r.kl_curve) - 1)] for r in self.records]
            )
            rows.append(
                {
                    "iteration": i,
                    "nmse_mean": float(nmse.mean()),
                    "nmse_p25": float(np.percentile(nmse, 25)),
                    "nmse_p75": float(np.percentile(nmse, 75)),
                    "kl_mean": float(kl.mean()),
                    "kl_p25": float(np.percentile(kl, 25)),
                    "kl_p75": float(np.percentile(kl, 75)),
                    "trials_converged": sum(
                        1
                        for r in self.records
                        if r.converged and r.n_iterations <= i
                    ),
                }
            )
        return rows

    def final_row(self) -> dict:
        """Aggregates of end-of-run metrics and iteration counts."""
        iters = np.array([r.n_iterations for r in self.records])
        return {
            "final_nmse_mean": float(np.mean([r.final_nmse for r in self.records])),
            "final_kl_mean": float(np.mean([r.final_kl for r in self.records])),
            "iters_mean": float(iters.mean()),
            "iters_p25": float(np.percentile(iters, 25)),
            "iters_p75": float(np.percentile(iters, 75)),
        }

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "swept_param": self.swept_param,
            "swept_value": self.swept_value,
            "num_failed": self.num_failed,
            "trials": [r.to_dict() for r in self.records],
        }


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    cells: tuple

    def cell(self, variant: str, swept_value: Optional[float] = None) -> CellResult:
        for c in self.cells:
            if c.variant == variant and c.swept_value == swept_value:
                return c
        raise KeyError(f"no cell for variant={variant!r}, value={swept_value!r}")

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "cells": [c.to_dict() for c in self.cells],
        }


def run_trial(cfg: ExperimentConfig, trial_index: int) -> TrialRecord:
    """Simulate one frame and run one EM fit against it.

    Uses ``cfg.em_config`` as given (``cfg.variants`` and ``cfg.sweep`` are
    grid-expansion concerns handled by :func:`run_experiment`). Bit and
    noise streams come from two children of
    ``SeedSequence((base_seed, trial_index))``, so the simulated data is a
    pure function of the reference channel, the frame length, and those two
    integers. Estimator settings never touch the data.
    """
    ss = np.random.SeedSequence((cfg.base_seed, trial_index))
    bits_ss, noise_ss = ss.spawn(2)
    bits = np.random.default_rng(bits_ss).integers(0, 2, size=cfg.frame_length)
    noise = generate_noise(cfg.reference_params, cfg.frame_length, noise_ss)
    y = transmit(bits, noise)

    reference = build_reference_hmm(cfg.reference_params)
    theta_init = build_reference_hmm(cfg.init_params)
    groups = None
    if cfg.em_config.variant == "constrained":
        groups = build_constraint_groups(cfg.reference_params.num_noise_states)

    trace = run_em(y, theta_init, groups, cfg.em_config)
    if trace.stop_reason == "error":
        return TrialRecord(
            trial_index=trial_index,
            converged=False,
            stop_reason="error",
            n_iterations=trace.n_iterations,
            nmse_curve=(),
            kl_curve=(),
            error="EM aborted on numerical underflow",
        )
    try:
        reports = [metric_report(it.theta, reference) for it in trace.iterations]
    except ValueError as exc:
        return TrialRecord(
            trial_index=trial_index,
            converged=False,
            stop_reason=trace.stop_reason,
            n_iterations=trace.n_iterations,
            nmse_curve=(),
            kl_curve=(),
            error=f"metric evaluation failed: {exc}",
        )
    return TrialRecord(
        trial_index=trial_index,
        converged=trace.converged,
        stop_reason=trace.stop_reason,
        n_iterations=trace.n_iterations,
        nmse_curve=tuple(r.nmse_variance for r in reports),
        kl_curve=tuple(r.kl_transition for r in reports),
    )


def _trial_task(args):
    key, cell_cfg, trial_index = args
    return key, run_trial(cell_cfg, trial_index)


def _cell_config(cfg: ExperimentConfig, variant: str, point) -> ExperimentConfig:
    init = (
        cfg.sweep.apply(cfg.init_params, point)
        if cfg.sweep is not None
        else cfg.init_params
    )
    return replace(
        cfg,
        init_params=init,
        em_config=replace(cfg.em_config, variant=variant),
        variants=(variant,),
        sweep=None,
    )


def run_experiment(cfg: ExperimentConfig, num_workers: int = 1) -> ExperimentResult:
    """Run every cell of the grid and aggregate per-cell results.

    Parameters
    ----------
    cfg : ExperimentConfig
    num_workers : int
        Process count for trial execution. 1 runs in-process.

    Raises
    ------
    AllTrialsFailedError
        If any cell produces no usable trial. Individual failures are
        tolerated and reported via ``CellResult.num_failed``.
    """
    if num_workers < 1:
        raise ValueError("num_workers must be at least 1")

    points = cfg.sweep.values if cfg.sweep else (None,)
    keys = [(v, p) for v in cfg.variants for p in points]
    tasks = []
    for key in keys:
        variant, point = key
        cell_cfg = _cell_config(cfg, variant, point)
        for t in range(cfg.num_trials):
            tasks.append((key, cell_cfg, t))

    if num_workers == 1:
        outcomes = map(_trial_task, tasks)
    else:
        pool = ProcessPoolExecutor(max_workers=num_workers)
        try:
            outcomes = list(pool.map(_trial_task, tasks, chunksize=1))
        finally:
            pool.shutdown()

    by_key: dict = {key: [] for key in keys}
    for key, record in outcomes:
        by_key[key].append(record)

    cells = []
    for key in keys:
        variant, point = key
        records = sorted(by_key[key], key=lambda r: r.trial_index)
        usable = tuple(r for r in records if not r.failed)
        num_failed = len(records) - len(usable)
        if not usable:
            raise AllTrialsFailedError(
                f"all {len(records)} trials failed in cell "
                f"variant={variant!r}, sweep value={point!r}"
            )
        cells.append(
            CellResult(
                variant=variant,
                swept_param=cfg.sweep.param if cfg.sweep else None,
                swept_value=point,
                records=usable,
                num_failed=num_failed,
            )
        )
    return ExperimentResult(config=cfg, cells=tuple(cells))


def _fmt(x) -> str:
    # repr round-trips floats exactly, and never varies between runs.
    return repr(float(x)) if isinstance(x, float) else str(x)


def render_convergence_csv(result: ExperimentResult) -> str:
    """Per-iteration aggregate table for a no-sweep experiment."""
    if result.config.sweep is not None:
        raise ValueError("convergence table is only defined without a sweep")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["variant", "iteration", "nmse_mean", "nmse_p25", "nmse_p75",
         "kl_mean", "kl_p25", "kl_p75", "trials_converged"]
    )
    for cell in result.cells:
        for row in cell.curve_rows():
            writer.writerow(
                [cell.variant, row["iteration"]]
                + [_fmt(row[k]) for k in
                   ("nmse_mean", "nmse_p25", "nmse_p75",
                    "kl_mean", "kl_p25", "kl_p75")]
                + [row["trials_converged"]]
            )
    return buf.getvalue()


def render_robustness_csv(result: ExperimentResult) -> str:
    """Per-sweep-point summary table for a sweep experiment."""
    if result.config.sweep is None:
        raise ValueError("robustness table requires a sweep")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["variant", "swept_param", "swept_value", "final_nmse_mean",
         "final_kl_mean", "iters_mean", "iters_p25", "iters_p75"]
    )
    for cell in result.cells:
        row = cell.final_row()
        writer.writerow(
            [cell.variant, cell.swept_param, _fmt(cell.swept_value)]
            + [_fmt(row[k]) for k in
               ("final_nmse_mean", "final_kl_mean",
                "iters_mean", "iters_p25", "iters_p75")]
        )
    return buf.getvalue()


def render_json(result: ExperimentResult) -> str:
    """Full experiment dump, stable across identical runs."""
    return json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n"
