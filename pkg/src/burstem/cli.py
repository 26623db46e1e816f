"""Command-line entry point for the benchmark experiments.

Subcommands
-----------
convergence
    Per-iteration estimation-quality statistics on the bursty-channel
    benchmark setup, both estimator variants by default.
robustness
    Final-quality and iteration-count statistics while sweeping one
    initialization parameter away from the reference.
table
    Single-trial fit: dumps reference, initial, and estimated parameters
    together with iteration counts, as JSON.
derive
    Print the closed-form joint HMM for given physical noise parameters.

Settings resolve in three layers: built-in defaults, then an optional JSON
config file (``--config``), then explicit flags. Exit codes: 0 on success,
1 on configuration or usage errors, 2 when every trial of a cell failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .em import EmConfig, run_em
from .harness import (
    AllTrialsFailedError,
    ExperimentConfig,
    SweepSpec,
    render_convergence_csv,
    render_json,
    render_robustness_csv,
    run_experiment,
)
from .metrics import metric_report
from .noise_model import MiddletonParams, generate_noise
from .trellis import build_constraint_groups, build_reference_hmm, transmit

__all__ = ["main"]

_SWEEP_NAMES = {
    "a": "impulsive_index",
    "lambda": "power_ratio",
    "r": "correlation",
}

# Benchmark setups: heavy bursty reference with a deliberately poor start,
# and the milder reference used for initialization-mismatch sweeps.
_TABLE_SETUP = {
    "ref": {"impulsive_index": 0.3, "power_ratio": 10.0, "correlation": 0.9},
    "init": {"impulsive_index": 0.1, "power_ratio": 1.0, "correlation": 0.0},
}
_ROBUSTNESS_REF = {"impulsive_index": 0.4, "power_ratio": 10.0, "correlation": 0.45}

_FULL_SCALE_TRIALS = 10000


class _Parser(argparse.ArgumentParser):
    # Usage problems are config errors: exit 1, not argparse's default 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_param_flags(p: argparse.ArgumentParser, prefix: str) -> None:
    p.add_argument(f"--{prefix}-a", type=float, default=None,
                   help=f"{prefix} impulsive index A")
    p.add_argument(f"--{prefix}-lambda", type=float, default=None,
                   help=f"{prefix} impulsive-to-background power ratio")
    p.add_argument(f"--{prefix}-r", type=float, default=None,
                   help=f"{prefix} noise-state correlation")


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    _add_param_flags(p, "ref")
    _add_param_flags(p, "init")
    p.add_argument("--frames", type=int, default=None,
                   help="samples per frame (default 32768)")
    p.add_argument("--trials", type=int, default=None,
                   help="Monte Carlo trials per cell (default 100)")
    p.add_argument("--seed", type=int, default=None,
                   help="base seed (default 0)")
    p.add_argument("--variant", choices=("standard", "constrained", "both"),
                   default=None, help="estimator variant(s) to run")
    p.add_argument("--tau", type=float, default=None,
                   help="log-evidence convergence threshold (default 1e-6)")
    p.add_argument("--max-iters", type=int, default=None,
                   help="EM iteration cap (default 100)")
    p.add_argument("--config", type=str, default=None,
                   help="JSON config file; flags override its values")
    p.add_argument("--workers", type=int, default=1,
                   help="worker processes for trials (default 1)")
    p.add_argument("--full-scale", action="store_true",
                   help=f"run {_FULL_SCALE_TRIALS} trials unless --trials is given")
    p.add_argument("--out", type=str, default=None,
                   help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv",
                   help="output format (default csv)")


def _build_parser() -> _Parser:
    parser = _Parser(prog="burstem",
                     description="Blind estimation benchmarks for bursty "
                                 "impulsive-noise channels")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p_conv = sub.add_parser("convergence",
                            help="per-iteration metric statistics")
    _add_experiment_flags(p_conv)

    p_rob = sub.add_parser("robustness",
                           help="initialization-mismatch sweep")
    _add_experiment_flags(p_rob)
    p_rob.add_argument("--sweep", type=str, default=None,
                       help="swept init parameter, e.g. a=0.1,0.2,0.4 "
                            "(names: a, lambda, r)")

    p_table = sub.add_parser("table",
                             help="single-trial parameter estimates")
    _add_param_flags(p_table, "ref")
    _add_param_flags(p_table, "init")
    p_table.add_argument("--frames", type=int, default=32768)
    p_table.add_argument("--seed", type=int, default=0)
    p_table.add_argument("--variant",
                         choices=("standard", "constrained", "both"),
                         default="both")
    p_table.add_argument("--tau", type=float, default=1e-6)
    p_table.add_argument("--max-iters", type=int, default=100)
    p_table.add_argument("--out", type=str, default=None)

    p_der = sub.add_parser("derive",
                           help="closed-form joint HMM for given noise params")
    p_der.add_argument("--a", type=float, required=True, help="impulsive index")
    p_der.add_argument("--lambda", dest="lam", type=float, required=True,
                       help="impulsive-to-background power ratio")
    p_der.add_argument("--r", type=float, required=True,
                       help="noise-state correlation")
    p_der.add_argument("--w", type=int, default=2, help="noise states (default 2)")
    p_der.add_argument("--background-variance", type=float, default=1.0)
    p_der.add_argument("--out", type=str, default=None)

    return parser


def _parse_sweep(text: str) -> SweepSpec:
    name, sep, rest = text.partition("=")
    if not sep:
        raise ValueError(f"sweep must look like param=v1,v2,... got {text!r}")
    key = name.strip().lower()
    if key not in _SWEEP_NAMES:
        raise ValueError(
            f"unknown sweep parameter {name!r}; use one of {sorted(_SWEEP_NAMES)}"
        )
    try:
        values = tuple(float(v) for v in rest.split(","))
    except ValueError:
        raise ValueError(f"could not parse sweep values from {rest!r}") from None
    return SweepSpec(param=_SWEEP_NAMES[key], values=values)


def _merge_params(base: dict, overlay: Optional[dict]) -> dict:
    merged = dict(base)
    if overlay:
        merged.update(overlay)
    return merged


def _experiment_config(args, ref_default: dict, init_default: Optional[dict],
                       default_variants: tuple) -> ExperimentConfig:
    file_cfg = {}
    if args.config is not None:
        file_cfg = json.loads(Path(args.config).read_text())
        if not isinstance(file_cfg, dict):
            raise ValueError("config file must hold a JSON object")

    ref = _merge_params(ref_default, file_cfg.get("reference_params"))
    init = _merge_params(init_default or {}, file_cfg.get("init_params")) \
        if (init_default is not None or "init_params" in file_cfg) else None

    flag_ref = {k: v for k, v in [
        ("impulsive_index", args.ref_a),
        ("power_ratio", args.ref_lambda),
        ("correlation", args.ref_r),
    ] if v is not None}
    flag_init = {k: v for k, v in [
        ("impulsive_index", args.init_a),
        ("power_ratio", args.init_lambda),
        ("correlation", args.init_r),
    ] if v is not None}
    ref.update(flag_ref)
    if flag_init:
        init = _merge_params(init or ref, flag_init)
    if init is None:
        # Mismatch sweeps start from the reference and perturb one field.
        init = dict(ref)

    em_cfg = dict(file_cfg.get("em_config", {}))
    if args.tau is not None:
        em_cfg["convergence_threshold"] = args.tau
    if args.max_iters is not None:
        em_cfg["max_iterations"] = args.max_iters
    em_cfg.pop("variant", None)

    variants = tuple(file_cfg.get("variants", default_variants))
    if args.variant is not None:
        variants = (("standard", "constrained") if args.variant == "both"
                    else (args.variant,))

    num_trials = file_cfg.get("num_trials", 100)
    if args.full_scale:
        num_trials = _FULL_SCALE_TRIALS
    if args.trials is not None:
        num_trials = args.trials

    sweep = None
    if file_cfg.get("sweep"):
        sweep = SweepSpec(param=file_cfg["sweep"]["param"],
                          values=tuple(file_cfg["sweep"]["values"]))
    if getattr(args, "sweep", None) is not None:
        sweep = _parse_sweep(args.sweep)

    frame_length = args.frames if args.frames is not None \
        else file_cfg.get("frame_length", 32768)
    base_seed = args.seed if args.seed is not None \
        else file_cfg.get("base_seed", 0)

    return ExperimentConfig(
        reference_params=MiddletonParams(**ref),
        init_params=MiddletonParams(**init),
        frame_length=frame_length,
        num_trials=num_trials,
        base_seed=base_seed,
        em_config=EmConfig(**em_cfg),
        variants=variants,
        sweep=sweep,
    )


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _cmd_experiment(args, kind: str) -> int:
    if kind == "convergence":
        cfg = _experiment_config(
            args, _TABLE_SETUP["ref"], _TABLE_SETUP["init"],
            default_variants=("standard", "constrained"))
        if cfg.sweep is not None:
            raise ValueError("convergence does not take a sweep")
    else:
        cfg = _experiment_config(
            args, _ROBUSTNESS_REF, None, default_variants=("constrained",))
        if cfg.sweep is None:
            raise ValueError("robustness requires --sweep (or a sweep in the config)")
    result = run_experiment(cfg, num_workers=args.workers)
    if args.format == "json":
        text = render_json(result)
    elif kind == "convergence":
        text = render_convergence_csv(result)
    else:
        text = render_robustness_csv(result)
    _emit(text, args.out)
    return 0


def _cmd_table(args) -> int:
    ref = _merge_params(_TABLE_SETUP["ref"], None)
    init = _merge_params(_TABLE_SETUP["init"], None)
    for key, ref_v, init_v in [
        ("impulsive_index", args.ref_a, args.init_a),
        ("power_ratio", args.ref_lambda, args.init_lambda),
        ("correlation", args.ref_r, args.init_r),
    ]:
        if ref_v is not None:
            ref[key] = ref_v
        if init_v is not None:
            init[key] = init_v
    ref_params = MiddletonParams(**ref)
    init_params = MiddletonParams(**init)

    ss = np.random.SeedSequence((args.seed, 0))
    bits_ss, noise_ss = ss.spawn(2)
    bits = np.random.default_rng(bits_ss).integers(0, 2, size=args.frames)
    noise = generate_noise(ref_params, args.frames, noise_ss)
    y = transmit(bits, noise)

    reference = build_reference_hmm(ref_params)
    theta_init = build_reference_hmm(init_params)
    groups = build_constraint_groups(ref_params.num_noise_states)

    variants = (("standard", "constrained") if args.variant == "both"
                else (args.variant,))
    out = {
        "reference": reference.to_dict(),
        "init": theta_init.to_dict(),
        "fits": {},
    }
    for variant in variants:
        cfg = EmConfig(variant=variant,
                       convergence_threshold=args.tau,
                       max_iterations=args.max_iters)
        trace = run_em(y, theta_init,
                       groups if variant == "constrained" else None, cfg)
        if trace.stop_reason == "error" or not trace.iterations:
            out["fits"][variant] = {"stop_reason": "error"}
            continue
        report = metric_report(trace.final_theta, reference)
        out["fits"][variant] = {
            "final": trace.final_theta.to_dict(),
            "n_iterations": trace.n_iterations,
            "converged": trace.converged,
            "stop_reason": trace.stop_reason,
            "nmse": report.nmse_variance,
            "kl": report.kl_transition,
        }
    _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", args.out)
    return 0


def _cmd_derive(args) -> int:
    params = MiddletonParams(
        impulsive_index=args.a,
        power_ratio=args.lam,
        correlation=args.r,
        num_noise_states=args.w,
        background_variance=args.background_variance,
    )
    theta = build_reference_hmm(params)
    _emit(json.dumps(theta.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "convergence":
            return _cmd_experiment(args, "convergence")
        if args.command == "robustness":
            return _cmd_experiment(args, "robustness")
        if args.command == "table":
            return _cmd_table(args)
        return _cmd_derive(args)
    except AllTrialsFailedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError, TypeError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
