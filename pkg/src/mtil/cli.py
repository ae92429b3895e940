"""Command-line entry points: `mtil run`, `mtil verify`, `mtil synth`."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import control_math, exp_harness, lti_env, theory_probe
from .data_gen import SeedTree
from .errors import MtilError, ParseError, ValidationError
from .eval_metrics import task_diversity_constants

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PROBE_FAILURE = 3

PROBE_NAMES = (
    "covariance",
    "hanson_wright",
    "self_normalized",
    "maximal",
    "tracking",
    "sandwich",
)


def _scalar_task(a_cl: float, sigma_z: float = 0.0):
    """Scalar plant a = a_cl + 0.3 with expert gain -0.3 (closed loop a_cl)."""
    system = lti_env.LinearSystem(A=np.array([[a_cl + 0.3]]), B=np.array([[1.0]]))
    return system, lti_env.make_task(
        system, np.array([[-0.3]]), sigma_w=np.eye(1), sigma_z=sigma_z
    )


def run_probe_battery(names, seed: int) -> list:
    """Run the named probes at their reference scales."""
    tree = SeedTree(root=seed)
    reports = []
    if "covariance" in names:
        system, task = _scalar_task(0.5)
        reports.append(
            theory_probe.verify_covariance_concentration(
                system, task, N=250, T=20, trials=200,
                rng=tree.child("covariance").stream(),
            )
        )
    if "hanson_wright" in names:
        reports.append(
            theory_probe.verify_hanson_wright(
                np.eye(10), [0.5, 1.0, 2.0], trials=100_000,
                rng=tree.child("hanson_wright").stream(),
            )
        )
    if "self_normalized" in names:
        for H in (1, 4):
            for kind, d in (("gaussian-iid", 2), ("state-feedback", 1)):
                setup = theory_probe.MartingaleSetup(
                    H=H, T=100, dim_x=d, dim_eta=d, sigma=1.0
                )
                reports.append(
                    theory_probe.verify_self_normalized(
                        setup, delta=0.05, trials=10_000,
                        rng=tree.child("self_normalized", H).child(kind).stream(),
                        regressor_kind=kind,
                    )
                )
    if "maximal" in names:
        delta_gain = np.zeros((1, 10))
        delta_gain[0, 0] = 1.0
        for i, T in enumerate((1, 10, 100)):
            reports.append(
                theory_probe.verify_maximal_inequality(
                    delta_gain, np.eye(10), T=T, trials=100_000,
                    rng=tree.child("maximal", i).stream(),
                )
            )
    if "tracking" in names:
        system, task = _scalar_task(0.5)
        reports.append(
            theory_probe.verify_tracking_and_siss(
                system, task, K_hat=np.array([[-0.28]]), T=100,
                delta_prime=0.05, trials=10_000,
                rng=tree.child("tracking").stream(),
            )
        )
    if "sandwich" in names:
        reports.append(
            theory_probe.verify_scalar_sandwich(
                a=0.8, k_star=-0.3, eps=0.05, T=200, trials=100_000,
                rng=tree.child("sandwich").stream(),
            )
        )
    return reports


def _cmd_run(args) -> int:
    try:
        if args.config is not None:
            cfg = exp_harness.load_config(args.config)
        else:
            cfg = exp_harness.config_from_dict({})
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.parallelism is not None:
            overrides["parallelism"] = args.parallelism
        if overrides:
            from dataclasses import replace

            cfg = replace(cfg, **overrides)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    rows = exp_harness.run_sweep(cfg)
    paths = exp_harness.write_results(rows, args.out, cfg)
    if args.emit_plot_script:
        paths["plot"] = exp_harness.emit_plot_script(args.out)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    if args.probe == "all":
        names = PROBE_NAMES
    elif args.probe in PROBE_NAMES:
        names = (args.probe,)
    else:
        print(
            f"error: unknown probe {args.probe!r}; choose from "
            f"{('all',) + PROBE_NAMES}",
            file=sys.stderr,
        )
        return EXIT_VALIDATION
    reports = run_probe_battery(names, args.seed)
    import os

    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "verify.csv")
    theory_probe.write_probe_csv(reports, path)
    all_passed = True
    for r in reports:
        status = "pass" if r.passed else "FAIL"
        print(
            f"{status}  {r.name}: failures {r.failures}/{r.trials} "
            f"(target {r.delta_target}), margin {r.margin:.4g}"
        )
        all_passed = all_passed and r.passed
    print(f"wrote {path}")
    return EXIT_OK if all_passed else EXIT_PROBE_FAILURE


def _cmd_synth(args) -> int:
    try:
        base = lti_env.get_preset(args.preset)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    H = 9
    alphas = control_math.logspace(-2.0, 2.0, H + 1)
    gains = lti_env.synthesize_expert_family(base, alphas, np.eye(base.n_u))
    ensemble = lti_env.build_ensemble(base, gains)
    if args.lift_dim is not None:
        rng = SeedTree(root=args.seed).child("lift").stream()
        G = lti_env.sample_lift_map(base.n_x, args.lift_dim, rng)
        ensemble = lti_env.lift_ensemble(ensemble, G)
    print(f"{'task':>6} {'alpha':>12} {'|K|_F':>12} {'rho_cl':>10} {'tr(Sx)':>12}")
    for h, (task, alpha) in enumerate(zip(ensemble.tasks, alphas)):
        rho = control_math.spectral_radius(
            ensemble.system.A + ensemble.system.B @ task.K
        )
        label = "target" if h == ensemble.H else f"src {h}"
        print(
            f"{label:>6} {alpha:12.4g} {np.linalg.norm(task.K):12.6g} "
            f"{rho:10.6f} {np.trace(task.sigma_x):12.6g}"
        )
    if ensemble.truth is not None:
        report = task_diversity_constants(ensemble, ensemble.truth)
        print(
            f"diversity: c {report.c:.6g}  nu {report.nu:.6g}  "
            f"nu*H {report.nu_times_H:.6g}  lambda_bar {report.lambda_bar:.6g}  "
            f"lambda_under {report.lambda_under:.6g}"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtil",
        description="Multi-task imitation learning workbench for linear systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a sweep and write CSV results")
    p_run.add_argument("--config", default=None, help="YAML config file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--parallelism", type=int, default=None)
    p_run.add_argument("--emit-plot-script", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_verify = sub.add_parser("verify", help="run Monte-Carlo bound probes")
    p_verify.add_argument("--probe", default="all")
    p_verify.add_argument("--out", required=True, help="output directory")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.set_defaults(func=_cmd_verify)

    p_synth = sub.add_parser("synth", help="print the synthesized expert family")
    p_synth.add_argument("--preset", default="hong2021")
    p_synth.add_argument("--lift-dim", type=int, default=None)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=_cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except MtilError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
