"""Configuration loading, seeded sweep execution, and result persistence.

A sweep compares the multi-task pipeline (pretrain a shared representation on
H source tasks, fine-tune per-task weights on the target data) against direct
behavioral cloning, across a grid of target sample counts N2, over
trials_system realizations of the lift map times trials_noise realizations of
the data noise. All randomness derives from one SeedTree, so the output is a
pure function of (config, seed) regardless of parallelism.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
import os
import time
from dataclasses import asdict, dataclass, replace

import numpy as np
import yaml

from . import control_math, lti_env, mtil_learn
from .data_gen import SeedTree, StackedData, rollout_expert, stack_data
from .errors import ParseError, ValidationError
from .eval_metrics import evaluate_controller, summarize_quantiles

RESULTS_VERSION = "1"

VALID_METHODS = ("multitask", "direct")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated sweep configuration; defaults reproduce the reference setup."""

    preset: str = "hong2021"
    A: list | None = None
    B: list | None = None
    lift_dim: int | None = 50
    sigma_z: float = 1.0
    H: int = 9
    k: int = 4
    alphas: tuple = (-2.0, 2.0)
    r_scale: float = 1.0
    T: int = 20
    T_test: int = 100
    N1: int = 10
    N2: tuple = tuple(range(1, 21))
    trials_system: int = 10
    trials_noise: int = 10
    methods: tuple = ("multitask", "direct")
    eval_task: str | int = "target"
    seed: int = 0
    parallelism: int = 1
    restarts: int = 1
    reuse_source_data: bool = False


@dataclass(frozen=True)
class ResultRow:
    """One evaluation outcome: method x grid point x system x noise trial."""

    method: str
    system_trial: int
    noise_trial: int
    N1: int
    N2: int
    H: int
    T: int
    k: int
    tracking_err: float
    param_err: float
    stable: bool
    excess_risk: float
    underdetermined: bool
    nonfinite: bool
    wall_time_ms: float = 0.0


_SCHEMA = {
    "system": {"preset", "a", "b", "lift_dim", "sigma_z"},
    "tasks": {"h", "k", "alphas", "r_scale"},
    "sweep": {
        "n1",
        "n2",
        "t",
        "t_test",
        "trials_system",
        "trials_noise",
        "methods",
    },
    "run": {"seed", "parallelism", "restarts", "reuse_source_data", "eval_task"},
}


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ValidationError(f"{path}: {message}")


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate a config from a nested {section: {key: value}} dict."""
    if raw is None:
        raw = {}
    _require(isinstance(raw, dict), "<root>", "config must be a mapping")
    for section, keys in raw.items():
        _require(section in _SCHEMA, section, "unknown section")
        _require(isinstance(keys, dict), section, "section must be a mapping")
        for key in keys:
            _require(key in _SCHEMA[section], f"{section}.{key}", "unknown key")

    system = raw.get("system", {})
    tasks = raw.get("tasks", {})
    sweep = raw.get("sweep", {})
    run = raw.get("run", {})

    n2 = sweep.get("n2", list(range(1, 21)))
    if isinstance(n2, int):
        n2 = list(range(1, n2 + 1))
    _require(
        isinstance(n2, list) and len(n2) > 0 and all(int(v) >= 1 for v in n2),
        "sweep.n2",
        "must be a nonempty list of counts >= 1",
    )
    methods = tuple(sweep.get("methods", list(VALID_METHODS)))
    _require(
        len(methods) > 0 and all(m in VALID_METHODS for m in methods),
        "sweep.methods",
        f"must be a nonempty subset of {VALID_METHODS}",
    )
    alphas = tuple(float(v) for v in tasks.get("alphas", (-2.0, 2.0)))
    _require(len(alphas) == 2, "tasks.alphas", "must be (lo_exp, hi_exp)")

    cfg = ExperimentConfig(
        preset=system.get("preset", "hong2021"),
        A=system.get("a"),
        B=system.get("b"),
        lift_dim=system.get("lift_dim", 50),
        sigma_z=float(system.get("sigma_z", 1.0)),
        H=int(tasks.get("h", 9)),
        k=int(tasks.get("k", 4)),
        alphas=alphas,
        r_scale=float(tasks.get("r_scale", 1.0)),
        T=int(sweep.get("t", 20)),
        T_test=int(sweep.get("t_test", 100)),
        N1=int(sweep.get("n1", 10)),
        N2=tuple(int(v) for v in n2),
        trials_system=int(sweep.get("trials_system", 10)),
        trials_noise=int(sweep.get("trials_noise", 10)),
        methods=methods,
        eval_task=run.get("eval_task", "target"),
        seed=int(run.get("seed", 0)),
        parallelism=int(run.get("parallelism", 1)),
        restarts=int(run.get("restarts", 1)),
        reuse_source_data=bool(run.get("reuse_source_data", False)),
    )

    base = _base_system(cfg)
    state_dim = cfg.lift_dim if cfg.lift_dim is not None else base.n_x
    _require(cfg.H >= 1, "tasks.h", "must be >= 1")
    _require(1 <= cfg.k <= state_dim, "tasks.k", "must satisfy 1 <= k <= n_x")
    if cfg.lift_dim is not None:
        _require(
            cfg.lift_dim >= base.n_x, "system.lift_dim", "must be >= base n_x"
        )
        _require(2 * cfg.k <= cfg.lift_dim, "tasks.k", "needs 2k <= lifted dim")
    for name, value in (
        ("sweep.t", cfg.T),
        ("sweep.t_test", cfg.T_test),
        ("sweep.n1", cfg.N1),
        ("sweep.trials_system", cfg.trials_system),
        ("sweep.trials_noise", cfg.trials_noise),
        ("run.parallelism", cfg.parallelism),
        ("run.restarts", cfg.restarts),
    ):
        _require(value >= 1, name, "must be >= 1")
    if cfg.eval_task != "target":
        _require(
            isinstance(cfg.eval_task, int) and 0 <= cfg.eval_task < cfg.H,
            "run.eval_task",
            "must be 'target' or a source index in [0, H)",
        )
    return cfg


def load_config(path: str) -> ExperimentConfig:
    """Parse a YAML config file; an empty file yields the full defaults.

    Raises:
        ParseError: unreadable or malformed file.
        ValidationError: invalid value, message carries the field path.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ParseError(f"cannot parse config: {exc}") from exc
    return config_from_dict(raw)


def _base_system(cfg: ExperimentConfig) -> lti_env.LinearSystem:
    if cfg.A is not None or cfg.B is not None:
        _require(
            cfg.A is not None and cfg.B is not None,
            "system.a",
            "inline systems need both a and b",
        )
        return lti_env.LinearSystem(A=np.array(cfg.A), B=np.array(cfg.B))
    try:
        return lti_env.get_preset(cfg.preset)
    except KeyError as exc:
        raise ValidationError(f"system.preset: {exc}") from exc


def _build_ensemble(
    cfg: ExperimentConfig, system_trial: int, tree: SeedTree
) -> lti_env.TaskEnsemble:
    """Deterministic ensemble for one system trial (one lift realization)."""
    base = _base_system(cfg)
    alphas = control_math.logspace(cfg.alphas[0], cfg.alphas[1], cfg.H + 1)
    gains = lti_env.synthesize_expert_family(
        base, alphas, cfg.r_scale * np.eye(base.n_u)
    )
    ensemble = lti_env.build_ensemble(base, gains, sigma_z=cfg.sigma_z)
    if cfg.lift_dim is None:
        return ensemble
    rng = tree.child("lift", system_trial).stream()
    G = lti_env.sample_lift_map(base.n_x, cfg.lift_dim, rng)
    return lti_env.lift_ensemble(ensemble, G)


def _prefix(data: StackedData, n_traj: int, T: int) -> StackedData:
    """First n_traj trajectories of a stacked pool (nested N2 reuse)."""
    rows = n_traj * T
    return StackedData(X=data.X[:rows], U=data.U[:rows])


def _run_cell(cfg: ExperimentConfig, system_trial: int, noise_trial: int) -> list:
    """All rows for one (system trial, noise trial) cell."""
    t_start = time.perf_counter()
    tree = SeedTree(root=cfg.seed)
    ensemble = _build_ensemble(cfg, system_trial, tree)
    system = ensemble.system
    task_index = ensemble.H if cfg.eval_task == "target" else int(cfg.eval_task)
    target_task = ensemble.tasks[task_index]

    source_noise_trial = 0 if cfg.reuse_source_data else noise_trial
    source_tree = tree.child("source", system_trial).child(
        "noise", source_noise_trial
    )
    source_stacks = [
        stack_data(
            rollout_expert(
                system, task, cfg.T, cfg.N1, source_tree.child("task", h).stream()
            )
        )
        for h, task in enumerate(ensemble.sources)
    ]
    phi_hat = None
    if "multitask" in cfg.methods:
        pre = mtil_learn.pretrain_alternating(
            source_stacks,
            cfg.k,
            rng=source_tree.child("init").stream(),
            restarts=cfg.restarts,
        )
        phi_hat = pre.phi_hat

    n2_max = max(cfg.N2)
    pool_rng = (
        tree.child("target", system_trial).child("noise", noise_trial).stream()
    )
    pool = stack_data(rollout_expert(system, target_task, cfg.T, n2_max, pool_rng))

    rows = []
    for n2 in cfg.N2:
        data = _prefix(pool, n2, cfg.T)
        fits = {}
        if "multitask" in cfg.methods:
            f_hat = mtil_learn.finetune_target(phi_hat, data)
            fits["multitask"] = (f_hat @ phi_hat, n2 * cfg.T < cfg.k)
        if "direct" in cfg.methods:
            fits["direct"] = mtil_learn.direct_ols(data)
        for method in cfg.methods:
            K_hat, underdetermined = fits[method]
            eval_rng = (
                tree.child("eval", system_trial)
                .child("noise", noise_trial)
                .child("n2", n2)
                .stream()
            )
            record = evaluate_controller(
                system,
                target_task,
                K_hat,
                cfg.T_test,
                trials=1,
                rng=eval_rng,
                underdetermined=underdetermined,
            )[0]
            rows.append(
                ResultRow(
                    method=method,
                    system_trial=system_trial,
                    noise_trial=noise_trial,
                    N1=cfg.N1,
                    N2=n2,
                    H=cfg.H,
                    T=cfg.T,
                    k=cfg.k,
                    tracking_err=record.tracking_err,
                    param_err=record.param_err,
                    stable=record.stable,
                    excess_risk=record.excess_risk,
                    underdetermined=record.underdetermined,
                    nonfinite=record.nonfinite,
                    wall_time_ms=0.0,
                )
            )
    # Timing is informational only; it stays out of the deterministic CSV
    # schema, so identical (config, seed) runs produce identical files.
    elapsed_ms = 1000.0 * (time.perf_counter() - t_start)
    per_row = elapsed_ms / max(len(rows), 1)
    return [replace(row, wall_time_ms=per_row) for row in rows]


def _cell_worker(args) -> list:
    cfg, s, j = args
    return _run_cell(cfg, s, j)


def run_sweep(cfg: ExperimentConfig) -> list:
    """Execute the full sweep; output is deterministic given (config, seed)."""
    cells = [
        (cfg, s, j)
        for s in range(cfg.trials_system)
        for j in range(cfg.trials_noise)
    ]
    rows = []
    if cfg.parallelism <= 1 or len(cells) <= 1:
        outputs = [_cell_worker(c) for c in cells]
    else:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=cfg.parallelism
        ) as pool:
            outputs = list(pool.map(_cell_worker, cells))
    for cell_rows in outputs:
        rows.extend(cell_rows)
    rows.sort(
        key=lambda r: (r.method, r.N1, r.N2, r.system_trial, r.noise_trial)
    )
    return rows


RESULTS_COLUMNS = [
    "method",
    "system_trial",
    "noise_trial",
    "N1",
    "N2",
    "H",
    "T",
    "k",
    "tracking_err",
    "param_err",
    "stable",
    "excess_risk",
    "underdetermined",
    "nonfinite",
]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results(rows: list, out_dir: str, cfg: ExperimentConfig | None = None):
    """Write results.csv, summary.csv, and a manifest; returns the paths.

    results.csv carries the fixed per-row schema (wall-clock timing is kept
    out so identical (config, seed) runs are byte-identical); summary.csv
    aggregates median and 20/80% quantiles per method x grid point plus the
    stable fraction.
    """
    os.makedirs(out_dir, exist_ok=True)
    results_path = os.path.join(out_dir, "results.csv")
    summary_path = os.path.join(out_dir, "summary.csv")
    manifest_path = os.path.join(out_dir, "manifest.json")

    with open(results_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULTS_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(getattr(row, col)) for col in RESULTS_COLUMNS])

    groups = {}
    for row in rows:
        groups.setdefault((row.method, row.N1, row.N2), []).append(row)
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["method", "N1", "N2"]
        for metric in ("tracking_err", "param_err", "excess_risk"):
            header += [f"{metric}_median", f"{metric}_q20", f"{metric}_q80"]
        header.append("stable_frac")
        writer.writerow(header)
        for key in sorted(groups):
            group = groups[key]
            out = [key[0], key[1], key[2]]
            for metric in ("tracking_err", "param_err", "excess_risk"):
                values = [getattr(r, metric) for r in group]
                out += [_fmt(v) for v in summarize_quantiles(values, [0.5, 0.2, 0.8])]
            out.append(_fmt(sum(r.stable for r in group) / len(group)))
            writer.writerow(out)

    manifest = {
        "version": RESULTS_VERSION,
        "n_rows": len(rows),
        "config": asdict(cfg) if cfg is not None else None,
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=list)
        fh.write("\n")
    return {
        "results": results_path,
        "summary": summary_path,
        "manifest": manifest_path,
    }


PLOT_SCRIPT = """\
# Plot medians from summary.csv (gnuplot). Usage: gnuplot plot_summary.gp
set datafile separator ','
set key autotitle columnhead
set logscale y
set xlabel 'N2'
set ylabel 'median tracking error'
plot '< awk -F, "NR==1 || $1==\\"multitask\\"" summary.csv' using 3:4 with linespoints title 'multitask', \\
     '< awk -F, "NR==1 || $1==\\"direct\\"" summary.csv' using 3:4 with linespoints title 'direct'
"""


def emit_plot_script(out_dir: str) -> str:
    """Write a plain gnuplot script that reads summary.csv."""
    path = os.path.join(out_dir, "plot_summary.gp")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(PLOT_SCRIPT)
    return path
