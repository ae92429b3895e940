"""Scalar evaluation quantities for learned controllers.

Excess risk (closed form on the stationary distribution), closed-loop
tracking error against coupled expert rollouts, parameter error, stability,
an LQR cost-gap probe, task-diversity constants, and quantile summaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import control_math
from .data_gen import coupled_rollout, sample_noise
from .errors import EmptyInput, RankDeficient
from .lti_env import ExpertTask, GroundTruthFactors, LinearSystem, TaskEnsemble


@dataclass(frozen=True)
class MetricsRecord:
    """Per-trial evaluation of one learned controller."""

    tracking_err: float
    param_err: float
    stable: bool
    excess_risk: float
    underdetermined: bool = False
    nonfinite: bool = False


@dataclass(frozen=True)
class DiversityReport:
    """Task-diversity constants of an ensemble.

    c: minimum over source tasks h of the smallest eigenvalue of the
    target-whitened source covariance. nu: squared spectral norm of
    F_target times the pseudo-inverse of the vertical stack of source F.
    lambda_bar / lambda_under: extreme stationary-covariance eigenvalues
    over source tasks.
    """

    c: float
    nu: float
    nu_times_H: float
    lambda_bar: float
    lambda_under: float


def excess_risk(K_hat: np.ndarray, K_star: np.ndarray, sigma_x: np.ndarray) -> float:
    """Half the expected squared input error on the stationary distribution.

    Closed form (1/2) trace((K_hat - K_star) sigma_x (K_hat - K_star)').
    """
    delta = np.asarray(K_hat, dtype=float) - np.asarray(K_star, dtype=float)
    return 0.5 * float(np.sum((delta @ sigma_x) * delta))


def _tracking_error(xs: np.ndarray, xh: np.ndarray) -> float:
    """max_{1 <= t} ||x_hat[t] - x_star[t]||^2 over the recorded steps."""
    if xs.shape[0] < 2:
        return float("inf")
    diff = xh[1:] - xs[1:]
    return float(np.max(np.sum(diff * diff, axis=1)))


def evaluate_controller(
    system: LinearSystem,
    target_task: ExpertTask,
    K_hat: np.ndarray,
    T_test: int,
    trials: int,
    rng: np.random.Generator,
    underdetermined: bool = False,
) -> list:
    """Coupled closed-loop evaluation of K_hat against the target expert.

    Each trial samples one noise realization, rolls out expert and learned
    controllers on it, and records the max squared state deviation over
    t = 1..T_test along with parameter error, stability of A + B K_hat, and
    the closed-form excess risk. Truncated (overflowing) rollouts carry
    tracking_err = inf and the nonfinite flag.
    """
    param_err = float(np.linalg.norm(K_hat - target_task.K))
    stable = (
        control_math.spectral_radius(system.A + system.B @ K_hat) < 1.0
    )
    er = excess_risk(K_hat, target_task.K, target_task.sigma_x)
    records = []
    for _ in range(trials):
        noise = sample_noise(system, target_task, T_test, rng)
        xs, xh, nonfinite = coupled_rollout(
            system, target_task.K, K_hat, noise, T_test
        )
        tracking = float("inf") if nonfinite else _tracking_error(xs, xh)
        records.append(
            MetricsRecord(
                tracking_err=tracking,
                param_err=param_err,
                stable=bool(stable),
                excess_risk=er,
                underdetermined=underdetermined,
                nonfinite=nonfinite,
            )
        )
    return records


def lqr_cost_gap(
    system: LinearSystem,
    target_task: ExpertTask,
    K_hat: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    T: int,
    trials: int,
    rng: np.random.Generator,
) -> tuple:
    """Gap in the max-over-horizon root LQR stage cost, and its bound.

    gap_estimate = |E h(x_hat, K_hat) - E h(x_star, K_star)| estimated over
    coupled trials, with h = max_t sqrt(x[t]'(Q + K'RK)x[t]). bound_value =
    C * sqrt(log T * ER) with C = sqrt(lmax(Q)) J ||B|| +
    sqrt(lmax(R)) (||K_star|| + sqrt(tr sigma_x / lmin sigma_x)).
    """
    K_star = target_task.K
    W_hat = Q + K_hat.T @ R @ K_hat
    W_star = Q + K_star.T @ R @ K_star
    h_hat = np.empty(trials)
    h_star = np.empty(trials)
    for i in range(trials):
        noise = sample_noise(system, target_task, T, rng)
        xs, xh, _ = coupled_rollout(system, K_star, K_hat, noise, T)
        h_star[i] = np.sqrt(np.maximum(np.sum((xs @ W_star) * xs, axis=1), 0.0)).max()
        h_hat[i] = np.sqrt(np.maximum(np.sum((xh @ W_hat) * xh, axis=1), 0.0)).max()
    gap_estimate = float(abs(h_hat.mean() - h_star.mean()))

    profile = control_math.stability_profile(system.A + system.B @ K_star)
    b_norm = control_math.spectral_norm(system.B)
    eig_x = np.linalg.eigvalsh(target_task.sigma_x)
    const = float(
        np.sqrt(max(np.linalg.eigvalsh(Q).max(), 0.0)) * profile.j_gain * b_norm
        + np.sqrt(max(np.linalg.eigvalsh(R).max(), 0.0))
        * (control_math.spectral_norm(K_star) + np.sqrt(eig_x.sum() / eig_x.min()))
    )
    er = excess_risk(K_hat, K_star, target_task.sigma_x)
    bound_value = const * float(np.sqrt(max(np.log(T), 0.0) * er))
    return gap_estimate, bound_value


def task_diversity_constants(
    ensemble: TaskEnsemble, truth: GroundTruthFactors
) -> DiversityReport:
    """Diversity constants of the ensemble under a known factorization.

    Raises:
        RankDeficient: if the stacked source F matrices have column rank < k.
    """
    target = ensemble.target
    eig_t, V = np.linalg.eigh(target.sigma_x)
    if eig_t.min() <= 0.0:
        raise ValueError("target stationary covariance must be PD")
    whiten = V @ np.diag(eig_t**-0.5) @ V.T
    c = min(
        float(np.linalg.eigvalsh(whiten @ task.sigma_x @ whiten).min())
        for task in ensemble.sources
    )
    f_sources = truth.f_stars[:-1]
    f_target = truth.f_stars[-1]
    stack = np.vstack(f_sources)
    if np.linalg.matrix_rank(stack) < truth.k:
        raise RankDeficient("stacked source F matrices have column rank below k")
    nu = control_math.spectral_norm(f_target @ control_math.pseudo_inverse(stack)) ** 2
    lambdas = [np.linalg.eigvalsh(task.sigma_x) for task in ensemble.sources]
    return DiversityReport(
        c=c,
        nu=float(nu),
        nu_times_H=float(nu) * ensemble.H,
        lambda_bar=float(max(e.max() for e in lambdas)),
        lambda_under=float(min(e.min() for e in lambdas)),
    )


def summarize_quantiles(values, qs) -> list:
    """Linear-interpolation quantiles of a nonempty list."""
    values = np.asarray(list(values), dtype=float)
    if values.size == 0:
        raise EmptyInput("cannot summarize an empty list")
    return [float(np.quantile(values, q)) for q in qs]
