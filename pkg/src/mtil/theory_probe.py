"""Monte-Carlo falsification probes for the concentration and tracking bounds.

Each probe simulates the exact setting of one probabilistic statement,
evaluates the displayed bound with no hidden constants, and reports the
empirical failure rate with a 3-binomial-standard-error slack. A probe
failure therefore localizes either a transcription error or a genuinely
violated statement.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import control_math
from .data_gen import (
    cholesky_factor,
    coupled_rollout,
    rollout_expert,
    sample_noise,
    stack_data,
)
from .errors import UnstablePair
from .eval_metrics import excess_risk
from .lti_env import ExpertTask, LinearSystem


@dataclass(frozen=True)
class ProbeReport:
    """Outcome of one Monte-Carlo probe."""

    name: str
    trials: int
    failures: int
    delta_target: float
    margin: float
    passed: bool
    details: dict = field(default_factory=dict)

    @property
    def failure_rate(self) -> float:
        return self.failures / self.trials if self.trials else 0.0


@dataclass(frozen=True)
class MartingaleSetup:
    """Dimensions and regularizers for the self-normalized martingale probe.

    H independent processes of horizon T with d-dimensional regressors and
    m-dimensional sigma-sub-Gaussian noise; regularizers is a list of H
    positive-definite d x d matrices (default identity).
    """

    H: int
    T: int
    dim_x: int
    dim_eta: int
    sigma: float
    regularizers: list | None = None

    def reg_matrices(self) -> list:
        if self.regularizers is None:
            return [np.eye(self.dim_x) for _ in range(self.H)]
        return [np.asarray(V, dtype=float) for V in self.regularizers]


def _binomial_se(p: float, n: int) -> float:
    return float(np.sqrt(max(p * (1.0 - p), 0.0) / max(n, 1)))


def verify_covariance_concentration(
    system: LinearSystem,
    task: ExpertTask,
    N: int,
    T: int,
    trials: int,
    rng: np.random.Generator,
    projection: np.ndarray | None = None,
    delta_target: float = 0.1,
) -> ProbeReport:
    """Check the 0.9/1.1 PSD sandwich on the empirical state covariance.

    Per trial draws a fresh batch of N trajectories of length T and tests
    0.9 S <= (1/NT) X'X <= 1.1 S in the PSD order, where S is the stationary
    covariance (or its projected form Phi' sigma_x Phi when a projection is
    given), via the eigenvalues of the whitened empirical matrix.
    """
    S = task.sigma_x
    if projection is not None:
        projection = np.asarray(projection, dtype=float)
        S = projection.T @ S @ projection
    eig_s, V = np.linalg.eigh(S)
    whiten = V @ np.diag(eig_s**-0.5) @ V.T
    failures = 0
    margin = 0.0
    for _ in range(trials):
        batch = rollout_expert(system, task, T, N, rng)
        X = stack_data(batch).X
        if projection is not None:
            X = X @ projection
        E = (X.T @ X) / X.shape[0]
        eigs = np.linalg.eigvalsh(whiten @ E @ whiten)
        dev = float(np.max(np.abs(eigs - 1.0)))
        margin = max(margin, dev / 0.1)
        if dev > 0.1:
            failures += 1
    rate = failures / trials
    passed = rate <= delta_target + 3.0 * _binomial_se(delta_target, trials)
    return ProbeReport(
        name="covariance_concentration",
        trials=trials,
        failures=failures,
        delta_target=delta_target,
        margin=margin,
        passed=passed,
        details={"N": N, "T": T, "projected": projection is not None},
    )


def verify_hanson_wright(
    R: np.ndarray,
    eps_grid,
    trials: int,
    rng: np.random.Generator,
    delta_target: float = 0.05,
) -> ProbeReport:
    """Upper-tail check for the Gaussian quadratic form ||Rz||^2.

    For each eps, compares the empirical frequency of
    ||Rz||^2 >= (1 + eps) ||R||_F^2 over z ~ N(0, I) against
    exp(-(1/4) min(eps^2/4, eps) ||R||_F^2 / ||R||^2). A grid point fails
    when the frequency exceeds the bound by more than 3 binomial standard
    errors. The two-sided variant of the statement carries a prefactor 2;
    the one-sided form probed here is recorded in details.
    """
    R = np.asarray(R, dtype=float)
    fro_sq = float(np.sum(R * R))
    if fro_sq == 0.0:
        raise ValueError("R must be nonzero")
    op_sq = control_math.spectral_norm(R) ** 2
    eps_grid = [float(e) for e in eps_grid]
    stats = np.empty(trials)
    chunk = 20_000
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        z = rng.standard_normal((m, R.shape[1]))
        stats[done : done + m] = np.sum((z @ R.T) ** 2, axis=1)
        done += m
    failures = 0
    margin = 0.0
    per_eps = {}
    for eps in eps_grid:
        freq = float(np.mean(stats >= (1.0 + eps) * fro_sq))
        bound = float(np.exp(-0.25 * min(eps * eps / 4.0, eps) * fro_sq / op_sq))
        se = _binomial_se(bound, trials)
        if freq > bound + 3.0 * se:
            failures += 1
        margin = max(margin, freq / bound if bound > 0 else float("inf"))
        per_eps[eps] = (freq, bound)
    return ProbeReport(
        name="hanson_wright",
        trials=trials,
        failures=failures,
        delta_target=delta_target,
        margin=margin,
        passed=failures == 0,
        details={"per_eps": per_eps, "form": "one-sided upper tail"},
    )


def _simulate_regressors(
    kind: str,
    trials: int,
    H: int,
    T: int,
    d: int,
    eta: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Regressor tensor (trials, H, T, d) for the martingale probe.

    kinds: 'constant' (x_t = all-ones), 'gaussian-iid' (x_t ~ N(0, I_d)
    independent of the noise), 'state-feedback' (x_{t+1} = 0.5 x_t + eta_t
    from x_0 = all-ones; requires d == noise dimension, so each regressor is
    causally dependent on past noise).
    """
    if kind == "constant":
        return np.ones((trials, H, T, d))
    if kind == "gaussian-iid":
        return rng.standard_normal((trials, H, T, d))
    if kind == "state-feedback":
        if eta.shape[3] != d:
            raise ValueError("state-feedback regressors require dim_x == dim_eta")
        x = np.empty((trials, H, T, d))
        x[:, :, 0, :] = 1.0
        for t in range(T - 1):
            x[:, :, t + 1, :] = 0.5 * x[:, :, t, :] + eta[:, :, t, :]
        return x
    raise ValueError(f"unknown regressor kind {kind!r}")


def verify_self_normalized(
    setup: MartingaleSetup,
    delta: float,
    trials: int,
    rng: np.random.Generator,
    regressor_kind: str = "gaussian-iid",
    eta_scale: float | None = None,
) -> ProbeReport:
    """Probe the generalized self-normalized martingale inequality.

    Per trial simulates H independent processes, forms S_T^h = sum_t x_t
    eta_t' and Vbar_T^h = V^h + sum_t x_t x_t', and checks
        sum_h ||(Vbar_T^h)^{-1/2} S_T^h||_F^2
        <= 2 sigma^2 [ sum_h (m/2) logdet(Vbar_T^h (V^h)^{-1}) + log(1/delta) ].
    The statement is a fixed-T bound (no stopping times). details carries the
    mean joint bound and the mean union-bounded H-fold single-process bound
    (each process at delta/H), whose comparison motivates paying log(1/delta)
    once.
    """
    H, T, d, m = setup.H, setup.T, setup.dim_x, setup.dim_eta
    scale = setup.sigma if eta_scale is None else eta_scale
    regs = setup.reg_matrices()
    # Draw order: gaussian-iid regressors first (when used), then noise.
    if regressor_kind == "gaussian-iid":
        x = rng.standard_normal((trials, H, T, d))
        eta = scale * rng.standard_normal((trials, H, T, m))
    else:
        eta = scale * rng.standard_normal((trials, H, T, m))
        x = _simulate_regressors(regressor_kind, trials, H, T, d, eta, rng)

    V = np.stack(regs)  # (H, d, d)
    Vbar = V[None, :, :, :] + np.einsum("bhti,bhtj->bhij", x, x)
    S = np.einsum("bhti,bhtj->bhij", x, eta)  # (trials, H, d, m)
    solved = np.linalg.solve(Vbar, S)
    stat = np.einsum("bhim,bhim->b", S, solved)
    _, logdet_vbar = np.linalg.slogdet(Vbar)
    _, logdet_v = np.linalg.slogdet(V)
    logdet_term = 0.5 * m * (logdet_vbar - logdet_v[None, :])  # (trials, H)
    two_sigma_sq = 2.0 * setup.sigma**2
    bound = two_sigma_sq * (logdet_term.sum(axis=1) + np.log(1.0 / delta))
    union_bound = two_sigma_sq * (logdet_term.sum(axis=1) + H * np.log(H / delta))
    fail_mask = stat > bound
    failures = int(np.count_nonzero(fail_mask))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(bound > 0, stat / bound, np.where(stat > 0, np.inf, 0.0))
    rate = failures / trials
    passed = rate <= delta + 3.0 * _binomial_se(delta, trials)
    return ProbeReport(
        name=f"self_normalized[{regressor_kind},H={H}]",
        trials=trials,
        failures=failures,
        delta_target=delta,
        margin=float(np.max(ratios)),
        passed=passed,
        details={
            "mean_bound_joint": float(np.mean(bound)),
            "mean_bound_union": float(np.mean(union_bound)),
            "mean_statistic": float(np.mean(stat)),
        },
    )


def verify_maximal_inequality(
    delta_gain: np.ndarray,
    sigma_x: np.ndarray,
    T: int,
    trials: int,
    rng: np.random.Generator,
) -> ProbeReport:
    """Check E[max_{t<T} ||D x_t||^2] <= 3 (1 + log T) tr(D sigma_x D').

    x_t are i.i.d. N(0, sigma_x). Fails when the Monte-Carlo estimate
    exceeds the bound by more than 3 standard errors of the estimate.
    """
    D = np.asarray(delta_gain, dtype=float)
    L = cholesky_factor(np.asarray(sigma_x, dtype=float))
    DL = D @ L
    bound = 3.0 * (1.0 + np.log(T)) * float(np.sum(DL * DL))
    stats = np.empty(trials)
    chunk = max(1, 10_000_000 // max(T * D.shape[1], 1))
    done = 0
    while done < trials:
        mtr = min(chunk, trials - done)
        g = rng.standard_normal((mtr, T, D.shape[1]))
        vals = np.sum((g @ DL.T) ** 2, axis=2)
        stats[done : done + mtr] = vals.max(axis=1)
        done += mtr
    estimate = float(stats.mean())
    se = float(stats.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    failed = estimate > bound + 3.0 * se
    if bound > 0:
        margin = estimate / bound
    else:
        margin = 0.0 if estimate == 0.0 else float("inf")
    return ProbeReport(
        name="maximal_inequality",
        trials=trials,
        failures=int(failed),
        delta_target=0.05,
        margin=margin,
        passed=not failed,
        details={"estimate": estimate, "bound": bound, "se": se, "T": T},
    )


def verify_tracking_and_siss(
    system: LinearSystem,
    target_task: ExpertTask,
    K_hat: np.ndarray,
    T: int,
    delta_prime: float,
    trials: int,
    rng: np.random.Generator,
) -> ProbeReport:
    """Probe the deterministic and high-probability tracking displays.

    Requires the burn-in precondition ||K_hat - K_star|| <= 1/(2 J ||B||)
    with J the transient gain of the expert closed loop; otherwise returns
    an informational PreconditionNotMet report.

    Per coupled trial:
      (a) for every t, ||x_star[t] - x_hat[t]|| <= 2 J ||B|| max_{k<t}
          ||(K_hat - K_star) x_star[k]|| must hold deterministically (the
          incremental-stability display with zero initial offset; the factor
          2 absorbs the self-referencing term under the precondition);
      (b) max_t ||x_hat - x_star||^2 <= 4 J^2 ||B||^2 (1 + 4 log(T/delta'))
          * ER may fail on at most a delta' fraction of trials.
    """
    K_star = target_task.K
    profile = control_math.stability_profile(system.A + system.B @ K_star)
    b_norm = control_math.spectral_norm(system.B)
    gain_dev = control_math.spectral_norm(K_hat - K_star)
    if gain_dev > 1.0 / (2.0 * profile.j_gain * b_norm):
        return ProbeReport(
            name="tracking_siss",
            trials=0,
            failures=0,
            delta_target=delta_prime,
            margin=float("nan"),
            passed=False,
            details={"precondition_met": False, "gain_dev": gain_dev},
        )
    er = excess_risk(K_hat, K_star, target_task.sigma_x)
    jb = profile.j_gain * b_norm
    bound_hp = 4.0 * jb * jb * (1.0 + 4.0 * np.log(T / delta_prime)) * er
    delta_k = K_hat - K_star
    det_violations = 0
    hp_failures = 0
    margin = 0.0
    for _ in range(trials):
        noise = sample_noise(system, target_task, T, rng)
        xs, xh, _ = coupled_rollout(system, K_star, K_hat, noise, T)
        diffs = np.linalg.norm(xh[1:] - xs[1:], axis=1)
        deltas = np.linalg.norm(xs[:-1] @ delta_k.T, axis=1)
        running = np.maximum.accumulate(deltas)
        det_rhs = 2.0 * jb * running
        slack = 1e-9 * max(1.0, float(det_rhs.max()))
        if np.any(diffs > det_rhs + slack):
            det_violations += 1
        max_sq = float(np.max(diffs) ** 2)
        if bound_hp > 0:
            margin = max(margin, max_sq / bound_hp)
        if max_sq > bound_hp:
            hp_failures += 1
    rate = hp_failures / trials
    passed = det_violations == 0 and rate <= delta_prime + 3.0 * _binomial_se(
        delta_prime, trials
    )
    return ProbeReport(
        name="tracking_siss",
        trials=trials,
        failures=hp_failures,
        delta_target=delta_prime,
        margin=margin,
        passed=passed,
        details={
            "precondition_met": True,
            "det_violations": det_violations,
            "j_gain": profile.j_gain,
            "bound_hp": bound_hp,
            "excess_risk": er,
        },
    )


def verify_scalar_sandwich(
    a: float,
    k_star: float,
    eps: float,
    T: int,
    trials: int,
    rng: np.random.Generator,
) -> ProbeReport:
    """Two-sided scalar tracking-error sandwich in the closed-loop radius.

    Couples x_star (rate a_cl = a + k_star) and x_hat (rate a_cl + eps) on a
    shared stationary initial state and unit-variance process noise, and
    checks that the Monte-Carlo estimate of E[max_{1<=t<=T} |x_star -
    x_hat|^2] lies in
        [0.5/(1-a_cl)^2 * ER_app, 12 (1 + log T)/(1-a_cl)^2 * ER_app]
    within 3 standard errors, where ER_app = eps^2/(1-a_cl^2) (the
    appendix's excess-risk convention, without the 1/2 factor; it equals
    twice the canonical excess risk).

    Raises:
        UnstablePair: unless 0 < a_cl and a_cl + eps < 1.
    """
    a_cl = a + k_star
    a_hat = a_cl + eps
    if not (0.0 < a_cl < 1.0 and a_hat < 1.0):
        raise UnstablePair(f"need 0 < {a_cl} and {a_hat} < 1")
    sd0 = 1.0 / np.sqrt(1.0 - a_cl * a_cl)
    xs = sd0 * rng.standard_normal(trials)
    xh = xs.copy()
    max_sq = np.zeros(trials)
    for _ in range(T):
        w = rng.standard_normal(trials)
        xs = a_cl * xs + w
        xh = a_hat * xh + w
        np.maximum(max_sq, (xs - xh) ** 2, out=max_sq)
    estimate = float(max_sq.mean())
    se = float(max_sq.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    er_app = eps * eps / (1.0 - a_cl * a_cl)
    lower = 0.5 / (1.0 - a_cl) ** 2 * er_app
    upper = 12.0 * (1.0 + np.log(T)) / (1.0 - a_cl) ** 2 * er_app
    failed = (estimate < lower - 3.0 * se) or (estimate > upper + 3.0 * se)
    margin = estimate / upper if upper > 0 else 0.0
    return ProbeReport(
        name="scalar_sandwich",
        trials=trials,
        failures=int(failed),
        delta_target=0.05,
        margin=margin,
        passed=not failed,
        details={
            "estimate": estimate,
            "lower": lower,
            "upper": upper,
            "se": se,
            "er_appendix": er_app,
        },
    )


PROBE_CSV_HEADER = ["name", "trials", "failures", "delta_target", "margin", "pass"]


def write_probe_csv(reports: list, path: str) -> None:
    """Serialize probe reports, one row per report."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PROBE_CSV_HEADER)
        for r in reports:
            writer.writerow(
                [
                    r.name,
                    r.trials,
                    r.failures,
                    repr(float(r.delta_target)),
                    repr(float(r.margin)),
                    str(bool(r.passed)).lower(),
                ]
            )
