"""Plant definitions, expert task ensembles, LQR synthesis, and lifting.

A task ensemble bundles one linear plant with H source expert controllers and
one target expert controller, each carrying its noise covariances and the
stationary state covariance of its closed loop. Ensembles can be lifted into
a higher-dimensional observation space through an injective linear map, in
which case the ground-truth factorization K = F Phi is recorded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import control_math
from .errors import (
    NoFactorization,
    RankDeficientLift,
    UnstableClosedLoop,
)


@dataclass(frozen=True)
class LinearSystem:
    """Discrete-time plant x[t+1] = A x[t] + B u[t] + w[t]."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self) -> None:
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise ValueError("B must have the same row count as A")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class ExpertTask:
    """One expert controller together with its noise model.

    Attributes:
        K: stabilizing state-feedback gain (n_u x n_x).
        sigma_w: process-noise covariance (n_x x n_x, PSD).
        sigma_z: actuator-noise standard deviation (scalar, >= 0).
        sigma_x: stationary state covariance of the closed loop.
    """

    K: np.ndarray
    sigma_w: np.ndarray
    sigma_z: float
    sigma_x: np.ndarray


@dataclass(frozen=True)
class GroundTruthFactors:
    """Known factorization K^(h) = F^(h) Phi shared by all tasks.

    phi_star has shape k x n_x; f_stars holds H + 1 matrices of shape
    n_u x k (sources first, target last).
    """

    phi_star: np.ndarray
    f_stars: list

    @property
    def k(self) -> int:
        return self.phi_star.shape[0]


@dataclass(frozen=True)
class TaskEnsemble:
    """A plant with H source expert tasks and one target expert task."""

    system: LinearSystem
    sources: list
    target: ExpertTask
    truth: GroundTruthFactors | None = field(default=None)

    @property
    def H(self) -> int:
        return len(self.sources)

    @property
    def tasks(self) -> list:
        return list(self.sources) + [self.target]


def stationary_covariance(
    system: LinearSystem,
    K: np.ndarray,
    sigma_w: np.ndarray,
    sigma_z: float,
) -> np.ndarray:
    """Stationary covariance of the closed loop x[t+1] = (A+BK)x + B z + w.

    Solves Sigma = (A+BK) Sigma (A+BK)' + sigma_z^2 B B' + Sigma_w.

    Raises:
        UnstableClosedLoop: if rho(A + BK) >= 1.
    """
    A_cl = system.A + system.B @ K
    if control_math.spectral_radius(A_cl) >= 1.0:
        raise UnstableClosedLoop("rho(A + BK) >= 1")
    Q = float(sigma_z) ** 2 * (system.B @ system.B.T) + np.asarray(
        sigma_w, dtype=float
    )
    return control_math.solve_discrete_lyapunov(A_cl, Q)


def make_task(
    system: LinearSystem,
    K: np.ndarray,
    sigma_w: np.ndarray | None = None,
    sigma_z: float = 1.0,
) -> ExpertTask:
    """Build an ExpertTask with its stationary covariance filled in."""
    K = np.asarray(K, dtype=float)
    if sigma_w is None:
        sigma_w = np.eye(system.n_x)
    sigma_w = np.asarray(sigma_w, dtype=float)
    sigma_x = stationary_covariance(system, K, sigma_w, sigma_z)
    return ExpertTask(K=K, sigma_w=sigma_w, sigma_z=float(sigma_z), sigma_x=sigma_x)


def synthesize_expert_family(
    system: LinearSystem, alphas: np.ndarray, R: np.ndarray
) -> list:
    """One LQR gain per alpha, from the DARE with Q = alpha * I and cost R."""
    gains = []
    eye = np.eye(system.n_x)
    for alpha in np.asarray(alphas, dtype=float):
        sol = control_math.solve_dare(system.A, system.B, float(alpha) * eye, R)
        gains.append(sol.K)
    return gains


def build_ensemble(
    system: LinearSystem,
    gains: list,
    sigma_w: np.ndarray | None = None,
    sigma_z: float = 1.0,
    truth: GroundTruthFactors | None = None,
) -> TaskEnsemble:
    """Assemble an ensemble from gains; the last gain is the target task."""
    if len(gains) < 2:
        raise ValueError("need at least one source gain plus the target gain")
    tasks = [make_task(system, K, sigma_w, sigma_z) for K in gains]
    return TaskEnsemble(
        system=system, sources=tasks[:-1], target=tasks[-1], truth=truth
    )


def lift_ensemble(
    ensemble: TaskEnsemble,
    G: np.ndarray,
    sigma_w: np.ndarray | None = None,
) -> TaskEnsemble:
    """Lift an ensemble into observation space through an injective map G.

    The lifted plant is (G A G+, G B) and each gain becomes K G+, where G+ is
    the pseudo-inverse. Stationary covariances are recomputed with the lifted
    process-noise covariance (default identity) and unchanged sigma_z. The
    ground truth records Phi = G+ and F^(h) equal to the original gains.

    Raises:
        RankDeficientLift: if G is not full column rank.
    """
    G = np.asarray(G, dtype=float)
    s = np.linalg.svd(G, compute_uv=False)
    if s[-1] <= 1e-10 * s[0]:
        raise RankDeficientLift("lift map G is not injective")
    G_pinv = control_math.pseudo_inverse(G)
    system = ensemble.system
    lifted_system = LinearSystem(A=G @ system.A @ G_pinv, B=G @ system.B)
    if sigma_w is None:
        sigma_w = np.eye(G.shape[0])
    original_gains = [t.K for t in ensemble.tasks]
    lifted_tasks = [
        make_task(lifted_system, K @ G_pinv, sigma_w, t.sigma_z)
        for K, t in zip(original_gains, ensemble.tasks)
    ]
    truth = GroundTruthFactors(phi_star=G_pinv, f_stars=original_gains)
    return TaskEnsemble(
        system=lifted_system,
        sources=lifted_tasks[:-1],
        target=lifted_tasks[-1],
        truth=truth,
    )


def sample_lift_map(n_x: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw an m x n_x lift map with i.i.d. standard-normal entries.

    Injectivity is asserted; one resample is attempted before failing.
    """
    for _ in range(2):
        G = rng.standard_normal((m, n_x))
        s = np.linalg.svd(G, compute_uv=False)
        if s[-1] > 1e-10 * s[0]:
            return G
    raise RankDeficientLift("failed to draw an injective lift map")


def ground_truth_factors(ensemble: TaskEnsemble) -> GroundTruthFactors:
    """Return the recorded factorization, verifying its consistency.

    Raises:
        NoFactorization: the ensemble was built from raw gains.
    """
    if ensemble.truth is None:
        raise NoFactorization("ensemble carries no known factorization")
    truth = ensemble.truth
    for F, task in zip(truth.f_stars, ensemble.tasks):
        resid = np.linalg.norm(F @ truth.phi_star - task.K)
        if resid > 1e-10 * max(1.0, np.linalg.norm(task.K)):
            raise NoFactorization(f"recorded factors do not compose (resid {resid})")
    return truth


# Plant used throughout the numerical experiments: a 4-state, 2-input
# unstable system, entries fixed to two decimals.
_HONG2021_A = np.array(
    [
        [0.99, 0.03, -0.02, -0.32],
        [0.01, 0.47, 4.70, 0.00],
        [0.02, -0.06, 0.40, 0.00],
        [0.01, -0.04, 0.72, 0.99],
    ]
)
_HONG2021_B = np.array(
    [
        [0.01, 0.99],
        [-3.44, 1.66],
        [-0.83, 0.44],
        [-0.47, 0.25],
    ]
)

PRESETS = {
    "hong2021": lambda: LinearSystem(A=_HONG2021_A.copy(), B=_HONG2021_B.copy()),
}


def get_preset(name: str) -> LinearSystem:
    """Look up a named plant preset."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    return PRESETS[name]()
