"""Core matrix and control-theoretic computations.

Spectral radius, transient-gain profile (J(A), tau(A, nu)), discrete Lyapunov
and Riccati solvers, Moore-Penrose pseudo-inverse, and log-spaced grids.
All functions are pure and operate on float64 NumPy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotConverged, NotStabilizing, UnstableMatrix


@dataclass(frozen=True)
class StabilityProfile:
    """Transient-gain summary of a Schur-stable matrix.

    Attributes:
        rho: spectral radius of A.
        j_gain: truncated sum_{t >= 0} ||A^t|| (spectral norm), >= 1.
        tau: max over computed k of ||A^k|| / nu^k, >= 1.
        nu: decay rate used for the tau envelope, rho < nu < 1.
    """

    rho: float
    j_gain: float
    tau: float
    nu: float


@dataclass(frozen=True)
class RiccatiSolution:
    """Solution of a discrete algebraic Riccati equation.

    Attributes:
        P: symmetric PSD value matrix (n_x x n_x).
        K: state-feedback gain (n_u x n_x), K = -(B'PB + R)^{-1} B'PA.
        rho_closed: spectral radius of A + BK.
    """

    P: np.ndarray
    K: np.ndarray
    rho_closed: float


def spectral_radius(A: np.ndarray) -> float:
    """Largest eigenvalue magnitude of a square matrix."""
    A = np.asarray(A, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError("spectral_radius requires a square matrix")
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def spectral_norm(A: np.ndarray, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Largest singular value via power iteration on A'A.

    Uses a deterministic start vector so results are reproducible. The
    iteration tracks the Rayleigh estimate of lambda_max(A'A) and stops when
    its relative change drops below tol.
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    M = A.T @ A
    n = M.shape[0]
    # Deterministic, generically non-orthogonal start direction.
    v = np.cos(np.arange(1, n + 1, dtype=float))
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        v = np.ones(n)
        nrm = np.sqrt(float(n))
    v = v / nrm
    lam = 0.0
    for _ in range(max_iter):
        w = M @ v
        wn = np.linalg.norm(w)
        if wn == 0.0:
            return 0.0
        v = w / wn
        lam_new = float(v @ (M @ v))
        if abs(lam_new - lam) <= tol * max(lam_new, 1.0):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0)))


def stability_profile(
    A: np.ndarray,
    nu: float | None = None,
    tol: float = 1e-10,
    max_terms: int = 1_000_000,
) -> StabilityProfile:
    """Compute rho(A), the truncated series J(A) = sum_t ||A^t||, and tau(A, nu).

    The series is truncated once the running tail bound tau * nu^(k+1) / (1 - nu)
    falls below tol; by construction ||A^t|| <= tau * nu^t for all computed t,
    so the truncation error is at most tol.

    Args:
        A: square matrix.
        nu: decay rate in (rho(A), 1); defaults to (1 + rho(A)) / 2.
        tol: absolute tolerance on the truncated tail of the series.
        max_terms: iteration cap.

    Raises:
        UnstableMatrix: if rho(A) >= 1 or rho(A) >= nu.
        NotConverged: if the cap is reached before truncation.
    """
    A = np.asarray(A, dtype=float)
    rho = spectral_radius(A)
    if rho >= 1.0:
        raise UnstableMatrix(f"spectral radius {rho} >= 1")
    if nu is None:
        nu = (1.0 + rho) / 2.0
    if not (0.0 < nu < 1.0):
        raise ValueError(f"nu must lie in (0, 1), got {nu}")
    if rho >= nu:
        raise UnstableMatrix(f"spectral radius {rho} >= nu {nu}")

    j_gain = 0.0
    tau = 0.0
    M = np.eye(A.shape[0])
    nu_k = 1.0
    for _ in range(max_terms):
        nrm = spectral_norm(M)
        j_gain += nrm
        tau = max(tau, nrm / nu_k)
        if nrm == 0.0 or tau * nu_k * nu / (1.0 - nu) < tol:
            return StabilityProfile(rho=rho, j_gain=j_gain, tau=tau, nu=nu)
        M = M @ A
        nu_k *= nu
    raise NotConverged("stability_profile hit the term cap before the tail bound")


def solve_discrete_lyapunov(
    A: np.ndarray, Q: np.ndarray, max_iter: int = 200
) -> np.ndarray:
    """Solve S = A S A' + Q for Schur-stable A via the doubling iteration.

    Each step maps (S, M) -> (S + M S M', M^2), which squares the effective
    power of A and converges in O(log(1/tol)) steps. S is symmetrized every
    step.

    Raises:
        UnstableMatrix: if rho(A) >= 1.
        NotConverged: if the residual tolerance is not met within the cap.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if spectral_radius(A) >= 1.0:
        raise UnstableMatrix("Lyapunov equation requires rho(A) < 1")
    S = 0.5 * (Q + Q.T)
    M = A.copy()
    for _ in range(max_iter):
        update = M @ S @ M.T
        S_new = S + update
        S_new = 0.5 * (S_new + S_new.T)
        if np.linalg.norm(update, "fro") <= 1e-16 * max(
            1.0, np.linalg.norm(S_new, "fro")
        ):
            S = S_new
            break
        S = S_new
        M = M @ M
    residual = np.linalg.norm(S - (A @ S @ A.T + Q), "fro")
    if residual > 1e-10 * max(1.0, np.linalg.norm(S, "fro")):
        raise NotConverged(f"Lyapunov residual {residual} above tolerance")
    return S


def solve_dare(
    A: np.ndarray,
    B: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    rel_tol: float = 1e-10,
    max_iter: int = 1_000_000,
) -> RiccatiSolution:
    """Solve the discrete algebraic Riccati equation by fixed-point iteration.

    Iterates P <- A'PA - A'PB (B'PB + R)^{-1} B'PA + Q from P_0 = Q until the
    relative change falls below rel_tol, then forms the LQR gain
    K = -(B'PB + R)^{-1} B'PA.

    Raises:
        NotConverged: iteration cap reached before tolerance.
        NotStabilizing: the resulting closed loop A + BK has rho >= 1.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    P = 0.5 * (Q + Q.T)
    for _ in range(max_iter):
        BtP = B.T @ P
        gain_core = np.linalg.solve(BtP @ B + R, BtP @ A)
        P_new = A.T @ P @ A - (BtP @ A).T @ gain_core + Q
        P_new = 0.5 * (P_new + P_new.T)
        delta = np.linalg.norm(P_new - P, "fro")
        P = P_new
        if delta <= rel_tol * max(1.0, np.linalg.norm(P, "fro")):
            break
    else:
        raise NotConverged("DARE fixed-point iteration hit the cap")
    BtP = B.T @ P
    K = -np.linalg.solve(BtP @ B + R, BtP @ A)
    rho_closed = spectral_radius(A + B @ K)
    if rho_closed >= 1.0:
        raise NotStabilizing(f"closed-loop spectral radius {rho_closed} >= 1")
    return RiccatiSolution(P=P, K=K, rho_closed=rho_closed)


def pseudo_inverse(M: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """Moore-Penrose pseudo-inverse via SVD.

    Singular values below rel_tol * sigma_max * max(rows, cols) are zeroed.
    """
    M = np.asarray(M, dtype=float)
    if M.size == 0 or not np.any(M):
        return np.zeros((M.shape[1], M.shape[0]))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    cutoff = rel_tol * s[0] * max(M.shape)
    s_inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    return (Vt.T * s_inv) @ U.T


def logspace(lo_exp: float, hi_exp: float, n: int) -> np.ndarray:
    """n values 10^e for e linearly spaced from lo_exp to hi_exp inclusive."""
    if n < 1:
        raise ValueError("logspace requires n >= 1")
    if n == 1:
        return np.array([10.0**lo_exp])
    return 10.0 ** np.linspace(lo_exp, hi_exp, n)
