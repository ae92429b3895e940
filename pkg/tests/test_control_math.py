"""Tests for solvers and matrix utilities, oracle values first."""

import numpy as np
import pytest

from mtil import control_math as cm
from mtil.errors import UnstableMatrix


def scalar_dare_oracle(a, b, q, r, tol=1e-14):
    """Independent scalar fixed-point oracle p <- a^2 p - a^2 p^2/(p + r) + q."""
    p = q
    for _ in range(100_000):
        p_new = a * a * p - (a * b * p) ** 2 / (b * b * p + r) + q
        if abs(p_new - p) < tol:
            return p_new
        p = p_new
    raise AssertionError("oracle did not converge")


class TestSpectralBasics:
    def test_spectral_radius_diag(self):
        assert cm.spectral_radius(np.diag([0.3, -0.8])) == pytest.approx(0.8)

    def test_spectral_norm_matches_svd(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            M = rng.standard_normal((5, 4))
            assert cm.spectral_norm(M) == pytest.approx(
                np.linalg.norm(M, 2), rel=1e-9
            )

    def test_spectral_norm_zero(self):
        assert cm.spectral_norm(np.zeros((3, 3))) == 0.0


class TestStabilityProfile:
    def test_zero_matrix(self):
        prof = cm.stability_profile(np.zeros((2, 2)), nu=0.5)
        assert prof.rho == 0.0
        assert prof.j_gain == pytest.approx(1.0)
        assert prof.tau == pytest.approx(1.0)

    def test_nilpotent(self):
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        prof = cm.stability_profile(A, nu=0.5)
        assert prof.rho == pytest.approx(0.0)
        assert prof.j_gain == pytest.approx(2.0)
        assert prof.tau == pytest.approx(2.0)

    def test_diagonal_geometric_sum(self):
        # Direct summation oracle: ||A^t|| = 0.9^t, sum = 1 / (1 - 0.9) = 10.
        prof = cm.stability_profile(np.diag([0.5, -0.9]), nu=0.95)
        assert prof.rho == pytest.approx(0.9)
        assert prof.j_gain == pytest.approx(10.0, abs=1e-8)

    def test_default_nu(self):
        prof = cm.stability_profile(np.diag([0.5, 0.0]))
        assert prof.nu == pytest.approx(0.75)
        assert prof.rho < prof.nu < 1.0

    def test_rejects_unstable(self):
        with pytest.raises(UnstableMatrix):
            cm.stability_profile(np.diag([1.0, 0.5]))
        with pytest.raises(UnstableMatrix):
            cm.stability_profile(np.diag([0.9, 0.5]), nu=0.8)

    def test_tolerance_monotonicity(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            A = rng.standard_normal((4, 4))
            A *= 0.9 / cm.spectral_radius(A)
            j1 = cm.stability_profile(A, tol=1e-10).j_gain
            j2 = cm.stability_profile(A, tol=1e-12).j_gain
            assert abs(j1 - j2) < 1e-8

    def test_tau_envelope(self):
        rng = np.random.default_rng(5)
        A = rng.standard_normal((4, 4))
        A *= 0.8 / cm.spectral_radius(A)
        prof = cm.stability_profile(A)
        M = np.eye(4)
        for k in range(30):
            assert cm.spectral_norm(M) <= prof.tau * prof.nu**k * (1 + 1e-9)
            M = M @ A


class TestLyapunov:
    def test_scalar_geometric(self):
        S = cm.solve_discrete_lyapunov(np.array([[0.5]]), np.array([[1.0]]))
        assert S[0, 0] == pytest.approx(4.0 / 3.0, rel=1e-12)

    def test_zero_dynamics(self):
        Q = np.array([[2.0, 0.5], [0.5, 1.0]])
        S = cm.solve_discrete_lyapunov(np.zeros((2, 2)), Q)
        np.testing.assert_allclose(S, Q, atol=1e-14)

    def test_fixed_point_oracle(self):
        A = np.array([[0.5, 0.1], [0.0, 0.3]])
        # Independent oracle: plain fixed-point iteration to a tight tail.
        S_ref = np.zeros((2, 2))
        for _ in range(10_000):
            S_next = A @ S_ref @ A.T + np.eye(2)
            if np.linalg.norm(S_next - S_ref, "fro") < 1e-14:
                break
            S_ref = S_next
        S = cm.solve_discrete_lyapunov(A, np.eye(2))
        np.testing.assert_allclose(S, S_ref, atol=1e-12)

    def test_rejects_unstable(self):
        with pytest.raises(UnstableMatrix):
            cm.solve_discrete_lyapunov(np.diag([1.1, 0.2]), np.eye(2))

    def test_random_residuals_and_symmetry(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n = int(rng.integers(1, 7))
            A = rng.standard_normal((n, n))
            rho = cm.spectral_radius(A)
            if rho > 0:
                A *= rng.uniform(0.1, 0.95) / rho
            M = rng.standard_normal((n, n))
            Q = M @ M.T
            S = cm.solve_discrete_lyapunov(A, Q)
            resid = np.linalg.norm(S - (A @ S @ A.T + Q), "fro")
            assert resid <= 1e-10 * max(1.0, np.linalg.norm(S, "fro"))
            assert np.abs(S - S.T).max() <= 1e-12 * max(1.0, np.abs(S).max())


class TestDare:
    def test_scalar_oracle(self):
        sol = cm.solve_dare(
            np.array([[0.5]]), np.array([[1.0]]), np.eye(1), np.eye(1)
        )
        p_ref = scalar_dare_oracle(0.5, 1.0, 1.0, 1.0)
        assert sol.P[0, 0] == pytest.approx(p_ref, abs=1e-9)
        assert sol.P[0, 0] == pytest.approx(1.132782, abs=1e-5)
        assert sol.K[0, 0] == pytest.approx(-0.265565, abs=1e-5)
        assert sol.rho_closed == pytest.approx(0.234435, abs=1e-5)

    def test_zero_cost(self):
        sol = cm.solve_dare(
            np.diag([0.5, 0.2]), np.eye(2), np.zeros((2, 2)), np.eye(2)
        )
        np.testing.assert_allclose(sol.P, 0.0, atol=1e-12)
        np.testing.assert_allclose(sol.K, 0.0, atol=1e-12)

    def test_no_actuation_reduces_to_lyapunov(self):
        sol = cm.solve_dare(
            np.array([[0.5]]), np.array([[0.0]]), np.eye(1), np.eye(1)
        )
        assert sol.P[0, 0] == pytest.approx(4.0 / 3.0, rel=1e-9)
        assert sol.K[0, 0] == 0.0

    def test_random_residuals(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(1, 7))
            m = int(rng.integers(1, 4))
            A = rng.standard_normal((n, n))
            A *= rng.uniform(0.3, 1.2) / max(cm.spectral_radius(A), 1e-9)
            B = rng.standard_normal((n, m))
            sol = cm.solve_dare(A, B, np.eye(n), np.eye(m))
            inner = np.linalg.solve(B.T @ sol.P @ B + np.eye(m), B.T @ sol.P @ A)
            resid = np.linalg.norm(
                sol.P - (A.T @ sol.P @ A - (B.T @ sol.P @ A).T @ inner + np.eye(n)),
                "fro",
            )
            assert resid <= 1e-8 * max(1.0, np.linalg.norm(sol.P, "fro"))
            assert sol.rho_closed < 1.0


class TestPseudoInverse:
    def test_identity(self):
        np.testing.assert_allclose(cm.pseudo_inverse(np.eye(3)), np.eye(3))

    def test_diag_with_zero(self):
        np.testing.assert_allclose(
            cm.pseudo_inverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0])
        )

    def test_tall_full_rank(self):
        G = np.random.default_rng(0).standard_normal((50, 4))
        np.testing.assert_allclose(
            cm.pseudo_inverse(G) @ G, np.eye(4), atol=1e-8
        )

    def test_penrose_identities_all_ranks(self):
        rng = np.random.default_rng(9)
        cases = []
        for _ in range(10):
            cases.append(rng.standard_normal((6, 4)))
            low = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 4))
            cases.append(low)
        cases.append(np.zeros((3, 5)))
        for M in cases:
            P = cm.pseudo_inverse(M)
            scale = max(np.linalg.norm(M, "fro"), 1e-30)
            assert np.linalg.norm(M @ P @ M - M, "fro") <= 1e-8 * scale
            assert np.linalg.norm(P @ M @ P - P, "fro") <= 1e-8 * max(
                np.linalg.norm(P, "fro"), 1e-30
            )
            np.testing.assert_allclose(M @ P, (M @ P).T, atol=1e-8)
            np.testing.assert_allclose(P @ M, (P @ M).T, atol=1e-8)


class TestLogspace:
    def test_basic_grid(self):
        np.testing.assert_allclose(
            cm.logspace(-2, 2, 5), [0.01, 0.1, 1.0, 10.0, 100.0]
        )

    def test_degenerate_range(self):
        np.testing.assert_allclose(cm.logspace(0, 0, 3), [1.0, 1.0, 1.0])

    def test_single_point(self):
        np.testing.assert_allclose(cm.logspace(-2, 2, 1), [0.01])

    def test_constant_ratio(self):
        vals = cm.logspace(-2, 2, 10)
        ratios = vals[1:] / vals[:-1]
        np.testing.assert_allclose(ratios, 10 ** (4 / 9), rtol=1e-12)
