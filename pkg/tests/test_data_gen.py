"""Tests for seeded streams, trajectory sampling, and coupled rollouts."""

import numpy as np
import pytest

from mtil import lti_env
from mtil.data_gen import (
    NoiseRealization,
    SeedTree,
    batch_to_csv,
    cholesky_factor,
    coupled_rollout,
    derive_stream,
    rollout_expert,
    sample_noise,
    stack_data,
    unstack_data,
)
from mtil.errors import CholeskyFailure


def scalar_setup(a=0.8, k=-0.3, sigma_w=1.0, sigma_z=0.0):
    system = lti_env.LinearSystem(A=np.array([[a]]), B=np.array([[1.0]]))
    task = lti_env.make_task(
        system, np.array([[k]]), sigma_w=np.array([[sigma_w]]), sigma_z=sigma_z
    )
    return system, task


class TestSeedTree:
    def test_same_path_identical(self):
        tree = SeedTree(root=123)
        a = derive_stream(tree, "traj", 0).standard_normal(100)
        b = derive_stream(tree, "traj", 0).standard_normal(100)
        assert np.array_equal(a, b)

    def test_distinct_paths_differ(self):
        tree = SeedTree(root=123)
        a = derive_stream(tree, "traj", 0).standard_normal(1)
        b = derive_stream(tree, "traj", 1).standard_normal(1)
        assert a[0] != b[0]

    def test_clt_mean(self):
        draws = derive_stream(SeedTree(root=9), "x").standard_normal(1_000_000)
        assert abs(draws.mean()) < 4 / np.sqrt(1_000_000)

    def test_cross_correlation_smoke(self):
        tree = SeedTree(root=77)
        a = derive_stream(tree, "s", 0).standard_normal(100_000)
        b = derive_stream(tree, "s", 1).standard_normal(100_000)
        corr = np.corrcoef(a, b)[0, 1]
        assert abs(corr) < 0.01

    def test_nested_children(self):
        tree = SeedTree(root=1)
        a = tree.child("a", 0).child("b", 1).stream().standard_normal(3)
        b = tree.child("a", 0).child("b", 1).stream().standard_normal(3)
        c = tree.child("a", 1).child("b", 1).stream().standard_normal(3)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestCholeskyFactor:
    def test_zero_matrix(self):
        np.testing.assert_allclose(cholesky_factor(np.zeros((3, 3))), 0.0)

    def test_near_singular_jitter(self):
        S = np.diag([1.0, 0.0])
        L = cholesky_factor(S)
        np.testing.assert_allclose(L @ L.T, S, atol=1e-9)

    def test_indefinite_fails(self):
        with pytest.raises(CholeskyFailure):
            cholesky_factor(np.diag([1.0, -1.0]))


class TestSampleNoise:
    def test_repeatable(self):
        system, task = scalar_setup(sigma_z=0.5)
        tree = SeedTree(root=4)
        n1 = sample_noise(system, task, 10, tree.child("n").stream())
        n2 = sample_noise(system, task, 10, tree.child("n").stream())
        assert np.array_equal(n1.x0, n2.x0)
        assert np.array_equal(n1.w, n2.w)
        assert np.array_equal(n1.z, n2.z)

    def test_zero_process_noise(self):
        system = lti_env.LinearSystem(A=np.array([[0.5]]), B=np.array([[1.0]]))
        task = lti_env.ExpertTask(
            K=np.array([[0.0]]),
            sigma_w=np.zeros((1, 1)),
            sigma_z=1.0,
            sigma_x=np.array([[1.0]]),
        )
        noise = sample_noise(system, task, 20, np.random.default_rng(0))
        assert np.all(noise.w == 0.0)

    def test_actuator_noise_covariance(self):
        system, task = scalar_setup(sigma_z=0.7)
        noise = sample_noise(system, task, 100_000, np.random.default_rng(1))
        emp = noise.z.T @ noise.z / noise.z.shape[0]
        target = 0.49 * np.eye(1)
        assert np.linalg.norm(emp - target, "fro") <= 0.05 * np.linalg.norm(
            target, "fro"
        )


class TestRolloutExpert:
    def test_zero_noise_zero_state(self):
        system = lti_env.LinearSystem(A=np.array([[0.5]]), B=np.array([[1.0]]))
        task = lti_env.ExpertTask(
            K=np.array([[-0.2]]),
            sigma_w=np.zeros((1, 1)),
            sigma_z=0.0,
            sigma_x=np.zeros((1, 1)),
        )
        batch = rollout_expert(
            system, task, 5, 3, np.random.default_rng(0), x0=np.zeros(1)
        )
        assert np.all(batch.states == 0.0)
        assert np.all(batch.inputs == 0.0)

    def test_forced_x0_power_recurrence(self):
        base = lti_env.get_preset("hong2021")
        gains = lti_env.synthesize_expert_family(base, [1.0, 2.0], np.eye(2))
        task_full = lti_env.make_task(base, gains[0], sigma_z=1.0)
        task = lti_env.ExpertTask(
            K=task_full.K,
            sigma_w=np.zeros((4, 4)),
            sigma_z=0.0,
            sigma_x=task_full.sigma_x,
        )
        v = np.array([1.0, -2.0, 0.5, 0.25])
        batch = rollout_expert(base, task, 6, 1, np.random.default_rng(0), x0=v)
        A_cl = base.A + base.B @ task.K
        expected = v.copy()
        for t in range(6):
            np.testing.assert_allclose(batch.states[0, t], expected, atol=1e-10)
            expected = A_cl @ expected

    def test_replay_bit_identical(self):
        system, task = scalar_setup(sigma_w=1.0, sigma_z=0.5)
        tree = SeedTree(root=11)
        b1 = rollout_expert(system, task, 7, 4, tree.child("r").stream())
        b2 = rollout_expert(system, task, 7, 4, tree.child("r").stream())
        assert np.array_equal(b1.states, b2.states)
        assert np.array_equal(b1.inputs, b2.inputs)

    def test_plant_recurrence_exact_without_process_noise(self):
        # With sigma_w = 0, x[t+1] = A x[t] + B u[t] exactly.
        system = lti_env.LinearSystem(A=np.array([[0.5]]), B=np.array([[1.0]]))
        task = lti_env.ExpertTask(
            K=np.array([[-0.2]]),
            sigma_w=np.zeros((1, 1)),
            sigma_z=1.0,
            sigma_x=np.eye(1),
        )
        batch = rollout_expert(system, task, 8, 2, np.random.default_rng(5))
        for i in range(2):
            for t in range(7):
                lhs = batch.states[i, t + 1]
                rhs = system.A @ batch.states[i, t] + system.B @ batch.inputs[i, t]
                assert np.array_equal(lhs, rhs)

    def test_controller_recurrence_exact_without_actuator_noise(self):
        # With sigma_z = 0, u[t] = K x[t] exactly.
        system, task = scalar_setup(sigma_w=1.0, sigma_z=0.0)
        batch = rollout_expert(system, task, 8, 2, np.random.default_rng(6))
        np.testing.assert_array_equal(
            batch.inputs, np.einsum("ij,ntj->nti", task.K, batch.states)
        )


class TestStacking:
    def test_row_order_single_trajectory(self):
        batch = rollout_expert(
            *scalar_setup(sigma_z=0.5), 2, 1, np.random.default_rng(0)
        )
        stacked = stack_data(batch)
        np.testing.assert_array_equal(stacked.X[0], batch.states[0, 0])
        np.testing.assert_array_equal(stacked.X[1], batch.states[0, 1])

    def test_row_order_two_trajectories(self):
        batch = rollout_expert(
            *scalar_setup(sigma_z=0.5), 1, 2, np.random.default_rng(0)
        )
        stacked = stack_data(batch)
        np.testing.assert_array_equal(stacked.X[0], batch.states[0, 0])
        np.testing.assert_array_equal(stacked.X[1], batch.states[1, 0])

    def test_round_trip(self):
        batch = rollout_expert(
            *scalar_setup(sigma_z=0.5), 3, 4, np.random.default_rng(0)
        )
        back = unstack_data(stack_data(batch), 4, 3)
        assert np.array_equal(back.states, batch.states)
        assert np.array_equal(back.inputs, batch.inputs)


class TestCoupledRollout:
    def test_identical_gains_identical_paths(self):
        system, task = scalar_setup(sigma_w=1.0, sigma_z=0.5)
        noise = sample_noise(system, task, 30, np.random.default_rng(2))
        xs, xh, nonfinite = coupled_rollout(system, task.K, task.K, noise, 30)
        assert not nonfinite
        assert np.array_equal(xs, xh)

    def test_scalar_closed_form(self):
        system, task = scalar_setup()
        eps = 0.1
        noise = NoiseRealization(
            x0=np.array([1.0]), w=np.zeros((10, 1)), z=np.zeros((10, 1))
        )
        xs, xh, _ = coupled_rollout(
            system, task.K, task.K + eps, noise, 10
        )
        for t in range(11):
            expected = 0.5**t - (0.5 + eps) ** t
            assert xs[t, 0] - xh[t, 0] == pytest.approx(expected, abs=1e-12)

    def test_noise_cancels_for_equal_gains(self):
        system, task = scalar_setup(sigma_w=4.0, sigma_z=1.0)
        noise = sample_noise(system, task, 50, np.random.default_rng(3))
        xs, xh, _ = coupled_rollout(system, task.K, task.K, noise, 50)
        assert np.all(xs - xh == 0.0)

    def test_divergent_rollout_flags_nonfinite(self):
        system, task = scalar_setup()
        noise = NoiseRealization(
            x0=np.array([1.0]), w=np.zeros((5000, 1)), z=np.zeros((5000, 1))
        )
        xs, xh, nonfinite = coupled_rollout(
            system, task.K, np.array([[10.0]]), noise, 5000
        )
        assert nonfinite
        assert xs.shape == xh.shape
        assert np.all(np.isfinite(xh))


class TestCsvExport:
    def test_batch_csv(self, tmp_path):
        batch = rollout_expert(
            *scalar_setup(sigma_z=0.5), 2, 2, np.random.default_rng(0)
        )
        path = tmp_path / "batch.csv"
        batch_to_csv(batch, str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == "task,traj,t,x_0,u_0"
        assert len(lines) == 1 + 2 * 2
