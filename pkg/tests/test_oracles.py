import csv

import numpy as np
import pytest

from kernel_bayes.errors import InputError
from kernel_bayes.oracles import (
    GaussianJointConfig,
    RotationDynamicsConfig,
    gaussian_conjugate_posterior_mean,
    kalman_filter_oracle,
    simulate_linear_gaussian,
    simulate_rotation,
    write_samples_csv,
    write_trajectory_csv,
)


class TestGaussianJoint:
    def test_draw_is_spd(self):
        for d in (1, 2, 5):
            cfg = GaussianJointConfig.draw(d, d)
            assert cfg.V.shape == (2 * d, 2 * d)
            assert np.linalg.eigvalsh(cfg.V).min() >= 2 - 1e-8
            assert np.linalg.eigvalsh(cfg.prior_cov).min() > 0

    def test_mean_vector(self):
        np.testing.assert_array_equal(GaussianJointConfig.draw(2, 0).mean, [0, 0, 1, 1])

    def test_rejects_bad_shape(self):
        with pytest.raises(InputError):
            GaussianJointConfig(2, np.eye(3))

    def test_independent_blocks(self):
        V = np.diag([2.0, 3.0, 4.0, 5.0])
        cfg = GaussianJointConfig(2, V)
        np.testing.assert_allclose(gaussian_conjugate_posterior_mean(cfg, [0.3, -2.0]), 0.0, atol=1e-15)

    def test_scalar_formula(self):
        vxx, vxy, vyy = 3.0, 1.2, 2.5
        cfg = GaussianJointConfig(1, np.array([[vxx, vxy], [vxy, vyy]]))
        y = 0.4
        # Y | X = x ~ N(1 + a x, s2); prior X ~ N(0, p0)
        a = vxy / vxx
        s2 = vyy - vxy**2 / vxx
        p0 = vxx / 2
        expected = p0 * a * (y - 1.0) / (a * a * p0 + s2)
        np.testing.assert_allclose(gaussian_conjugate_posterior_mean(cfg, [y]), [expected], rtol=1e-14)

    def test_affine_in_y(self, rng):
        cfg = GaussianJointConfig.draw(3, 1)
        y1, y2 = rng.standard_normal(3), rng.standard_normal(3)
        f = lambda y: gaussian_conjugate_posterior_mean(cfg, y)
        np.testing.assert_allclose(f(y1 + y2) - f(np.zeros(3)), (f(y1) - f(np.zeros(3))) + (f(y2) - f(np.zeros(3))),
                                   atol=1e-12)

    def test_batch_matches_single(self, rng):
        cfg = GaussianJointConfig.draw(2, 2)
        Y = rng.standard_normal((5, 2))
        batch = gaussian_conjugate_posterior_mean(cfg, Y)
        for i in range(5):
            np.testing.assert_allclose(batch[i], gaussian_conjugate_posterior_mean(cfg, Y[i]), rtol=1e-14)

    def test_likelihood_matches_joint(self):
        cfg = GaussianJointConfig.draw(2, 3)
        g = np.random.default_rng(0)
        X, Y = cfg.sample_joint(200_000, g)
        offset, gain, cov = cfg.likelihood()
        resid = Y - (offset + X @ gain.T)
        np.testing.assert_allclose(np.cov(resid.T), cov, atol=0.05 * np.abs(cov).max())
        np.testing.assert_allclose(X.mean(0), 0.0, atol=0.05 * np.sqrt(cfg.V.max()))

    def test_posterior_mean_by_monte_carlo(self):
        """Regression of X on Y under the prior model recovers the closed form."""
        cfg = GaussianJointConfig.draw(1, 4)
        g = np.random.default_rng(1)
        X = cfg.sample_prior(400_000, g)
        Y = cfg.sample_likelihood(X, g)
        y0 = 1.3
        near = np.abs(Y[:, 0] - y0) < 0.02
        np.testing.assert_allclose(X[near].mean(), gaussian_conjugate_posterior_mean(cfg, [y0])[0], atol=0.05)


class TestRotation:
    def test_noiseless_unit_circle(self):
        traj = simulate_rotation(RotationDynamicsConfig(0.3, 0.0, 1, 0.0, 0.0), 500, 0)
        np.testing.assert_allclose(np.linalg.norm(traj.x, axis=1), 1.0, rtol=1e-14)
        np.testing.assert_array_equal(traj.x, traj.y)

    def test_angle_recursion(self):
        traj = simulate_rotation(RotationDynamicsConfig.preset("a"), 50, 3)
        steps = np.diff(np.unwrap(traj.theta))
        np.testing.assert_allclose(steps, 0.3, atol=1e-12)
        assert np.all((traj.theta >= 0) & (traj.theta < 2 * np.pi))

    def test_oscillation_bounds(self):
        cfg = RotationDynamicsConfig(0.4, 0.4, 8, 0.0, 0.0)
        r = np.linalg.norm(simulate_rotation(cfg, 2000, 1).x, axis=1)
        assert r.min() >= 0.6 - 1e-12 and r.max() <= 1.4 + 1e-12
        assert r.min() < 0.62 and r.max() > 1.38

    def test_noisy_radius_spread(self):
        r = np.linalg.norm(simulate_rotation(RotationDynamicsConfig.preset("b"), 5000, 2).x, axis=1)
        lo, hi = np.percentile(r, [1, 99])
        assert 0.2 < lo < 0.6 and 1.4 < hi < 1.8

    def test_bit_identical(self):
        cfg = RotationDynamicsConfig.preset("b")
        a, b = simulate_rotation(cfg, 100, 9), simulate_rotation(cfg, 100, 9)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)

    def test_presets(self):
        a = RotationDynamicsConfig.preset("a")
        b = RotationDynamicsConfig.preset("b")
        assert (a.eta, a.b, a.sigma_h, a.sigma_o) == (0.3, 0.0, 0.2, 0.2)
        assert (b.eta, b.b, b.M, b.sigma_h, b.sigma_o) == (0.4, 0.4, 8, 0.2, 0.2)
        with pytest.raises(InputError):
            RotationDynamicsConfig.preset("c")

    def test_too_short(self):
        with pytest.raises(InputError):
            simulate_rotation(RotationDynamicsConfig.preset("a"), 1, 0)


class TestKalmanOracle:
    def test_noiseless_recovery(self, rng):
        A = np.array([[0.9, 0.1], [0.0, 0.95]])
        C = np.eye(2)
        Q = np.zeros((2, 2))
        xs, ys = simulate_linear_gaussian(A, C, Q, 1e-14 * np.eye(2), [1.0, 2.0], 30, rng)
        means, _, _ = kalman_filter_oracle(A, C, Q, 1e-14 * np.eye(2), np.zeros(2), np.eye(2), ys)
        np.testing.assert_allclose(means, xs, atol=1e-6)

    def test_riccati_fixed_point(self):
        a, c, q, r = 0.8, 1.0, 0.5, 1.0
        P = 1.0
        for _ in range(500):  # predicted-covariance Riccati iteration
            P = a * a * (P - P * P * c * c / (c * c * P + r)) + q
        K_inf = P * c / (c * c * P + r)
        _, _, gains = kalman_filter_oracle(a, c, q, r, [0.0], [[1.0]], np.zeros((200, 1)))
        np.testing.assert_allclose(gains[-1, 0, 0], K_inf, rtol=1e-10)


class TestCsvWriters:
    def test_trajectory_round_trip(self, tmp_path):
        traj = simulate_rotation(RotationDynamicsConfig.preset("a"), 20, 3)
        est = traj.x + 0.1
        write_trajectory_csv(tmp_path / "t.csv", traj, {"kbr": est})
        with open(tmp_path / "t.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 20
        back = np.array([[float(r["x0"]), float(r["x1"])] for r in rows])
        np.testing.assert_array_equal(back, traj.x)
        np.testing.assert_array_equal([float(r["kbr_1"]) for r in rows], est[:, 1])
        np.testing.assert_array_equal([float(r["theta"]) for r in rows], traj.theta)

    def test_trajectory_length_mismatch(self, tmp_path):
        traj = simulate_rotation(RotationDynamicsConfig.preset("a"), 5, 0)
        with pytest.raises(InputError):
            write_trajectory_csv(tmp_path / "t.csv", traj, {"kbr": np.zeros((4, 2))})

    def test_samples_with_weights(self, tmp_path, rng):
        P = rng.standard_normal((7, 3))
        w = rng.uniform(size=7)
        write_samples_csv(tmp_path / "s.csv", P, w)
        data = np.loadtxt(tmp_path / "s.csv", delimiter=",", skiprows=1)
        np.testing.assert_array_equal(data[:, :3], P)
        np.testing.assert_array_equal(data[:, 3], w)
        with open(tmp_path / "s.csv") as fh:
            assert fh.readline().strip() == "p0,p1,p2,weight"

    def test_samples_weight_length(self, tmp_path):
        with pytest.raises(InputError):
            write_samples_csv(tmp_path / "s.csv", np.zeros((3, 1)), np.ones(2))
