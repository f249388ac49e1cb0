import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringloc.errors import ConfigError
from ringloc.mcl import (Estimate, LocalizationRun, MclConfig, ParticleSet, StepResult,
                         effective_sample_size, estimate, init_uniform, likelihood, predict,
                         resample, run_global_localization, step_rng, systematic_indices,
                         update_weights)
from ringloc.prior_map import build_map
from ringloc.representation import HistogramConfig
from ringloc.scan_model import Pose2, wrap_angle
from ringloc.siamese_net import NetworkConfig, NetworkParams


def random_set(rng, n):
    poses = np.column_stack([rng.uniform(-10, 10, n), rng.uniform(-5, 5, n),
                             rng.uniform(-math.pi, math.pi, n)])
    w = rng.uniform(0.1, 1.0, n)
    return ParticleSet(poses, w / w.sum())


class TestInit:
    def test_single_particle(self):
        ps = init_uniform((0, 0, 1, 1), 1, seed=0)
        assert len(ps) == 1 and ps.weights[0] == 1.0

    def test_mean_near_centre(self):
        ps = init_uniform((-20.0, 0.0, 40.0, 10.0), 1000, seed=5)
        assert abs(ps.poses[:, 0].mean() - 10.0) < 3 * (60.0 / math.sqrt(12)) / math.sqrt(1000)
        assert np.all((ps.poses[:, 2] > -math.pi) & (ps.poses[:, 2] <= math.pi))

    def test_seeded(self):
        a, b = init_uniform((0, 0, 5, 5), 50, 3), init_uniform((0, 0, 5, 5), 50, 3)
        assert np.array_equal(a.poses, b.poses)

    def test_bad_bounds(self):
        with pytest.raises(ConfigError):
            init_uniform((1, 0, 0, 1), 5)


class TestPredict:
    def test_zero_motion(self, rng):
        ps = random_set(rng, 20)
        out = predict(ps, Pose2(), 0.0, 0.0, step_rng(0, 1))
        np.testing.assert_array_equal(out.poses, ps.poses)
        np.testing.assert_array_equal(out.weights, ps.weights)

    def test_advance_along_heading(self, rng):
        ps = random_set(rng, 20)
        out = predict(ps, Pose2(1.0, 0.0, 0.0), 0.0, 0.0, step_rng(0, 1))
        np.testing.assert_allclose(out.poses[:, 0] - ps.poses[:, 0], np.cos(ps.poses[:, 2]),
                                   atol=1e-14)
        np.testing.assert_allclose(out.poses[:, 1] - ps.poses[:, 1], np.sin(ps.poses[:, 2]),
                                   atol=1e-14)

    def test_noise_grows_spread(self):
        ps = ParticleSet(np.zeros((200, 3)), np.full(200, 1 / 200))
        grew = 0
        for trial in range(100):
            out = predict(ps, Pose2(0.5, 0.0, 0.0), 0.05, 0.01, step_rng(trial, 1))
            grew += np.trace(np.cov(out.poses[:, :2].T)) > np.trace(np.cov(ps.poses[:, :2].T))
        assert grew == 100


class TestUpdate:
    def test_all_at_observation(self):
        ps = ParticleSet(np.tile([3.0, 4.0, 0.0], (5, 1)), np.full(5, 0.2))
        np.testing.assert_array_equal(update_weights(ps, Pose2(3.0, 4.0, 1.0), 2.0).weights,
                                      np.full(5, 0.2))

    def test_gaussian_ratio(self):
        ps = ParticleSet([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]], [0.5, 0.5])
        w = update_weights(ps, Pose2(0.0, 0.0, 0.0), 2.0).weights
        assert w[0] / w[1] == pytest.approx(math.exp(0.5), rel=1e-15)

    def test_against_oracle(self, rng):
        ps = random_set(rng, 40)
        z = Pose2(1.0, -2.0, 0.3)
        raw = [w * math.exp(-((x - 1.0) ** 2 + (y + 2.0) ** 2) / (2 * 1.5 ** 2))
               for (x, y, _), w in zip(ps.poses, ps.weights)]
        total = sum(raw)
        np.testing.assert_allclose(update_weights(ps, z, 1.5).weights,
                                   [r / total for r in raw], rtol=0, atol=1e-12)

    def test_underflow_resets(self):
        ps = ParticleSet([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], [0.5, 0.5])
        out = update_weights(ps, Pose2(1e6, 0.0, 0.0), 0.1)
        assert out.diverged
        np.testing.assert_array_equal(out.weights, [0.5, 0.5])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-100.0, 100.0))
    def test_observation_yaw_ignored(self, seed, yaw):
        rng = np.random.default_rng(seed)
        ps = random_set(rng, 30)
        z = Pose2(*rng.uniform(-5, 5, 2), 0.0)
        a = update_weights(ps, z, 2.0).weights
        b = update_weights(ps, replace(z, yaw=yaw), 2.0).weights
        assert a.tobytes() == b.tobytes()

    def test_normalized(self, rng):
        ps = update_weights(random_set(rng, 100), Pose2(0.0, 0.0, 0.0), 3.0)
        assert abs(ps.weights.sum() - 1.0) < 1e-9

    def test_likelihood_peak(self):
        ps = ParticleSet([[0.0, 0.0, 1.0]], [1.0])
        assert likelihood(ps, Pose2(0.0, 0.0, -2.0), 1.0)[0] == 1.0


class TestResample:
    def test_spec_example_any_offset(self):
        for offset in np.linspace(0.0, 0.25, 101)[:-1]:
            idx = systematic_indices([0.5, 0.25, 0.25], offset, count=4)
            assert np.bincount(idx, minlength=3).tolist() == [2, 1, 1]

    def test_single_heavy_particle(self):
        ps = ParticleSet(np.arange(15.0).reshape(5, 3), [0, 0, 1.0, 0, 0])
        out = resample(ps, step_rng(0, 0))
        assert np.all(out.poses == ps.poses[2]) and np.all(out.weights == 0.2)

    def test_uniform_weights_preserve_count(self, rng):
        ps = random_set(rng, 50)
        ps = ParticleSet(ps.poses, np.full(50, 0.02))
        out = resample(ps, step_rng(1, 2))
        assert len(out) == 50
        assert np.array_equal(np.sort(systematic_indices(ps.weights, 0.01)), np.arange(50))

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6))
    def test_unbiased_over_offsets(self, raw):
        w = np.array(raw) / sum(raw)
        n = len(w)
        grid = (np.arange(4000) + 0.5) / (4000 * n)
        copies = np.zeros(n)
        for u in grid:
            copies += np.bincount(systematic_indices(w, u), minlength=n)
        np.testing.assert_allclose(copies / len(grid), n * w, atol=2e-3)

    def test_ess(self):
        assert effective_sample_size([0.25] * 4) == pytest.approx(4.0)
        assert effective_sample_size([1.0, 0.0]) == 1.0


class TestEstimate:
    def test_identical_particles(self):
        ps = ParticleSet(np.tile([1.0, 2.0, 0.5], (10, 1)), np.full(10, 0.1))
        est = estimate(ps)
        assert (est.pose.x, est.pose.y) == (1.0, 2.0) and est.spread == 0.0 and est.converged
        assert est.pose.yaw == pytest.approx(0.5, abs=1e-15)

    def test_opposed_headings_degenerate(self):
        ps = ParticleSet([[0.0, 0.0, math.pi / 2], [0.0, 0.0, -math.pi / 2]], [0.5, 0.5])
        est = estimate(ps)
        assert est.degenerate and not est.converged

    def test_against_oracle(self, rng):
        ps = random_set(rng, 30)
        w, (x, y, t) = ps.weights, ps.poses.T
        mx, my = sum(w * x), sum(w * y)
        yaw = math.atan2(sum(w * np.sin(t)), sum(w * np.cos(t)))
        spread = math.sqrt(sum(w * ((x - mx) ** 2 + (y - my) ** 2)))
        est = estimate(ps, convergence_radius=100.0)
        assert est.pose.x == pytest.approx(mx, abs=1e-12)
        assert est.pose.y == pytest.approx(my, abs=1e-12)
        assert est.pose.yaw == pytest.approx(yaw, abs=1e-12)
        assert est.spread == pytest.approx(spread, abs=1e-12) and est.converged

    def test_circular_mean_across_wrap(self):
        ps = ParticleSet([[0, 0, math.pi - 0.1], [0, 0, -math.pi + 0.1]], [0.5, 0.5])
        assert abs(wrap_angle(estimate(ps).pose.yaw - math.pi)) < 1e-12


class TestRun:
    @pytest.fixture(scope="class")
    @staticmethod
    def corridor(street_scans):
        poses, scans = street_scans
        params = NetworkParams.initialize(NetworkConfig((8, 80), ((3, 3, 2, 4),), (16,), 8))
        prior = build_map(scans, poses, params, keep_cloud=False)
        deltas = [Pose2()] + [a.between(b) for a, b in zip(poses, poses[1:])]
        return prior, params, list(zip(scans, deltas)), poses

    def test_first_observation_concentrates(self, corridor):
        prior, params, stream, poses = corridor
        cfg = MclConfig(particle_count=500, sigma_obs=1.0)
        run = run_global_localization(prior, stream[:1], params, HistogramConfig(), cfg)
        first = run.steps[0]
        assert first.accepted and first.distance == 0.0 and first.resampled
        assert first.estimate.pose.distance_to(poses[0]) < 3 * cfg.sigma_obs
        assert first.estimate.spread < 2 * cfg.sigma_obs

    def test_no_accepted_observations(self, corridor):
        prior, params, stream, _ = corridor
        cfg = MclConfig(particle_count=200, sigma_trans=0.0, sigma_rot=0.0, seed=4)
        run = run_global_localization(prior, stream, params, HistogramConfig(), cfg, tau=-1.0)
        assert run.updates() == 0 and run.first_converged() is None
        expected = init_uniform(prior.bounds(cfg.init_margin), 200, 4)
        for _, delta in stream[1:]:
            expected = predict(expected, delta, 0.0, 0.0, None)
        np.testing.assert_array_equal(run.particles.poses, expected.poses)

    def test_seed_determinism(self, corridor):
        prior, params, stream, _ = corridor
        cfg = MclConfig(particle_count=100, seed=9)
        a = run_global_localization(prior, stream, params, HistogramConfig(), cfg)
        b = run_global_localization(prior, stream, params, HistogramConfig(), cfg)
        assert a.steps == b.steps
        assert np.array_equal(a.particles.poses, b.particles.poses)


class TestBookkeeping:
    def test_first_converged(self):
        def step(k, ok):
            return StepResult(k, Estimate(Pose2(), 0.0, ok), 0, 0.0, True, 1.0, False)

        run = LocalizationRun([step(0, False), step(1, True), step(2, False), step(3, True),
                               step(4, True)])
        assert run.first_converged() == 3 and run.updates() == 5

    def test_step_streams_independent(self):
        assert step_rng(1, 2).uniform() == step_rng(1, 2).uniform()
        assert step_rng(1, 2).uniform() != step_rng(1, 3).uniform()

    @pytest.mark.parametrize("kw", [{"particle_count": 0}, {"sigma_obs": 0.0},
                                    {"sigma_trans": -1.0}, {"convergence_radius": 0.0}])
    def test_config_validation(self, kw):
        with pytest.raises(ConfigError):
            MclConfig(**kw)

    def test_particle_views(self):
        ps = ParticleSet([[1.0, 2.0, 0.0]], [1.0])
        assert ps.particles()[0].pose == Pose2(1.0, 2.0, 0.0)
        with pytest.raises(ValueError):
            ParticleSet([[0.0, 0.0, 0.0]], [0.5, 0.5])
