import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringloc.errors import DataError
from ringloc.place_recognition import (PRCurve, SimilarityMatrix, ground_truth_matrix,
                                       localization_gaps, localization_probability_curve,
                                       localization_records, nearest_neighbor_matches,
                                       pr_from_scores, precision_recall, precision_recall_nn,
                                       recognize, similarity_matrix, trajectory_positions)
from ringloc.prior_map import build_map, fingerprint_scans
from ringloc.representation import HistogramConfig
from ringloc.scan_model import Pose2, rotate_scan, simulate_scan
from ringloc.siamese_net import NetworkConfig, NetworkParams


def oracle_pr(sim, gt, exclusion):
    """Per-threshold counting over the evaluated pairs."""
    n = len(sim)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if j - i > exclusion]
    positives = sum(gt[i][j] for i, j in pairs)
    rows = []
    for tau in sorted({sim[i][j] for i, j in pairs}):
        tp = sum(1 for i, j in pairs if sim[i][j] <= tau and gt[i][j])
        fp = sum(1 for i, j in pairs if sim[i][j] <= tau and not gt[i][j])
        p = tp / (tp + fp)
        r = tp / positives
        rows.append((tau, p, r, 2 * p * r / (p + r) if p + r else 0.0))
    return rows


def oracle_gaps(records):
    hits = [pos for pos, ok in records if ok]
    if not records[0][1]:
        hits = [records[0][0]] + hits
    return [b - a for a, b in zip(hits, hits[1:])]


@pytest.fixture(scope="module")
def mapped(street_scans):
    poses, scans = street_scans
    params = NetworkParams.initialize(NetworkConfig((8, 80), ((3, 3, 2, 4),), (16,), 8, seed=2))
    return build_map(scans, poses, params), params


class TestRecognize:
    def test_identical_scan(self, mapped, street_scans):
        prior, params = mapped
        scan = street_scans[1][3]
        m = recognize(prior, scan, params, HistogramConfig(), 0.0)
        assert m.distance == 0.0 and m.accepted
        assert m.observation == prior.frames[m.frame].pose
        assert np.array_equal(prior.frames[m.frame].fingerprint, prior.frames[3].fingerprint)

    def test_rotated_copy(self, mapped, street_scans, rng):
        prior, params = mapped
        for k in (0, 4, 7):
            scan = street_scans[1][k]
            base = recognize(prior, scan, params, HistogramConfig(), math.inf)
            for yaw in rng.uniform(-math.pi, math.pi, 3):
                m = recognize(prior, rotate_scan(scan, yaw), params, HistogramConfig(), math.inf)
                assert m.frame == base.frame and m.distance < 1e-9

    def test_rejection_below_threshold(self, mapped, street, street_scans):
        prior, params = mapped
        # A scan from between two keyframes is never an exact match.
        scan = simulate_scan(street[0], Pose2(4.0, 0.0, 0.0), street_scans[1][0].sensor)
        m = recognize(prior, scan, params, HistogramConfig(), 1e-9)
        assert m.distance > 1e-9 and not m.accepted


class TestSimilarityMatrix:
    def test_identical(self):
        assert not similarity_matrix(np.ones((4, 3))).values.any()

    def test_two_descriptors(self):
        s = similarity_matrix([[0.0, 0.0], [3.0, 4.0]]).values
        np.testing.assert_array_equal(s, [[0.0, 5.0], [5.0, 0.0]])

    def test_random_against_brute_force(self, rng):
        x = rng.normal(size=(100, 6))
        s = similarity_matrix(x).values
        brute = np.array([[math.dist(a, b) for b in x] for a in x])
        np.testing.assert_allclose(s, brute, rtol=0, atol=1e-12)
        assert np.array_equal(s, s.T) and not np.diag(s).any()

    def test_near_duplicates_exact(self, rng):
        x = rng.normal(size=(3, 5)) * 1e3
        x[1] = x[0] + 1e-9
        s = similarity_matrix(x).values
        assert s[0, 1] == pytest.approx(math.dist(x[0], x[1]), rel=1e-6)

    def test_csv(self):
        text = similarity_matrix([[0.0], [2.0]], "x").to_csv()
        assert text == "0.0,2.0\n2.0,0.0\n"

    def test_nn_consistent_with_matrix(self, rng):
        x = rng.normal(size=(40, 4))
        s = similarity_matrix(x).values
        nn, dist = nearest_neighbor_matches(x, exclusion=3)
        for i in range(40):
            allowed = [j for j in range(40) if abs(i - j) > 3]
            j = min(allowed, key=lambda k: (s[i, k], k))
            assert nn[i] == j and dist[i] == pytest.approx(s[i, j], abs=1e-12)

    def test_past_only(self, rng):
        nn, dist = nearest_neighbor_matches(rng.normal(size=(10, 3)), 1, past_only=True)
        assert nn[0] == -1 and nn[1] == -1 and math.isinf(dist[0])
        assert all(0 <= nn[i] < i - 1 for i in range(2, 10))


class TestGroundTruth:
    def test_close_pair(self):
        gt = ground_truth_matrix([Pose2(0, 0, 0), Pose2(1, 0, 0)], 3.0)
        assert gt[0, 1] and gt[1, 0] and not gt[0, 0]

    def test_exclusion_window(self):
        gt = ground_truth_matrix([Pose2(0, 0, 0), Pose2(1, 0, 0)], 3.0, exclusion=1)
        assert not gt.any()

    def test_strict_threshold(self):
        gt = ground_truth_matrix([Pose2(0, 0, 0), Pose2(3, 0, 0)], 3.0)
        assert not gt[0, 1]

    def test_loop_against_oracle(self, rng):
        poses = [Pose2(*rng.uniform(0, 20, 2), 0.0) for _ in range(50)]
        gt = ground_truth_matrix(poses, 3.0, exclusion=2)
        for i in range(50):
            for j in range(50):
                assert gt[i, j] == (poses[i].distance_to(poses[j]) < 3.0 and abs(i - j) > 2)

    def test_bad_p(self):
        with pytest.raises(ValueError):
            ground_truth_matrix([Pose2()], 0.0)


class TestPrecisionRecall:
    def test_separable(self):
        gt = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], bool)
        sim = np.array([[0, 1, 5], [1, 0, 6], [5, 6, 0]], float)
        assert precision_recall(sim, gt).f1_max == 1.0

    def test_constant_scores(self):
        n = 12
        gt = np.zeros((n, n), bool)
        for i, j in [(0, 5), (1, 7), (2, 9), (3, 11), (4, 10)]:
            gt[i, j] = gt[j, i] = True
        curve = precision_recall(np.full((n, n), 2.0), gt)
        q = 5 / (n * (n - 1) / 2)
        assert len(curve.thresholds) == 1
        assert curve.f1[0] == pytest.approx(2 * q / (q + 1), abs=1e-15)

    def test_random_against_oracle(self, rng):
        n = 30
        pts = rng.uniform(0, 10, (n, 2))
        sim = np.round(similarity_matrix(pts + rng.normal(0, 1.0, (n, 2))).values, 1)
        gt = ground_truth_matrix([Pose2(x, y, 0) for x, y in pts], 3.0, 1)
        curve = precision_recall(sim, gt, exclusion=1)
        expected = oracle_pr(sim.tolist(), gt.tolist(), 1)
        got = list(zip(curve.thresholds, curve.precision, curve.recall, curve.f1))
        assert len(got) == len(expected)
        for g, e in zip(got, expected):
            assert g == pytest.approx(e, abs=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_recall_monotone_and_rescaling_invariant(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.uniform(0, 5, 80)
        labels = rng.uniform(size=80) < 0.3
        labels[0] = True
        curve = pr_from_scores(scores, labels)
        assert np.all(np.diff(curve.recall) >= 0)
        assert np.all((curve.precision >= 0) & (curve.precision <= 1))
        assert curve.recall[-1] == 1.0
        rescaled = pr_from_scores(np.exp(2.0 * scores) + 7.0, labels)
        assert rescaled.f1_max == curve.f1_max

    def test_no_positives(self):
        with pytest.raises(DataError):
            precision_recall(np.ones((3, 3)), np.zeros((3, 3), bool))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            precision_recall(np.ones((3, 3)), np.zeros((2, 2), bool))

    def test_best_threshold_and_csv(self):
        curve = pr_from_scores([0.1, 0.2, 0.9], [True, True, False])
        assert curve.best_threshold == 0.2 and curve.f1_max == 1.0
        assert curve.to_csv().splitlines()[0] == "tau,precision,recall,f1"
        assert isinstance(curve, PRCurve)

    def test_nn_mode(self, rng):
        pts = np.repeat(rng.uniform(0, 50, (10, 2)), 2, axis=0)
        desc = pts + rng.normal(0, 0.01, pts.shape)
        poses = [Pose2(x, y, 0) for x, y in pts]
        curve = precision_recall_nn(desc, poses, 1.0)
        assert curve.f1_max == 1.0


class TestLocalizationCurve:
    def test_every_frame(self):
        records = [(float(k), True) for k in range(20)]
        curve = localization_probability_curve(records, [0.5, 1.0, 5.0])
        assert [p for _, p in curve] == [0.0, 1.0, 1.0]

    def test_every_ten_metres(self):
        records = [(float(k), k % 10 == 0) for k in range(41)]
        curve = localization_probability_curve(records, [9.99, 10.0, 25.0])
        assert [p for _, p in curve] == [0.0, 1.0, 1.0]

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.floats(0.0, 5.0), st.booleans()), min_size=1, max_size=40))
    def test_mixed_against_gap_oracle(self, steps):
        pos = np.cumsum([s for s, _ in steps]).tolist()
        records = list(zip(pos, [ok for _, ok in steps]))
        if not any(ok for _, ok in records):
            with pytest.raises(DataError):
                localization_gaps(records)
            return
        gaps = sorted(oracle_gaps(records))
        np.testing.assert_allclose(np.sort(localization_gaps(records)), gaps, atol=1e-9)
        grid = np.linspace(0, 10, 21)
        curve = localization_probability_curve(records, grid)
        probs = [p for _, p in curve]
        assert all(b >= a for a, b in zip(probs, probs[1:]))
        for x, p in curve:
            expected = sum(g <= x for g in localization_gaps(records)) / len(gaps) if gaps else 1.0
            assert p == expected

    def test_initial_miss_counts(self):
        records = [(0.0, False), (4.0, False), (6.0, True), (7.0, True)]
        np.testing.assert_array_equal(localization_gaps(records), [6.0, 1.0])

    def test_decreasing_positions(self):
        with pytest.raises(ValueError):
            localization_gaps([(1.0, True), (0.5, True)])

    def test_trajectory_positions(self):
        poses = [Pose2(0, 0, 0), Pose2(3, 4, 0), Pose2(3, 5, 0)]
        np.testing.assert_array_equal(trajectory_positions(poses), [0.0, 5.0, 6.0])

    def test_records_against_map(self, mapped, street_scans):
        prior, params = mapped
        poses, scans = street_scans
        fps = fingerprint_scans(scans, params, HistogramConfig())
        records = localization_records(prior, fps, poses, 3.0)
        assert all(ok for _, ok in records)
        assert localization_probability_curve(records, [10.0]) == [(10.0, 1.0)]
