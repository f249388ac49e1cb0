import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringloc.errors import DataError, FormatError
from ringloc.kdtree import KdTree, linear_nearest
from ringloc.prior_map import (MapFrame, PriorMap, build_map, fingerprint_scans, load_map,
                               map_bytes, map_from_bytes, nearest_fingerprint, save_map,
                               scan_to_map, voxel_downsample)
from ringloc.representation import HistogramConfig
from ringloc.scan_model import Pose2
from ringloc.siamese_net import NetworkConfig, NetworkParams


def oracle_nearest(points, q, allowed=None):
    """First minimum of the exact squared distance in index order."""
    best, best_i = math.inf, -1
    for i, p in enumerate(points):
        if allowed is not None and not allowed[i]:
            continue
        d2 = float(np.add.reduce((p - q) * (p - q)))
        if d2 < best:
            best, best_i = d2, i
    return best_i, math.sqrt(best)


@pytest.fixture(scope="module")
def small_net():
    return NetworkParams.initialize(NetworkConfig((8, 80), ((3, 3, 2, 4),), (16,), 8, seed=2))


class TestKdTree:
    def test_matches_linear_scan_with_ties(self, rng):
        stored = rng.integers(-3, 4, size=(500, 4)).astype(float)
        stored[250:300] = stored[:50]
        tree = KdTree(stored)
        queries = np.vstack([rng.integers(-3, 4, size=(60, 4)).astype(float) + 0.5,
                             stored[rng.integers(0, 500, 40)]])
        for q in queries:
            got = tree.query(q)
            assert got == linear_nearest(stored, q) == oracle_nearest(stored, q)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 80), st.integers(1, 5))
    def test_masked_queries(self, seed, n, dim):
        rng = np.random.default_rng(seed)
        pts = rng.integers(-2, 3, size=(n, dim)).astype(float)
        tree = KdTree(pts, leaf_size=2)
        for _ in range(5):
            q = rng.integers(-3, 4, size=dim).astype(float) / 2
            allowed = rng.uniform(size=n) < 0.6
            assert tree.query(q, allowed) == oracle_nearest(pts, q, allowed)

    def test_nothing_allowed(self):
        tree = KdTree(np.eye(3))
        assert tree.query([0, 0, 0], np.zeros(3, bool)) == (-1, math.inf)

    def test_empty_tree(self):
        assert KdTree(np.zeros((0, 2))).query([0.0, 0.0]) == (-1, math.inf)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            KdTree(np.eye(3)).query([0.0, 0.0])

    def test_equidistant_prefers_lower_index(self):
        tree = KdTree(np.array([[1.0, 0.0], [-1.0, 0.0]]))
        assert tree.query([0.0, 0.0]) == (0, 1.0)


class TestVoxelAndFrames:
    def test_voxel_centroids(self):
        pts = np.array([[0.1, 0.1, 0.1], [0.3, 0.3, 0.3], [1.5, 0.0, 0.0]])
        out = voxel_downsample(pts, 1.0)
        np.testing.assert_allclose(sorted(map(tuple, out)), [(0.2, 0.2, 0.2), (1.5, 0.0, 0.0)])

    def test_voxel_disabled(self, rng):
        pts = rng.normal(size=(10, 3))
        np.testing.assert_array_equal(voxel_downsample(pts, None), pts)

    def test_scan_to_map(self):
        out = scan_to_map([[1.0, 0.0, 2.0]], Pose2(5.0, 1.0, math.pi / 2))
        np.testing.assert_allclose(out, [[5.0, 2.0, 2.0]], atol=1e-15)


class TestBuildMap:
    def test_single_frame(self, street_scans, small_net):
        poses, scans = street_scans
        prior = build_map(scans[:1], poses[:1], small_net)
        assert len(prior) == 1
        f = fingerprint_scans(scans[:1], small_net, HistogramConfig())[0]
        assert nearest_fingerprint(prior, f) == (0, 0.0)

    def test_self_retrieval(self, street_scans, small_net):
        poses, scans = street_scans
        prior = build_map(scans, poses, small_net)
        for k, fr in enumerate(prior.frames):
            idx, d = nearest_fingerprint(prior, fr.fingerprint)
            assert d == 0.0
            # Duplicated fingerprints resolve to their lowest index.
            assert np.array_equal(prior.frames[idx].fingerprint, fr.fingerprint) and idx <= k

    def test_cloud_is_union(self, street_scans, small_net):
        poses, scans = street_scans
        prior = build_map(scans[:4], poses[:4], small_net)
        assert len(prior.cloud) == sum(s.point_count for s in scans[:4])

    def test_deterministic_bytes(self, street_scans, small_net):
        poses, scans = street_scans
        a = map_bytes(build_map(scans[:5], poses[:5], small_net, voxel=0.5))
        b = map_bytes(build_map(scans[:5], poses[:5], small_net, voxel=0.5))
        assert a == b

    def test_misaligned_inputs(self, street_scans, small_net):
        poses, scans = street_scans
        with pytest.raises(DataError):
            build_map(scans[:3], poses[:2], small_net)

    def test_mixed_dimensions(self):
        frames = [MapFrame(0, Pose2(), np.zeros(3)), MapFrame(1, Pose2(), np.zeros(4))]
        with pytest.raises(DataError):
            PriorMap(frames)

    def test_tie_goes_to_lower_index(self):
        prior = PriorMap([MapFrame(0, Pose2(), np.array([1.0, 0.0])),
                          MapFrame(1, Pose2(), np.array([-1.0, 0.0]))])
        assert nearest_fingerprint(prior, [0.0, 0.0]) == (0, 1.0)

    def test_empty_map(self):
        with pytest.raises(DataError):
            nearest_fingerprint(PriorMap([]), [0.0])

    def test_query_dimension(self):
        prior = PriorMap([MapFrame(0, Pose2(), np.zeros(3))])
        with pytest.raises(DataError):
            nearest_fingerprint(prior, [0.0, 0.0])

    def test_oracle_equivalence(self, rng):
        fps = rng.normal(size=(500, 8))
        prior = PriorMap([MapFrame(i, Pose2(), f) for i, f in enumerate(fps)])
        for q in rng.normal(size=(100, 8)):
            assert nearest_fingerprint(prior, q) == oracle_nearest(fps, q)


class TestMapFile:
    @pytest.fixture
    def prior(self, street_scans, small_net):
        poses, scans = street_scans
        return build_map(scans[:6], poses[:6], small_net, sources=[f"s{k}" for k in range(6)],
                         voxel=0.5)

    def test_round_trip(self, prior, tmp_path):
        save_map(prior, tmp_path / "m.llmap")
        again = load_map(tmp_path / "m.llmap")
        assert len(again) == len(prior)
        for a, b in zip(prior.frames, again.frames):
            assert a.index == b.index and a.pose == b.pose and a.source == b.source
            np.testing.assert_array_equal(a.fingerprint, b.fingerprint)
        np.testing.assert_array_equal(again.cloud, prior.cloud)
        assert again.hist_config() == prior.hist_config()
        assert map_bytes(again) == map_bytes(prior)

    def test_truncated(self, prior):
        data = map_bytes(prior)
        for cut in (10, len(data) // 2, len(data) - 1):
            with pytest.raises(FormatError):
                map_from_bytes(data[:cut])

    def test_bad_magic(self, prior):
        data = map_bytes(prior)
        with pytest.raises(FormatError, match="LLMAP1"):
            map_from_bytes(b"NOTMAP" + data[6:])

    def test_flipped_byte(self, prior):
        data = bytearray(map_bytes(prior))
        data[-40] ^= 0xFF
        with pytest.raises(FormatError):
            map_from_bytes(bytes(data))

    def test_bounds(self, prior):
        xmin, ymin, xmax, ymax = prior.bounds(1.0)
        xs = [f.pose.x for f in prior.frames]
        assert xmin == min(xs) - 1.0 and xmax == max(xs) + 1.0
