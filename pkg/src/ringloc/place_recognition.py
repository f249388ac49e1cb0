"""Online place recognition against a prior map, and the offline evaluation protocol.

The evaluation compares every pair of frames in a session: descriptor
distances form a similarity matrix, pose distances below ``p`` form the
ground truth, and sweeping the acceptance threshold gives precision/recall
and the best F1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .kdtree import KdTree
from .prior_map import nearest_fingerprint
from .representation import build_representation
from .scan_model import Pose2
from .siamese_net import classify, forward


@dataclass(frozen=True)
class MatchResult:
    frame: int
    distance: float
    observation: Pose2
    accepted: bool


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    values: np.ndarray
    label: str = ""

    def to_csv(self) -> str:
        return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in self.values)


@dataclass(frozen=True, eq=False)
class PRCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray

    @property
    def f1_max(self) -> float:
        return float(self.f1.max()) if len(self.f1) else 0.0

    @property
    def best_threshold(self) -> float:
        return float(self.thresholds[int(np.argmax(self.f1))])

    def to_csv(self) -> str:
        lines = ["tau,precision,recall,f1"]
        lines += [f"{t!r},{p!r},{r!r},{f!r}" for t, p, r, f in
                  zip(self.thresholds.tolist(), self.precision.tolist(),
                      self.recall.tolist(), self.f1.tolist())]
        return "\n".join(lines) + "\n"


def recognize(prior, scan, params, hist, tau) -> MatchResult:
    """Match one scan against the map; the matched keyframe pose is the observation."""
    f = forward(params, build_representation(scan, hist))
    idx, dist = nearest_fingerprint(prior, f)
    return MatchResult(idx, dist, prior.frames[idx].pose, classify(dist, tau))


def similarity_matrix(descriptors, label="") -> SimilarityMatrix:
    """All-pairs Euclidean distances between descriptor vectors."""
    x = np.asarray(descriptors, dtype=float)
    x = x.reshape(len(x), -1)
    sq = np.einsum("ij,ij->i", x, x)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (x @ x.T), 0.0)
    # Recompute exactly to avoid cancellation on near-duplicates.
    close = d2 < 1e-6 * np.maximum(sq[:, None] + sq[None, :], 1e-300)
    for i, j in zip(*np.nonzero(close)):
        diff = x[i] - x[j]
        d2[i, j] = float(np.dot(diff, diff))
    d = np.sqrt(d2)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return SimilarityMatrix(d, label)


def ground_truth_matrix(poses, p, exclusion=0) -> np.ndarray:
    """True where two frames lie closer than ``p`` and are more than ``exclusion`` apart in time."""
    if not p > 0:
        raise ValueError("p must be positive")
    xy = np.array([[q.x, q.y] for q in poses], dtype=float).reshape(-1, 2)
    dx = xy[:, None, 0] - xy[None, :, 0]
    dy = xy[:, None, 1] - xy[None, :, 1]
    near = np.hypot(dx, dy) < p
    idx = np.arange(len(xy))
    return near & (np.abs(idx[:, None] - idx[None, :]) > exclusion)


def evaluation_pairs(n, exclusion=0):
    """Index pairs (i < j) that take part in the evaluation."""
    i, j = np.triu_indices(n, k=1)
    keep = (j - i) > exclusion
    return i[keep], j[keep]


def pr_from_scores(scores, labels) -> PRCurve:
    """Sweep the threshold over every distinct score; accept when score <= tau."""
    d = np.asarray(scores, dtype=float).ravel()
    g = np.asarray(labels, dtype=bool).ravel()
    positives = int(g.sum())
    if positives == 0:
        raise DataError("ground truth contains no positive pairs")
    order = np.argsort(d, kind="stable")
    d, g = d[order], g[order]
    tp = np.cumsum(g)
    fp = np.cumsum(~g)
    last = np.r_[d[1:] != d[:-1], True]
    tp, fp, tau = tp[last], fp[last], d[last]
    precision = tp / (tp + fp)
    recall = tp / positives
    denom = precision + recall
    f1 = np.where(denom > 0, 2 * precision * recall / np.where(denom > 0, denom, 1.0), 0.0)
    return PRCurve(tau, precision, recall, f1)


def precision_recall(sim, gt, exclusion=0) -> PRCurve:
    """PR curve over all frame pairs more than ``exclusion`` indices apart."""
    values = sim.values if isinstance(sim, SimilarityMatrix) else np.asarray(sim, dtype=float)
    gt = np.asarray(gt, dtype=bool)
    if values.shape != gt.shape:
        raise ValueError(f"shape mismatch: {values.shape} vs {gt.shape}")
    i, j = evaluation_pairs(len(values), exclusion)
    return pr_from_scores(values[i, j], gt[i, j])


def nearest_neighbor_matches(descriptors, exclusion=0, past_only=False):
    """For every frame, its nearest other frame via a kd-tree.

    Frames within ``exclusion`` indices are skipped; with ``past_only``
    only earlier frames are candidates.  Returns (neighbour, distance)
    arrays, -1 / inf where no candidate exists.
    """
    x = np.asarray(descriptors, dtype=float)
    x = x.reshape(len(x), -1)
    tree = KdTree(x)
    idx = np.arange(len(x))
    nn = np.full(len(x), -1)
    dist = np.full(len(x), np.inf)
    for i in range(len(x)):
        allowed = np.abs(idx - i) > exclusion
        if past_only:
            allowed &= idx < i
        nn[i], dist[i] = tree.query(x[i], allowed)
    return nn, dist


def precision_recall_nn(descriptors, poses, p, exclusion=0) -> PRCurve:
    """PR on nearest-neighbour matches only, for inputs too large for all pairs.

    A query counts as a ground-truth positive when any eligible frame lies
    within ``p``; it is a true positive when its accepted neighbour does.
    """
    nn, dist = nearest_neighbor_matches(descriptors, exclusion)
    gt = ground_truth_matrix(poses, p, exclusion)
    has_loop = gt.any(axis=1)
    if not has_loop.any():
        raise DataError("ground truth contains no positive pairs")
    valid = nn >= 0
    correct = np.zeros(len(nn), dtype=bool)
    correct[valid] = gt[np.arange(len(nn))[valid], nn[valid]]
    order = np.argsort(np.where(valid, dist, np.inf), kind="stable")
    d, c = dist[order], correct[order]
    keep = np.isfinite(d)
    d, c = d[keep], c[keep]
    tp, fp = np.cumsum(c), np.cumsum(~c)
    last = np.r_[d[1:] != d[:-1], True]
    tp, fp, tau = tp[last], fp[last], d[last]
    precision = tp / (tp + fp)
    recall = tp / has_loop.sum()
    denom = precision + recall
    f1 = np.where(denom > 0, 2 * precision * recall / np.where(denom > 0, denom, 1.0), 0.0)
    return PRCurve(tau, precision, recall, f1)


def trajectory_positions(poses) -> np.ndarray:
    """Cumulative planar path length at each pose."""
    xy = np.array([[q.x, q.y] for q in poses], dtype=float).reshape(-1, 2)
    if len(xy) == 0:
        return np.zeros(0)
    return np.r_[0.0, np.cumsum(np.hypot(*np.diff(xy, axis=0).T))]


def localization_gaps(records) -> np.ndarray:
    """Distances travelled between consecutive successful localizations.

    The stretch from the first record to the first success counts as a gap
    when the first record itself is not a success; travel after the last
    success is censored and ignored.
    """
    pos = np.array([r[0] for r in records], dtype=float)
    ok = np.array([bool(r[1]) for r in records], dtype=bool)
    if len(pos) and np.any(np.diff(pos) < 0):
        raise ValueError("trajectory positions must be nondecreasing")
    if not ok.any():
        raise DataError("no successful localization in the sequence")
    hits = pos[ok]
    if not ok[0]:
        hits = np.r_[pos[0], hits]
    return np.diff(hits)


def localization_probability_curve(records, distances=None) -> list:
    """Fraction of inter-localization gaps no longer than each distance.

    Evaluated at ``distances`` when given, otherwise at every distinct gap.
    """
    gaps = localization_gaps(records)
    if distances is None:
        distances = np.unique(gaps) if len(gaps) else np.array([0.0])
    gaps = np.sort(gaps)
    out = []
    for x in np.asarray(distances, dtype=float):
        prob = 1.0 if not len(gaps) else float(np.searchsorted(gaps, x, side="right") / len(gaps))
        out.append((float(x), prob))
    return out


def localization_records(prior, fingerprints, poses, p, tau=np.inf) -> list:
    """(path position, success) per query: accepted nearest keyframe within ``p``."""
    positions = trajectory_positions(poses)
    out = []
    for f, pose, s in zip(fingerprints, poses, positions):
        idx, dist = nearest_fingerprint(prior, f)
        ok = classify(dist, tau) and prior.frames[idx].pose.distance_to(pose) < p
        out.append((float(s), bool(ok)))
    return out
