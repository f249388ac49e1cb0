"""Contrastive loss, pair mining and SGD training of the siamese embedding."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import DataError, DivergenceError, FormatError
from .network import NetworkConfig, NetworkParams, backward_batch, forward_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TrainingPair:
    r1: object
    r2: object
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")
        if np.shape(_values(self.r1)) != np.shape(_values(self.r2)):
            raise FormatError("pair members have different shapes")


@dataclass(frozen=True)
class SgdOptions:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    positive_distance: float
    negative_distance: float


def _values(r):
    return getattr(r, "values", r)


def contrastive_loss(label, d_w, margin):
    """Y * d^2/2 + (1 - Y) * max(0, m - d)^2 / 2, elementwise."""
    y = np.asarray(label, dtype=float)
    d = np.asarray(d_w, dtype=float)
    hinge = np.maximum(0.0, margin - d)
    out = y * 0.5 * d * d + (1.0 - y) * 0.5 * hinge * hinge
    return float(out) if out.ndim == 0 else out


def classify(d_w, tau) -> bool:
    """Same place iff the embedding distance does not exceed ``tau``."""
    return bool(d_w <= tau)


def _pair_terms(f1, f2, labels, margin):
    """Per-pair losses, distances and dL/df1 (dL/df2 is its negative)."""
    diff = f1 - f2
    d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    y = labels.astype(float)
    loss = contrastive_loss(y, d, margin)
    dl_dd = y * d - (1.0 - y) * np.maximum(0.0, margin - d)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(d > 0, dl_dd / d, 0.0)
    return np.atleast_1d(loss), d, scale[:, None] * diff


def batch_loss_and_gradients(params: NetworkParams, x1, x2, labels, margin=None):
    """Mean contrastive loss over a batch and its gradients.

    Both branches run through the same weights, so the two halves are
    stacked into one forward/backward pass and their gradients add up.
    """
    margin = params.config.margin if margin is None else margin
    b = len(labels)
    out, cache = forward_batch(params, np.concatenate([x1, x2], axis=0))
    loss, d, g1 = _pair_terms(out[:b], out[b:], np.asarray(labels), margin)
    dout = np.concatenate([g1, -g1], axis=0) / b
    grads = backward_batch(params, cache, dout)
    return float(loss.mean()), grads, d, loss


def loss_gradients(params: NetworkParams, pair: TrainingPair, margin=None) -> list:
    """Exact gradients of one pair's contrastive loss."""
    x1 = np.asarray(_values(pair.r1), dtype=float)[None]
    x2 = np.asarray(_values(pair.r2), dtype=float)[None]
    _, grads, _, _ = batch_loss_and_gradients(params, x1, x2, np.array([pair.label]), margin)
    return grads


def pair_loss(params: NetworkParams, pair: TrainingPair, margin=None) -> float:
    x1 = np.asarray(_values(pair.r1), dtype=float)[None]
    x2 = np.asarray(_values(pair.r2), dtype=float)[None]
    out, _ = forward_batch(params, np.concatenate([x1, x2]))
    margin = params.config.margin if margin is None else margin
    d = float(np.linalg.norm(out[0] - out[1]))
    return contrastive_loss(pair.label, d, margin)


def label_pairs(poses, p_pos, p_neg):
    """All index pairs i < j split by planar pose distance.

    Returns (positives, negatives): distance < p_pos and > p_neg.
    """
    xy = np.array([[p.x, p.y] for p in poses], dtype=float).reshape(-1, 2)
    i, j = np.triu_indices(len(xy), k=1)
    d = np.hypot(xy[i, 0] - xy[j, 0], xy[i, 1] - xy[j, 1])
    pos = list(zip(i[d < p_pos].tolist(), j[d < p_pos].tolist()))
    neg = list(zip(i[d > p_neg].tolist(), j[d > p_neg].tolist()))
    return pos, neg


def mine_pairs(poses, reps, p_pos, p_neg, ratio=2.0, seed=0) -> list:
    """Positive pairs closer than ``p_pos``; negatives beyond ``p_neg``.

    Every positive is kept; ``ratio`` times as many negatives are drawn
    without replacement (all of them if fewer exist).
    """
    if not p_pos < p_neg:
        raise ValueError("need p_pos < p_neg")
    if len(poses) != len(reps):
        raise ValueError("poses and representations are not aligned")
    pos, neg = label_pairs(poses, p_pos, p_neg)
    if not pos:
        raise DataError(f"no pose pairs closer than p_pos={p_pos}")
    want = int(round(ratio * len(pos)))
    if want < len(neg):
        rng = np.random.default_rng(seed)
        pick = np.sort(rng.choice(len(neg), size=want, replace=False))
        neg = [neg[k] for k in pick]
    pairs = [TrainingPair(reps[i], reps[j], 1) for i, j in pos]
    pairs += [TrainingPair(reps[i], reps[j], 0) for i, j in neg]
    return pairs


def train(pairs, config: NetworkConfig, opt: SgdOptions = SgdOptions(), init=None,
          on_epoch=None):
    """Mini-batch SGD with momentum on the mean contrastive loss.

    Returns the trained params and one :class:`EpochStats` per epoch, whose
    ``mean_loss`` averages each pair's loss as seen during that epoch.
    """
    if not pairs:
        raise DataError("no training pairs")
    params = (init or NetworkParams.initialize(config)).copy()
    x1 = np.stack([np.asarray(_values(p.r1), dtype=float) for p in pairs])
    x2 = np.stack([np.asarray(_values(p.r2), dtype=float) for p in pairs])
    y = np.array([p.label for p in pairs])
    rng = np.random.default_rng(opt.seed)
    velocity = [np.zeros_like(t) for t in params.tensors]
    history = []
    for epoch in range(1, opt.epochs + 1):
        order = rng.permutation(len(pairs))
        losses = np.empty(len(pairs))
        dists = np.empty(len(pairs))
        for start in range(0, len(order), opt.batch_size):
            idx = order[start:start + opt.batch_size]
            try:
                loss, grads, d, per_pair = batch_loss_and_gradients(params, x1[idx], x2[idx], y[idx])
            except DivergenceError as exc:
                raise DivergenceError(f"epoch {epoch}, batch at {start}: {exc}") from None
            if not np.isfinite(loss):
                raise DivergenceError(f"epoch {epoch}, batch at {start}: loss is {loss}")
            losses[idx], dists[idx] = per_pair, d
            for t, v, g in zip(params.tensors, velocity, grads):
                v *= opt.momentum
                v -= opt.learning_rate * g
                t += v
        stats = EpochStats(epoch, float(losses.mean()),
                           float(dists[y == 1].mean()) if np.any(y == 1) else float("nan"),
                           float(dists[y == 0].mean()) if np.any(y == 0) else float("nan"))
        log.debug("epoch %d loss %.6f", epoch, stats.mean_loss)
        history.append(stats)
        if on_epoch is not None:
            on_epoch(stats, params)
    if not params.all_finite():
        raise DivergenceError("trained parameters are not finite")
    return params, history


def training_log_csv(history) -> str:
    lines = ["epoch,mean_loss,positive_mean_distance,negative_mean_distance"]
    lines += [f"{h.epoch},{h.mean_loss!r},{h.positive_distance!r},{h.negative_distance!r}"
              for h in history]
    return "\n".join(lines) + "\n"
