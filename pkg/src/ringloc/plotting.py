"""PNG figures written next to the CSV outputs of the command-line tools."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Fixed metadata keeps PNG bytes stable across runs.
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def plot_trajectory(world, poses, path, title="trajectory"):
    fig, ax = plt.subplots(figsize=(6, 5))
    for lm in world.landmarks:
        outline = _outline(lm)
        ax.fill(outline[:, 0], outline[:, 1], color="0.7", lw=0)
    xy = np.array([[p.x, p.y] for p in poses]).reshape(-1, 2)
    ax.plot(xy[:, 0], xy[:, 1], ".-", ms=3, lw=0.8)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(title)
    _save(fig, path)


def _outline(lm):
    if hasattr(lm, "radius"):
        a = np.linspace(0, 2 * np.pi, 24)
        return np.column_stack([lm.cx + lm.radius * np.cos(a), lm.cy + lm.radius * np.sin(a)])
    c, s = np.cos(lm.yaw), np.sin(lm.yaw)
    hx, hy = lm.sx / 2, lm.sy / 2
    corners = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
    return corners @ np.array([[c, s], [-s, c]]) + [lm.cx, lm.cy]


def plot_training(history, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ep = [h.epoch for h in history]
    ax.plot(ep, [h.mean_loss for h in history], "o-")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean contrastive loss")
    ax.set_yscale("log")
    _save(fig, path)


def plot_pr(curves: dict, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    for name, c in curves.items():
        ax.plot(c.recall, c.precision, label=f"{name} (F1max {c.f1_max:.3f})")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.legend(loc="lower left")
    _save(fig, path)


def plot_similarity(sim, path, title=""):
    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(sim, cmap="viridis_r", interpolation="nearest")
    fig.colorbar(im, ax=ax, label="descriptor distance")
    ax.set_title(title)
    _save(fig, path)


def plot_loc_probability(curve, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = [c[0] for c in curve]
    y = [c[1] for c in curve]
    ax.step(x, y, where="post")
    ax.set_xlabel("distance travelled [m]")
    ax.set_ylabel("P(localized)")
    ax.set_ylim(0, 1.05)
    _save(fig, path)


def plot_localization(rows, path):
    """Estimate against ground truth plus the error trace."""
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 4))
    est = np.array([[r["est_x"], r["est_y"]] for r in rows])
    a1.plot(est[:, 0], est[:, 1], ".-", ms=3, lw=0.8, label="estimate")
    if rows and rows[0].get("true_x") is not None:
        tru = np.array([[r["true_x"], r["true_y"]] for r in rows])
        a1.plot(tru[:, 0], tru[:, 1], "-", lw=1.2, label="ground truth")
        a2.plot([r["loc_error"] for r in rows], label="location error [m]")
        a2.plot([r["heading_error_deg"] for r in rows], label="heading error [deg]")
        a2.set_yscale("symlog", linthresh=1.0)
    a2.plot([r["spread"] for r in rows], label="particle spread [m]")
    a1.set_aspect("equal")
    a1.legend()
    a2.set_xlabel("step")
    a2.legend()
    _save(fig, path)


def plot_histogram(edges, counts, path, xlabel):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.stairs(counts, edges, fill=True)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("steps")
    _save(fig, path)
