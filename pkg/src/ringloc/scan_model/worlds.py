"""Procedural street-block worlds for desk-scale experiments."""

import math

import numpy as np

from .simulator import Box, Cylinder, SyntheticWorld


def block_loop(origin=(0.0, 0.0), size=(60.0, 40.0), lateral=0.0, reverse=False, laps=1):
    """Closed rectangular loop around a block, as a waypoint list.

    ``lateral`` shifts the loop outwards (positive) or inwards; ``reverse``
    drives it clockwise.
    """
    x0, y0 = origin[0] - lateral, origin[1] - lateral
    w, h = size[0] + 2 * lateral, size[1] + 2 * lateral
    corners = [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)]
    if reverse:
        corners = corners[::-1]
    return corners * laps + [corners[0]]


def _fill_side(rng, a, b, normal, offset, items, depth_range, height_range):
    """Line one side of a street segment a->b with buildings and poles."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    length = np.linalg.norm(b - a)
    t_dir = (b - a) / length
    n = np.asarray(normal, float)
    s = rng.uniform(-4.0, 2.0)
    while s < length + 4.0:
        width = rng.uniform(4.0, 14.0)
        if rng.uniform() < 0.8:
            depth = rng.uniform(*depth_range)
            setback = offset + rng.uniform(0.0, 4.0)
            c = a + t_dir * (s + width / 2) + n * (setback + depth / 2)
            yaw = math.atan2(t_dir[1], t_dir[0]) + rng.uniform(-0.15, 0.15)
            items.append(Box(float(c[0]), float(c[1]), float(width), float(depth),
                             float(rng.uniform(*height_range)), float(yaw)))
        s += width + rng.uniform(0.5, 6.0)
    s = rng.uniform(0.0, 6.0)
    while s < length:
        c = a + t_dir * s + n * (offset - rng.uniform(1.5, 3.0))
        items.append(Cylinder(float(c[0]), float(c[1]), float(rng.uniform(0.15, 0.6)),
                              float(rng.uniform(2.0, 9.0))))
        s += rng.uniform(4.0, 14.0)


def street_block_world(seed, origin=(0.0, 0.0), size=(60.0, 40.0), street_half_width=6.0,
                       margin=30.0):
    """Random buildings and poles lining both sides of a rectangular street loop.

    Returns the world and the loop waypoints (counter-clockwise, closed).
    """
    rng = np.random.default_rng(seed)
    x0, y0 = origin
    w, h = size
    corners = [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)]
    items = []
    for k in range(4):
        a, b = corners[k], corners[(k + 1) % 4]
        d = np.subtract(b, a) / math.hypot(b[0] - a[0], b[1] - a[1])
        left = (-d[1], d[0])
        outward = (d[1], -d[0])
        inner_depth = (3.0, max(3.5, min(w, h) / 2 - street_half_width - 4.0))
        _fill_side(rng, a, b, left, street_half_width, items, inner_depth, (3.0, 25.0))
        _fill_side(rng, a, b, outward, street_half_width, items, (4.0, 12.0), (3.0, 30.0))
    # Drop anything that strays into the carriageway.
    keep = [lm for lm in items
            if _clearance(lm, corners) >= (2.0 if isinstance(lm, Cylinder) else street_half_width - 1.0)]
    bounds = (x0 - margin, y0 - margin, x0 + w + margin, y0 + h + margin)
    keep = [lm for lm in keep if _inside(lm, bounds)]
    return SyntheticWorld(tuple(keep), True, bounds), block_loop(origin, size)


def _outline(lm):
    if isinstance(lm, Cylinder):
        a = np.linspace(0, 2 * math.pi, 16, endpoint=False)
        return np.stack([lm.cx + lm.radius * np.cos(a), lm.cy + lm.radius * np.sin(a)], 1)
    u = np.linspace(-0.5, 0.5, max(3, int(2 * max(lm.sx, lm.sy)) + 1))
    local = np.concatenate([
        np.stack([u * lm.sx, np.full_like(u, -lm.sy / 2)], 1),
        np.stack([u * lm.sx, np.full_like(u, lm.sy / 2)], 1),
        np.stack([np.full_like(u, -lm.sx / 2), u * lm.sy], 1),
        np.stack([np.full_like(u, lm.sx / 2), u * lm.sy], 1)])
    c, s = math.cos(lm.yaw), math.sin(lm.yaw)
    return local @ np.array([[c, s], [-s, c]]) + (lm.cx, lm.cy)


def _clearance(lm, corners):
    """Smallest distance from the primitive's outline to the loop centreline."""
    outline = _outline(lm)
    d = min(_distance_to_loop(p, corners) for p in outline)
    if _distance_to_loop((lm.cx, lm.cy), corners) < d:
        return 0.0
    return d


def _inside(lm, bounds):
    r = lm.footprint_radius()
    return (bounds[0] <= lm.cx - r and lm.cx + r <= bounds[2]
            and bounds[1] <= lm.cy - r and lm.cy + r <= bounds[3])


def _distance_to_loop(p, corners):
    p = np.asarray(p, float)
    best = math.inf
    for k in range(len(corners)):
        a, b = np.asarray(corners[k], float), np.asarray(corners[(k + 1) % len(corners)], float)
        ab = b - a
        t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
        best = min(best, float(np.linalg.norm(p - (a + t * ab))))
    return best
