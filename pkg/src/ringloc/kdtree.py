"""Static kd-tree for exact Euclidean nearest-neighbour queries.

Splits at the median of the axis with the largest spread.  Queries return
the lowest index among equidistant candidates, so results match an
exhaustive scan exactly.
"""

import numpy as np

LEAF_SIZE = 8


def squared_distances(points, q) -> np.ndarray:
    """Row-wise squared distances; the single formula used for every comparison."""
    diff = points - q
    return np.add.reduce(diff * diff, axis=1)


class KdTree:
    def __init__(self, points, leaf_size=LEAF_SIZE):
        pts = np.array(points, dtype=float)
        if pts.ndim != 2:
            raise ValueError("points must be a 2-D array")
        self.points = pts
        self.points.setflags(write=False)
        self.leaf_size = leaf_size
        # Node arrays: split axis (-1 for leaves), split value, children, leaf slice.
        self._axis, self._value, self._left, self._right = [], [], [], []
        self._lo, self._hi = [], []
        self._order = np.arange(len(pts))
        if len(pts):
            self._build(0, len(pts))
        self._order.setflags(write=False)

    def __len__(self):
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def _new_node(self):
        for lst in (self._axis, self._value, self._left, self._right, self._lo, self._hi):
            lst.append(-1)
        return len(self._axis) - 1

    def _build(self, lo, hi):
        node = self._new_node()
        idx = self._order[lo:hi]
        sub = self.points[idx]
        spread = sub.max(axis=0) - sub.min(axis=0) if len(sub) else np.zeros(self.dim)
        if hi - lo <= self.leaf_size or not np.any(spread > 0):
            self._lo[node], self._hi[node] = lo, hi
            return node
        axis = int(np.argmax(spread))
        order = np.lexsort((idx, sub[:, axis]))
        self._order[lo:hi] = idx[order]
        mid = lo + (hi - lo) // 2
        # Left holds coordinates <= split, right holds >= split.
        self._axis[node] = axis
        self._value[node] = float(self.points[self._order[mid], axis])
        left = self._build(lo, mid)
        right = self._build(mid, hi)
        self._left[node], self._right[node] = left, right
        return node

    def query(self, q, allowed=None):
        """Nearest point to ``q`` as (index, distance).

        ``allowed`` is an optional boolean mask over the stored points;
        returns (-1, inf) when nothing is eligible.
        """
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.shape[0] != self.dim:
            raise ValueError(f"query has dimension {q.shape[0]}, tree has {self.dim}")
        best_d2, best_i = np.inf, -1
        if not len(self.points):
            return best_i, float(np.inf)
        stack = [(0, 0.0)]
        while stack:
            node, bound = stack.pop()
            if bound > best_d2:
                continue
            axis = self._axis[node]
            if axis < 0:
                idx = self._order[self._lo[node]:self._hi[node]]
                if allowed is not None:
                    idx = idx[allowed[idx]]
                    if not len(idx):
                        continue
                d2 = squared_distances(self.points[idx], q)
                k = np.lexsort((idx, d2))[0]
                if d2[k] < best_d2 or (d2[k] == best_d2 and idx[k] < best_i):
                    best_d2, best_i = float(d2[k]), int(idx[k])
                continue
            diff = q[axis] - self._value[node]
            near, far = (self._left[node], self._right[node]) if diff <= 0 else \
                (self._right[node], self._left[node])
            stack.append((far, diff * diff))
            stack.append((near, bound))
        return best_i, float(np.sqrt(best_d2))


def linear_nearest(points, q, allowed=None):
    """Exhaustive nearest neighbour with lowest-index tie breaking."""
    pts = np.asarray(points, dtype=float)
    d2 = squared_distances(pts, np.asarray(q, dtype=float))
    if allowed is not None:
        d2 = np.where(allowed, d2, np.inf)
    if not len(d2) or not np.isfinite(d2.min()):
        return -1, float(np.inf)
    i = int(np.argmin(d2))
    return i, float(np.sqrt(d2[i]))
