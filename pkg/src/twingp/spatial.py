"""Nearest-neighbour indexing, twinning subsamples and covering radii.

Neighbour queries go through :class:`scipy.spatial.cKDTree` for candidate
generation, but the final ordering is always decided on distances recomputed
here, sorted by ``(distance, row index)``. That makes results identical to a
brute-force search, ties included.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .dataset import Dataset


def _distances(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    diff = points - q
    return np.sqrt(np.sum(diff * diff, axis=-1))


class NeighborIndex:
    """Immutable k-nearest-neighbour index over the rows of ``points``."""

    def __init__(self, points):
        points = np.array(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] == 0:
            raise ValueError("cannot index an empty point set")
        if not np.all(np.isfinite(points)):
            raise ValueError("point coordinates must be finite")
        points.setflags(write=False)
        self.points = points
        self.tree = cKDTree(points, balanced_tree=True, compact_nodes=True)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def _ordered(self, q, cand):
        cand = np.unique(cand)
        dist = _distances(self.points[cand], q)
        order = np.lexsort((cand, dist))
        return cand[order], dist[order]

    def k_nearest(self, query, k: int, exclude=()) -> np.ndarray:
        """Indices of the ``k`` nearest rows to ``query`` not in ``exclude``.

        Sorted by nondecreasing distance, ties by lower index.
        """
        q = np.asarray(query, dtype=float).reshape(-1)
        if q.size != self.d:
            raise ValueError(f"query has dimension {q.size}, index has {self.d}")
        excl = np.unique(np.asarray(list(exclude), dtype=int))
        excl = excl[(excl >= 0) & (excl < len(self))]
        m = len(self)
        if k < 1:
            raise ValueError("k must be at least 1")
        if k > m - excl.size:
            raise ValueError(f"asked for {k} neighbours but only {m - excl.size} points are available")
        kq = min(m, k + excl.size + 1)
        while True:
            dist, cand = self.tree.query(q, k=kq)
            cand = np.atleast_1d(cand)
            dist = np.atleast_1d(dist)
            keep = ~np.isin(cand, excl)
            kept = cand[keep]
            if kq == m:
                idx, _ = self._ordered(q, kept)
                return idx[:k]
            if kept.size > k:
                break
            kq = min(m, 2 * kq)
        idx, d_sorted = self._ordered(q, kept)
        # the k-th distance; everything within it (plus rounding slack) is a candidate
        radius = d_sorted[k - 1]
        if dist[-1] <= radius * (1 + 1e-9) + 1e-300:
            extra = np.asarray(self.tree.query_ball_point(q, radius * (1 + 1e-9) + 1e-300), dtype=int)
            extra = extra[~np.isin(extra, excl)]
            idx, _ = self._ordered(q, np.concatenate([kept, extra]))
        return idx[:k]

    def k_nearest_batch(self, queries, k: int, exclude=None) -> np.ndarray:
        """Row-wise :meth:`k_nearest` for a (t, d) array of queries.

        ``exclude`` is an optional length-t array of single indices (use -1
        for none) removed from each query's candidates.
        """
        Q = np.atleast_2d(np.asarray(queries, dtype=float))
        t = Q.shape[0]
        if Q.shape[1] != self.d:
            raise ValueError(f"queries have dimension {Q.shape[1]}, index has {self.d}")
        excl = np.full(t, -1) if exclude is None else np.asarray(exclude, dtype=int)
        m = len(self)
        if k > m - (excl >= 0).astype(int).max(initial=0):
            raise ValueError(f"asked for {k} neighbours but only {m} points are indexed")
        out = np.empty((t, k), dtype=int)
        if t == 0:
            return out
        kq = min(m, k + 2)
        dist, cand = self.tree.query(Q, k=kq)
        dist = dist.reshape(t, kq)
        cand = cand.reshape(t, kq)
        for i in range(t):
            keep = cand[i] != excl[i]
            kept = cand[i][keep]
            if kept.size < k + 1 and kq < m or kept.size < k:
                out[i] = self.k_nearest(Q[i], k, () if excl[i] < 0 else (excl[i],))
                continue
            idx, d_sorted = self._ordered(Q[i], kept)
            radius = d_sorted[k - 1]
            if kq < m and dist[i, -1] <= radius * (1 + 1e-9) + 1e-300:
                out[i] = self.k_nearest(Q[i], k, () if excl[i] < 0 else (excl[i],))
                continue
            out[i] = idx[:k]
        return out


def build_index(points) -> NeighborIndex:
    return NeighborIndex(points)


def k_nearest(index: NeighborIndex, query, k: int, exclude=()) -> np.ndarray:
    return index.k_nearest(query, k, exclude)


def joint_space(data: Dataset) -> np.ndarray:
    """Inputs min-max scaled to [0, 1] next to the standardized output."""
    X = data.inputs
    span = X.max(axis=0) - X.min(axis=0)
    Xs = (X - X.min(axis=0)) / np.where(span > 0, span, 1.0)
    y = data.outputs
    sd = float(np.std(y)) if data.n > 1 else 0.0
    ys = (y - y.mean()) / sd if sd > 0 else np.zeros_like(y)
    return np.column_stack([Xs, ys])


def _farthest_top_up(Z: np.ndarray, chosen: list[int], size: int) -> list[int]:
    """Greedy farthest-point selection until ``size`` indices are chosen."""
    selected = np.zeros(Z.shape[0], dtype=bool)
    selected[chosen] = True
    mind = np.full(Z.shape[0], np.inf)
    for c in chosen:
        mind = np.minimum(mind, _distances(Z, Z[c]))
    while len(chosen) < size:
        score = np.where(selected, -np.inf, mind)
        nxt = int(np.argmax(score))
        chosen.append(nxt)
        selected[nxt] = True
        mind = np.minimum(mind, _distances(Z, Z[nxt]))
    return chosen


def twin_points(Z, size: int, seed: int) -> np.ndarray:
    """Twinning-style subsample of the rows of ``Z``.

    With ``r = round(n / size)`` the cursor repeatedly takes its ``r`` nearest
    unassigned rows, keeps the nearest one, retires all ``r`` and jumps to the
    farthest of them. Retired rows are dropped from the tree by periodic
    rebuilds, keeping the whole pass at O(n log n) on average.
    """
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[0]
    if not 1 <= size <= n:
        raise ValueError(f"sample size must lie in [1, {n}], got {size}")
    if size == n:
        return np.arange(n)
    r = max(1, int(np.floor(n / size + 0.5)))
    rng = np.random.default_rng(seed)
    anchor = rng.uniform(Z.min(axis=0), Z.max(axis=0))

    available = np.ones(n, dtype=bool)
    n_avail = n
    ids = np.arange(n)
    tree = cKDTree(Z)
    cursor = anchor
    sample: list[int] = []
    while len(sample) < size and n_avail > 0:
        want = min(r, n_avail)
        kq = min(ids.size, 2 * want)
        while True:
            _, loc = tree.query(cursor, k=kq)
            cand = ids[np.atleast_1d(loc)]
            cand = cand[available[cand]]
            if cand.size >= want or kq == ids.size:
                break
            kq = min(ids.size, 2 * kq)
        dist = _distances(Z[cand], cursor)
        order = np.lexsort((cand, dist))
        group = cand[order[:want]]
        sample.append(int(group[0]))
        available[group] = False
        n_avail -= group.size
        cursor = Z[group[-1]]
        if 0 < n_avail <= ids.size // 2:
            ids = np.flatnonzero(available)
            tree = cKDTree(Z[ids])
    if len(sample) < size:
        sample = _farthest_top_up(Z, sample, size)
    return np.asarray(sample, dtype=int)


def twin_sample(data: Dataset, size: int, seed: int) -> np.ndarray:
    """Select ``size`` representative rows of ``data`` in the joint (x, y) space."""
    if not 1 <= size <= data.n:
        raise ValueError(f"sample size must lie in [1, {data.n}], got {size}")
    return twin_points(joint_space(data), size, seed)


def energy_distance(A, B) -> float:
    """Energy distance between the empirical distributions of two point sets."""
    from scipy.spatial.distance import cdist

    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise ValueError("energy distance needs two nonempty sets")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    ab = cdist(A, B).mean()
    aa = cdist(A, A).mean()
    bb = cdist(B, B).mean()
    return max(0.0, 2.0 * ab - aa - bb)


def covering_radius(full, centers) -> float:
    """Smallest radius whose balls around ``centers`` cover every row of ``full``."""
    full = np.asarray(full, dtype=float)
    centers = np.asarray(centers, dtype=float)
    if full.ndim == 1:
        full = full[:, None]
    if centers.ndim == 1:
        centers = centers[:, None]
    if full.shape[0] == 0 or centers.shape[0] == 0:
        raise ValueError("covering radius needs nonempty point sets")
    if full.shape[1] != centers.shape[1]:
        raise ValueError(f"dimension mismatch: {full.shape[1]} vs {centers.shape[1]}")
    k = min(3, centers.shape[0])
    _, nn = cKDTree(centers).query(full, k=k)
    nn = nn.reshape(full.shape[0], k)
    # recompute the distances so near-ties resolve exactly as a direct search would
    diff = full[:, None, :] - centers[nn]
    dist = np.sqrt(np.sum(diff * diff, axis=-1)).min(axis=1)
    return float(dist.max())
