"""Build-once, query-many exact k-nearest-neighbour search over training inputs.

The index is a kd-style space partition: points are recursively median-split
on the widest-spread coordinate down to small leaves (O(d n log n) one-time
work), and each leaf keeps its bounding box.  Queries rank leaves by
box-to-query distance and scan them in bulk with vectorized numpy until the
next box cannot contain an improvement.  At low dimension this visits a few
leaves (sublinear in n); at high dimension it degrades gracefully toward a
full vectorized scan while remaining exact.

Ties are broken by lower training index, so results match a brute-force scan
exactly and are deterministic across runs.
"""

from __future__ import annotations

import numpy as np

DEFAULT_LEAF_SIZE = 40

# leaves gathered per scan step; large enough to amortize numpy call overhead
_CHUNK_LEAVES = 64


class NeighbourIndex:
    """Immutable exact k-NN index under Euclidean distance.

    After construction the index is never mutated and is safe for concurrent
    queries from many workers.
    """

    def __init__(self, X: np.ndarray, leaf_size: int = DEFAULT_LEAF_SIZE):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("need at least one point to build an index")
        if leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")
        self.points = X
        self.leaf_size = int(leaf_size)
        self.n, self.d = X.shape

        perm = np.arange(self.n, dtype=np.intp)
        blocks: list[np.ndarray] = []
        self._split(perm, blocks)
        self._perm = np.concatenate(blocks)
        sizes = np.fromiter((b.size for b in blocks), dtype=np.intp, count=len(blocks))
        self._leaf_starts = np.concatenate(([0], np.cumsum(sizes)))
        ordered = X[self._perm]
        self._leaf_lo = np.minimum.reduceat(ordered, self._leaf_starts[:-1], axis=0)
        self._leaf_hi = np.maximum.reduceat(ordered, self._leaf_starts[:-1], axis=0)
        self._ordered = ordered
        self.n_leaves = len(blocks)

    def _split(self, idx: np.ndarray, blocks: list[np.ndarray]) -> None:
        if idx.size <= self.leaf_size:
            blocks.append(idx)
            return
        sub = self.points[idx]
        spread = sub.max(axis=0) - sub.min(axis=0)
        axis = int(np.argmax(spread))
        order = np.argsort(sub[:, axis], kind="stable")
        half = idx.size // 2
        self._split(idx[order[:half]], blocks)
        self._split(idx[order[half:]], blocks)

    def query(self, xstar, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Exact min(m, n) nearest neighbours of xstar.

        Returns (indices, distances) sorted by nondecreasing distance, ties
        broken by lower training index.
        """
        xstar = np.asarray(xstar, dtype=float).ravel()
        if xstar.shape[0] != self.d:
            raise ValueError(f"dimension mismatch: index is {self.d}-d, query is {xstar.shape[0]}-d")
        if m < 1:
            raise ValueError("m must be >= 1")
        m_eff = min(int(m), self.n)

        lo_gap = np.maximum(self._leaf_lo - xstar, 0.0)
        hi_gap = np.maximum(xstar - self._leaf_hi, 0.0)
        box_d2 = np.einsum("ij,ij->i", lo_gap, lo_gap) + np.einsum("ij,ij->i", hi_gap, hi_gap)
        visit_order = np.argsort(box_d2, kind="stable")

        pool_d2 = np.empty(0)
        pool_idx = np.empty(0, dtype=np.intp)
        worst_d2 = np.inf
        worst_idx = np.iinfo(np.intp).max

        pos = 0
        while pos < self.n_leaves:
            if pool_idx.size >= m_eff and box_d2[visit_order[pos]] > worst_d2:
                break
            chunk = visit_order[pos : pos + _CHUNK_LEAVES]
            pos += _CHUNK_LEAVES
            starts = self._leaf_starts[chunk]
            sizes = self._leaf_starts[chunk + 1] - starts
            total = int(sizes.sum())
            offsets = np.repeat(starts - np.concatenate(([0], np.cumsum(sizes[:-1]))), sizes)
            flat = offsets + np.arange(total)
            cand = self._perm[flat]
            pts = self._ordered[flat]
            diff = pts - xstar
            d2 = np.einsum("ij,ij->i", diff, diff)
            if pool_idx.size >= m_eff:
                keep = (d2 < worst_d2) | ((d2 == worst_d2) & (cand < worst_idx))
                d2 = d2[keep]
                cand = cand[keep]
            pool_d2 = np.concatenate([pool_d2, d2])
            pool_idx = np.concatenate([pool_idx, cand])
            if pool_idx.size >= m_eff:
                best = np.lexsort((pool_idx, pool_d2))[:m_eff]
                pool_d2 = pool_d2[best]
                pool_idx = pool_idx[best]
                worst_d2 = pool_d2[-1]
                worst_idx = pool_idx[-1]

        order = np.lexsort((pool_idx, pool_d2))[:m_eff]
        return pool_idx[order], np.sqrt(pool_d2[order])

    def query_batch(self, X: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Stacked query over rows of X; returns (q, m_eff) index and distance arrays."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        m_eff = min(int(m), self.n)
        idx = np.empty((X.shape[0], m_eff), dtype=np.intp)
        dist = np.empty((X.shape[0], m_eff))
        for i, row in enumerate(X):
            idx[i], dist[i] = self.query(row, m)
        return idx, dist


def build(X: np.ndarray, leaf_size: int = DEFAULT_LEAF_SIZE) -> NeighbourIndex:
    """Construct the neighbour index over an n x d point set."""
    return NeighbourIndex(X, leaf_size=leaf_size)
