"""Spatial queries over a point cloud: nearest, k-nearest, fixed radius.

Wraps a kd-tree but pins down the parts a kd-tree leaves loose, so results
are reproducible and match a brute-force scan exactly:

- every returned distance is recomputed with one canonical formula,
  ``sqrt(dx*dx + dy*dy + dz*dz)`` in float64;
- exact distance ties break toward the lowest point id;
- radius queries are boundary-inclusive (distance == r is returned).

The kd-tree only proposes candidate sets (inflated by a 1e-9 relative
radius margin so no boundary point is lost to rounding); selection among
candidates always uses the canonical distances.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.spatial import cKDTree

from .core import PointCloud
from .errors import ContractError, EmptyCloudError

_RADIUS_MARGIN = 1e-9

_num_threads = -1


def set_num_threads(n: int | None) -> None:
    """Cap query parallelism; -1 or None means all available cores.

    Thread count never changes results, only speed: parallelism is over
    independent query rows.
    """
    global _num_threads
    _num_threads = -1 if n is None else int(n)


def get_num_threads() -> int:
    if _num_threads == -1:
        env = os.environ.get("UDFGRID_THREADS")
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                pass
    return _num_threads


def canonical_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance with a fixed summation order (x, then y, then z)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    dx = a[..., 0] - b[..., 0]
    dy = a[..., 1] - b[..., 1]
    dz = a[..., 2] - b[..., 2]
    return np.sqrt(dx * dx + dy * dy + dz * dz)


class SpatialIndex:
    """Immutable search structure over a cloud's positions."""

    def __init__(self, positions: np.ndarray):
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        if len(positions) == 0:
            raise EmptyCloudError("cannot build a spatial index over an empty cloud")
        self.positions = positions
        self.tree = cKDTree(positions)

    def __len__(self) -> int:
        return len(self.positions)


def build_index(cloud: PointCloud | np.ndarray) -> SpatialIndex:
    """Build an index over a cloud (or raw (N, 3) position array)."""
    pos = cloud.positions if isinstance(cloud, PointCloud) else cloud
    return SpatialIndex(pos)


def _flatten_ball(result_lists) -> tuple[np.ndarray, np.ndarray]:
    """Object array of id lists -> (flat ids, row lengths)."""
    lens = np.fromiter((len(r) for r in result_lists), dtype=np.int64, count=len(result_lists))
    if lens.sum() == 0:
        return np.empty(0, dtype=np.int64), lens
    flat = np.concatenate([np.asarray(r, dtype=np.int64) for r in result_lists if len(r)])
    return flat, lens


def _segment_take_smallest(
    rows_len: np.ndarray, ids: np.ndarray, dists: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per segment, keep the k entries smallest by (distance, id).

    ``ids``/``dists`` are flat arrays whose segments have lengths
    ``rows_len`` in row order.  Returns (ids, dists, taken_len) with
    segments still in row order, each sorted by (distance, id).
    """
    n_rows = len(rows_len)
    rows = np.repeat(np.arange(n_rows, dtype=np.int64), rows_len)
    order = np.lexsort((ids, dists, rows))
    ids, dists = ids[order], dists[order]
    take = np.minimum(rows_len, k)
    seg_starts = np.concatenate(([0], np.cumsum(rows_len)[:-1]))
    total = int(take.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0), take
    sel_start = np.repeat(seg_starts, take)
    within = np.arange(total) - np.repeat(np.concatenate(([0], np.cumsum(take)[:-1])), take)
    sel = sel_start + within
    return ids[sel], dists[sel], take


def nearest_batch(index: SpatialIndex, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest point id and canonical distance for each query row."""
    q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    d_hat, _ = index.tree.query(q, k=1, workers=get_num_threads())
    radii = d_hat * (1.0 + _RADIUS_MARGIN)
    lists = index.tree.query_ball_point(q, radii, workers=get_num_threads())
    flat_ids, lens = _flatten_ball(lists)
    rows = np.repeat(np.arange(len(q), dtype=np.int64), lens)
    flat_d = canonical_distance(q[rows], index.positions[flat_ids])
    ids, dists, take = _segment_take_smallest(lens, flat_ids, flat_d, 1)
    if (take != 1).any():
        raise ContractError("nearest query found no candidate (corrupt index)")
    return ids, dists


def nearest(index: SpatialIndex, q) -> tuple[int, float]:
    """Nearest point to ``q``; exact distance ties go to the lowest id."""
    ids, dists = nearest_batch(index, np.asarray(q).reshape(1, 3))
    return int(ids[0]), float(dists[0])


def knn_batch(
    index: SpatialIndex, queries: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """k nearest per query row, sorted by (distance, id).

    Returns flat (ids, dists, lengths); segment r has ``lengths[r]``
    entries (= min(k, cloud size)).
    """
    if k < 1:
        raise ContractError("k must be >= 1")
    q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    kk = min(k, len(index))
    d_hat, _ = index.tree.query(q, k=kk, workers=get_num_threads())
    d_kth = d_hat if kk == 1 else d_hat[:, -1]
    radii = np.atleast_1d(d_kth) * (1.0 + _RADIUS_MARGIN)
    lists = index.tree.query_ball_point(q, radii, workers=get_num_threads())
    flat_ids, lens = _flatten_ball(lists)
    rows = np.repeat(np.arange(len(q), dtype=np.int64), lens)
    flat_d = canonical_distance(q[rows], index.positions[flat_ids])
    return _segment_take_smallest(lens, flat_ids, flat_d, kk)


def knn(index: SpatialIndex, q, k: int) -> list[tuple[int, float]]:
    """k nearest points to ``q`` (all points if the cloud is smaller).

    Sorted ascending by distance, exact ties by lowest id.
    """
    ids, dists, _ = knn_batch(index, np.asarray(q).reshape(1, 3), k)
    return [(int(i), float(d)) for i, d in zip(ids, dists)]


def radius_query_batch(
    index: SpatialIndex, queries: np.ndarray, r: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All points with canonical distance <= r, per query row.

    Returns flat (ids, dists, lengths); each segment is sorted by point
    id ascending.  Boundary inclusive.
    """
    if not r > 0:
        raise ContractError("radius must be positive")
    q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    lists = index.tree.query_ball_point(
        q, r * (1.0 + _RADIUS_MARGIN), workers=get_num_threads(), return_sorted=True
    )
    flat_ids, lens = _flatten_ball(lists)
    rows = np.repeat(np.arange(len(q), dtype=np.int64), lens)
    flat_d = canonical_distance(q[rows], index.positions[flat_ids])
    keep = flat_d <= r
    kept_per_row = np.zeros(len(q), dtype=np.int64)
    nonempty = lens > 0
    if keep.size:
        starts = np.concatenate(([0], np.cumsum(lens)[:-1]))
        kept_per_row[nonempty] = np.add.reduceat(keep, starts[nonempty])
    return flat_ids[keep], flat_d[keep], kept_per_row


def radius_query(index: SpatialIndex, q, r: float) -> list[tuple[int, float]]:
    """Points within distance r of ``q`` (inclusive), sorted by point id."""
    ids, dists, _ = radius_query_batch(index, np.asarray(q).reshape(1, 3), r)
    return [(int(i), float(d)) for i, d in zip(ids, dists)]


def capped_ball_batch(
    index: SpatialIndex, queries: np.ndarray, r: float, cap: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The ``cap`` nearest points within distance r, per query row.

    The selection rule is: among points with canonical distance <= r,
    keep the ``cap`` smallest by (distance, id).  Returned segments are
    re-sorted by point id ascending so downstream weighted sums always
    accumulate in the same order.  Returns flat (ids, dists, lengths);
    rows with no point in the ball have length 0.
    """
    if not r > 0:
        raise ContractError("radius must be positive")
    if cap < 1:
        raise ContractError("cap must be >= 1")
    q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    kk = min(cap, len(index))
    d_hat, i_hat = index.tree.query(
        q, k=kk, distance_upper_bound=r * (1.0 + _RADIUS_MARGIN), workers=get_num_threads()
    )
    d_hat = np.atleast_2d(d_hat.reshape(len(q), kk))
    hit = np.isfinite(d_hat)
    n_hit = hit.sum(axis=1)
    # Rows where the cap binds (or the last slot is near the ball edge)
    # need the careful candidate treatment; unambiguous rows keep the
    # kd-tree's own k results.
    full = n_hit == kk
    if kk < len(index):
        ambiguous = full.copy()
    else:
        ambiguous = np.zeros(len(q), dtype=bool)
    ids_out = np.where(hit, i_hat.reshape(len(q), kk), -1)
    flat_ids_parts = np.full((len(q), kk), -1, dtype=np.int64)
    easy = ~ambiguous
    if easy.any():
        flat_ids_parts[easy] = ids_out[easy]
    if ambiguous.any():
        qa = q[ambiguous]
        da = d_hat[ambiguous][:, -1]
        radii = np.minimum(da * (1.0 + _RADIUS_MARGIN), r * (1.0 + _RADIUS_MARGIN))
        lists = index.tree.query_ball_point(qa, radii, workers=get_num_threads())
        flat_ids, alens = _flatten_ball(lists)
        rows = np.repeat(np.arange(len(qa), dtype=np.int64), alens)
        flat_d = canonical_distance(qa[rows], index.positions[flat_ids])
        keep = flat_d <= r
        starts = np.concatenate(([0], np.cumsum(alens)[:-1]))
        kept = np.where(alens > 0, np.add.reduceat(keep, starts), 0).astype(np.int64)
        sel_ids, _, take = _segment_take_smallest(kept, flat_ids[keep], flat_d[keep], kk)
        amb_rows = np.flatnonzero(ambiguous)
        total = int(take.sum())
        rows_rep = np.repeat(amb_rows, take)
        cols = np.arange(total) - np.repeat(np.concatenate(([0], np.cumsum(take)[:-1])), take)
        flat_ids_parts[rows_rep, cols] = sel_ids
    # Filter inflated-margin strays and canonicalize distances + id order.
    valid = flat_ids_parts >= 0
    rows_grid = np.broadcast_to(np.arange(len(q))[:, None], flat_ids_parts.shape)
    fi = flat_ids_parts[valid]
    fr = rows_grid[valid]
    fd = canonical_distance(q[fr], index.positions[fi])
    inside = fd <= r
    fi, fr, fd = fi[inside], fr[inside], fd[inside]
    order = np.lexsort((fi, fr))
    fi, fr, fd = fi[order], fr[order], fd[order]
    lens = np.bincount(fr, minlength=len(q)).astype(np.int64)
    return fi, fd, lens
