"""Positive-sample mining: exact KNN over (pitch, yaw) labels via a ball tree.

The tree is built once over the training labels (they never change) and
queried every step.  Queries must agree exactly with a brute-force scan,
including the tie rule: equal distances are ordered by ascending sample
id.  Candidates sharing the anchor's subject are ineligible, so a mined
positive always shows the same gaze through a different identity.
"""

from __future__ import annotations

from bisect import insort
from dataclasses import dataclass, field

import numpy as np

from .model import GazeLabel


class NoPositiveError(LookupError):
    """Every indexed point shares the anchor's subject."""


@dataclass
class _Node:
    center: np.ndarray  # (pitch, yaw)
    radius: float
    point_idx: np.ndarray | None = None  # leaf payload, indices into the arrays
    left: "_Node | None" = None
    right: "_Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.point_idx is not None


@dataclass
class LabelIndex:
    """Immutable-after-build ball tree over (label, sample_id, subject_id) rows."""

    labels: np.ndarray  # [N,2] float64
    sample_ids: np.ndarray  # [N] int64
    subject_ids: np.ndarray  # [N] int64
    root: _Node
    leaf_capacity: int

    def __len__(self) -> int:
        return len(self.sample_ids)


@dataclass
class PositiveSet:
    anchor_id: int
    neighbors: list[tuple[int, float]] = field(default_factory=list)  # (sample_id, distance)


def _label_array(g) -> np.ndarray:
    if isinstance(g, GazeLabel):
        return g.as_array()
    return np.asarray(g, dtype=np.float64).reshape(2)


def build_index(labels, sample_ids, subject_ids, leaf_capacity: int = 16) -> LabelIndex:
    """Deterministic construction: split on the dimension of largest spread
    (ties to the lower dimension), at the median, points ordered by
    (coordinate, sample_id)."""
    labels = np.asarray(labels, dtype=np.float64).reshape(-1, 2)
    sample_ids = np.asarray(sample_ids, dtype=np.int64)
    subject_ids = np.asarray(subject_ids, dtype=np.int64)
    if len(labels) == 0:
        raise ValueError("cannot build an index over an empty label set")
    if not (len(labels) == len(sample_ids) == len(subject_ids)):
        raise ValueError("labels, sample_ids and subject_ids must be equally long")
    if leaf_capacity < 1:
        raise ValueError("leaf_capacity must be >= 1")
    root = _build_node(labels, sample_ids, np.arange(len(labels)), leaf_capacity)
    return LabelIndex(labels, sample_ids, subject_ids, root, leaf_capacity)


def _build_node(labels, sample_ids, idx, leaf_capacity) -> _Node:
    pts = labels[idx]
    center = pts.mean(axis=0)
    radius = float(np.sqrt(((pts - center) ** 2).sum(axis=1).max()))
    if len(idx) <= leaf_capacity:
        return _Node(center, radius, point_idx=idx)
    spread = pts.max(axis=0) - pts.min(axis=0)
    dim = int(np.argmax(spread))  # argmax takes the lower index on ties
    order = np.lexsort((sample_ids[idx], pts[:, dim]))
    mid = len(idx) // 2
    left = _build_node(labels, sample_ids, idx[order[:mid]], leaf_capacity)
    right = _build_node(labels, sample_ids, idx[order[mid:]], leaf_capacity)
    return _Node(center, radius, left=left, right=right)


def query_knn(index: LabelIndex, anchor, anchor_subject: int, k: int,
              anchor_id: int = -1) -> PositiveSet:
    """The k eligible points closest to the anchor in (pitch, yaw) space.

    Eligible means a different subject than the anchor (which also rules
    out the anchor's own record).  Exactly matches a brute-force scan
    under the (distance, sample_id) ordering; returns fewer than k only
    when fewer eligible points exist.
    """
    pos, _ = query_knn_counted(index, anchor, anchor_subject, k, anchor_id)
    return pos


def query_knn_counted(index: LabelIndex, anchor, anchor_subject: int, k: int,
                      anchor_id: int = -1) -> tuple[PositiveSet, int]:
    """query_knn plus the number of point-distance evaluations, for
    verifying that ball pruning engages."""
    if k < 1:
        raise ValueError("k must be >= 1")
    a = _label_array(anchor)
    best: list[tuple[float, int, int]] = []  # (distance, sample_id, row)
    evals = [0]

    def visit(node: _Node) -> None:
        lower_bound = float(np.sqrt(((a - node.center) ** 2).sum())) - node.radius
        # prune only on strict excess: at equality a tied point with a
        # smaller sample id could still displace the current k-th
        if len(best) >= k and lower_bound > best[k - 1][0]:
            return
        if node.is_leaf:
            rows = node.point_idx
            elig = rows[index.subject_ids[rows] != anchor_subject]
            if len(elig) == 0:
                return
            evals[0] += len(elig)
            d = np.sqrt(((index.labels[elig] - a) ** 2).sum(axis=1))
            for dist, row in zip(d, elig):
                cand = (float(dist), int(index.sample_ids[row]), int(row))
                if len(best) < k or cand[:2] < best[k - 1][:2]:
                    insort(best, cand)
                    if len(best) > k:
                        best.pop()
            return
        dl = ((a - node.left.center) ** 2).sum()
        dr = ((a - node.right.center) ** 2).sum()
        first, second = (node.left, node.right) if dl <= dr else (node.right, node.left)
        visit(first)
        visit(second)

    visit(index.root)
    if not best:
        raise NoPositiveError(
            f"no positive available: all {len(index)} points share subject {anchor_subject}")
    return PositiveSet(anchor_id, [(sid, dist) for dist, sid, _ in best]), evals[0]


def brute_force_knn(labels, sample_ids, subject_ids, anchor, anchor_subject: int,
                    k: int, anchor_id: int = -1) -> PositiveSet:
    """Reference scan used to verify the tree; same contract as query_knn."""
    labels = np.asarray(labels, dtype=np.float64).reshape(-1, 2)
    sample_ids = np.asarray(sample_ids, dtype=np.int64)
    subject_ids = np.asarray(subject_ids, dtype=np.int64)
    a = _label_array(anchor)
    mask = subject_ids != anchor_subject
    if not mask.any():
        raise NoPositiveError(
            f"no positive available: all {len(labels)} points share subject {anchor_subject}")
    d = np.sqrt(((labels[mask] - a) ** 2).sum(axis=1))
    ids = sample_ids[mask]
    order = np.lexsort((ids, d))[:k]
    return PositiveSet(anchor_id, [(int(ids[i]), float(d[i])) for i in order])


def draw_positive(pos: PositiveSet, rng: np.random.Generator) -> int:
    """Uniform draw among the returned neighbors."""
    if not pos.neighbors:
        raise ValueError("cannot draw from an empty PositiveSet")
    return pos.neighbors[int(rng.integers(len(pos.neighbors)))][0]


def check_containment(index: LabelIndex) -> bool:
    """True iff every point lies inside its node's ball, at every node."""
    ok = [True]

    def visit(node: _Node, rows: np.ndarray | None = None) -> np.ndarray:
        if node.is_leaf:
            rows = node.point_idx
        else:
            rows = np.concatenate([visit(node.left), visit(node.right)])
        d = np.sqrt(((index.labels[rows] - node.center) ** 2).sum(axis=1))
        if not np.all(d <= node.radius + 1e-12):
            ok[0] = False
        return rows

    visit(index.root)
    return ok[0]
