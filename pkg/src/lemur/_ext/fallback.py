"""Pure numpy versions of the compiled kernels. Same signatures and results."""

from __future__ import annotations

import numpy as np


def join_index(ids: np.ndarray, table_ids: np.ndarray, table_rows: np.ndarray) -> np.ndarray:
    """Map each id to its row in a sorted id table, ``-1`` when absent.

    ``table_ids`` must be sorted ascending and unique.
    """
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    out = np.full(ids.shape, -1, dtype=np.int64)
    if len(table_ids) == 0:
        return out
    pos = np.searchsorted(table_ids, ids)
    pos = np.minimum(pos, len(table_ids) - 1)
    hit = table_ids[pos] == ids
    out[hit] = table_rows[pos[hit]]
    return out


def _auc_sorted(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC with half credit for ties; ``scores`` ascending."""
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    # average 1-based ranks over tie blocks
    _, start, counts = np.unique(scores, return_index=True, return_counts=True)
    avg = start + (counts + 1) / 2.0
    ranks = np.repeat(avg, counts)
    rank_sum = ranks[labels.astype(bool)].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    order = np.argsort(scores, kind="mergesort")
    return _auc_sorted(scores[order], labels[order])


def grouped_auc(groups: np.ndarray, scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-group AUC; returns ``(unique_groups, aucs)`` with NaN for single-class groups."""
    groups = np.asarray(groups, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    order = np.lexsort((scores, groups))
    g, s, y = groups[order], scores[order], labels[order]
    uniq, start = np.unique(g, return_index=True)
    ends = np.append(start[1:], len(g))
    out = np.array([_auc_sorted(s[a:b], y[a:b]) for a, b in zip(start, ends)])
    return uniq, out
