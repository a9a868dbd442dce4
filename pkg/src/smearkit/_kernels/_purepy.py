"""Pure numpy implementations of the hot kernels (fallback backend)."""

from __future__ import annotations

import numpy as np

_EPS = 1e-12


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise intersection-over-union of two (n, 4) / (m, 4) box arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        return np.zeros((a.shape[0], b.shape[0]), dtype=np.float64)
    ix = np.maximum(0.0, np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]))
    iy = np.maximum(0.0, np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]))
    inter = ix * iy
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0.0)
    return out


def scan_split(values: np.ndarray, labels: np.ndarray, weights: np.ndarray,
               n_classes: int, min_leaf: int) -> tuple[int, float]:
    """Best weighted-Gini split of one pre-sorted feature column.

    ``values`` must be ascending, with ``labels`` (int class codes) and
    ``weights`` sorted alongside.  A split at position k sends the first k
    samples left.  Valid positions keep at least ``min_leaf`` samples per
    side and fall on a change of value.  Returns ``(k, impurity)`` with the
    weighted average Gini of the two sides, or ``(-1, inf)`` when no valid
    split exists.  Ties resolve to the smallest k.
    """
    n = values.shape[0]
    if n < 2 * min_leaf:
        return -1, np.inf
    onehot = np.zeros((n, n_classes), dtype=np.float64)
    onehot[np.arange(n), labels] = weights
    prefix = np.cumsum(onehot, axis=0)          # prefix[k-1] = per-class weight of first k
    total = prefix[-1]
    w_total = total.sum()
    positions = np.arange(min_leaf, n - min_leaf + 1)
    positions = positions[values[positions - 1] < values[positions]]
    if positions.size == 0:
        return -1, np.inf
    left = prefix[positions - 1]
    right = total[None, :] - left
    wl = left.sum(axis=1)
    wr = right.sum(axis=1)
    # weighted-average Gini: (wl*(1 - sum((l/wl)^2)) + wr*(...)) / w_total
    gini_l = 1.0 - (left * left).sum(axis=1) / (wl * wl)
    gini_r = 1.0 - (right * right).sum(axis=1) / (wr * wr)
    score = (wl * gini_l + wr * gini_r) / w_total
    best = int(np.argmin(score))                # argmin takes the first minimum
    return int(positions[best]), float(score[best])


def sq_dist_matrix(x: np.ndarray) -> np.ndarray:
    """Squared euclidean distances between all row pairs, zero diagonal."""
    x = np.asarray(x, dtype=np.float64)
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def student_t_terms(y: np.ndarray) -> tuple[np.ndarray, float]:
    """Unnormalized Student-t(1) similarities of embedding rows and their sum."""
    num = 1.0 / (1.0 + sq_dist_matrix(y))
    np.fill_diagonal(num, 0.0)
    return num, float(num.sum())


def tsne_grad(p: np.ndarray, num: np.ndarray, qsum: float, y: np.ndarray) -> np.ndarray:
    """Gradient of KL(P || Q) w.r.t. the embedding rows."""
    pq = (p - num / qsum) * num
    return 4.0 * (pq.sum(axis=1)[:, None] * y - pq @ y)


def kl_from_terms(p: np.ndarray, num: np.ndarray, qsum: float) -> float:
    """KL(P || Q) with Q floored at 1e-12; 0 * log 0 taken as 0."""
    mask = p > 0.0
    q = np.maximum(num[mask] / qsum, _EPS)
    pm = p[mask]
    return float(np.sum(pm * np.log(pm / q)))
