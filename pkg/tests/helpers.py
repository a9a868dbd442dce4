"""Independent oracles the tests check the library against.

These deliberately recompute quantities by a different route than the
library (grid counting, direct enumeration, finite differences) so a shared
bug cannot hide.
"""

from __future__ import annotations

import numpy as np


def rasterized_iou(box_a, box_b, cells_per_unit: int = 4096) -> float:
    """IoU by counting fine grid cells whose centers fall inside each box.

    The grid has ``cells_per_unit`` cells per coordinate unit; cell k spans
    [k/s, (k+1)/s) and counts for an interval [lo, hi] when its center
    (k + 0.5)/s lies inside.  For axis-aligned boxes the cell counts
    factorize per axis, so the counting is exact integer arithmetic.
    """
    s = float(cells_per_unit)

    def count(lo: float, hi: float) -> int:
        return max(0, int(np.floor(hi * s - 0.5)) - int(np.ceil(lo * s - 0.5)) + 1)

    ax0, ay0, ax1, ay1 = box_a
    bx0, by0, bx1, by1 = box_b
    area_a = count(ax0, ax1) * count(ay0, ay1)
    area_b = count(bx0, bx1) * count(by0, by1)
    inter = (count(max(ax0, bx0), min(ax1, bx1)) * count(max(ay0, by0), min(ay1, by1))
             if max(ax0, bx0) < min(ax1, bx1) and max(ay0, by0) < min(ay1, by1) else 0)
    union = area_a + area_b - inter
    return inter / union if union else 0.0


def rasterized_iou_materialized(box_a, box_b, cells_per_unit: int = 8) -> float:
    """Same grid rule, but with the boolean grids actually materialized."""
    s = float(cells_per_unit)
    corners = np.array([box_a, box_b], dtype=np.float64)
    k_lo = int(np.floor(corners[:, [0, 1]].min() * s)) - 1
    k_hi = int(np.ceil(corners[:, [2, 3]].max() * s)) + 1
    centers = (np.arange(k_lo, k_hi) + 0.5) / s

    def mask(box):
        x0, y0, x1, y1 = box
        in_x = (centers >= x0) & (centers <= x1)
        in_y = (centers >= y0) & (centers <= y1)
        return in_y[:, None] & in_x[None, :]

    a = mask(box_a)
    b = mask(box_b)
    union = int((a | b).sum())
    return int((a & b).sum()) / union if union else 0.0


def silhouette_score(coords: np.ndarray, labels) -> float:
    """Mean silhouette over all points, computed by the direct O(n^2) formula."""
    coords = np.asarray(coords, dtype=np.float64)
    labels = np.asarray(labels)
    diffs = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diffs ** 2).sum(axis=2))
    unique = np.unique(labels)
    scores = np.empty(len(coords))
    for i in range(len(coords)):
        same = (labels == labels[i])
        same[i] = False
        if not same.any():
            scores[i] = 0.0
            continue
        a = dist[i][same].mean()
        b = min(dist[i][labels == other].mean() for other in unique if other != labels[i])
        scores[i] = (b - a) / max(a, b)
    return float(scores.mean())


def brute_force_splits(X, y_codes, weights, feature_ids, n_classes, min_leaf=1):
    """Every valid (feature, threshold, weighted-Gini) by direct enumeration."""
    X = np.asarray(X, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    out = []
    for f in feature_ids:
        values = np.unique(X[:, f])
        for lo, hi in zip(values[:-1], values[1:]):
            threshold = 0.5 * (lo + hi)
            left = X[:, f] <= threshold
            n_left = int(left.sum())
            if n_left < min_leaf or (len(X) - n_left) < min_leaf:
                continue
            score = 0.0
            w_total = weights.sum()
            for side in (left, ~left):
                w_side = weights[side].sum()
                gini = 1.0
                for c in range(n_classes):
                    frac = weights[side & (y_codes == c)].sum() / w_side
                    gini -= frac * frac
                score += w_side * gini / w_total
            out.append((int(f), float(threshold), float(score)))
    return out


def kl_gradient_fd(p, coords, objective, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of objective(p, coords)."""
    coords = np.asarray(coords, dtype=np.float64)
    grad = np.zeros_like(coords)
    for i in range(coords.shape[0]):
        for j in range(coords.shape[1]):
            plus = coords.copy()
            plus[i, j] += step
            minus = coords.copy()
            minus[i, j] -= step
            grad[i, j] = (objective(p, plus) - objective(p, minus)) / (2 * step)
    return grad
