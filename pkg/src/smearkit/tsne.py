"""Exact t-SNE embedding to 2-D (van der Maaten & Hinton, 2008).

Pairwise affinities P come from Gaussian conditionals whose bandwidths are
calibrated per point so each conditional distribution hits a target
perplexity (2 to the power of its entropy in bits).  The embedding
minimizes KL(P || Q) by gradient descent with momentum, where Q uses
Student-t similarities with one degree of freedom.  Everything is the
exact O(n^2) formulation; no tree approximations.

KL divergences are computed in natural log; perplexity calibration uses
entropy in bits, matching the perplexity definition.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from smearkit import _kernels

_EPS = 1e-12


@dataclass(eq=False)
class Embedding:
    """2-D coordinates with optional per-point labels and the optimizer KL trace.

    ``kl_trace[0]`` is the divergence of the initial layout; entry i+1
    follows update i.
    """

    coords: np.ndarray
    labels: tuple | None
    kl_trace: np.ndarray


def validate_affinities(p: np.ndarray, tol: float = 1e-9):
    """Assert the joint-affinity invariants: symmetric, non-negative,
    zero diagonal, total mass 1."""
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError(f"affinity matrix must be square, got shape {p.shape}")
    if (p < 0).any():
        raise ValueError("affinity matrix has negative entries")
    if np.abs(np.diag(p)).max(initial=0.0) != 0.0:
        raise ValueError("affinity matrix diagonal must be zero")
    if abs(float(p.sum()) - 1.0) > tol:
        raise ValueError(f"affinity mass {p.sum()} differs from 1 by more than {tol}")
    if not np.allclose(p, p.T, rtol=0.0, atol=tol):
        raise ValueError("affinity matrix is not symmetric")


def _conditional_row(sq_dists: np.ndarray, beta: float) -> np.ndarray:
    # subtracting the max keeps exp() in range for any beta
    logits = -sq_dists * beta
    logits -= logits.max()
    row = np.exp(logits)
    return row / row.sum()


def _entropy_bits(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def calibrate_sigma(sq_dists_row: np.ndarray, perplexity: float,
                    tol: float = 1e-5, max_iter: int = 64) -> float:
    """Bandwidth sigma for one point so its conditional distribution has the
    target perplexity.

    ``sq_dists_row`` holds the squared distances to all other points (self
    excluded).  Binary search over beta = 1 / (2 sigma^2) until the entropy
    in bits is within ``tol`` of log2(perplexity); if the search does not
    converge the best iterate is used and a warning is issued.
    """
    row = np.asarray(sq_dists_row, dtype=np.float64)
    n = row.size + 1
    if n < 3:
        raise ValueError("need at least 3 points to calibrate a bandwidth")
    if not (1.0 <= perplexity < n):
        raise ValueError(f"perplexity {perplexity} must be in [1, n) with n={n}")
    target = np.log2(perplexity)
    # search on distances normalized by their mean so the root sits near
    # beta ~ 1 regardless of feature magnitude; sigma is rescaled at the end
    scale = float(row.mean()) or 1.0
    scaled = row / scale
    beta, beta_lo, beta_hi = 1.0, 0.0, np.inf
    best_beta, best_gap = beta, np.inf
    for _ in range(max_iter):
        gap = _entropy_bits(_conditional_row(scaled, beta)) - target
        if abs(gap) < best_gap:
            best_gap, best_beta = abs(gap), beta
        if abs(gap) <= tol:
            best_beta = beta
            break
        if gap > 0:            # entropy too high: sharpen
            beta_lo = beta
            beta = beta * 2.0 if beta_hi == np.inf else 0.5 * (beta_lo + beta_hi)
        else:
            beta_hi = beta
            beta = 0.5 * (beta_lo + beta_hi)
    else:
        warnings.warn(f"perplexity calibration stopped after {max_iter} iterations "
                      f"(entropy off by {best_gap:.2e} bits)")
    return float(np.sqrt(0.5 * scale / best_beta))


def joint_probabilities(X, perplexity: float = 30.0) -> np.ndarray:
    """Symmetrized joint affinities of the input rows.

    Gaussian conditionals with per-point calibrated bandwidths are
    symmetrized as (P + P[t]) / (2n).  Duplicate points are safe: zero
    distances simply spread the conditional mass uniformly, and consumers
    floor vanishing probabilities at 1e-12 inside log terms.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 points, got {n}")
    d2 = _kernels.sq_dist_matrix(X)
    others = ~np.eye(n, dtype=bool)
    cond = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        row = d2[i][others[i]]
        sigma = calibrate_sigma(row, perplexity)
        beta = 0.5 / (sigma * sigma)
        cond[i][others[i]] = _conditional_row(row, beta)
    p = (cond + cond.T) / (2.0 * n)
    np.fill_diagonal(p, 0.0)
    return p


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Kullback-Leibler divergence sum(P log(P / Q)) in natural log.

    Terms with P = 0 contribute nothing; Q is floored at 1e-12 where P > 0.
    Both arguments must be equally-shaped distributions with zero diagonal
    and unit mass (symmetry is not required).
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    for name, mat in (("P", p), ("Q", q)):
        if (mat < 0).any():
            raise ValueError(f"{name} has negative entries")
        if np.abs(np.diag(mat)).max(initial=0.0) != 0.0:
            raise ValueError(f"{name} diagonal must be zero")
        if abs(float(mat.sum()) - 1.0) > 1e-9:
            raise ValueError(f"{name} mass differs from 1")
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / np.maximum(q[mask], _EPS))))


def kl_objective(p: np.ndarray, coords: np.ndarray) -> float:
    """KL(P || Q(coords)) for an embedding; the quantity embed() minimizes."""
    num, qsum = _kernels.student_t_terms(np.asarray(coords, dtype=np.float64))
    return _kernels.kl_from_terms(p, num, qsum)


def kl_gradient(p: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Analytic gradient of KL(P || Q(coords)) with respect to the coordinates."""
    coords = np.asarray(coords, dtype=np.float64)
    num, qsum = _kernels.student_t_terms(coords)
    return _kernels.tsne_grad(p, num, qsum, coords)


def embed(X, perplexity: float = 30.0, n_iter: int = 1000,
          exaggeration: float = 12.0, exaggeration_iters: int = 250,
          learning_rate: float = 200.0, momentum: float = 0.5,
          final_momentum: float = 0.8, momentum_switch: int = 250,
          seed: int = 0, labels=None) -> Embedding:
    """Embed feature rows into 2-D by minimizing KL(P || Q).

    Standard schedule: affinities are scaled by ``exaggeration`` for the
    first ``exaggeration_iters`` updates, and momentum switches from
    ``momentum`` to ``final_momentum`` at ``momentum_switch``.  The initial
    layout is a small isotropic Gaussian drawn from ``seed``, so runs are
    bitwise reproducible.  The returned trace logs KL against the true
    (unexaggerated) affinities at every iteration.
    """
    X = np.asarray(X, dtype=np.float64)
    if labels is not None:
        labels = tuple(labels)
        if len(labels) != X.shape[0]:
            raise ValueError(f"{len(labels)} labels for {X.shape[0]} points")
    p = joint_probabilities(X, perplexity)
    rng = np.random.default_rng(seed)
    coords = rng.normal(0.0, 1e-4, size=(X.shape[0], 2))
    velocity = np.zeros_like(coords)
    p_ex = p * exaggeration

    trace = np.empty(n_iter + 1, dtype=np.float64)
    num, qsum = _kernels.student_t_terms(coords)
    trace[0] = _kernels.kl_from_terms(p, num, qsum)
    for it in range(n_iter):
        grad = _kernels.tsne_grad(p_ex if it < exaggeration_iters else p, num, qsum, coords)
        if not np.isfinite(grad).all():
            raise FloatingPointError(f"non-finite gradient at iteration {it}")
        mu = momentum if it < momentum_switch else final_momentum
        velocity = mu * velocity - learning_rate * grad
        coords = coords + velocity
        num, qsum = _kernels.student_t_terms(coords)
        trace[it + 1] = _kernels.kl_from_terms(p, num, qsum)
    return Embedding(coords=coords, labels=labels, kl_trace=trace)
