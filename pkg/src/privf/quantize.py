"""Cluster a large public alphabet, solve on the centers, lift back.

The mapping found on the reduced alphabet ``C`` is applied to every
symbol through its cluster: ``p(c_hat | b) = q(c_hat | psi(b))``.  The
leakage of the lifted mapping under the full prior equals the leakage of
the reduced mapping under the aggregated prior, and the end-to-end
distortion exceeds the budget by at most the quantization radius when the
cost obeys the triangle inequality.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dist_core import (
    Alphabet,
    ConditionalMapping,
    DistortionMatrix,
    JointDistribution,
    pairwise_cost,
)
from .exceptions import AlphabetMismatchError, PreconditionError
from .solver import SolveResult, SolverOptions, solve_privacy_mapping

logger = logging.getLogger(__name__)

METRICS = ("hamming", "l2")

#: k-means settings; the choice is ours, not prescribed by the method.
KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 100
#: Rounds of medoid refinement after the greedy k-center pass.
MEDOID_ROUNDS = 10
#: Slack on the end-to-end distortion guarantee.
E2E_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Quantizer:
    """Cluster centers plus the assignment of every public symbol.

    Attributes
    ----------
    symbols : Alphabet
        The original public alphabet ``B``.
    points : ndarray, shape (|B|, dim)
        Feature vector of each symbol.
    centers : Alphabet
        Labels of the centers.  Medoid centers reuse the symbol labels;
        k-means centroids are labelled ``c0, c1, ...``.
    center_vectors : ndarray, shape (k, dim)
    assignment : ndarray of int, shape (|B|,)
        Index of the center of each symbol (``psi``).
    distances : ndarray, shape (|B|,)
        ``d(b, psi(b))``.
    metric : {"hamming", "l2"}
    scale : float
        Costs are divided by this (e.g. the number of coordinates, for a
        per-coordinate Hamming distance).
    """

    symbols: Alphabet
    points: np.ndarray
    centers: Alphabet
    center_vectors: np.ndarray
    assignment: np.ndarray
    distances: np.ndarray
    metric: str
    scale: float = 1.0

    @property
    def k(self) -> int:
        return self.centers.size

    @property
    def radius(self) -> float:
        """Largest distance from a symbol to its center."""
        return float(self.distances.max())

    def cost(self, x, y) -> np.ndarray:
        """Cost table between two sets of vectors under this quantizer's metric."""
        return pairwise_cost(x, y, self.metric, self.scale)

    def center_distortion(self) -> DistortionMatrix:
        """Distortion between centers, the default ``d_C`` over ``(C, C)``."""
        cost = self.cost(self.center_vectors, self.center_vectors)
        return DistortionMatrix(self.centers, self.centers, cost)

    def symbol_distortion(self) -> DistortionMatrix:
        """Distortion from every original symbol to every center."""
        return DistortionMatrix(self.symbols, self.centers, self.cost(self.points, self.center_vectors))


# ---------------------------------------------------------------------------
# clustering


def _hamming_table(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Count of differing coordinates, via one-hot inner products."""
    dim = X.shape[1]
    if dim == 0:
        return np.zeros((len(X), len(Y)))
    both = np.concatenate([X, Y])
    blocks = []
    for j in range(dim):
        _, inv = np.unique(both[:, j], return_inverse=True)
        blocks.append(np.eye(int(inv.max()) + 1)[inv])
    H = np.concatenate(blocks, axis=1)
    same = H[: len(X)] @ H[len(X):].T
    return dim - same


def _dist(X, Y, metric, scale):
    if metric == "hamming":
        return _hamming_table(X, Y) / scale
    return pairwise_cost(X, Y, "l2", scale)


def _identity(symbols, X, metric, scale):
    n = len(X)
    return Quantizer(symbols, X, symbols, X.copy(), np.arange(n), np.zeros(n), metric, scale)


def _k_center(X, w, k, rng, scale):
    """Greedy farthest-first traversal, then minimax medoid refinement."""
    n = len(X)
    live = np.flatnonzero(w > 0)
    first = int(rng.choice(live if live.size else np.arange(n)))
    centers = [first]
    near = _dist(X, X[[first]], "hamming", scale)[:, 0]
    for _ in range(1, k):
        cand = near.copy()
        cand[centers] = -1.0
        nxt = int(np.argmax(cand))  # ties: lowest index
        centers.append(nxt)
        near = np.minimum(near, _dist(X, X[[nxt]], "hamming", scale)[:, 0])

    centers = np.array(centers)
    for _ in range(MEDOID_ROUNDS):
        D = _dist(X, X[centers], "hamming", scale)
        assign = np.argmin(D, axis=1)
        new = centers.copy()
        for c in range(k):
            members = np.flatnonzero(assign == c)
            Dm = _dist(X[members], X[members], "hamming", scale)
            # smallest covering radius first, then weighted spread, then index
            worst = Dm.max(axis=0)
            spread = w[members] @ Dm
            order = np.lexsort((members, spread, worst))
            best = members[order[0]]
            cur_worst = Dm[:, np.flatnonzero(members == centers[c])[0]].max()
            if worst[order[0]] < cur_worst - 1e-12:
                new[c] = best
        if np.array_equal(new, centers):
            break
        centers = new
    return centers


def cluster(
    points,
    k: int,
    metric: str = "hamming",
    *,
    weights=None,
    seed: int = 0,
    symbols=None,
    scale: float = 1.0,
) -> Quantizer:
    """Quantize the public alphabet into ``k`` clusters.

    Parameters
    ----------
    points : array_like, shape (|B|, dim)
        Feature vector of every public symbol.
    k : int
        Number of centers, ``1 <= k <= |B|``.
    metric : {"hamming", "l2"}
        ``hamming`` runs a greedy k-center pass with medoid centers (actual
        symbols); ``l2`` runs weighted k-means with centroid centers.
    weights : array_like, optional
        Symbol probabilities ``p_B``; uniform if omitted.
    seed : int
        Seeds the first k-center pick and the k-means restarts.
    symbols : Alphabet or sequence, optional
        Labels of the symbols; ``0..|B|-1`` by default.
    scale : float
        Divisor applied to every distance.

    Returns
    -------
    Quantizer
        Every symbol is assigned to its nearest center, ties to the lowest
        center index.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    X = np.asarray(points)
    if X.ndim == 1:
        X = X[:, None]
    X = X.astype(float)
    n = len(X)
    if not 1 <= k <= n:
        raise PreconditionError(f"k must be in [1, {n}], got {k}", k)
    if not scale > 0:
        raise PreconditionError("scale must be positive", scale)
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w < 0) or not w.sum() > 0:
        raise PreconditionError("weights must be nonnegative with positive total")
    symbols = Alphabet.range(n) if symbols is None else (
        symbols if isinstance(symbols, Alphabet) else Alphabet(tuple(symbols)))
    if symbols.size != n:
        raise AlphabetMismatchError("symbols and points differ in length")

    if k == n:
        return _identity(symbols, X, metric, scale)

    if metric == "hamming":
        idx = _k_center(X, w, k, np.random.default_rng(seed), scale)
        idx = np.sort(idx)
        C = X[idx]
        labels = Alphabet(tuple(symbols.symbols[i] for i in idx))
    else:
        from sklearn.cluster import KMeans
        from sklearn.exceptions import ConvergenceWarning

        km = KMeans(n_clusters=k, init="k-means++", n_init=KMEANS_RESTARTS,
                    max_iter=KMEANS_MAX_ITER, algorithm="lloyd", random_state=seed)
        with warnings.catch_warnings():
            # fewer distinct points than k: sklearn reports it, duplicates are harmless
            warnings.simplefilter("ignore", ConvergenceWarning)
            km.fit(X, sample_weight=w)
        # canonical order so that labels do not depend on restart order
        C = km.cluster_centers_[np.lexsort(km.cluster_centers_.T[::-1])]
        labels = Alphabet(tuple(f"c{i}" for i in range(k)))

    D = _dist(X, C, metric, scale)
    assign = np.argmin(D, axis=1)
    dist = D[np.arange(n), assign]
    return Quantizer(symbols, X, labels, C, assign, dist, metric, scale)


# ---------------------------------------------------------------------------
# aggregation and lifting


def _onehot(quant: Quantizer) -> np.ndarray:
    A = np.zeros((quant.symbols.size, quant.k))
    A[np.arange(quant.symbols.size), quant.assignment] = 1.0
    return A


def quantized_prior(prior: JointDistribution, quant: Quantizer) -> JointDistribution:
    """Aggregate the mass of each cluster onto its center: ``q(a, c) = sum_{b ~ c} p(a, b)``."""
    if prior.col_alphabet != quant.symbols:
        raise AlphabetMismatchError("prior columns differ from the quantized alphabet")
    return JointDistribution(prior.row_alphabet, quant.centers, prior.mass @ _onehot(quant))


def lift_mapping(q_map: ConditionalMapping, quant: Quantizer) -> ConditionalMapping:
    """Give every symbol the row of its center."""
    if q_map.in_alphabet != quant.centers:
        raise AlphabetMismatchError("mapping rows are not indexed by the quantizer's centers")
    mask = None if q_map.support_mask is None else q_map.support_mask[quant.assignment]
    return ConditionalMapping(quant.symbols, q_map.out_alphabet, q_map.rows[quant.assignment], mask)


def end_to_end_distortion(
    prior: JointDistribution, lifted: ConditionalMapping, d_full: DistortionMatrix
) -> float:
    """``E_p[d(B, C_hat)]`` for a lifted mapping."""
    pb = prior.col_marginal
    return float(pb @ (lifted.rows * d_full.finite_cost).sum(axis=1))


def satisfies_triangle(quant: Quantizer, d_C: DistortionMatrix, d_full: DistortionMatrix,
                       tol: float = 1e-12) -> bool:
    """Check ``d(b, c_hat) <= d(b, psi(b)) + d(psi(b), c_hat)`` for every pair.

    This is the only property of the cost that the distortion guarantee
    relies on.  The built-in metrics satisfy it; custom costs may not.
    """
    direct = d_full.cost
    via = quant.distances[:, None] + d_C.cost[quant.assignment]
    return bool(np.all(direct <= via + tol))


@dataclass(frozen=True, eq=False)
class QuantizedSolve:
    result: SolveResult
    lifted: ConditionalMapping
    end_to_end_distortion: float
    radius: float
    triangle_ok: bool

    @property
    def leakage_bits(self) -> float:
        return self.result.leakage_bits


def solve_quantized(
    prior: JointDistribution,
    quant: Quantizer,
    d_C: Optional[DistortionMatrix] = None,
    delta: float = 0.0,
    opts: Optional[SolverOptions] = None,
    d_full: Optional[DistortionMatrix] = None,
) -> QuantizedSolve:
    """Solve on the aggregated prior, lift, and measure the true distortion.

    Parameters
    ----------
    d_C : DistortionMatrix, optional
        Cost between centers; built from the quantizer's metric if omitted.
    d_full : DistortionMatrix, optional
        Cost from original symbols to centers, used for the end-to-end
        distortion; built from the quantizer's metric if omitted.

    Notes
    -----
    When the triangle inequality holds, the end-to-end distortion is
    asserted to be at most ``delta + radius``.  Otherwise a warning is
    logged and ``triangle_ok`` is False.
    """
    d_C = quant.center_distortion() if d_C is None else d_C
    d_full = quant.symbol_distortion() if d_full is None else d_full
    if d_C.in_alphabet != quant.centers:
        raise AlphabetMismatchError("center distortion is not indexed by the centers")
    if d_full.out_alphabet != d_C.out_alphabet or d_full.in_alphabet != quant.symbols:
        raise AlphabetMismatchError("full distortion does not match (symbols, released centers)")
    q = quantized_prior(prior, quant)
    res = solve_privacy_mapping(q, d_C, delta, opts)
    lifted = lift_mapping(res.mapping, quant)
    e2e = end_to_end_distortion(prior, lifted, d_full)
    tri = satisfies_triangle(quant, d_C, d_full)
    if tri:
        bound = float(delta) + quant.radius + E2E_TOL
        assert e2e <= bound, f"end-to-end distortion {e2e} above {bound}"
    else:
        logger.warning("cost violates the triangle inequality; distortion bound not guaranteed")
    return QuantizedSolve(res, lifted, e2e, quant.radius, tri)


__all__ = [
    "Quantizer",
    "QuantizedSolve",
    "cluster",
    "quantized_prior",
    "lift_mapping",
    "end_to_end_distortion",
    "satisfies_triangle",
    "solve_quantized",
]
