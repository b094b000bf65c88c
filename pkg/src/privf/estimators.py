"""scikit-learn style wrappers: fit a privacy mapping, then release records.

``fit(X, y)`` takes public feature rows ``X`` and private labels ``y``,
estimates the smoothed prior, and solves for the least-leaking mapping
within the distortion budget.  ``transform(X)`` draws a release for every
row.  Draws are reproducible through ``random_state``.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dist_core import DistortionMatrix, expected_distortion, leakage, pairwise_cost
from .exceptions import PreconditionError, UnknownLabelError
from .prior_est import SampleTable, infer_alphabet, smoothed_joint
from .quantize import cluster, end_to_end_distortion, lift_mapping, quantized_prior
from .solver import SolverOptions, solve_privacy_mapping

_METRICS = ("hamming", "l2")


def _as_rows(X) -> list:
    X = np.asarray(X, dtype=object)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError("X must be 2-D (records x features)")
    return [tuple(r) for r in X.tolist()]


def _codes(symbols, metric):
    """Numeric coordinates of symbol tuples (value codes for Hamming)."""
    S = np.array(symbols, dtype=object)
    if metric == "l2":
        return S.astype(float)
    out = np.empty(S.shape)
    for j in range(S.shape[1]):
        _, out[:, j] = np.unique(S[:, j].astype(str), return_inverse=True)
    return out


def _raw_distance(rows, targets, metric, scale):
    R = np.array(rows, dtype=object)
    T = np.array(targets, dtype=object)
    if metric == "l2":
        return pairwise_cost(R.astype(float), T.astype(float), "l2", scale)
    return (R[:, None, :] != T[None, :, :]).sum(axis=2) / scale


class PrivacyMapper(TransformerMixin, BaseEstimator):
    """Least-leaking randomized release of categorical or numeric records.

    Parameters
    ----------
    delta : float
        Budget on the expected distortion between a record and its release.
    metric : {"hamming", "l2"}
        Distortion between feature rows.
    scale : float
        Divisor of the distortion (e.g. the number of features).
    alpha : float
        Additive smoothing of the estimated prior.
    max_iters, tol : solver settings.
    random_state : int
        Seed of the release draws.

    Attributes
    ----------
    prior_ : JointDistribution
    mapping_ : ConditionalMapping
    leakage_ : float
        Leakage in bits under the fitted prior.
    distortion_ : float
    converged_ : bool
    """

    def __init__(self, delta: float = 0.0, metric: str = "hamming", scale: float = 1.0,
                 alpha: float = 0.5, max_iters: int = 5000, tol: float = 1e-6,
                 random_state: Optional[int] = 0):
        self.delta = delta
        self.metric = metric
        self.scale = scale
        self.alpha = alpha
        self.max_iters = max_iters
        self.tol = tol
        self.random_state = random_state

    def _check_params(self):
        if self.metric not in _METRICS:
            raise ValueError(f"metric must be one of {_METRICS}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def _prior(self, X, y):
        rows = _as_rows(X)
        if len(rows) != len(y):
            raise ValueError("X and y have different lengths")
        samples = SampleTable(tuple(np.asarray(y).tolist()), tuple(rows))
        self.n_features_in_ = len(rows[0])
        return smoothed_joint(samples, infer_alphabet(samples.a), infer_alphabet(samples.b), self.alpha)

    def _options(self):
        return SolverOptions(max_iters=self.max_iters, tol=self.tol)

    def fit(self, X, y):
        self._check_params()
        prior = self._prior(X, y)
        B = prior.col_alphabet
        pts = _codes(B.symbols, self.metric)
        d = DistortionMatrix(B, B, pairwise_cost(pts, pts, self.metric, self.scale))
        res = solve_privacy_mapping(prior, d, self.delta, self._options())
        self.prior_ = prior
        self.mapping_ = res.mapping
        self.leakage_ = res.leakage_bits
        self.distortion_ = expected_distortion(prior, res.mapping, d)
        self.converged_ = res.converged
        return self

    def _draw(self, idx, rows_table, out_labels):
        u = np.random.default_rng(self.random_state).random(len(idx))
        cum = np.cumsum(rows_table, axis=1)
        k = np.minimum((cum[idx] <= u[:, None]).sum(axis=1), rows_table.shape[1] - 1)
        out = np.empty((len(idx), self.n_features_in_), dtype=object)
        for i, j in enumerate(k):
            lab = out_labels[j]
            out[i] = lab if isinstance(lab, tuple) else (lab,)
        return out

    def transform(self, X):
        """Release every row; returns an object array of released rows."""
        check_is_fitted(self, "mapping_")
        rows = _as_rows(X)
        idx = self.mapping_.in_alphabet.indices(rows)
        return self._draw(idx, self.mapping_.rows, self.mapping_.out_alphabet.symbols)


class QuantizedPrivacyMapper(PrivacyMapper):
    """Privacy mapping solved on ``k`` cluster centers of the observed rows.

    Rows are clustered (Hamming medoids or l2 centroids), the mapping is
    solved over the centers, and a row is released through the mapping
    row of its nearest center.  Rows unseen during ``fit`` also go to
    their nearest center.

    Attributes
    ----------
    quantizer_ : Quantizer
    center_mapping_ : ConditionalMapping
        Mapping over centers.
    mapping_ : ConditionalMapping
        The lifted mapping over the observed rows.
    radius_ : float
    """

    def __init__(self, k: int = 25, delta: float = 0.0, metric: str = "hamming", scale: float = 1.0,
                 alpha: float = 0.5, max_iters: int = 5000, tol: float = 1e-6,
                 random_state: Optional[int] = 0):
        super().__init__(delta, metric, scale, alpha, max_iters, tol, random_state)
        self.k = k

    def fit(self, X, y):
        self._check_params()
        prior = self._prior(X, y)
        B = prior.col_alphabet
        if not 1 <= self.k <= B.size:
            raise PreconditionError(f"k must be in [1, {B.size}]", self.k)
        quant = cluster(_codes(B.symbols, self.metric), self.k, self.metric, weights=prior.col_marginal,
                        seed=0 if self.random_state is None else self.random_state,
                        symbols=B, scale=self.scale)
        q = quantized_prior(prior, quant)
        res = solve_privacy_mapping(q, quant.center_distortion(), self.delta, self._options())
        lifted = lift_mapping(res.mapping, quant)
        self.prior_ = prior
        self.quantizer_ = quant
        self.center_mapping_ = res.mapping
        self.mapping_ = lifted
        self.leakage_ = leakage(prior, lifted)
        self.distortion_ = end_to_end_distortion(prior, lifted, quant.symbol_distortion())
        self.radius_ = quant.radius
        self.converged_ = res.converged
        # centers as raw rows, for nearest-center lookup of unseen rows
        if self.metric == "hamming":
            self._center_rows = list(quant.centers.symbols)  # medoids are observed rows
        else:
            self._center_rows = [tuple(v) for v in quant.center_vectors.tolist()]
        return self

    def assign(self, X) -> np.ndarray:
        """Center index of every row (nearest center, ties to the lowest index)."""
        check_is_fitted(self, "quantizer_")
        rows = _as_rows(X)
        quant = self.quantizer_
        out = np.empty(len(rows), dtype=np.intp)
        unseen = []
        for i, r in enumerate(rows):
            if r in quant.symbols:
                out[i] = quant.assignment[quant.symbols.index(r)]
            else:
                unseen.append(i)
        if unseen:
            if any(len(rows[i]) != self.n_features_in_ for i in unseen):
                raise UnknownLabelError(rows[unseen[0]], "fitted feature layout")
            D = _raw_distance([rows[i] for i in unseen], self._center_rows, self.metric, self.scale)
            out[unseen] = np.argmin(D, axis=1)
        return out

    def transform(self, X):
        """Release every row through its center's mapping row."""
        idx = self.assign(X)
        out_labels = self.center_mapping_.out_alphabet.symbols
        if self.metric == "l2":
            # synthetic centroids: release the center vector
            out_labels = [tuple(v) for v in self.quantizer_.center_vectors.tolist()]
        return self._draw(idx, self.center_mapping_.rows, out_labels)


__all__ = ["PrivacyMapper", "QuantizedPrivacyMapper"]
