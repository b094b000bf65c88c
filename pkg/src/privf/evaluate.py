"""Measure what an adversary can infer before and after a privacy mapping.

Two adversaries are provided: the exact MAP detector computed from the
joint law, and a logistic-regression classifier trained on records with
held-out (cross-validated) scores.  A synthetic generator of
TV-show-rating records stands in for survey data that cannot be shared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dist_core import (
    ConditionalMapping,
    JointDistribution,
    compose_output_joint,
)
from .exceptions import AlphabetMismatchError, PreconditionError
from .prior_est import SampleTable

#: Logistic regression defaults.
LOGREG_LR = 0.1
LOGREG_ITERS = 2000
LOGREG_L2 = 1e-3
LOGREG_FOLDS = 10


# ---------------------------------------------------------------------------
# releasing records


def apply_mapping(records: SampleTable, mapping: ConditionalMapping, seed: int = 0) -> SampleTable:
    """Replace every public symbol by a draw from its row of ``mapping``.

    Draws are independent across records and reproducible given ``seed``.

    Raises
    ------
    UnknownLabelError
        If a record's symbol is not in the mapping's input alphabet.
    """
    idx = mapping.in_alphabet.indices(records.b)
    cum = np.cumsum(mapping.rows, axis=1)
    u = np.random.default_rng(seed).random(records.n)
    # P(#{j: cum_j <= u} = k) = rows[k]; the clip guards against round-off in the last sum
    out = np.minimum((cum[idx] <= u[:, None]).sum(axis=1), mapping.shape[1] - 1)
    # a zero-probability column can never be drawn, even at the boundary
    labels = mapping.out_alphabet.symbols
    return SampleTable(records.a, tuple(labels[k] for k in out))


# ---------------------------------------------------------------------------
# MAP adversary


def map_detector(prior: JointDistribution, mapping: ConditionalMapping) -> np.ndarray:
    """Best guess of the private row index for every released symbol (ties: lowest)."""
    q = compose_output_joint(prior, mapping).mass
    return np.argmax(q, axis=0)


def map_accuracy(prior: JointDistribution, mapping: Optional[ConditionalMapping] = None) -> float:
    """Exact probability that the MAP guess of A from the release is right.

    ``sum over b_hat of max_a p(a, b_hat)``.  Without a mapping, the public
    data itself is released.
    """
    q = prior.mass if mapping is None else compose_output_joint(prior, mapping).mass
    return float(q.max(axis=0).sum())


def majority_rate(prior: JointDistribution) -> float:
    """Accuracy of always guessing the most likely private value."""
    return float(prior.row_marginal.max())


# ---------------------------------------------------------------------------
# logistic regression


def _binary_labels(y) -> np.ndarray:
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size != 2:
        raise PreconditionError(f"logistic regression needs two classes, got {classes.size}", classes.size)
    return (y == classes[1]).astype(float)


def _log1pexp(z):
    return np.logaddexp(0.0, z)


def _fit_logreg(X, y, l2, lr, iters):
    """Full-batch gradient descent; the step halves whenever the loss does not drop."""
    n, dim = X.shape
    w = np.zeros(dim + 1)
    Xb = np.hstack([X, np.ones((n, 1))])
    reg = np.r_[np.full(dim, l2), 0.0]

    def loss(v):
        z = Xb @ v
        return float(np.mean(_log1pexp(z) - y * z) + 0.5 * (reg * v * v).sum())

    cur = loss(w)
    for _ in range(iters):
        p = 1.0 / (1.0 + np.exp(-(Xb @ w)))
        grad = Xb.T @ (p - y) / n + reg * w
        cand = w - lr * grad
        new = loss(cand)
        if new < cur:
            w, cur = cand, new
        else:
            lr *= 0.5
            if lr < 1e-12:
                break
    return w


def logreg_train(
    X,
    y,
    folds: int = LOGREG_FOLDS,
    l2_penalty: float = LOGREG_L2,
    seed: int = 0,
    lr: float = LOGREG_LR,
    iters: int = LOGREG_ITERS,
) -> np.ndarray:
    """Held-out scores of an L2-penalized logistic regression.

    The data are split into stratified, shuffled folds.  For each fold the
    features are standardized with the training mean and spread, a model
    is fit on the other folds, and the held-out records are scored.

    Returns
    -------
    ndarray, shape (n,)
        Probability of the positive (larger) label for every record.

    Raises
    ------
    PreconditionError
        If a training split lacks one of the classes; stratification needs
        at least ``folds`` records of each class.
    """
    from sklearn.model_selection import StratifiedKFold

    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    yb = _binary_labels(y)
    counts = np.bincount(yb.astype(int), minlength=2)
    if counts.min() < folds:
        raise PreconditionError(
            f"each class needs at least {folds} records for stratified {folds}-fold "
            f"cross-validation (smallest class has {counts.min()})", int(counts.min()))
    scores = np.empty(len(yb))
    split = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    for train, test in split.split(X, yb):
        if np.unique(yb[train]).size < 2:
            raise PreconditionError("a training fold has a single class; stratify the folds")
        mu = X[train].mean(axis=0)
        sd = X[train].std(axis=0)
        sd[sd == 0] = 1.0
        w = _fit_logreg((X[train] - mu) / sd, yb[train], l2_penalty, lr, iters)
        z = ((X[test] - mu) / sd) @ w[:-1] + w[-1]
        scores[test] = 1.0 / (1.0 + np.exp(-z))
    return scores


# ---------------------------------------------------------------------------
# ROC


@dataclass(frozen=True, eq=False)
class RocCurve:
    """(false positive rate, true positive rate) pairs from the strictest threshold down."""

    points: tuple
    auc: float

    @property
    def fpr(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def tpr(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])


def roc(scores, labels) -> RocCurve:
    """ROC curve over all distinct score thresholds, with trapezoidal area.

    Records with equal scores enter together, so ties produce a diagonal
    segment (counted as half).
    """
    s = np.asarray(scores, dtype=float)
    y = _binary_labels(labels) if np.unique(labels).size == 2 else None
    if y is None:
        raise PreconditionError("ROC needs at least one positive and one negative label")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(y)[last]
    fp = np.cumsum(1.0 - y)[last]
    tpr = np.r_[0.0, tp / tp[-1]]
    fpr = np.r_[0.0, fp / fp[-1]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(tuple(zip(fpr.tolist(), tpr.tolist())), auc)


def records_to_features(records: SampleTable) -> np.ndarray:
    """Feature matrix from records whose public symbols are numeric tuples."""
    return np.array([np.atleast_1d(b) for b in records.b], dtype=float)


# ---------------------------------------------------------------------------
# synthetic ratings


def synth_politics(
    n: int = 1200,
    shows: int = 50,
    discriminative_fraction: float = 1.0 / 3.0,
    seed: int = 0,
    *,
    margin: float = 0.35,
    class_balance: float = 0.61,
    base_range: Sequence[float] = (0.3, 0.7),
) -> SampleTable:
    """Binary "likes show" vectors for two political classes.

    Each show has a base like-probability drawn from ``base_range``.  On a
    discriminative show one class (chosen at random) moves ``margin / 2``
    of the way towards liking it, ``base + margin (1 - base) / 2``, and the
    other moves as far towards disliking it, ``base (1 - margin / 2)``.
    Other shows are liked with the base probability by both classes.
    Class 1 has probability ``class_balance``.

    Returns
    -------
    SampleTable
        ``a`` in {0, 1}; ``b`` a tuple of ``shows`` ratings in {0, 1}.
    """
    if n < 1:
        raise PreconditionError("n must be at least 1", n)
    if not 0.0 <= discriminative_fraction <= 1.0:
        raise PreconditionError("discriminative_fraction must be in [0, 1]", discriminative_fraction)
    if not 0.0 <= margin <= 1.0:
        raise PreconditionError("margin must be in [0, 1]", margin)
    rng = np.random.default_rng(seed)
    base = rng.uniform(base_range[0], base_range[1], size=shows)
    n_disc = int(round(discriminative_fraction * shows))
    disc = np.zeros(shows, dtype=bool)
    disc[rng.permutation(shows)[:n_disc]] = True
    favors = rng.integers(0, 2, size=shows)
    hi = base + 0.5 * margin * (1.0 - base)
    lo = base * (1.0 - 0.5 * margin)
    like = np.tile(base, (2, 1))
    for c in (0, 1):
        like[c, disc] = np.where(favors[disc] == c, hi[disc], lo[disc])
    a = (rng.random(n) < class_balance).astype(int)
    b = (rng.random((n, shows)) < like[a]).astype(int)
    return SampleTable(tuple(a.tolist()), tuple(map(tuple, b.tolist())))


def binarize_ratings(ratings, threshold: int = 4) -> np.ndarray:
    """Star ratings to likes: 1 iff the rating is at least ``threshold``."""
    return (np.asarray(ratings) >= threshold).astype(int)


def select_columns(records: SampleTable, columns: Sequence[int]) -> SampleTable:
    """Keep some coordinates of every public tuple."""
    cols = list(columns)
    return SampleTable(records.a, tuple(tuple(b[j] for j in cols) for b in records.b))


def top_informative(records: SampleTable, k: int) -> np.ndarray:
    """Indices of the k coordinates with the largest empirical MI with ``a``.

    Ties go to the lower index.
    """
    from .dist_core import _mi_bits

    X = records_to_features(records)
    a = np.asarray(records.a)
    classes = np.unique(a)
    mi = np.empty(X.shape[1])
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        tab = np.array([[np.sum((a == c) & (X[:, j] == v)) for v in vals] for c in classes], dtype=float)
        mi[j] = _mi_bits(tab / tab.sum())
    return np.sort(np.lexsort((np.arange(len(mi)), -mi))[:k])


@dataclass(frozen=True, eq=False)
class AttackReport:
    map_before: float
    map_after: float
    majority: float
    auc_before: float
    auc_after: float
    roc_before: RocCurve
    roc_after: RocCurve


def attack_report(
    prior: JointDistribution,
    mapping: ConditionalMapping,
    records: SampleTable,
    seed: int = 0,
    folds: int = LOGREG_FOLDS,
    l2_penalty: float = LOGREG_L2,
) -> AttackReport:
    """MAP accuracy and logistic-regression AUC before and after release.

    Records must carry numeric tuples as public symbols; the released
    symbols are drawn with ``apply_mapping`` and must be numeric too.
    """
    if mapping.in_alphabet != prior.col_alphabet:
        raise AlphabetMismatchError("mapping input alphabet differs from the prior's")
    released = apply_mapping(records, mapping, seed)
    s0 = logreg_train(records_to_features(records), records.a, folds, l2_penalty, seed)
    s1 = logreg_train(records_to_features(released), released.a, folds, l2_penalty, seed)
    r0, r1 = roc(s0, records.a), roc(s1, released.a)
    return AttackReport(
        map_accuracy(prior), map_accuracy(prior, mapping), majority_rate(prior),
        r0.auc, r1.auc, r0, r1,
    )


__all__ = [
    "RocCurve",
    "AttackReport",
    "apply_mapping",
    "map_detector",
    "map_accuracy",
    "majority_rate",
    "logreg_train",
    "roc",
    "records_to_features",
    "synth_politics",
    "binarize_ratings",
    "select_columns",
    "top_informative",
    "attack_report",
]
