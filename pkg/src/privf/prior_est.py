"""Estimating the joint prior from data, and what a wrong prior costs.

Two routes lead to a prior: counting categorical records
(:func:`empirical_joint`, :func:`smoothed_joint`) and discretizing a
per-class Gaussian kernel density estimate of continuous features on a
grid (:func:`kde_discretize`).

The remaining functions bound how far a mapping designed under an
estimated prior ``q`` can drift when the data follow ``p``:

* :func:`entropy_l1_bound` bounds ``|H(p) - H(q)|`` by the L1 distance,
* :func:`mismatch_bounds` turns this into leakage and distortion slacks,
* :func:`sample_complexity_bound` bounds the chance that an empirical
  prior from ``n`` samples is ``eps``-far from the truth.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .dist_core import (
    Alphabet,
    DistortionMatrix,
    JointDistribution,
    l1_distance,
)
from .exceptions import AlphabetMismatchError, PreconditionError, UnknownLabelError

#: Sentinel asking :func:`kde_discretize` to pick bandwidths by cross-validation.
CROSS_VALIDATED = "cv"

#: Bandwidth candidates, as multiples of a class's feature spread.
CV_BANDWIDTH_FACTORS = np.logspace(-1.5, 0.5, 10)

#: Additive smoothing used when none is given (a Jeffreys-style half count).
DEFAULT_ALPHA = 0.5

#: Largest L1 distance for which the entropy continuity bound holds.
L1_PRECONDITION = 0.5


def _sort_key(label):
    return (type(label).__name__, label)


def infer_alphabet(labels: Iterable[Hashable]) -> Alphabet:
    """Alphabet of the distinct labels, sorted (by type name, then value)."""
    uniq = set(labels)
    if not uniq:
        raise ValueError("cannot infer an alphabet from no labels")
    try:
        return Alphabet(tuple(sorted(uniq, key=_sort_key)))
    except TypeError:
        return Alphabet(tuple(sorted(uniq, key=repr)))


@dataclass(frozen=True, eq=False)
class SampleTable:
    """Paired observations of the private label ``a`` and public symbol ``b``."""

    a: tuple
    b: tuple

    def __post_init__(self):
        a, b = tuple(self.a), tuple(self.b)
        if len(a) != len(b):
            raise ValueError(f"{len(a)} private labels but {len(b)} public symbols")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_records(cls, records: Iterable[tuple]) -> "SampleTable":
        records = list(records)
        if not records:
            return cls((), ())
        a, b = zip(*records)
        return cls(a, b)

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def records(self) -> list:
        return list(zip(self.a, self.b))

    def __len__(self):
        return self.n


def _count_table(samples: SampleTable, a_alpha: Alphabet, b_alpha: Alphabet) -> np.ndarray:
    counts = np.zeros((a_alpha.size, b_alpha.size))
    if samples.n == 0:
        return counts
    try:
        ia = a_alpha.indices(samples.a)
    except UnknownLabelError as exc:
        raise UnknownLabelError(exc.label, "private alphabet") from None
    try:
        ib = b_alpha.indices(samples.b)
    except UnknownLabelError as exc:
        raise UnknownLabelError(exc.label, "public alphabet") from None
    np.add.at(counts, (ia, ib), 1.0)
    return counts


def empirical_joint(
    samples: SampleTable,
    a_alpha: Optional[Alphabet] = None,
    b_alpha: Optional[Alphabet] = None,
) -> JointDistribution:
    """Relative frequencies ``#{a_i = a, b_i = b} / n``.

    Alphabets default to the sorted labels seen in ``samples``.

    Raises
    ------
    PreconditionError
        If ``samples`` is empty.
    UnknownLabelError
        If a record uses a label missing from the given alphabets.
    """
    if samples.n < 1:
        raise PreconditionError("empirical_joint needs at least one sample", samples.n)
    a_alpha = a_alpha or infer_alphabet(samples.a)
    b_alpha = b_alpha or infer_alphabet(samples.b)
    counts = _count_table(samples, a_alpha, b_alpha)
    return JointDistribution(a_alpha, b_alpha, counts / samples.n)


def smoothed_joint(
    samples: SampleTable,
    a_alpha: Alphabet,
    b_alpha: Alphabet,
    alpha: float = DEFAULT_ALPHA,
) -> JointDistribution:
    """Additively smoothed frequencies ``(count + alpha) / (n + alpha |A||B|)``.

    Smoothing keeps every cell positive so the solver never faces empty
    support; ``alpha = 0`` gives :func:`empirical_joint`.
    """
    if not alpha >= 0:
        raise PreconditionError("smoothing alpha must be nonnegative", alpha)
    counts = _count_table(samples, a_alpha, b_alpha)
    denom = samples.n + alpha * counts.size
    if denom <= 0:
        raise PreconditionError("no samples and no smoothing: the joint is undefined", samples.n)
    return JointDistribution(a_alpha, b_alpha, (counts + alpha) / denom)


# ---------------------------------------------------------------------------
# kernel density discretization


def _check_grid(grid, dim):
    edges = [np.asarray(e, dtype=float) for e in grid]
    if len(edges) != dim:
        raise ValueError(f"grid has {len(edges)} axes for {dim}-dimensional points")
    for i, e in enumerate(edges):
        if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0) or not np.all(np.isfinite(e)):
            raise ValueError(f"grid axis {i} needs at least two strictly increasing finite edges")
    return edges


def _gauss_logdens(x, data, h):
    """Log density of an isotropic Gaussian-product KDE at rows of ``x``."""
    d = data.shape[1]
    sq = ((x[:, None, :] - data[None, :, :]) ** 2).sum(axis=2)
    log_k = -0.5 * sq / h**2 - d * math.log(h * math.sqrt(2 * math.pi))
    return logsumexp(log_k, axis=1) - math.log(len(data))


def loo_log_likelihood(data: np.ndarray, h: float) -> float:
    """Mean leave-one-out log-likelihood of a Gaussian KDE with bandwidth h."""
    data = np.asarray(data, dtype=float)
    n, d = data.shape
    sq = ((data[:, None, :] - data[None, :, :]) ** 2).sum(axis=2)
    log_k = -0.5 * sq / h**2 - d * math.log(h * math.sqrt(2 * math.pi))
    np.fill_diagonal(log_k, -np.inf)
    return float((logsumexp(log_k, axis=1) - math.log(n - 1)).mean())


def cv_bandwidth(data: np.ndarray, factors: Sequence[float] = CV_BANDWIDTH_FACTORS) -> float:
    """Bandwidth maximizing the leave-one-out log-likelihood.

    Candidates are ``factors`` times the mean per-feature standard
    deviation; ties go to the smaller bandwidth.
    """
    data = np.asarray(data, dtype=float)
    spread = float(data.std(axis=0).mean())
    if spread <= 0:
        spread = 1.0
    cands = spread * np.asarray(factors, dtype=float)
    scores = np.array([loo_log_likelihood(data, h) for h in cands])
    return float(cands[int(np.argmax(scores))])


def kde_discretize(
    points,
    labels: Sequence[Hashable],
    grid: Sequence[Sequence[float]],
    bandwidth: Union[float, Mapping[Hashable, float], str] = CROSS_VALIDATED,
    classes: Optional[Alphabet] = None,
) -> JointDistribution:
    """Joint of (class, grid cell) from per-class Gaussian kernel estimates.

    Each class density is evaluated at the cell centers and normalized over
    the cells, then weighted by the empirical class frequency, so the class
    marginal of the result equals the empirical one.

    Parameters
    ----------
    points : array_like, shape (n, d)
    labels : sequence of length n
        Class of every point.
    grid : sequence of d edge arrays
        Bin edges per axis; cells are labeled by tuples of bin indices in
        row-major order.
    bandwidth : float, dict or ``CROSS_VALIDATED``
        One bandwidth for all classes, one per class, or chosen per class
        by leave-one-out likelihood (see :func:`cv_bandwidth`).
    classes : Alphabet, optional
        Class alphabet; defaults to the sorted distinct labels.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    labels = list(labels)
    if len(labels) != len(X):
        raise ValueError("points and labels differ in length")
    edges = _check_grid(grid, X.shape[1])
    lo = np.array([e[0] for e in edges])
    hi = np.array([e[-1] for e in edges])
    if np.any(X < lo) or np.any(X > hi):
        raise PreconditionError("grid does not cover the range of the points")
    classes = classes or infer_alphabet(labels)
    idx = classes.indices(labels)

    centers = [0.5 * (e[:-1] + e[1:]) for e in edges]
    cells = np.array(list(itertools.product(*centers)))
    cell_labels = tuple(itertools.product(*[range(len(c)) for c in centers]))

    mass = np.zeros((classes.size, len(cells)))
    for c, label in enumerate(classes.symbols):
        data = X[idx == c]
        if len(data) == 0:
            raise PreconditionError(f"class {label!r} has no points")
        if len(data) < 2:
            raise PreconditionError(f"class {label!r} needs at least two points", len(data))
        if isinstance(bandwidth, str):
            if bandwidth != CROSS_VALIDATED:
                raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
            h = cv_bandwidth(data)
        elif isinstance(bandwidth, Mapping):
            h = float(bandwidth[label])
        else:
            h = float(bandwidth)
        if not h > 0:
            raise ValueError("bandwidth must be positive")
        logd = _gauss_logdens(cells, data, h)
        prof = np.exp(logd - logd.max())
        mass[c] = prof / prof.sum() * (len(data) / len(X))
    return JointDistribution(classes, Alphabet(cell_labels), mass / mass.sum())


# ---------------------------------------------------------------------------
# mismatched priors


def _xlog_ratio(x: float, size: float) -> float:
    """``x * log2(size / x)`` with the limit 0 at x = 0."""
    return 0.0 if x <= 0 else x * math.log2(size / x)


def entropy_l1_bound(p, q) -> float:
    """Continuity bound ``x log2(|X| / x)`` on ``|H(p) - H(q)|``, x = ||p - q||_1.

    Raises
    ------
    PreconditionError
        If ``||p - q||_1 > 1/2``; the error carries the distance.
    """
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise AlphabetMismatchError("p and q have different sizes")
    x = float(np.abs(p - q).sum())
    if x > L1_PRECONDITION:
        raise PreconditionError(f"L1 distance {x:g} exceeds {L1_PRECONDITION}", x)
    return _xlog_ratio(x, p.size)


@dataclass(frozen=True)
class MismatchReport:
    """Consequences of designing under ``q`` when the truth is ``p``.

    Attributes
    ----------
    l1 : float
        ``||p - q||_1``.
    leakage_bound : float
        Bound in bits on ``|J(p, m) - J(q, m)|`` for any mapping ``m``.
    distortion_slack : float
        ``d_max * l1``; distortion under ``p`` is at most ``delta`` plus this.
    valid : bool
        False when ``l1 > 1/2``, where the entropy bound is not guaranteed.
    delta : float
        Distortion budget used under ``q``.
    """

    l1: float
    leakage_bound: float
    distortion_slack: float
    valid: bool
    delta: float = math.nan

    @property
    def distortion_bound(self) -> float:
        return self.delta + self.distortion_slack


def leakage_mismatch_bound(l1: float, n_cells: int) -> float:
    """``3 x log2(n_cells / x)``, the leakage bound at L1 distance ``x``."""
    if l1 < 0 or l1 > n_cells:
        raise PreconditionError(f"L1 distance {l1:g} outside [0, {n_cells}]", l1)
    return 3.0 * _xlog_ratio(l1, n_cells)


def mismatch_bounds(
    p: JointDistribution,
    q: JointDistribution,
    d: DistortionMatrix,
    delta: float,
) -> MismatchReport:
    """Leakage and distortion slack of using ``q`` in place of ``p``.

    The leakage part holds for every mapping, not just the one optimal
    under ``q``.  When ``||p - q||_1 > 1/2`` the numbers are still reported
    but flagged ``valid=False``.
    """
    if not p.same_alphabets(q):
        raise AlphabetMismatchError("p and q are over different alphabets")
    if d.in_alphabet != p.col_alphabet:
        raise AlphabetMismatchError("distortion input alphabet differs from the priors'")
    x = l1_distance(p, q)
    return MismatchReport(
        l1=x,
        leakage_bound=leakage_mismatch_bound(x, p.mass.size),
        distortion_slack=d.d_max * x,
        valid=x <= L1_PRECONDITION,
        delta=float(delta),
    )


def sample_complexity_log2(n: int, a_size: int, b_size: int, eps: float) -> float:
    """``log2`` of :func:`sample_complexity_bound`."""
    if n < 1:
        raise PreconditionError("n must be at least 1", n)
    if not eps >= 0:
        raise PreconditionError("eps must be nonnegative", eps)
    return a_size * b_size * math.log2(n + 1) - 2.0 * n * eps**2


def sample_complexity_bound(n: int, a_size: int, b_size: int, eps: float) -> float:
    """Bound ``(n+1)**(|A||B|) * 2**(-2 n eps**2)`` on ``P(||q_n - p||_1 >= eps)``.

    Evaluated in log space.  Values above 1 are vacuous but returned as
    they are (``inf`` beyond the float range).
    """
    e = sample_complexity_log2(n, a_size, b_size, eps)
    return math.inf if e > 1023 else 2.0**e


def sample_complexity_slope(n: int, a_size: int, b_size: int, eps: float) -> float:
    """Derivative in n of the log2 bound; negative where more data helps."""
    return a_size * b_size / ((n + 1) * math.log(2)) - 2.0 * eps**2


__all__ = [
    "CROSS_VALIDATED",
    "DEFAULT_ALPHA",
    "SampleTable",
    "MismatchReport",
    "infer_alphabet",
    "empirical_joint",
    "smoothed_joint",
    "kde_discretize",
    "cv_bandwidth",
    "loo_log_likelihood",
    "entropy_l1_bound",
    "mismatch_bounds",
    "leakage_mismatch_bound",
    "sample_complexity_bound",
    "sample_complexity_log2",
    "sample_complexity_slope",
]
