"""Discrete probability objects and the information measures built on them.

All quantities are in bits.  The conventions ``0 log 0 = 0`` and
``0 log(0/0) = 0`` are used throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional

import numpy as np
from scipy.special import entr, xlogy

from .exceptions import (
    AlphabetMismatchError,
    InfeasibleMappingError,
    InvalidDistributionError,
    UnknownLabelError,
)

LN2 = math.log(2.0)

#: Tolerance on the total mass of objects built in memory.
CONSTRUCT_TOL = 1e-9
#: Tolerance on the total mass of data read from outside (renormalized after).
INGEST_TOL = 1e-6

#: Marker for a (public, released) pair that a mapping may never use.
FORBIDDEN = math.inf


def _frozen(arr, dtype=float):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Alphabet:
    """Ordered set of opaque, hashable labels."""

    symbols: tuple
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        symbols = tuple(self.symbols)
        if not symbols:
            raise ValueError("an alphabet needs at least one symbol")
        index = {}
        for i, s in enumerate(symbols):
            if s in index:
                raise ValueError(f"duplicate label {s!r} in alphabet")
            index[s] = i
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "_index", index)

    @classmethod
    def range(cls, n: int) -> "Alphabet":
        return cls(tuple(range(n)))

    @property
    def size(self) -> int:
        return len(self.symbols)

    def __len__(self):
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __contains__(self, label):
        return label in self._index

    def __eq__(self, other):
        return isinstance(other, Alphabet) and self.symbols == other.symbols

    def __hash__(self):
        return hash(self.symbols)

    def index(self, label: Hashable) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise UnknownLabelError(label) from None

    def indices(self, labels: Iterable[Hashable]) -> np.ndarray:
        return np.fromiter((self.index(s) for s in labels), dtype=np.intp)


def _as_alphabet(alpha, n) -> Alphabet:
    if alpha is None:
        return Alphabet.range(n)
    if not isinstance(alpha, Alphabet):
        alpha = Alphabet(tuple(alpha))
    if alpha.size != n:
        raise AlphabetMismatchError(
            f"alphabet has {alpha.size} symbols but the table has {n}"
        )
    return alpha


def _check_mass(mass, tol, what):
    if not np.all(np.isfinite(mass)):
        raise InvalidDistributionError(f"{what} has non-finite entries")
    if np.any(mass < 0):
        raise InvalidDistributionError(f"{what} has negative entries")
    total = float(mass.sum())
    if abs(total - 1.0) > tol:
        raise InvalidDistributionError(f"{what} sums to {total!r}, not 1")


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Joint law of a private attribute (rows) and public data (columns)."""

    row_alphabet: Alphabet
    col_alphabet: Alphabet
    mass: np.ndarray

    def __post_init__(self):
        mass = _frozen(self.mass)
        if mass.ndim != 2:
            raise InvalidDistributionError("joint mass must be a 2-D table")
        _check_mass(mass, CONSTRUCT_TOL, "joint distribution")
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "row_alphabet", _as_alphabet(self.row_alphabet, mass.shape[0]))
        object.__setattr__(self, "col_alphabet", _as_alphabet(self.col_alphabet, mass.shape[1]))

    @classmethod
    def from_array(cls, mass, rows=None, cols=None) -> "JointDistribution":
        mass = np.asarray(mass, dtype=float)
        return cls(_as_alphabet(rows, mass.shape[0]), _as_alphabet(cols, mass.shape[1]), mass)

    @classmethod
    def ingest(cls, mass, rows=None, cols=None) -> "JointDistribution":
        """Build from external numbers, renormalizing small rounding error."""
        mass = np.asarray(mass, dtype=float)
        _check_mass(mass, INGEST_TOL, "ingested distribution")
        return cls.from_array(mass / mass.sum(), rows, cols)

    @property
    def shape(self):
        return self.mass.shape

    @property
    def row_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=1)

    @property
    def col_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=0)

    def same_alphabets(self, other: "JointDistribution") -> bool:
        return (
            self.row_alphabet == other.row_alphabet
            and self.col_alphabet == other.col_alphabet
        )


@dataclass(frozen=True, eq=False)
class ConditionalMapping:
    """Row-stochastic table of release probabilities p(released | public)."""

    in_alphabet: Alphabet
    out_alphabet: Alphabet
    rows: np.ndarray
    support_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        rows = _frozen(self.rows)
        if rows.ndim != 2:
            raise InvalidDistributionError("mapping must be a 2-D table")
        if not np.all(np.isfinite(rows)) or np.any(rows < 0):
            raise InvalidDistributionError("mapping has negative or non-finite entries")
        sums = rows.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > CONSTRUCT_TOL)
        if bad.size:
            raise InvalidDistributionError(
                f"mapping row {int(bad[0])} sums to {sums[bad[0]]!r}, not 1"
            )
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "in_alphabet", _as_alphabet(self.in_alphabet, rows.shape[0]))
        object.__setattr__(self, "out_alphabet", _as_alphabet(self.out_alphabet, rows.shape[1]))
        if self.support_mask is not None:
            mask = _frozen(self.support_mask, dtype=bool)
            if mask.shape != rows.shape:
                raise ValueError("support mask shape does not match the mapping")
            if np.any(rows[~mask] != 0.0):
                raise InfeasibleMappingError("mapping has mass outside its support mask")
            object.__setattr__(self, "support_mask", mask)

    @classmethod
    def from_array(cls, rows, ins=None, outs=None, support_mask=None) -> "ConditionalMapping":
        rows = np.asarray(rows, dtype=float)
        return cls(_as_alphabet(ins, rows.shape[0]), _as_alphabet(outs, rows.shape[1]), rows, support_mask)

    @classmethod
    def identity(cls, alphabet: Alphabet) -> "ConditionalMapping":
        return cls(alphabet, alphabet, np.eye(alphabet.size))

    @classmethod
    def constant(cls, ins: Alphabet, outs: Alphabet, out_label) -> "ConditionalMapping":
        rows = np.zeros((ins.size, outs.size))
        rows[:, outs.index(out_label)] = 1.0
        return cls(ins, outs, rows)

    @property
    def shape(self):
        return self.rows.shape


@dataclass(frozen=True, eq=False)
class DistortionMatrix:
    """Per-pair cost d(b, b_hat); ``FORBIDDEN`` entries are structural zeros."""

    in_alphabet: Alphabet
    out_alphabet: Alphabet
    cost: np.ndarray

    def __post_init__(self):
        cost = np.array(self.cost, dtype=float, copy=True)
        if cost.ndim != 2:
            raise ValueError("distortion must be a 2-D table")
        if np.any(np.isnan(cost)) or np.any(cost == -np.inf):
            raise ValueError("distortion entries must be nonnegative reals or FORBIDDEN")
        allowed = np.isfinite(cost)
        if np.any(cost[allowed] < 0):
            raise ValueError("distortion entries must be nonnegative")
        empty = np.flatnonzero(~allowed.any(axis=1))
        if empty.size:
            raise ValueError(f"distortion row {int(empty[0])} has no finite entry")
        cost.setflags(write=False)
        allowed.setflags(write=False)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "in_alphabet", _as_alphabet(self.in_alphabet, cost.shape[0]))
        object.__setattr__(self, "out_alphabet", _as_alphabet(self.out_alphabet, cost.shape[1]))
        object.__setattr__(self, "_allowed", allowed)

    @classmethod
    def from_array(cls, cost, ins=None, outs=None) -> "DistortionMatrix":
        cost = np.asarray(cost, dtype=float)
        return cls(_as_alphabet(ins, cost.shape[0]), _as_alphabet(outs, cost.shape[1]), cost)

    @property
    def allowed(self) -> np.ndarray:
        """Boolean support mask: True where the cost is finite."""
        return self._allowed

    @property
    def shape(self):
        return self.cost.shape

    @property
    def d_max(self) -> float:
        return float(self.cost[self._allowed].max())

    @property
    def finite_cost(self) -> np.ndarray:
        """Cost table with forbidden entries replaced by 0 (use with ``allowed``)."""
        return np.where(self._allowed, self.cost, 0.0)

    @property
    def has_forbidden(self) -> bool:
        return not bool(self._allowed.all())


def hamming_distortion(alphabet: Alphabet, out_alphabet: Optional[Alphabet] = None) -> DistortionMatrix:
    """0/1 cost: zero iff the released label equals the public one."""
    out_alphabet = alphabet if out_alphabet is None else out_alphabet
    cost = np.ones((alphabet.size, out_alphabet.size))
    for i, s in enumerate(alphabet.symbols):
        if s in out_alphabet:
            cost[i, out_alphabet.index(s)] = 0.0
    return DistortionMatrix(alphabet, out_alphabet, cost)


def pairwise_cost(x, y, metric: str = "hamming", scale: float = 1.0) -> np.ndarray:
    """Cost table between two sets of feature vectors.

    ``hamming`` counts differing coordinates, ``l2`` is the Euclidean norm.
    Both are true metrics, so the triangle inequality holds.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if metric == "hamming":
        out = (x[:, None, :] != y[None, :, :]).sum(axis=2).astype(float)
    elif metric == "l2":
        out = np.sqrt(((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2))
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return out / scale


# ---------------------------------------------------------------------------
# information measures


def _entropy_bits(p: np.ndarray) -> float:
    return float(entr(p).sum() / LN2)


def _mi_bits(mass: np.ndarray) -> float:
    """Mutual information of a nonnegative table, direct double sum."""
    pa = mass.sum(axis=1, keepdims=True)
    pb = mass.sum(axis=0, keepdims=True)
    denom = pa * pb
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(mass > 0, mass / np.where(denom > 0, denom, 1.0), 1.0)
    return max(float(xlogy(mass, ratio).sum() / LN2), 0.0)


def entropy(p) -> float:
    """Shannon entropy of a probability vector, in bits."""
    p = np.asarray(p, dtype=float).ravel()
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidDistributionError("probability vector has negative entries")
    if abs(p.sum() - 1.0) > INGEST_TOL:
        raise InvalidDistributionError(f"probability vector sums to {p.sum()!r}")
    return max(_entropy_bits(p), 0.0)


def mutual_information(p: JointDistribution) -> float:
    """I(A;B) of a joint distribution, in bits."""
    if not isinstance(p, JointDistribution):
        p = JointDistribution.from_array(p)
    return _mi_bits(p.mass)


def _check_chain(prior: JointDistribution, mapping: ConditionalMapping):
    if mapping.in_alphabet != prior.col_alphabet:
        raise AlphabetMismatchError(
            "mapping input alphabet differs from the prior's public alphabet"
        )


def compose_output_joint(prior: JointDistribution, mapping: ConditionalMapping) -> JointDistribution:
    """Joint of (private, released) under the chain private -> public -> released."""
    _check_chain(prior, mapping)
    out = prior.mass @ mapping.rows
    out = np.clip(out, 0.0, None)
    return JointDistribution(prior.row_alphabet, mapping.out_alphabet, out / out.sum())


def leakage(prior: JointDistribution, mapping: ConditionalMapping) -> float:
    """Information leaked about the private attribute by the release, in bits."""
    _check_chain(prior, mapping)
    return _mi_bits(prior.mass @ mapping.rows)


def _leakage_direct(P: np.ndarray, M: np.ndarray) -> float:
    """Triple sum over (a, b, b_hat) with the prior's own private marginal.

    Accepts any nonnegative ``M``; it need not be row-stochastic.  This is
    the function whose partial derivatives the solver's gradient returns.
    """
    pa = P.sum(axis=1)
    pb = P.sum(axis=0)
    num = (P @ M) / np.where(pa > 0, pa, 1.0)[:, None]  # sum_b'' p(b_hat|b'') p(b''|a)
    den = pb @ M  # sum_{a',b'} p(b_hat|b') p(a',b')
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / den[None, :]
        log_ratio = np.where((num > 0) & (den[None, :] > 0), np.log2(ratio), 0.0)
    weights = P[:, :, None] * M[None, :, :]
    return float(np.einsum("abk,ak->", weights, log_ratio))


def leakage_direct(prior: JointDistribution, mapping: ConditionalMapping) -> float:
    """Same as :func:`leakage`, evaluated as an explicit sum over (a, b, b_hat)."""
    _check_chain(prior, mapping)
    return _leakage_direct(prior.mass, mapping.rows)


def expected_distortion(
    prior: JointDistribution, mapping: ConditionalMapping, d: DistortionMatrix
) -> float:
    """Average cost E[d(B, B_hat)] of releasing through ``mapping``."""
    _check_chain(prior, mapping)
    if d.in_alphabet != mapping.in_alphabet or d.out_alphabet != mapping.out_alphabet:
        raise AlphabetMismatchError("distortion alphabets differ from the mapping's")
    if d.has_forbidden and np.any(mapping.rows[~d.allowed] > 0):
        raise InfeasibleMappingError("mapping puts mass on a forbidden pair")
    pb = prior.col_marginal
    return float(pb @ (mapping.rows * d.finite_cost).sum(axis=1))


def l1_distance(p: JointDistribution, q: JointDistribution) -> float:
    """Entrywise L1 distance between two joints on the same alphabets."""
    if not p.same_alphabets(q):
        raise AlphabetMismatchError("joint distributions are over different alphabets")
    return float(np.abs(p.mass - q.mass).sum())


def product_of_marginals(p: JointDistribution) -> JointDistribution:
    return JointDistribution(
        p.row_alphabet, p.col_alphabet, np.outer(p.row_marginal, p.col_marginal)
    )


__all__ = [
    "Alphabet",
    "JointDistribution",
    "ConditionalMapping",
    "DistortionMatrix",
    "FORBIDDEN",
    "entropy",
    "mutual_information",
    "compose_output_joint",
    "leakage",
    "leakage_direct",
    "expected_distortion",
    "l1_distance",
    "hamming_distortion",
    "pairwise_cost",
    "product_of_marginals",
]
