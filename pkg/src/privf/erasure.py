"""Erasure release alphabets for records of categorical features.

A released record keeps or erases each feature.  The cost of a release is
the number of erased features, and a release that alters a kept feature
is forbidden outright.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .dist_core import FORBIDDEN, Alphabet, DistortionMatrix

#: Label of an erased feature.
ERASED = "⊥"


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered categorical features and the label used for an erasure.

    Parameters
    ----------
    features : sequence of (name, values)
        ``values`` lists the labels of the feature in their canonical order.
    erasure : str
        Label of an erased position; must not be a value of any feature.
    """

    features: Tuple[Tuple[str, Tuple], ...]
    erasure: str = ERASED

    def __post_init__(self):
        feats = tuple((str(name), tuple(values)) for name, values in self.features)
        if not feats:
            raise ValueError("a schema needs at least one feature")
        names = [f[0] for f in feats]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        for name, values in feats:
            if not values:
                raise ValueError(f"feature {name!r} has no values")
            if len(set(values)) != len(values):
                raise ValueError(f"feature {name!r} has duplicate values")
            if self.erasure in values:
                raise ValueError(f"erasure label {self.erasure!r} is a value of {name!r}")
        object.__setattr__(self, "features", feats)

    @classmethod
    def from_dict(cls, features: dict, erasure: str = ERASED) -> "FeatureSchema":
        return cls(tuple(features.items()), erasure)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(f[0] for f in self.features)

    @property
    def cardinalities(self) -> Tuple[int, ...]:
        return tuple(len(f[1]) for f in self.features)


def build_erasure_alphabet(schema: FeatureSchema) -> Tuple[Alphabet, Alphabet]:
    """Public alphabet (all value tuples) and release alphabet (with erasures).

    Both are in lexicographic order of the per-feature value order, with
    the erasure sorting after every value.  Symbols are tuples, or bare
    labels when there is a single feature.
    """
    vals = [values for _, values in schema.features]
    outs = [values + (schema.erasure,) for values in vals]
    single = len(vals) == 1
    B = [t[0] if single else t for t in itertools.product(*vals)]
    B_hat = [t[0] if single else t for t in itertools.product(*outs)]
    return Alphabet(tuple(B)), Alphabet(tuple(B_hat))


def erasure_distortion(schema: FeatureSchema) -> DistortionMatrix:
    """Number of erasures, or ``FORBIDDEN`` when a kept feature disagrees."""
    B, B_hat = build_erasure_alphabet(schema)
    vals = [values for _, values in schema.features]
    # per-feature codes; the erasure gets code -1
    b_codes = np.array(list(itertools.product(*[range(len(v)) for v in vals])))
    h_codes = np.array(list(itertools.product(*[list(range(len(v))) + [-1] for v in vals])))
    erased = h_codes[None, :, :] < 0
    clash = ~erased & (h_codes[None, :, :] != b_codes[:, None, :])
    cost = np.repeat(erased.sum(axis=2).astype(float), len(b_codes), axis=0)
    cost[clash.any(axis=2)] = FORBIDDEN
    return DistortionMatrix(B, B_hat, cost)


def erase(record: Sequence, keep: Sequence[bool], erasure: str = ERASED) -> tuple:
    """Replace the features with ``keep=False`` by the erasure label."""
    return tuple(v if k else erasure for v, k in zip(record, keep))


__all__ = ["ERASED", "FeatureSchema", "build_erasure_alphabet", "erasure_distortion", "erase"]
