"""Loaders for the public datasets used in the experiments.

Neither dataset ships with the package.  Adult is read from the UCI
``adult.data`` / ``adult.test`` files (see ``scripts/fetch_adult.py``);
Iris comes with scikit-learn.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .erasure import FeatureSchema
from .prior_est import SampleTable

ADULT_FILES = ("adult.data", "adult.test")
ADULT_COLUMNS = (
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
)

#: Age cut points: young < 30 <= adult < 60 <= old.
AGE_CUTS = (30, 60)
AGE_BANDS = ("young", "adult", "old")
GENDERS = ("male", "female")
EDUCATION_LEVELS = ("HS", "College", "Masters", "Doctorate")

#: Collapse of the 16 Adult education labels.  Everything up to a high
#: school diploma is "HS"; associate and bachelor degrees and some college
#: are "College"; professional school sits with "Masters".
EDUCATION_MAP = {
    "Preschool": "HS", "1st-4th": "HS", "5th-6th": "HS", "7th-8th": "HS", "9th": "HS",
    "10th": "HS", "11th": "HS", "12th": "HS", "HS-grad": "HS",
    "Some-college": "College", "Assoc-acdm": "College", "Assoc-voc": "College",
    "Bachelors": "College",
    "Masters": "Masters", "Prof-school": "Masters",
    "Doctorate": "Doctorate",
}


def census_schema() -> FeatureSchema:
    """Gender x age band x education, the public features of the Census study."""
    return FeatureSchema((("gender", GENDERS), ("age", AGE_BANDS), ("education", EDUCATION_LEVELS)))


def age_band(age: float, cuts: Sequence[float] = AGE_CUTS) -> str:
    return AGE_BANDS[int(np.searchsorted(cuts, age, side="right"))]


def adult_files(directory) -> list:
    """The Adult files present in ``directory``."""
    directory = Path(directory)
    return [directory / f for f in ADULT_FILES if (directory / f).is_file()]


def _adult_rows(paths: Iterable[Path]):
    for path in paths:
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh, skipinitialspace=True):
                if len(row) != len(ADULT_COLUMNS) or "?" in row:
                    continue  # header line of adult.test, blanks, missing values
                yield dict(zip(ADULT_COLUMNS, (v.strip() for v in row)))


def load_adult(directory, cuts: Sequence[float] = AGE_CUTS) -> SampleTable:
    """Adult records as (income bracket, (gender, age band, education)).

    Rows with missing values are dropped.  The private label is ``">50K"``
    or ``"<=50K"`` (the trailing dot of the test file is removed).

    Raises
    ------
    FileNotFoundError
        If neither Adult file is in ``directory``.
    """
    paths = adult_files(directory)
    if not paths:
        raise FileNotFoundError(f"no Adult files ({', '.join(ADULT_FILES)}) in {directory}")
    a, b = [], []
    for row in _adult_rows(paths):
        a.append(row["income"].rstrip("."))
        b.append((row["sex"].lower(), age_band(float(row["age"]), cuts), EDUCATION_MAP[row["education"]]))
    return SampleTable(tuple(a), tuple(b))


@dataclass(frozen=True)
class IrisData:
    points: np.ndarray
    labels: np.ndarray
    feature_names: tuple
    class_names: tuple


def load_iris_data(features: Optional[Sequence[int]] = None) -> IrisData:
    """Iris measurements, optionally restricted to some feature columns."""
    from sklearn.datasets import load_iris

    raw = load_iris()
    cols = list(range(raw.data.shape[1])) if features is None else list(features)
    return IrisData(
        raw.data[:, cols].astype(float),
        raw.target.copy(),
        tuple(raw.feature_names[i] for i in cols),
        tuple(raw.target_names),
    )


__all__ = [
    "AGE_CUTS",
    "EDUCATION_MAP",
    "census_schema",
    "age_band",
    "adult_files",
    "load_adult",
    "IrisData",
    "load_iris_data",
]
