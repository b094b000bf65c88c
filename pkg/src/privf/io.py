"""CSV readers and writers for datasets, priors, mappings, curves and quantizers.

Public symbols that are tuples of feature values are written as the
values joined by ``|``; a field containing ``|`` is read back as a tuple.
Floats are written with ``repr`` so that files round-trip exactly and
identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .dist_core import Alphabet, ConditionalMapping, JointDistribution
from .exceptions import DataFormatError, InvalidDistributionError, UnknownLabelError
from .prior_est import SampleTable

SEP = "|"
#: Mapping entries below this are left out of mapping files.
MAPPING_FLOOR = 1e-12

MAPPING_COLUMNS = ("in_symbol", "out_symbol", "probability")
PRIOR_COLUMNS = ("private_symbol", "public_symbol", "probability")
CURVE_COLUMNS = ("delta_target", "achieved_distortion", "leakage_bits", "map_accuracy", "converged", "status")


def encode(symbol) -> str:
    if isinstance(symbol, tuple):
        return SEP.join(str(v) for v in symbol)
    return str(symbol)


def decode(text: str):
    return tuple(text.split(SEP)) if SEP in text else text


def fmt(x) -> str:
    """Shortest exact text of a float (``nan`` for missing)."""
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def _writer(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def _rows(path: Path, required: Sequence[str]) -> Tuple[List[str], List[dict]]:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh, strict=True)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise DataFormatError(f"{path}: missing column(s) {', '.join(missing)}")
        try:
            rows = list(reader)
        except csv.Error as exc:
            raise DataFormatError(f"{path}: malformed CSV ({exc})") from None
    for i, row in enumerate(rows, start=2):
        if None in row or any(v is None for v in row.values()):
            raise DataFormatError(f"{path}: line {i} has the wrong number of fields")
    return header, rows


# ---------------------------------------------------------------------------
# datasets


def bin_label(value: float, edges: Sequence[float]) -> str:
    """Interval label of ``value`` for sorted bin edges, e.g. ``[30,60)``."""
    i = int(np.searchsorted(edges, value, side="right"))
    lo = "-inf" if i == 0 else f"{edges[i - 1]:g}"
    hi = "inf" if i == len(edges) else f"{edges[i]:g}"
    return f"[{lo},{hi})" if i else f"({lo},{hi})"


def bin_labels(edges: Sequence[float]) -> Tuple[str, ...]:
    mids = [-math.inf] + list(edges)
    return tuple(bin_label(e if math.isfinite(e) else edges[0] - 1.0, edges) for e in mids)


def read_dataset(
    path,
    private: str,
    public: Sequence[str],
    bins: Optional[Mapping[str, Sequence[float]]] = None,
    values: Optional[Mapping[str, Sequence[str]]] = None,
) -> Tuple[SampleTable, Dict[str, Tuple[str, ...]]]:
    """Read records from a CSV with a header row.

    Categorical values are taken verbatim.  A column listed in ``bins`` is
    parsed as a number and replaced by its interval label.  A column listed
    in ``values`` must only use the declared values, in that order;
    otherwise the observed values are sorted.

    Returns
    -------
    records : SampleTable
        ``b`` is a tuple of column values, or a bare value for one column.
    column_values : dict
        The ordered value list of every public column.
    """
    bins = dict(bins or {})
    values = dict(values or {})
    if not public:
        raise DataFormatError("no public columns configured")
    _, rows = _rows(Path(path), [private, *public])
    if not rows:
        raise DataFormatError(f"{path}: no records")
    cols = {}
    for c in public:
        raw = [r[c].strip() for r in rows]
        if c in bins:
            edges = sorted(bins[c])
            try:
                raw = [bin_label(float(v), edges) for v in raw]
            except ValueError:
                raise DataFormatError(f"{path}: column {c!r} has non-numeric values but declares bins") from None
        cols[c] = raw
    order = {}
    for c in public:
        if c in values:
            declared = tuple(values[c])
            known = set(declared)
            for v in cols[c]:
                if v not in known:
                    raise UnknownLabelError(v, f"declared values of column {c!r}")
            order[c] = declared
        elif c in bins:
            seen = set(cols[c])
            order[c] = tuple(v for v in bin_labels(sorted(bins[c])) if v in seen)
        else:
            order[c] = tuple(sorted(set(cols[c])))
    a = tuple(r[private].strip() for r in rows)
    if len(public) == 1:
        b = tuple(cols[public[0]])
    else:
        b = tuple(zip(*(cols[c] for c in public)))
    return SampleTable(a, b), order


def write_dataset(path, records: SampleTable, private: str, public: Sequence[str]) -> None:
    fh, w = _writer(Path(path))
    with fh:
        w.writerow([private, *public])
        for a, b in records.records:
            w.writerow([a, *(b if isinstance(b, tuple) else (b,))])


# ---------------------------------------------------------------------------
# priors and mappings


def write_prior(path, prior: JointDistribution) -> None:
    fh, w = _writer(Path(path))
    with fh:
        w.writerow(PRIOR_COLUMNS)
        for i, a in enumerate(prior.row_alphabet):
            for j, b in enumerate(prior.col_alphabet):
                w.writerow([encode(a), encode(b), fmt(prior.mass[i, j])])


def _ordered(items: Iterable) -> list:
    return list(dict.fromkeys(items))


def read_prior(path) -> JointDistribution:
    _, rows = _rows(Path(path), PRIOR_COLUMNS)
    if not rows:
        raise DataFormatError(f"{path}: empty prior")
    A = Alphabet(tuple(_ordered(decode(r["private_symbol"]) for r in rows)))
    B = Alphabet(tuple(_ordered(decode(r["public_symbol"]) for r in rows)))
    mass = np.zeros((A.size, B.size))
    try:
        for r in rows:
            mass[A.index(decode(r["private_symbol"])), B.index(decode(r["public_symbol"]))] += float(r["probability"])
    except ValueError:
        raise DataFormatError(f"{path}: non-numeric probability") from None
    try:
        return JointDistribution.ingest(mass, A, B)
    except InvalidDistributionError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def write_mapping(path, mapping: ConditionalMapping) -> None:
    """One line per entry of at least ``MAPPING_FLOOR``, in alphabet order."""
    fh, w = _writer(Path(path))
    with fh:
        w.writerow(MAPPING_COLUMNS)
        for i, b in enumerate(mapping.in_alphabet):
            for j, c in enumerate(mapping.out_alphabet):
                p = mapping.rows[i, j]
                if p >= MAPPING_FLOOR:
                    w.writerow([encode(b), encode(c), fmt(p)])


def read_mapping(path, out_alphabet: Optional[Alphabet] = None) -> ConditionalMapping:
    """Read a mapping file; omitted entries are zero and rows are renormalized.

    Output symbols that never appear are absent unless ``out_alphabet`` is
    given.
    """
    _, rows = _rows(Path(path), MAPPING_COLUMNS)
    if not rows:
        raise DataFormatError(f"{path}: empty mapping")
    B = Alphabet(tuple(_ordered(decode(r["in_symbol"]) for r in rows)))
    C = out_alphabet or Alphabet(tuple(_ordered(decode(r["out_symbol"]) for r in rows)))
    M = np.zeros((B.size, C.size))
    try:
        for r in rows:
            M[B.index(decode(r["in_symbol"])), C.index(decode(r["out_symbol"]))] += float(r["probability"])
    except ValueError:
        raise DataFormatError(f"{path}: non-numeric probability") from None
    sums = M.sum(axis=1, keepdims=True)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise DataFormatError(f"{path}: a mapping row does not sum to 1")
    return ConditionalMapping(B, C, M / sums)


# ---------------------------------------------------------------------------
# curves, quantizers, reports


def write_curve(path, rows: Iterable[Sequence]) -> None:
    """Rows of (delta_target, achieved_distortion, leakage_bits, map_accuracy, converged, status)."""
    fh, w = _writer(Path(path))
    with fh:
        w.writerow(CURVE_COLUMNS)
        for delta, dist, leak, acc, conv, status in rows:
            w.writerow([fmt(delta), fmt(dist), fmt(leak), fmt(acc), "true" if conv else "false", status])


def read_curve(path) -> List[dict]:
    _, rows = _rows(Path(path), CURVE_COLUMNS)
    out = []
    for r in rows:
        out.append({
            "delta_target": float(r["delta_target"]),
            "achieved_distortion": float(r["achieved_distortion"]),
            "leakage_bits": float(r["leakage_bits"]),
            "map_accuracy": float(r["map_accuracy"]),
            "converged": r["converged"] == "true",
            "status": r["status"],
        })
    return out


def write_quantizer(assign_path, centers_path, quant) -> None:
    """``(symbol, center_index, distance)`` per symbol, and the center vectors."""
    fh, w = _writer(Path(assign_path))
    with fh:
        w.writerow(["symbol", "center_index", "distance"])
        for s, c, d in zip(quant.symbols, quant.assignment, quant.distances):
            w.writerow([encode(s), int(c), fmt(d)])
    fh, w = _writer(Path(centers_path))
    with fh:
        w.writerow(["center_index", "label", "vector"])
        for i, (label, vec) in enumerate(zip(quant.centers, quant.center_vectors)):
            w.writerow([i, encode(label), " ".join(fmt(v) for v in vec)])


def write_points(path, header: Sequence[str], points: Iterable[Sequence[float]]) -> None:
    fh, w = _writer(Path(path))
    with fh:
        w.writerow(header)
        for p in points:
            w.writerow([fmt(v) for v in p])


def write_report(path, items: Mapping[str, object]) -> None:
    """``key=value`` lines in insertion order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for k, v in items.items():
        if isinstance(v, float):
            v = fmt(v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{k}={v}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_report(path) -> Dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


__all__ = [
    "encode", "decode", "fmt", "bin_label", "read_dataset", "write_dataset",
    "write_prior", "read_prior", "write_mapping", "read_mapping", "write_curve", "read_curve",
    "write_quantizer", "write_points", "write_report", "read_report",
    "MAPPING_COLUMNS", "CURVE_COLUMNS", "PRIOR_COLUMNS",
]
