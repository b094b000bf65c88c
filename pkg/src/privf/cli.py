"""Command-line entry point: ``privf {estimate,solve,evaluate,bounds,synth}``.

Every command reads an INI run configuration (see :mod:`privf.config`),
writes its outputs under ``--out`` (default: the ``[run] out`` key), and
exits with 0 on success, 2 on a usage or data error, 3 on a numeric
failure.  Identical configuration and seed give byte-identical files.

Output files
------------
estimate  ``prior.csv``, ``summary.txt``
solve     ``curve.csv``, ``mapping_NNN.csv`` per budget, ``solve_summary.txt``;
          with quantization also ``quantizer.csv`` and ``centers.csv``
evaluate  ``evaluate_report.txt``, ``roc_before.csv``, ``roc_after.csv``
bounds    ``bounds_report.txt``, ``sanov.csv``
synth     ``synth.csv``, ``synth_top5.ini``, ``synth_summary.txt``
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import io
from .config import RunConfig, load_config
from .dist_core import (
    Alphabet,
    DistortionMatrix,
    JointDistribution,
    _entropy_bits,
    expected_distortion,
    leakage,
    mutual_information,
)
from .erasure import FeatureSchema, erasure_distortion
from .evaluate import (
    apply_mapping,
    logreg_train,
    majority_rate,
    map_accuracy,
    roc,
    synth_politics,
    top_informative,
)
from .exceptions import (
    AlphabetMismatchError,
    ConfigError,
    DataFormatError,
    InfeasibleDistortionError,
    PreconditionError,
    PrivfError,
    ProblemTooLargeError,
    UnknownLabelError,
)
from .prior_est import (
    SampleTable,
    infer_alphabet,
    mismatch_bounds,
    sample_complexity_bound,
    sample_complexity_log2,
    smoothed_joint,
)
from .quantize import cluster, end_to_end_distortion, lift_mapping, quantized_prior
from .solver import (
    DEFAULT_VAR_CAP,
    SolverOptions,
    perfect_privacy_distortion,
    sweep_curve,
)

logger = logging.getLogger("privf")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

VAR_CAP_ENV = "PRIVF_VAR_CAP"

#: Errors caused by the input rather than by the computation.
_DATA_ERRORS = (
    ConfigError,
    DataFormatError,
    UnknownLabelError,
    AlphabetMismatchError,
    PreconditionError,
    ProblemTooLargeError,
    InfeasibleDistortionError,
    OSError,
)


def var_cap() -> int:
    """Variable cap, from ``PRIVF_VAR_CAP`` when set."""
    raw = os.environ.get(VAR_CAP_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_VAR_CAP
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"{VAR_CAP_ENV} must be an integer, got {raw!r}") from None
    if cap < 1:
        raise ConfigError(f"{VAR_CAP_ENV} must be positive")
    return cap


# ---------------------------------------------------------------------------
# building the problem from a configuration


@dataclass(frozen=True, eq=False)
class Problem:
    """Prior, distortion and symbol coordinates derived from a configuration."""

    prior: JointDistribution
    distortion: DistortionMatrix
    points: np.ndarray
    records: Optional[SampleTable]


def _read_records(cfg: RunConfig) -> Tuple[SampleTable, Dict[str, Tuple[str, ...]]]:
    if cfg.data_path is None or cfg.private is None or not cfg.public:
        raise ConfigError("[data] needs path, private and public")
    return io.read_dataset(cfg.data_path, cfg.private, cfg.public, cfg.bins, cfg.values)


def _coordinates(symbols: Sequence) -> List[tuple]:
    return [s if isinstance(s, tuple) else (s,) for s in symbols]


def _column_orders(B: Alphabet) -> List[Tuple]:
    """Per-coordinate value order, by first appearance in ``B``."""
    coords = _coordinates(B.symbols)
    width = {len(c) for c in coords}
    if len(width) != 1:
        raise DataFormatError("public symbols have differing numbers of features")
    return [tuple(dict.fromkeys(c[j] for c in coords)) for j in range(width.pop())]


def symbol_points(B: Alphabet, metric: str, orders: Optional[Sequence[Sequence]] = None) -> np.ndarray:
    """Feature vectors of the public symbols.

    Hamming uses per-feature value codes; l2 needs numeric values.
    """
    coords = _coordinates(B.symbols)
    if metric == "l2":
        try:
            return np.array(coords, dtype=float)
        except ValueError:
            raise DataFormatError("the l2 metric needs numeric public values") from None
    orders = _column_orders(B) if orders is None else orders
    lookup = [{v: i for i, v in enumerate(o)} for o in orders]
    try:
        return np.array([[lookup[j][v] for j, v in enumerate(c)] for c in coords], dtype=float)
    except (KeyError, IndexError):
        raise DataFormatError("a public value is missing from its column's value list") from None


def _schema(cfg: RunConfig, orders: Sequence[Sequence]) -> FeatureSchema:
    names = cfg.public if len(cfg.public) == len(orders) else tuple(f"f{j}" for j in range(len(orders)))
    try:
        return FeatureSchema(tuple(zip(names, (tuple(o) for o in orders))))
    except ValueError as exc:
        raise ConfigError(f"cannot build the erasure schema: {exc}") from None


def build_distortion(cfg: RunConfig, B: Alphabet, orders=None) -> Tuple[DistortionMatrix, np.ndarray]:
    """Cost from every public symbol to every release symbol, and the symbol points."""
    orders = _column_orders(B) if orders is None else [tuple(o) for o in orders]
    if cfg.metric == "erasure":
        d = erasure_distortion(_schema(cfg, orders))
        if d.in_alphabet != B:
            raise AlphabetMismatchError("the prior's public alphabet is not the full product of feature values")
        cost = d.cost / cfg.scale
        return DistortionMatrix(d.in_alphabet, d.out_alphabet, cost), symbol_points(B, "hamming", orders)
    points = symbol_points(B, cfg.metric, orders)
    from .dist_core import pairwise_cost

    return DistortionMatrix(B, B, pairwise_cost(points, points, cfg.metric, cfg.scale)), points


def build_problem(cfg: RunConfig) -> Problem:
    """Prior (estimated from the dataset, or read from ``[prior] file``) and costs."""
    if cfg.data_path is not None:
        records, orders = _read_records(cfg)
        ordered = [orders[c] for c in cfg.public]
        A = infer_alphabet(records.a)
        if cfg.metric == "erasure":
            from .erasure import build_erasure_alphabet

            B, _ = build_erasure_alphabet(_schema(cfg, ordered))
        else:
            B = infer_alphabet(records.b)
        prior = smoothed_joint(records, A, B, cfg.alpha)
        d, points = build_distortion(cfg, B, ordered)
        return Problem(prior, d, points, records)
    if cfg.prior_file is not None:
        prior = io.read_prior(cfg.prior_file)
        d, points = build_distortion(cfg, prior.col_alphabet)
        return Problem(prior, d, points, None)
    raise ConfigError("need [data] path or [prior] file")


def _solver_options(cfg: RunConfig) -> SolverOptions:
    return SolverOptions(max_iters=cfg.max_iters, tol=cfg.tol, step_rule=cfg.step_rule, var_cap=var_cap())


# ---------------------------------------------------------------------------
# commands


def cmd_estimate(cfg: RunConfig) -> int:
    """Write the smoothed prior and a summary of it."""
    if cfg.data_path is None:
        raise ConfigError("estimate needs [data] path")
    prob = build_problem(cfg)
    records = prob.records
    out = cfg.out
    io.write_prior(out / "prior.csv", prob.prior)
    io.write_report(out / "summary.txt", {
        "records": records.n,
        "private_size": prob.prior.shape[0],
        "public_size": prob.prior.shape[1],
        "alpha": float(cfg.alpha),
        "H_A_bits": _entropy_bits(prob.prior.row_marginal),
        "I_AB_bits": mutual_information(prob.prior),
    })
    return EXIT_OK


def _status(pt) -> str:
    if pt.failed:
        return "failed: " + pt.error
    return "ok" if pt.converged else "not_converged"


def cmd_solve(cfg: RunConfig) -> int:
    """Sweep the budgets; write one mapping per budget and the curve."""
    prob = build_problem(cfg)
    prior, d = prob.prior, prob.distortion
    opts = _solver_options(cfg)
    out = cfg.out
    summary: Dict[str, object] = {"k": cfg.k, "metric": cfg.metric}

    if cfg.k == 0:
        curve = sweep_curve(prior, d, cfg.deltas, opts, cfg.warm_start, cfg.n_jobs)
        mappings = [None if pt.failed else pt.result.mapping for pt in curve]
        dists = [math.nan if pt.failed else expected_distortion(prior, m, d) for pt, m in zip(curve, mappings)]
        summary["variables"] = int(np.count_nonzero(d.allowed))
        summary["perfect_privacy_distortion"] = perfect_privacy_distortion(prior, d)
    else:
        if cfg.metric == "erasure":
            raise ConfigError("quantization supports the hamming and l2 metrics only")
        if cfg.k > prior.shape[1]:
            raise ConfigError(f"k={cfg.k} exceeds the {prior.shape[1]} public symbols")
        quant = cluster(prob.points, cfg.k, cfg.metric, weights=prior.col_marginal,
                        seed=cfg.seed, symbols=prior.col_alphabet, scale=cfg.scale)
        q = quantized_prior(prior, quant)
        d_C = quant.center_distortion()
        d_full = quant.symbol_distortion()
        curve = sweep_curve(q, d_C, cfg.deltas, opts, cfg.warm_start, cfg.n_jobs)
        mappings = [None if pt.failed else lift_mapping(pt.result.mapping, quant) for pt in curve]
        dists = [math.nan if m is None else end_to_end_distortion(prior, m, d_full) for m in mappings]
        io.write_quantizer(out / "quantizer.csv", out / "centers.csv", quant)
        summary["variables"] = int(np.count_nonzero(d_C.allowed))
        summary["radius"] = quant.radius
        summary["quantization_distortion"] = float(prior.col_marginal @ quant.distances)
        summary["perfect_privacy_distortion"] = perfect_privacy_distortion(q, d_C)

    rows = []
    for i, (pt, m, dist) in enumerate(zip(curve, mappings, dists)):
        if m is None:
            logger.warning("delta=%g: %s", pt.delta_target, pt.error)
            rows.append((pt.delta_target, math.nan, math.nan, math.nan, False, _status(pt)))
            continue
        if not pt.converged:
            logger.warning("delta=%g: solver stopped before the gap tolerance", pt.delta_target)
        io.write_mapping(out / f"mapping_{i:03d}.csv", m)
        rows.append((pt.delta_target, dist, leakage(prior, m), map_accuracy(prior, m), pt.converged, _status(pt)))
    io.write_curve(out / "curve.csv", rows)
    summary["I_AB_bits"] = mutual_information(prior)
    summary["points"] = len(rows)
    summary["failed"] = sum(1 for r in rows if r[5].startswith("failed"))
    io.write_report(out / "solve_summary.txt", summary)
    return EXIT_OK


def onehot_features(symbols: Sequence) -> np.ndarray:
    """Indicator columns for every (feature, value) pair, values in sorted text order."""
    coords = _coordinates(symbols)
    width = len(coords[0])
    blocks = []
    for j in range(width):
        col = np.array([str(c[j]) for c in coords])
        values = np.unique(col)
        blocks.append((col[:, None] == values[None, :]).astype(float))
    return np.hstack(blocks)


def cmd_evaluate(cfg: RunConfig, mapping_path: Optional[Path] = None) -> int:
    """MAP accuracy and logistic-regression AUC before and after the release."""
    path = mapping_path or cfg.mapping
    if path is None:
        raise ConfigError("evaluate needs --mapping or [evaluate] mapping")
    records, _ = _read_records(cfg)
    mapping = io.read_mapping(path)
    B = mapping.in_alphabet
    unseen = sorted({io.encode(b) for b in records.b if b not in B})
    if unseen:
        raise AlphabetMismatchError(
            f"{len(unseen)} public symbol(s) of the dataset are not in the mapping, e.g. {unseen[0]!r}")
    prior = smoothed_joint(records, infer_alphabet(records.a), B, cfg.alpha)
    released = apply_mapping(records, mapping, cfg.seed)
    report: Dict[str, object] = {
        "records": records.n,
        "map_before": map_accuracy(prior),
        "map_after": map_accuracy(prior, mapping),
        "majority": majority_rate(prior),
        "leakage_bits": leakage(prior, mapping),
    }
    if prior.shape[0] == 2:
        curves = []
        for name, table in (("before", records), ("after", released)):
            s = logreg_train(onehot_features(table.b), table.a, cfg.folds, cfg.l2_penalty, cfg.seed)
            r = roc(s, table.a)
            report[f"auc_{name}"] = r.auc
            curves.append((name, r))
        for name, r in curves:
            io.write_points(cfg.out / f"roc_{name}.csv", ("fpr", "tpr"), r.points)
    else:
        logger.warning("logistic regression needs a binary private attribute; AUC skipped")
        report["auc_before"] = math.nan
        report["auc_after"] = math.nan
    io.write_report(cfg.out / "evaluate_report.txt", report)
    return EXIT_OK


def cmd_bounds(cfg: RunConfig, second: Optional[Path] = None) -> int:
    """Mismatch bounds between the configured prior and a second one, plus a Sanov table."""
    path = second or cfg.second_prior
    if path is None:
        raise ConfigError("bounds needs --second-prior or [bounds] second_prior")
    prob = build_problem(cfg)
    q = io.read_prior(path)
    if not prob.prior.same_alphabets(q):
        raise AlphabetMismatchError("the two priors are over different alphabets")
    delta = cfg.deltas[0]
    rep = mismatch_bounds(prob.prior, q, prob.distortion, delta)
    if not rep.valid:
        logger.warning("L1 distance %.3g exceeds 1/2; the leakage bound is not guaranteed", rep.l1)
    io.write_report(cfg.out / "bounds_report.txt", {
        "l1": rep.l1,
        "leakage_bound": rep.leakage_bound,
        "distortion_slack": rep.distortion_slack,
        "d_max": prob.distortion.d_max,
        "delta": rep.delta,
        "distortion_bound": rep.distortion_bound,
        "valid": rep.valid,
    })
    nA, nB = prob.prior.shape
    rows = []
    for n in cfg.grid_n:
        for eps in cfg.grid_eps:
            rows.append((n, eps, nA * nB, sample_complexity_log2(n, nA, nB, eps),
                         sample_complexity_bound(n, nA, nB, eps)))
    fh = cfg.out / "sanov.csv"
    fh.parent.mkdir(parents=True, exist_ok=True)
    lines = ["n,eps,cells,log2_bound,bound"]
    lines += [f"{n},{io.fmt(e)},{c},{io.fmt(lb)},{io.fmt(b)}" for n, e, c, lb, b in rows]
    fh.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


#: Name of the private column of synthetic data.
SYNTH_PRIVATE = "party"
SYNTH_TOP = 5


def _show(j: int, shows: int) -> str:
    return f"show_{j:0{len(str(shows - 1))}d}"


def cmd_synth(cfg: RunConfig) -> int:
    """Synthetic ratings plus a ready-to-run configuration on the most informative shows."""
    data = synth_politics(cfg.synth_n, cfg.synth_shows, cfg.synth_fraction, cfg.seed,
                          margin=cfg.synth_margin, class_balance=cfg.synth_balance)
    names = [_show(j, cfg.synth_shows) for j in range(cfg.synth_shows)]
    out = cfg.out
    io.write_dataset(out / "synth.csv", data, SYNTH_PRIVATE, names)

    top = top_informative(data, min(SYNTH_TOP, cfg.synth_shows))
    public = [names[j] for j in top]
    sub = SampleTable(tuple(str(a) for a in data.a), tuple(tuple(str(b[j]) for j in top) for b in data.b))
    prior = smoothed_joint(sub, infer_alphabet(sub.a), infer_alphabet(sub.b), cfg.alpha)
    d_cfg = RunConfig(metric="hamming", scale=float(len(top)))
    d, _ = build_distortion(d_cfg, prior.col_alphabet)
    pp = perfect_privacy_distortion(prior, d)
    deltas = [pp * f for f in (0.0, 0.25, 0.5, 0.75)] + [pp]
    ini = [
        "# generated by `privf synth`",
        "[data]",
        "path = synth.csv",
        f"private = {SYNTH_PRIVATE}",
        f"public = {', '.join(public)}",
        "[prior]",
        f"alpha = {io.fmt(cfg.alpha)}",
        "[distortion]",
        "metric = hamming",
        f"scale = {len(top)}",
        "[solve]",
        f"deltas = {', '.join(io.fmt(x) for x in deltas)}",
        "[run]",
        f"seed = {cfg.seed}",
        "out = .",
    ]
    (out / "synth_top5.ini").write_text("\n".join(ini) + "\n", encoding="utf-8")
    io.write_report(out / "synth_summary.txt", {
        "records": data.n,
        "shows": cfg.synth_shows,
        "top_shows": " ".join(public),
        "I_AB_top_bits": mutual_information(prior),
        "map_top": map_accuracy(prior),
        "majority": majority_rate(prior),
        "perfect_privacy_distortion": pp,
    })
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privf", description="Leakage-minimizing privacy mappings.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", type=Path, required=needs_config, help="INI run configuration")
        p.add_argument("--seed", type=int, help="override [run] seed")
        p.add_argument("--out", help="output directory (overrides [run] out)")
        return p

    common(sub.add_parser("estimate", help="estimate the prior from a dataset"))
    common(sub.add_parser("solve", help="sweep distortion budgets and write mappings"))
    ev = common(sub.add_parser("evaluate", help="attack a released dataset"))
    ev.add_argument("--mapping", type=Path, help="mapping CSV (overrides [evaluate] mapping)")
    bd = common(sub.add_parser("bounds", help="mismatched-prior and sample-size bounds"))
    bd.add_argument("--second-prior", type=Path, help="prior CSV (overrides [bounds] second_prior)")
    common(sub.add_parser("synth", help="generate synthetic rating data"), needs_config=False)
    return parser


def run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config is not None else RunConfig()
    cfg = cfg.with_overrides(args.seed, args.out)
    if args.command == "estimate":
        return cmd_estimate(cfg)
    if args.command == "solve":
        return cmd_solve(cfg)
    if args.command == "evaluate":
        return cmd_evaluate(cfg, args.mapping)
    if args.command == "bounds":
        return cmd_bounds(cfg, args.second_prior)
    return cmd_synth(cfg)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="privf: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return run(args)
    except _DATA_ERRORS as exc:
        print(f"privf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PrivfError, ArithmeticError, np.linalg.LinAlgError, AssertionError, ValueError) as exc:
        print(f"privf: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
