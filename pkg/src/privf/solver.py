"""Leakage-minimizing privacy mappings under an average-distortion budget.

The problem

    minimize    I(A; B_hat)           over row-stochastic p(b_hat | b)
    subject to  E[d(B, B_hat)] <= delta

is convex.  It is solved with a conditional-gradient (Frank-Wolfe) method.
The feasible set is a product of simplices cut by one linear constraint, so
the linear minimization oracle is a per-row argmin plus a scalar Lagrange
multiplier found by bisection.  Pairwise steps (moving weight from the worst
active vertex to the new one) are used by default because plain Frank-Wolfe
stalls near zero leakage, which is exactly where perfect privacy lives.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.special import xlogy

from .dist_core import (
    LN2,
    ConditionalMapping,
    DistortionMatrix,
    JointDistribution,
    _entropy_bits,
    _mi_bits,
    expected_distortion,
    leakage,
)
from .exceptions import (
    AlphabetMismatchError,
    InfeasibleDistortionError,
    PreconditionError,
    PrivfError,
    ProblemTooLargeError,
)

logger = logging.getLogger(__name__)

#: Default cap on the number of optimization variables of a direct solve.
DEFAULT_VAR_CAP = 250_000

_GRAD_FLOOR = 1e-12
_LINE_SEARCH_ITERS = 50
_STALL_WINDOW = 5
_FEAS_TOL = 1e-12
_INTERIOR_WEIGHT = 0.5
_KEEP_FRACTION = 1e-3
_KEEP_FLOOR = 1e-10


@dataclass(frozen=True)
class SolverOptions:
    """Knobs of the Frank-Wolfe solver.

    Parameters
    ----------
    max_iters : int
        Iteration budget.
    tol : float
        Stop when the duality gap falls below ``tol * max(1, I(A;B))`` or
        the relative objective change stays below ``tol`` for 5 iterations.
    step_rule : {"line_search", "diminishing"}
        Exact line search along the step direction, or the classic
        ``2 / (k + 2)`` schedule.
    init : {"identity_or_nearest", "uniform"} or ConditionalMapping
        Starting point.  A mapping is used as a warm start.
    pairwise : bool
        Use pairwise steps over the active vertex set (line search only).
    var_cap : int
        Refuse problems with more free variables than this.
    """

    max_iters: int = 5000
    tol: float = 1e-6
    step_rule: str = "line_search"
    init: Union[str, ConditionalMapping] = "identity_or_nearest"
    pairwise: bool = True
    var_cap: int = DEFAULT_VAR_CAP

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.step_rule not in ("line_search", "diminishing"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if isinstance(self.init, str) and self.init not in ("identity_or_nearest", "uniform"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass(frozen=True, eq=False)
class SolveResult:
    mapping: ConditionalMapping
    leakage_bits: float
    achieved_distortion: float
    iterations: int
    converged: bool
    dual_gap: float
    delta: float = math.nan
    multiplier: float = 0.0


# ---------------------------------------------------------------------------
# gradient


def _gradient_arrays(P: np.ndarray, M: np.ndarray) -> np.ndarray:
    """dJ/dM in bits for a prior table ``P`` and a (not necessarily stochastic) ``M``.

    J is not differentiable where a released column is empty: the slope of
    moving mass there depends on which rows move together.  Such columns
    get the posterior ``p_A``, so the entry is 0.  That is a subgradient
    (any fixed posterior is), which keeps the duality gap a valid
    certificate; a per-row posterior would not be.
    """
    pa = P.sum(axis=1)
    pb = P.sum(axis=0)
    q = P @ M
    pbh = pb @ M
    live = pbh > 0.0
    safe_pa = np.where(pa > 0, pa, 1.0)
    post = np.maximum(q, _GRAD_FLOOR) / np.where(live, pbh, 1.0)[None, :]
    log_ratio = np.log(np.maximum(post, _GRAD_FLOOR) / safe_pa[:, None])
    log_ratio[pa <= 0, :] = 0.0
    log_ratio[:, ~live] = 0.0
    G = P.T @ log_ratio
    return G / LN2


def leakage_gradient(prior: JointDistribution, mapping: ConditionalMapping) -> np.ndarray:
    """Partial derivatives of the leakage with respect to every mapping entry.

    Returns a table shaped like ``mapping.rows`` with entry
    ``sum_a p(a,b) log2(p(a|b_hat) / p(a))``.
    """
    if mapping.in_alphabet != prior.col_alphabet:
        raise AlphabetMismatchError("mapping input alphabet differs from the prior's")
    return _gradient_arrays(prior.mass, mapping.rows)


# ---------------------------------------------------------------------------
# linear minimization oracle


class _Atom:
    """A feasible extreme point, stored compactly.

    Either a mix ``theta * S_lo + (1 - theta) * S_hi`` of two deterministic
    maps given by per-row column indices, or an explicit dense matrix.
    """

    __slots__ = ("sel_lo", "sel_hi", "theta", "dense_rows", "key")

    def __init__(self, sel_lo=None, sel_hi=None, theta=1.0, dense_rows=None):
        self.sel_lo = sel_lo
        self.sel_hi = sel_hi
        self.theta = float(theta)
        self.dense_rows = dense_rows
        if dense_rows is not None:
            self.key = ("dense", id(dense_rows))
        elif sel_hi is None or theta >= 1.0:
            self.sel_hi = None
            self.theta = 1.0
            self.key = ("det", sel_lo.tobytes())
        elif theta <= 0.0:
            self.sel_lo, self.sel_hi, self.theta = sel_hi, None, 1.0
            self.key = ("det", sel_hi.tobytes())
        else:
            self.key = ("mix", sel_lo.tobytes(), sel_hi.tobytes(), self.theta)

    def inner(self, G: np.ndarray) -> float:
        if self.dense_rows is not None:
            return float((G * self.dense_rows).sum())
        rows = np.arange(G.shape[0])
        val = float(G[rows, self.sel_lo].sum())
        if self.sel_hi is None:
            return val
        return self.theta * val + (1.0 - self.theta) * float(G[rows, self.sel_hi].sum())

    def add_to(self, out: np.ndarray, weight: float) -> None:
        if self.dense_rows is not None:
            out += weight * self.dense_rows
            return
        rows = np.arange(out.shape[0])
        if self.sel_hi is None:
            out[rows, self.sel_lo] += weight
        else:
            out[rows, self.sel_lo] += weight * self.theta
            out[rows, self.sel_hi] += weight * (1.0 - self.theta)

    def dense(self, shape) -> np.ndarray:
        out = np.zeros(shape)
        self.add_to(out, 1.0)
        return out


class _Problem:
    """Array view of one instance; everything the iterations need."""

    def __init__(self, prior: JointDistribution, d: DistortionMatrix, delta: float):
        self.P = np.asarray(prior.mass, dtype=float)
        self.pa = self.P.sum(axis=1)
        self.pb = self.P.sum(axis=0)
        self.mask = np.asarray(d.allowed)
        self.cost = d.finite_cost
        self.W = self.pb[:, None] * self.cost
        self.delta = float(delta)
        self.shape = self.cost.shape
        self.rows = np.arange(self.shape[0])
        self.feas_tol = _FEAS_TOL * max(1.0, abs(self.delta))
        big = np.where(self.mask, self.W, np.inf)
        self.min_distortion = float(big.min(axis=1).sum())

    def select(self, G: np.ndarray, lam: float):
        score = np.where(self.mask, G + lam * self.W, np.inf)
        sel = np.argmin(score, axis=1)
        return sel, float(self.W[self.rows, sel].sum())

    def lmo(self, G: np.ndarray, lam_hint: float = 0.0):
        """Minimize <G, S> over the feasible set; returns (atom, multiplier)."""
        sel0, dist0 = self.select(G, 0.0)
        if dist0 <= self.delta + self.feas_tol:
            return _Atom(sel0), 0.0
        lo, hi = 0.0, max(lam_hint, 1.0)
        sel_hi, dist_hi = self.select(G, hi)
        while dist_hi > self.delta + self.feas_tol:
            lo = hi
            hi *= 4.0
            sel_hi, dist_hi = self.select(G, hi)
            if hi > 1e300:
                raise InfeasibleDistortionError(self.delta, self.min_distortion)
        if lo == 0.0 and lam_hint > 0.0:
            # bracket from the previous multiplier downwards
            probe = lam_hint / 4.0
            while probe > 1e-300:
                sel_p, dist_p = self.select(G, probe)
                if dist_p > self.delta + self.feas_tol:
                    lo = probe
                    break
                hi, sel_hi, dist_hi = probe, sel_p, dist_p
                probe /= 4.0
        sel_lo, dist_lo = self.select(G, lo)
        for _ in range(200):
            if hi - lo <= 1e-14 * hi:
                break
            exact = self._single_crossing(G, sel_lo, sel_hi, lo, hi)
            if exact is not None:
                hi = exact
                break
            mid = 0.5 * (lo + hi)
            sel_m, dist_m = self.select(G, mid)
            if dist_m > self.delta + self.feas_tol:
                lo, sel_lo, dist_lo = mid, sel_m, dist_m
            else:
                hi, sel_hi, dist_hi = mid, sel_m, dist_m
        if dist_lo <= dist_hi:
            return _Atom(sel_hi), hi
        theta = (self.delta - dist_hi) / (dist_lo - dist_hi)
        theta = min(max(theta, 0.0), 1.0)
        return _Atom(sel_lo, sel_hi, theta), hi

    def _single_crossing(self, G, sel_lo, sel_hi, lo, hi):
        """Exact multiplier when the two selections differ in a single row.

        The selected cost in each row is monotone in the multiplier, so rows
        that agree at both ends are constant in between; it remains to check
        that no third column undercuts the crossing in the differing row.
        """
        diff = np.flatnonzero(sel_lo != sel_hi)
        if diff.size != 1:
            return None
        b = int(diff[0])
        j, k = sel_lo[b], sel_hi[b]
        dw = self.W[b, j] - self.W[b, k]
        if dw <= 0.0:
            return None
        lam = (G[b, k] - G[b, j]) / dw
        if not lo <= lam <= hi:
            return None
        row = np.where(self.mask[b], G[b] + lam * self.W[b], np.inf)
        level = G[b, j] + lam * self.W[b, j]
        if row.min() < level - 1e-12 * (1.0 + abs(level)):
            return None
        return lam

    def objective(self, M: np.ndarray) -> float:
        return _mi_bits(np.maximum(self.P @ M, 0.0))

    def distortion(self, M: np.ndarray) -> float:
        return float((self.W * M).sum())


def _line_search(prob: _Problem, M: np.ndarray, direction: np.ndarray, gamma_max: float) -> float:
    """Minimize J(M + g * direction) over g in [0, gamma_max].

    Along the segment only the (private, released) joint moves, linearly,
    so each evaluation is O(|A| |B_hat|).  The slope is
    ``sum qd * log(posterior)``; an empty column takes the direction's own
    posterior, its one-sided limit.  Safeguarded Newton on the slope.
    """
    q0 = prob.P @ M
    qd = prob.P @ direction
    cols = np.flatnonzero(np.any(qd != 0, axis=0))
    if cols.size == 0:
        return 0.0
    q0, qd = q0[:, cols], qd[:, cols]
    p0, pd = q0.sum(axis=0), qd.sum(axis=0)
    nz = qd != 0
    dir_post = np.abs(qd) / np.maximum(np.abs(qd).sum(axis=0), 1e-300)

    def slope(g):
        q = np.maximum(q0 + g * qd, 0.0)
        p = np.maximum(p0 + g * pd, 0.0)
        empty = p <= 1e-300
        post = np.where(empty, dir_post, q / np.where(empty, 1.0, p))
        d1 = float((qd * np.log(np.maximum(post, 1e-300)))[nz].sum())
        with np.errstate(divide="ignore", invalid="ignore"):
            d2 = float(np.where(nz & (q > 0), qd * qd / q, 0.0).sum()
                       - np.where((pd != 0) & ~empty, pd * pd / np.where(empty, 1.0, p), 0.0).sum())
        return d1, d2

    def phi(g):
        q = np.maximum(q0 + g * qd, 0.0)
        return float(xlogy(q, q).sum() - xlogy(q.sum(axis=0), q.sum(axis=0)).sum())

    s0, _ = slope(0.0)
    if s0 >= 0.0:
        return 0.0
    s1, _ = slope(gamma_max)
    if s1 <= 0.0:
        return gamma_max
    lo, hi = 0.0, gamma_max
    g = gamma_max * s0 / (s0 - s1)
    for _ in range(_LINE_SEARCH_ITERS):
        d1, d2 = slope(g)
        if d1 > 0.0:
            hi = g
        else:
            lo = g
        if abs(d1) <= 1e-15 or hi - lo <= 1e-13 * gamma_max:
            break
        step = g - d1 / d2 if d2 > 0.0 else -1.0
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        if abs(step - g) <= 1e-14 * gamma_max:
            g = step
            break
        g = step
    # Newton may approach the root from one side only; keep the best point seen
    cands = sorted({g, lo, hi})
    vals = [phi(c) for c in cands]
    return cands[int(np.argmin(vals))]


# ---------------------------------------------------------------------------
# initialization


def _nearest_selection(prob: _Problem, d: DistortionMatrix) -> np.ndarray:
    cost = np.where(prob.mask, prob.cost, np.inf)
    sel = np.argmin(cost, axis=1)
    outs = d.out_alphabet
    for i, label in enumerate(d.in_alphabet.symbols):
        if label in outs:
            j = outs.index(label)
            if prob.mask[i, j] and cost[i, j] <= cost[i, sel[i]]:
                sel[i] = j
    return sel


def _interior(prob: _Problem, M: np.ndarray) -> np.ndarray:
    """Blend ``M`` towards the uniform map over allowed pairs, within budget.

    J is not differentiable where an allowed column is empty, and there a
    gradient step can stall although merging columns would help.  Giving
    every allowed pair some mass avoids that; half of the remaining
    budget slack is spent on it.
    """
    U = prob.mask / prob.mask.sum(axis=1, keepdims=True)
    extra = prob.distortion(U) - prob.distortion(M)
    slack = prob.delta - prob.distortion(M)
    if slack <= prob.feas_tol:
        return M
    eps = _INTERIOR_WEIGHT if extra <= 0 else min(_INTERIOR_WEIGHT, 0.5 * slack / extra)
    return (1.0 - eps) * M + eps * U


def _zero_leakage_start(prob: _Problem):
    """The perfect-privacy LP mapping when it fits the budget (it is then optimal)."""
    if _mi_bits(prob.P) <= 0.0:
        return None
    M = _perfect_privacy_lp(prob)
    if M is not None and prob.distortion(M) <= prob.delta + prob.feas_tol:
        return _Atom(dense_rows=M)
    return None


def _initial_atom(prob: _Problem, d: DistortionMatrix, init) -> _Atom:
    if isinstance(init, ConditionalMapping):
        best = _zero_leakage_start(prob)
        if best is not None:
            return best
        if init.shape != prob.shape:
            raise AlphabetMismatchError("warm-start mapping has the wrong shape")
        rows = np.array(init.rows, dtype=float)
        if np.any(rows[~prob.mask] > 0):
            raise PreconditionError("warm-start mapping uses forbidden pairs")
        if prob.distortion(rows) > prob.delta + 1e-9 * max(1.0, prob.delta):
            rows = _Atom(_nearest_selection(prob, d)).dense(prob.shape)
        return _Atom(dense_rows=_interior(prob, rows))
    if init == "uniform":
        rows = prob.mask / prob.mask.sum(axis=1, keepdims=True)
        if prob.distortion(rows) > prob.delta + prob.feas_tol:
            raise PreconditionError(
                "uniform initial mapping exceeds the distortion budget; "
                "use init='identity_or_nearest'"
            )
        return _Atom(dense_rows=rows)
    best = _zero_leakage_start(prob)
    if best is not None:
        return best
    nearest = _Atom(_nearest_selection(prob, d))
    return _Atom(dense_rows=_interior(prob, nearest.dense(prob.shape)))


# ---------------------------------------------------------------------------
# main loop


def min_achievable_distortion(prior: JointDistribution, d: DistortionMatrix) -> float:
    """Smallest distortion any mapping can reach: each b to its cheapest output."""
    cost = np.where(d.allowed, d.cost, np.inf)
    return float(prior.col_marginal @ cost.min(axis=1))


def perfect_privacy_threshold(prior: JointDistribution, d: DistortionMatrix) -> float:
    """Distortion of the cheapest constant mapping (inf if none is allowed)."""
    cost = np.where(d.allowed, d.cost, np.inf)
    return float((prior.col_marginal @ cost).min())


#: Above this many free variables the perfect-privacy LP is skipped.
_PP_LP_MAX_VARS = 20_000


def _perfect_privacy_lp(prob: _Problem):
    """Cheapest mapping with zero leakage, or None.

    Leakage is zero exactly when every released symbol has posterior
    ``p_A``, i.e. ``sum_b (p(a,b) - p_A(a) p_B(b)) m(k|b) = 0`` for all a
    and k.  These are linear equalities, so with the row sums and the
    support mask the cheapest perfectly private mapping is a linear
    program.  It is handed to scipy's HiGHS solver.
    """
    n_vars = int(prob.mask.sum())
    if n_vars > _PP_LP_MAX_VARS:
        return None
    from scipy.optimize import linprog
    from scipy.sparse import coo_matrix, vstack

    nA = prob.P.shape[0]
    nB, K = prob.shape
    C = prob.P - np.outer(prob.pa, prob.pb)
    bs, ks = np.nonzero(prob.mask)
    var = np.arange(n_vars)
    # privacy rows (a, k) -> a * K + k, one entry per a for every variable
    rows = (np.arange(nA)[:, None] * K + ks[None, :]).ravel()
    cols = np.broadcast_to(var, (nA, n_vars)).ravel()
    vals = C[:, bs].ravel()
    keep = vals != 0.0
    A_priv = coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(nA * K, n_vars))
    A_rows = coo_matrix((np.ones(n_vars), (bs, var)), shape=(nB, n_vars))
    A_eq = vstack([A_priv, A_rows]).tocsr()
    b_eq = np.concatenate([np.zeros(nA * K), np.ones(nB)])
    res = linprog(prob.W[bs, ks], A_eq=A_eq, b_eq=b_eq, bounds=(0.0, None), method="highs")
    if res.status != 0:
        return None
    M = np.zeros(prob.shape)
    M[bs, ks] = np.clip(res.x, 0.0, None)
    M /= M.sum(axis=1, keepdims=True)
    return M


def perfect_privacy_distortion(prior: JointDistribution, d: DistortionMatrix) -> float:
    """Smallest expected distortion of a mapping that leaks nothing.

    Never above :func:`perfect_privacy_threshold`; mixing several outputs
    is often cheaper than a single constant one.  Returns ``inf`` when the
    linear program is skipped (too many variables) and no constant mapping
    is allowed.
    """
    prob = _Problem(prior, d, 0.0)
    M = _perfect_privacy_lp(prob)
    if M is None:
        return perfect_privacy_threshold(prior, d)
    return min(prob.distortion(M), perfect_privacy_threshold(prior, d))


def _check_inputs(prior, d, delta, opts):
    if d.in_alphabet != prior.col_alphabet:
        raise AlphabetMismatchError("distortion input alphabet differs from the prior's")
    if not delta >= 0:
        raise PreconditionError("delta must be nonnegative", delta)
    n_vars = int(np.count_nonzero(d.allowed))
    if n_vars > opts.var_cap:
        raise ProblemTooLargeError(n_vars, opts.var_cap)


class _ActiveSet:
    """Atoms with positive weight, with their selections stacked for fast scoring."""

    def __init__(self, n_rows):
        self.n_rows = n_rows
        self.atoms: List[_Atom] = []
        self.weights: List[float] = []
        self.index = {}
        self._lo = np.zeros((0, n_rows), dtype=np.intp)
        self._hi = np.zeros((0, n_rows), dtype=np.intp)
        self._theta = np.zeros(0)
        self._stale = True

    def add(self, atom: _Atom, gamma: float):
        i = self.index.get(atom.key)
        if i is not None:
            self.weights[i] += gamma
            return
        self.index[atom.key] = len(self.atoms)
        self.atoms.append(atom)
        self.weights.append(gamma)
        self._stale = True

    def scale(self, factor: float):
        self.weights = [w * factor for w in self.weights]

    def remove(self, i: int):
        self.atoms.pop(i)
        self.weights.pop(i)
        self.index = {a.key: j for j, a in enumerate(self.atoms)}
        self._stale = True

    def _stack(self):
        if not self._stale:
            return
        lo, hi, th = [], [], []
        for a in self.atoms:
            if a.dense_rows is None:
                lo.append(a.sel_lo)
                hi.append(a.sel_lo if a.sel_hi is None else a.sel_hi)
                th.append(a.theta)
        if lo:
            self._lo, self._hi, self._theta = np.array(lo), np.array(hi), np.array(th)
        else:
            self._lo = self._hi = np.zeros((0, self.n_rows), dtype=np.intp)
            self._theta = np.zeros(0)
        self._stale = False

    def scores(self, G: np.ndarray) -> np.ndarray:
        """<G, atom> for every active atom, in order."""
        self._stack()
        rows = np.arange(self.n_rows)[None, :]
        sparse = self._theta * G[rows, self._lo].sum(axis=1) + (1.0 - self._theta) * G[rows, self._hi].sum(axis=1)
        out = np.empty(len(self.atoms))
        k = 0
        for i, a in enumerate(self.atoms):
            if a.dense_rows is None:
                out[i] = sparse[k]
                k += 1
            else:
                out[i] = a.inner(G)
        return out

    def dense(self, shape) -> np.ndarray:
        M = np.zeros(shape)
        total = sum(self.weights)
        for a, w in zip(self.atoms, self.weights):
            a.add_to(M, w / total)
        return M


def solve_privacy_mapping(
    prior: JointDistribution,
    d: DistortionMatrix,
    delta: float,
    opts: Optional[SolverOptions] = None,
) -> SolveResult:
    """Find the mapping of least leakage whose expected distortion is <= delta.

    Raises
    ------
    InfeasibleDistortionError
        If even the cheapest mapping costs more than ``delta``.
    ProblemTooLargeError
        If the number of free variables exceeds ``opts.var_cap``.
    """
    opts = opts or SolverOptions()
    _check_inputs(prior, d, delta, opts)
    prob = _Problem(prior, d, delta)
    if prob.min_distortion > prob.delta + prob.feas_tol:
        raise InfeasibleDistortionError(prob.delta, prob.min_distortion)

    gap_target = opts.tol * max(1.0, _mi_bits(prob.P))
    pairwise = opts.pairwise and opts.step_rule == "line_search"

    start = _initial_atom(prob, d, opts.init)
    active = _ActiveSet(prob.shape[0])
    active.add(start, 1.0)
    M = start.dense(prob.shape)
    # a dense start keeps a sliver of weight so that no allowed column
    # empties out (see _interior)
    keep_key = start.key if start.dense_rows is not None else None

    def reserve(i):
        if active.atoms[i].key != keep_key:
            return 0.0
        w = active.weights[i]
        return max(w * _KEEP_FRACTION, min(w, _KEEP_FLOOR))

    J = prob.objective(M)
    gap = math.inf
    lam = 0.0
    stall = 0
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        G = _gradient_arrays(prob.P, M)
        s_atom, lam = prob.lmo(G, lam)
        S = s_atom.dense(prob.shape)
        gap = float((G * (M - S)).sum())
        if gap <= gap_target:
            converged = True
            break

        gamma = 0.0
        away_i = None
        if pairwise:
            scores = active.scores(G)
            away_i = int(np.argmax(scores))
            if active.atoms[away_i].key != s_atom.key:
                direction = S - active.atoms[away_i].dense(prob.shape)
                gamma_max = active.weights[away_i] - reserve(away_i)
                if gamma_max > 0.0:
                    gamma = _line_search(prob, M, direction, gamma_max)
        if gamma > 0.0:
            active.weights[away_i] -= gamma
            if gamma >= gamma_max and active.atoms[away_i].key != keep_key:
                active.remove(away_i)
            active.add(s_atom, gamma)
        else:
            direction = S - M
            i_keep = active.index.get(keep_key)
            top = 1.0
            if i_keep is not None:
                top = 1.0 - _KEEP_FRACTION
            if opts.step_rule == "line_search":
                gamma = _line_search(prob, M, direction, top)
                if gamma <= 0.0:
                    break
            else:
                gamma = min(2.0 / (it + 1.0), top)
            active.scale(1.0 - gamma)
            active.add(s_atom, gamma)

        M = M + gamma * direction
        np.maximum(M, 0.0, out=M)
        if it % 100 == 0:
            M = active.dense(prob.shape)

        J_new = prob.objective(M)
        rel = abs(J - J_new) / max(abs(J), 1e-300)
        J = J_new
        stall = stall + 1 if rel < opts.tol else 0
        if stall >= _STALL_WINDOW:
            break

    mapping = _finalize(M, prior, d)
    return SolveResult(
        mapping=mapping,
        leakage_bits=leakage(prior, mapping),
        achieved_distortion=expected_distortion(prior, mapping, d),
        iterations=it,
        converged=converged,
        dual_gap=max(gap, 0.0) if math.isfinite(gap) else gap,
        delta=float(delta),
        multiplier=lam,
    )


def _finalize(M, prior, d) -> ConditionalMapping:
    M = np.where(d.allowed, np.maximum(M, 0.0), 0.0)
    M = M / M.sum(axis=1, keepdims=True)
    return ConditionalMapping(
        prior.col_alphabet, d.out_alphabet, M, support_mask=d.allowed if d.has_forbidden else None
    )


# ---------------------------------------------------------------------------
# tradeoff curves


@dataclass(frozen=True, eq=False)
class CurvePoint:
    delta_target: float
    achieved_distortion: float
    leakage_bits: float
    converged: bool
    result: Optional[SolveResult] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True, eq=False)
class TradeoffCurve:
    points: tuple

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]

    @property
    def deltas(self) -> np.ndarray:
        return np.array([p.delta_target for p in self.points])

    @property
    def leakages(self) -> np.ndarray:
        return np.array([p.leakage_bits for p in self.points])

    @property
    def distortions(self) -> np.ndarray:
        return np.array([p.achieved_distortion for p in self.points])


_MONOTONE_SLACK = 1e-6


def _point(delta, res=None, err=None):
    if res is None:
        return CurvePoint(float(delta), math.nan, math.nan, False, None, err)
    return CurvePoint(
        float(delta), res.achieved_distortion, res.leakage_bits, res.converged, res
    )


def sweep_curve(
    prior: JointDistribution,
    d: DistortionMatrix,
    deltas: Sequence[float],
    opts: Optional[SolverOptions] = None,
    warm_start: bool = True,
    n_jobs: int = 1,
) -> TradeoffCurve:
    """Solve for every budget in ``deltas`` and collect the privacy-distortion curve.

    Each solve is warm-started from the previous mapping, which is feasible
    for the next (larger) budget, so the leakage is nonincreasing.  A point
    whose solve raises is kept and marked failed.  With ``warm_start=False``
    the points are independent and may run in parallel (``n_jobs``).
    """
    deltas = [float(x) for x in deltas]
    if not deltas:
        raise PreconditionError("deltas must be nonempty")
    if any(b < a for a, b in zip(deltas, deltas[1:])):
        raise PreconditionError("deltas must be nondecreasing")
    opts = opts or SolverOptions()

    def solve_one(delta, o):
        try:
            return _point(delta, solve_privacy_mapping(prior, d, delta, o))
        except PrivfError as exc:
            if isinstance(exc, ProblemTooLargeError):
                raise
            return _point(delta, err=str(exc))

    if not warm_start:
        if n_jobs != 1:
            from joblib import Parallel, delayed

            points = Parallel(n_jobs=n_jobs)(delayed(solve_one)(x, opts) for x in deltas)
        else:
            points = [solve_one(x, opts) for x in deltas]
    else:
        points = []
        prev = None
        for delta in deltas:
            o = opts if prev is None else replace(opts, init=prev)
            pt = solve_one(delta, o)
            if pt.result is not None:
                prev = pt.result.mapping
            points.append(pt)

    points = _enforce_monotone(prior, d, points, opts)
    return TradeoffCurve(tuple(points))


def _enforce_monotone(prior, d, points, opts):
    best = None
    out = []
    for pt in points:
        if pt.failed:
            out.append(pt)
            continue
        if best is not None and pt.leakage_bits > best.leakage_bits + _MONOTONE_SLACK:
            logger.info(
                "re-solving delta=%g from the previous mapping (leakage %.3g > %.3g)",
                pt.delta_target, pt.leakage_bits, best.leakage_bits,
            )
            res = solve_privacy_mapping(
                prior, d, pt.delta_target, replace(opts, init=best.result.mapping)
            )
            pt = _point(pt.delta_target, res)
        out.append(pt)
        if best is None or pt.leakage_bits < best.leakage_bits:
            best = pt
    return out


# ---------------------------------------------------------------------------
# lattice oracle

_ORACLE_RESOLUTIONS = (0.05, 0.02, 0.01)
_ORACLE_MAX_CELLS = 9
_ORACLE_SMOOTH = 1e-12
_ORACLE_CHUNK = 2_000_000


def _compositions(total: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to ``total``."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    bars = np.array(list(itertools.combinations(range(total + parts - 1), parts - 1)), dtype=np.int64)
    edges = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), total + parts - 1)])
    return np.diff(edges, axis=1) - 1


def _log_post(v: np.ndarray) -> np.ndarray:
    """Smoothed log2 posterior along axis -2; sums of 2**g stay <= 1."""
    n = v.shape[-2]
    tot = v.sum(axis=-2, keepdims=True)
    post = (v + _ORACLE_SMOOTH * tot) / np.maximum(tot * (1.0 + n * _ORACLE_SMOOTH), 1e-300)
    return np.log2(np.maximum(post, 1e-300))


class _LatticeSearch:
    """Depth-first branch and bound over the rows of a lattice mapping.

    The leakage splits over released symbols: ``J = H(A) + sum_k h(q_k)``
    with ``h(v) = sum_a v_a log2(v_a / sum(v))`` convex and 1-homogeneous,
    so ``h(v) >= <g, v>`` for any ``g`` with ``sum 2**g <= 1``.  Taking
    ``g`` as a posterior makes the bound linear in the rows not yet fixed;
    the remaining linear program with one budget row is solved exactly
    through its Lagrange dual.  Since column k of a child depends only on
    the child's level in that column, exact values and bound coefficients
    are read from per-column tables.
    """

    def __init__(self, P, W, mask, budget, steps, atol):
        self.P, self.W, self.mask = P, W, mask
        self.atol = atol
        self.budget = budget
        self.steps = steps
        self.n_rows, self.K = W.shape
        pa = P.sum(axis=1)
        self.h_a = float(-xlogy(pa, pa).sum() / LN2)
        self.levels, self.costs = [], []
        for b in range(self.n_rows):
            cols = np.flatnonzero(mask[b])
            comp = _compositions(steps, cols.size)
            lv = np.zeros((len(comp), self.K), dtype=np.int64)
            lv[:, cols] = comp
            u = lv @ W[b] / steps
            order = np.argsort(u, kind="stable")
            self.levels.append(lv[order])
            self.costs.append(u[order])
        # flat offsets into a (K, steps + 1) table, one contiguous array per column
        self.flat = [[np.ascontiguousarray(lv[:, k] + k * (steps + 1)) for k in range(self.K)]
                     for lv in self.levels]
        self.frac = np.arange(steps + 1) / steps
        self.tail_mass = [P[:, b + 1:].sum(axis=1) for b in range(self.n_rows)]
        self.tail_min_w = [
            float(np.where(mask[b + 1:], W[b + 1:], np.inf).min(axis=1).sum()) if b + 1 < self.n_rows else 0.0
            for b in range(self.n_rows)
        ]
        self.best = math.inf
        self.best_rows = None
        self.nodes = 0
        # smallest bound of any pruned branch: the lattice optimum is >= min(best, floor)
        self.floor = math.inf
        self.refine_rounds = 8

    def run(self):
        self._descend(np.zeros((self.P.shape[0], self.K)), 0.0, 0, [])
        return self.best, self.best_rows

    def _states(self, q, depth):
        """Column states for every level: shape (K, steps + 1, |A|)."""
        return q.T[:, None, :] + self.frac[None, :, None] * self.P[:, depth][None, None, :]

    def _h_table(self, st):
        tot = st.sum(axis=2, keepdims=True)
        return (xlogy(st, st) - xlogy(st, np.broadcast_to(tot, st.shape))).sum(axis=2) / LN2

    def _gather(self, table, depth, m):
        """Sum over columns of ``table[k, level_k]`` for the first m children."""
        flat = table.reshape(-1, *table.shape[2:])
        idx = self.flat[depth]
        out = flat.take(idx[0][:m], axis=0)
        for k in range(1, self.K):
            out = out + flat.take(idx[k][:m], axis=0)
        return out

    def _bound(self, st, tangent, m, slack, depth):
        """Dual bound for the first m children given tangent points per column state."""
        rest = slice(depth + 1, self.n_rows)
        empty = tangent.sum(axis=2) <= 1e-15
        g = np.swapaxes(_log_post(np.swapaxes(tangent, 1, 2)), 1, 2)
        if empty.any():
            g_tail = _log_post(self.tail_mass[depth][:, None])[:, 0]
            g = np.where(empty[:, :, None], g_tail[None, None], g)
        fixed = self._gather((g * st).sum(axis=2), depth, m)
        c_t = g @ self.P[:, rest]
        # per-column coefficients of the remaining rows: (m, R, K)
        c = np.stack([c_t[k].take(self.levels[depth][:m, k], axis=0) for k in range(self.K)], axis=2)
        c[:, ~self.mask[rest]] = np.inf
        W = self.W[rest]
        lams = [np.zeros(m)]
        for j, k in itertools.combinations(range(self.K), 2):
            dw = W[:, k] - W[:, j]
            with np.errstate(divide="ignore", invalid="ignore"):
                lam = (c[:, :, j] - c[:, :, k]) / dw[None]
            lam = np.where(np.isfinite(lam) & (lam > 0), lam, 0.0)
            lams.extend(lam.T)
        lams = np.stack(lams, axis=1)
        vals = np.min(c[:, None] + lams[:, :, None, None] * W[None, None], axis=3).sum(axis=2)
        dual = (vals - lams * slack).max(axis=1)
        return self.h_a + fixed + dual

    def _refine(self, q, depth, idx, slack, y, rounds):
        """Per-child dual bounds with tangents moved towards the relaxed optimum.

        ``y`` holds a feasible completion of the remaining rows for every
        child, shape (n, R, K).  Each round takes the bound at the current
        tangent and then mixes in the vertex that attains it.  Any tangent
        gives a valid bound, so the rounds only sharpen it.
        """
        rest = slice(depth + 1, self.n_rows)
        P_rest, W = self.P[:, rest], self.W[rest]
        rows = self.levels[depth][idx] / self.steps
        S = q[None] + self.P[:, depth][None, :, None] * rows[:, None, :]  # (n, A, K)
        n = len(idx)
        best = np.full(n, -np.inf)
        mask_rest = self.mask[rest]
        pairs = list(itertools.combinations(range(self.K), 2))
        for t in range(rounds):
            T = S + np.einsum("ar,nrk->nak", P_rest, y)
            g = _log_post(T)
            empty = T.sum(axis=1) <= 1e-15
            if empty.any():
                g_tail = _log_post(self.tail_mass[depth][:, None])[:, 0]
                g = np.where(empty[:, None, :], g_tail[None, :, None], g)
            fixed = (g * S).sum(axis=(1, 2))
            c = np.einsum("ar,nak->nrk", P_rest, g)
            c[:, ~mask_rest] = np.inf
            lams = [np.zeros(n)]
            for j, k in pairs:
                dw = W[:, k] - W[:, j]
                with np.errstate(divide="ignore", invalid="ignore"):
                    lam = (c[:, :, j] - c[:, :, k]) / dw[None]
                lam = np.where(np.isfinite(lam) & (lam > 0), lam, 0.0)
                lams.extend(lam.T)
            lams = np.stack(lams, axis=1)
            red = c[:, None] + lams[:, :, None, None] * W[None, None]
            dual = red.min(axis=3).sum(axis=2) - lams * slack[:, None]
            j = dual.argmax(axis=1)
            best = np.maximum(best, self.h_a + fixed + dual[np.arange(n), j])
            if t + 1 == rounds:
                break
            # vertices just above and below the optimal multiplier, mixed to meet the budget
            lam = lams[np.arange(n), j]
            eps = 1e-9 * np.maximum(lam, 1e-12)
            hi = np.argmin(c + (lam + eps)[:, None, None] * W[None], axis=2)
            lo = np.argmin(c + np.maximum(lam - eps, 0.0)[:, None, None] * W[None], axis=2)
            Y_hi = np.eye(self.K)[hi]
            Y_lo = np.eye(self.K)[lo]
            u_hi = (Y_hi * W[None]).sum(axis=(1, 2))
            u_lo = (Y_lo * W[None]).sum(axis=(1, 2))
            with np.errstate(divide="ignore", invalid="ignore"):
                th = np.where(u_lo > u_hi + 1e-15, (slack - u_hi) / (u_lo - u_hi), 1.0)
            th = np.clip(th, 0.0, 1.0)[:, None, None]
            Y = th * Y_lo + (1.0 - th) * Y_hi
            gamma = 2.0 / (t + 3.0)
            y = (1.0 - gamma) * y + gamma * Y
        return np.maximum(best, 0.0)

    def _descend(self, q, used, depth, prefix):
        m = int(np.searchsorted(self.costs[depth], self.budget - used, side="right"))
        if m == 0:
            return
        lv = self.levels[depth]
        self.nodes += m
        st = self._states(q, depth)
        if depth == self.n_rows - 1:
            vals = self.h_a + self._gather(self._h_table(st), depth, m)
            i = int(np.argmin(vals))
            if vals[i] < self.best:
                self.best = float(vals[i])
                self.best_rows = prefix + [lv[i] / self.steps]
            return
        slack = self.budget - used - self.costs[depth][:m]
        lb = self._bound(st, st, m, slack[:, None], depth)
        if self.best_rows is not None:
            tail = (self.P[:, depth + 1:] @ np.asarray(self.best_rows[depth + 1:])).T
            lb = np.maximum(lb, self._bound(st, st + tail[:, None, :], m, slack[:, None], depth))
        lb = np.maximum(lb, 0.0)
        lb[slack < self.tail_min_w[depth] - 1e-12] = np.inf
        if self.best_rows is not None and self.refine_rounds > 0:
            live = np.flatnonzero(lb < self.best - self.atol)
            if live.size:
                y0 = np.broadcast_to(np.asarray(self.best_rows[depth + 1:]),
                                     (live.size, self.n_rows - depth - 1, self.K)).copy()
                lb[live] = np.maximum(lb[live], self._refine(q, depth, live, slack[live], y0,
                                                             self.refine_rounds))
        order = np.argsort(lb, kind="stable")
        for i in order:
            if lb[i] >= self.best - self.atol or self.best <= 0.0:
                self.floor = min(self.floor, float(lb[i]))
                break
            row = lv[i] / self.steps
            self._descend(q + np.outer(self.P[:, depth], row), used + float(self.costs[depth][i]),
                          depth + 1, prefix + [row])


def _lattice_descent(prob: _Problem, M: np.ndarray, steps: int, budget: float) -> np.ndarray:
    """Greedy lattice moves, used only to seed the branch-and-bound incumbent.

    A move shifts ``size / steps`` of mass between two entries of one row;
    pairs of moves in different rows are tried too, so that budget freed in
    one row can be spent in another.  Sizes go from coarse to fine.
    """
    units = np.rint(M * steps).astype(np.int64)
    n, K = units.shape
    single = [(b, j, k) for b in range(n) for j in range(K) for k in range(K)
              if j != k and prob.mask[b, k]]
    if not single:
        return M
    moves = np.zeros((len(single), n, K), dtype=np.int64)
    for i, (b, j, k) in enumerate(single):
        moves[i, b, j] -= 1
        moves[i, b, k] += 1
    rows_of = np.array([b for b, _, _ in single])
    ii, jj = np.triu_indices(len(single), k=1)
    keep = rows_of[ii] != rows_of[jj]
    moves = np.concatenate([moves, moves[ii[keep]] + moves[jj[keep]]])
    J = prob.objective(units / steps)
    h_a = _entropy_bits(prob.pa)
    size = 1 << int(math.log2(max(steps, 1)))
    while size >= 1:
        while True:
            cand = units[None] + size * moves
            ok = (cand >= 0).all(axis=(1, 2))
            Ms = cand[ok] / steps
            feas = (Ms * prob.W).sum(axis=(1, 2)) <= budget
            if not feas.any():
                break
            Ms = Ms[feas]
            q = np.einsum("ab,nbk->nak", prob.P, Ms)
            col = q.sum(axis=1, keepdims=True)
            vals = h_a + (xlogy(q, q) - xlogy(q, np.broadcast_to(col, q.shape))).sum(axis=(1, 2)) / LN2
            i = int(np.argmin(vals))
            if vals[i] >= J - 1e-15:
                break
            units, J = np.rint(Ms[i] * steps).astype(np.int64), float(vals[i])
        size //= 2
    return units / steps


def _round_to_lattice(M: np.ndarray, mask: np.ndarray, steps: int) -> np.ndarray:
    """Largest-remainder rounding of each row to multiples of 1 / steps."""
    x = np.where(mask, np.clip(M, 0.0, None), 0.0) * steps
    units = np.floor(x).astype(np.int64)
    for b in range(len(units)):
        short = steps - int(units[b].sum())
        order = np.argsort(-(x[b] - units[b]), kind="stable")
        order = order[mask[b, order]]
        units[b, order[:short]] += 1
    return units / steps


def _continuous_seed(prob: _Problem, steps: int, budget: float) -> Optional[np.ndarray]:
    """Lattice point near a generic SLSQP solution of the continuous problem."""
    from scipy.optimize import minimize

    idx = np.flatnonzero(prob.mask.ravel())
    rows_of = np.nonzero(prob.mask)[0]
    n = prob.shape[0]

    def unpack(x):
        M = np.zeros(prob.mask.size)
        M[idx] = x
        return M.reshape(prob.shape)

    def fun(x):
        M = unpack(x)
        return prob.objective(M), _gradient_arrays(prob.P, M).ravel()[idx]

    A = np.zeros((n, idx.size))
    A[rows_of, np.arange(idx.size)] = 1.0
    w = prob.W.ravel()[idx]
    x0 = A.T @ (1.0 / A.sum(axis=1))
    cons = [
        {"type": "eq", "fun": lambda x: A @ x - 1.0, "jac": lambda x: A},
        {"type": "ineq", "fun": lambda x: np.atleast_1d(budget - w @ x), "jac": lambda x: -w[None]},
    ]
    with np.errstate(all="ignore"):
        res = minimize(fun, x0, jac=True, method="SLSQP", bounds=[(0.0, 1.0)] * idx.size,
                       constraints=cons, options={"maxiter": 500, "ftol": 1e-12})
    if not np.all(np.isfinite(res.x)):
        return None
    M = _round_to_lattice(unpack(res.x), prob.mask, steps)
    return M if prob.distortion(M) <= budget else None


def brute_force_oracle(
    prior: JointDistribution,
    d: DistortionMatrix,
    delta: float,
    resolution: float = 0.01,
    *,
    atol: float = 1e-4,
    _allow_any_resolution: bool = False,
) -> SolveResult:
    """Best mapping on the lattice of entries that are multiples of ``resolution``.

    A full enumeration is out of reach at fine resolutions (about 1.4e11
    lattice points for a 3 x 3 mapping at 0.01), so the lattice is searched
    by branch and bound with valid lower bounds (see ``_LatticeSearch``).
    A branch is dropped only when its bound is within ``atol`` bits of the
    incumbent, hence the returned leakage is at most the lattice optimum
    plus ``atol``.  The result's ``dual_gap`` is the certified distance to
    the lattice optimum (at most ``atol``), and ``iterations`` counts the
    lattice nodes visited.  ``atol=0`` asks for the exact optimum, which
    can take very long where the objective is flat near zero leakage.  The
    search shares no code with the Frank-Wolfe iterations.

    Raises
    ------
    ProblemTooLargeError
        If ``|B| * |B_hat| > 9``.
    PreconditionError
        For an unsupported resolution or a negative budget.
    InfeasibleDistortionError
        If no lattice mapping meets the budget.
    """
    n_cells = int(np.prod(d.shape))
    if n_cells > _ORACLE_MAX_CELLS:
        raise ProblemTooLargeError(n_cells, _ORACLE_MAX_CELLS)
    if not _allow_any_resolution and not any(abs(resolution - r) < 1e-12 for r in _ORACLE_RESOLUTIONS):
        raise PreconditionError(f"resolution must be one of {_ORACLE_RESOLUTIONS}", resolution)
    steps = int(round(1.0 / resolution))
    if abs(steps * resolution - 1.0) > 1e-9:
        raise PreconditionError("1 / resolution must be an integer", resolution)
    _check_inputs(prior, d, delta, SolverOptions())
    prob = _Problem(prior, d, delta)
    budget = prob.delta + 1e-12 * max(1.0, prob.delta)

    if not atol >= 0:
        raise PreconditionError("atol must be nonnegative", atol)
    # branch on heavy rows first: light rows barely move the bound
    perm = np.argsort(-prob.pb, kind="stable")
    search = _LatticeSearch(prob.P[:, perm], prob.W[perm], prob.mask[perm], budget, steps,
                            max(float(atol), 1e-12))
    # seed the incumbent: the cheapest deterministic map is always on the
    # lattice and feasible; a rounded generic NLP solution is usually close
    # to the lattice optimum.  Both are polished by local moves.
    seeds = [_Atom(_nearest_selection(prob, d)).dense(prob.shape), _continuous_seed(prob, steps, budget)]
    for seed in seeds:
        if seed is None or prob.distortion(seed) > budget:
            continue
        seed = _lattice_descent(prob, seed, steps, budget)
        J = prob.objective(seed)
        if J < search.best:
            search.best, search.best_rows = J, list(seed[perm])
    best, rows = search.run()
    if rows is None:
        raise InfeasibleDistortionError(prob.delta, prob.min_distortion)
    M = np.empty(prob.shape)
    M[perm] = np.array(rows, dtype=float)
    mapping = _finalize(M, prior, d)
    value = leakage(prior, mapping)
    return SolveResult(
        mapping=mapping,
        leakage_bits=value,
        achieved_distortion=expected_distortion(prior, mapping, d),
        iterations=search.nodes,
        converged=True,
        dual_gap=max(0.0, value - min(value, search.floor)),
        delta=float(delta),
    )


__all__ = [
    "SolverOptions",
    "SolveResult",
    "CurvePoint",
    "TradeoffCurve",
    "solve_privacy_mapping",
    "leakage_gradient",
    "perfect_privacy_distortion",
    "sweep_curve",
    "brute_force_oracle",
    "min_achievable_distortion",
    "perfect_privacy_threshold",
    "DEFAULT_VAR_CAP",
]
