"""Maximum-likelihood estimation of the coupling parameter.

Each sample is reachable only on an interval of couplings (outside it the
likelihood is zero), so the search runs on the intersection of those
intervals.  Inside it the log-likelihood is smooth.  A maximum is one of:

* an interior root of the gradient (found by bisection on its sign), or
* the edge of the reachable interval when the gradient still points
  outward there ("support-boundary").  This is the typical outcome for the
  raised-cosine phase prior with ``k = 1``: its log-density cancels the
  phase factor of the Jacobian, so the log-likelihood reduces to
  ``const - log(v sqrt(1 - v**2))`` on the reachable interval.

A maximum on the edge of the user's search domain raises
:class:`~qubit_bss.errors.NoInteriorMaximum`.

:class:`QubitMixingML` wraps the procedure in the scikit-learn estimator API.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import likelihood, mixing
from .errors import (
    ConfigError,
    EvaluationError,
    InfeasibleData,
    NoInteriorMaximum,
    ScanError,
)
from .likelihood import SampleSet
from .priors import PriorConfig

logger = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SearchOptions:
    lo: float = 0.05
    hi: float = 0.95
    n_scan: int = 64
    gtol: float = 1e-8
    vtol: float = 1e-10
    allow_exclusion: bool = False
    gradient: str = "total"

    def __post_init__(self):
        if not 0.0 < self.lo < self.hi < 1.0:
            raise ConfigError(f"search domain must satisfy 0 < lo < hi < 1, got ({self.lo}, {self.hi})")
        if int(self.n_scan) != self.n_scan or self.n_scan < 2:
            raise ConfigError(f"n_scan must be an integer >= 2, got {self.n_scan!r}")
        if not (self.gtol > 0 and self.vtol > 0):
            raise ConfigError("gtol and vtol must be positive")
        if self.gradient not in likelihood.VARIANTS:
            raise ConfigError(f"gradient must be one of {likelihood.VARIANTS}, got {self.gradient!r}")

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown search keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class EstimateResult:
    """Outcome of :func:`estimate_v`.

    ``kind`` is ``"interior"`` (gradient root), ``"support-boundary"`` (edge of
    the reachable coupling interval) or ``"search-boundary"`` (edge of the
    search domain; only carried by :class:`NoInteriorMaximum`).
    """

    v_hat: float
    logl_at_vhat: float
    grad_at_vhat: float
    n_evals: int
    excluded_samples: int
    bracket: tuple
    kind: str = "interior"
    converged: bool = True
    gradient: str = "total"
    feasible_interval: tuple = (float("nan"), float("nan"))
    local_maxima: list = field(default_factory=list)

    def to_dict(self):
        return {
            "v_hat": self.v_hat,
            "logl_at_vhat": self.logl_at_vhat,
            "grad_at_vhat": self.grad_at_vhat,
            "n_evals": self.n_evals,
            "excluded_samples": self.excluded_samples,
            "bracket": list(self.bracket),
            "kind": self.kind,
            "converged": self.converged,
            "gradient": self.gradient,
            "feasible_interval": list(self.feasible_interval),
            "local_maxima": list(self.local_maxima),
        }


class ScanPoint(NamedTuple):
    v: float
    logl: float
    grad: float
    excluded: int
    error: Optional[str] = None


def scan(data, cfg, grid, variant="total", allow_exclusion=False):
    """Evaluate the log-likelihood and its gradient on ``grid``.

    Failed points are kept with NaN values and an error message.

    Raises:
        ScanError: every grid point failed.
    """
    grid = [float(v) for v in grid]
    if any(not 0.0 < v < 1.0 for v in grid):
        raise ConfigError("scan grid must lie strictly inside (0, 1)")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("scan grid must be strictly increasing")
    points = []
    for v in grid:
        try:
            ev = likelihood.evaluate(data, v, cfg, variant, exclude_singular=allow_exclusion)
            points.append(ScanPoint(v, ev.logl, ev.grad, ev.excluded))
        except EvaluationError as exc:
            points.append(ScanPoint(v, float("nan"), float("nan"), 0, str(exc)))
    if points and all(p.error is not None for p in points):
        raise ScanError(f"all {len(points)} scan points failed; first: {points[0].error}")
    return points


def feasible_interval(data):
    """Couplings at which every sample is reachable, as ``(lo, hi)``.

    Raises:
        InfeasibleData: the per-sample intervals do not intersect.
    """
    v_lo, v_hi = (np.atleast_1d(a) for a in mixing.feasible_coupling_interval(data.x))
    if np.any(np.isnan(v_lo)):
        idx = int(np.flatnonzero(np.isnan(v_lo))[0])
        raise InfeasibleData(f"sample {idx} is unreachable at every coupling")
    lo, hi = float(v_lo.max()), float(v_hi.min())
    if not lo < hi:
        raise InfeasibleData(f"no coupling reaches every sample (max lower edge {lo} >= min upper edge {hi})")
    return lo, hi


class _Evaluator:
    def __init__(self, data, cfg, opts):
        self.data, self.cfg, self.opts = data, cfg, opts
        self.n_evals = 0

    def __call__(self, v):
        self.n_evals += 1
        try:
            return likelihood.evaluate(
                self.data, v, self.cfg, self.opts.gradient, exclude_singular=self.opts.allow_exclusion
            )
        except EvaluationError:
            return None


class _Candidate(NamedTuple):
    ev: likelihood.Evaluation
    bracket: tuple
    kind: str
    converged: bool


def _golden(evaluate, a, b, vtol):
    """Golden-section maximization of the log-likelihood; failures count as -inf."""
    def f(v):
        ev = evaluate(v)
        return (-math.inf if ev is None else ev.logl), ev

    x1, x2 = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    (f1, e1), (f2, e2) = f(x1), f(x2)
    while b - a > 2.0 * vtol:
        if f1 >= f2:
            b, x2, f2, e2 = x2, x1, f1, e1
            x1 = b - GOLDEN * (b - a)
            f1, e1 = f(x1)
        else:
            a, x1, f1, e1 = x1, x2, f2, e2
            x2 = a + GOLDEN * (b - a)
            f2, e2 = f(x2)
    return (e1, (a, b)) if f1 >= f2 else (e2, (a, b))


def _bisect_root(evaluate, a, b, opts):
    """Bisection on the gradient sign; gradient > 0 at ``a`` and < 0 at ``b``."""
    while b - a > 2.0 * opts.vtol:
        m = 0.5 * (a + b)
        em = evaluate(m)
        if em is None:
            logger.info("gradient failed at v=%r, falling back to golden section", m)
            ev, bracket = _golden(evaluate, a, b, opts.vtol)
            if ev is None:
                return None
            return _Candidate(ev, bracket, "interior", abs(ev.grad) <= opts.gtol)
        if em.grad > 0.0:
            a = m
        elif em.grad < 0.0:
            b = m
        else:
            return _Candidate(em, (a, b), "interior", True)
    em = evaluate(0.5 * (a + b))
    if em is None:
        return None
    return _Candidate(em, (a, b), "interior", True)


def _approach_edge(evaluate, x_ok, e_ok, x_bad, vtol):
    """Walk from an evaluable point towards a failing one until they are vtol apart."""
    while abs(x_ok - x_bad) > vtol:
        m = 0.5 * (x_ok + x_bad)
        em = evaluate(m)
        if em is None:
            x_bad = m
        else:
            x_ok, e_ok = m, em
    return x_ok, e_ok, x_bad


def estimate_v(data, cfg, opts=None):
    """Maximum-likelihood estimate of the coupling from a SampleSet.

    A coarse scan of the reachable interval locates sign changes of the
    chosen gradient variant (refined by bisection, golden section on the
    log-likelihood if the gradient fails) and edges towards which the
    gradient points; the candidate with the largest log-likelihood wins.

    Raises:
        InfeasibleData: no coupling in the search domain reaches every sample.
        NoInteriorMaximum: the best candidate is an edge of ``[opts.lo, opts.hi]``.
        ScanError: no scan point could be evaluated.
    """
    opts = opts or SearchOptions()
    cfg = cfg or PriorConfig()
    if len(data) == 0:
        raise ScanError("empty SampleSet")
    v_lo, v_hi = feasible_interval(data)
    a, b = max(opts.lo, v_lo), min(opts.hi, v_hi)
    if not a < b:
        raise InfeasibleData(f"reachable couplings ({v_lo}, {v_hi}) miss the search domain ({opts.lo}, {opts.hi})")
    support_left, support_right = v_lo > opts.lo, v_hi < opts.hi

    evaluate = _Evaluator(data, cfg, opts)
    pts = np.linspace(a, b, opts.n_scan + 2)
    if support_left:
        pts = pts[1:]
    if support_right:
        pts = pts[:-1]
    evals = [evaluate(float(v)) for v in pts]
    if all(e is None for e in evals):
        raise ScanError(f"no coupling in ({a}, {b}) could be evaluated")

    candidates = []
    maxima = []
    for i in range(len(pts) - 1):
        e0, e1 = evals[i], evals[i + 1]
        if e0 is None or e1 is None:
            continue
        if e0.grad > 0.0 and e1.grad <= 0.0:
            if e1.grad == 0.0:
                cand = _Candidate(e1, (float(pts[i]), float(pts[min(i + 2, len(pts) - 1)])), "interior", True)
            else:
                cand = _bisect_root(evaluate, float(pts[i]), float(pts[i + 1]), opts)
            if cand is not None:
                candidates.append(cand)
                maxima.append(cand.ev.v)

    # edges of each run of evaluable scan points
    ok = [e is not None for e in evals]
    i = 0
    while i < len(pts):
        if not ok[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(pts) and ok[j + 1]:
            j += 1
        if evals[i].grad < 0.0:
            candidates.append(_edge_candidate(evaluate, pts, evals, i, -1, a, support_left, opts))
        if evals[j].grad > 0.0:
            candidates.append(_edge_candidate(evaluate, pts, evals, j, +1, b, support_right, opts))
        i = j + 1

    if not candidates:
        raise ScanError("no maximum candidate found on the reachable interval")
    best = max(candidates, key=lambda c: c.ev.logl)
    if len(maxima) > 1:
        logger.warning("gradient has %d interior sign changes: %s", len(maxima), maxima)
    result = EstimateResult(
        v_hat=best.ev.v,
        logl_at_vhat=best.ev.logl,
        grad_at_vhat=best.ev.grad,
        n_evals=evaluate.n_evals,
        excluded_samples=best.ev.excluded,
        bracket=tuple(float(t) for t in best.bracket),
        kind=best.kind,
        converged=best.converged,
        gradient=opts.gradient,
        feasible_interval=(v_lo, v_hi),
        local_maxima=maxima,
    )
    if best.kind == "search-boundary":
        raise NoInteriorMaximum(
            f"log-likelihood is largest at the search-domain edge v={best.ev.v}",
            best.ev.v, best.ev.logl, result,
        )
    return result


def _edge_candidate(evaluate, pts, evals, i, direction, limit, is_support, opts):
    """Candidate at the edge reached by following the gradient out of run end ``i``."""
    neighbour = i + direction
    inside = 0 <= neighbour < len(pts)
    x_ok, e_ok = float(pts[i]), evals[i]
    if not inside and not is_support:
        # the run ends on the search-domain edge, which was evaluated
        return _Candidate(e_ok, (x_ok - opts.vtol, x_ok + opts.vtol), "search-boundary", False)
    x_bad = float(pts[neighbour]) if inside else float(limit)
    x_new, e_new, x_bad = _approach_edge(evaluate, x_ok, e_ok, x_bad, opts.vtol)
    inner = x_ok if x_new != x_ok else x_new - direction * opts.vtol
    return _Candidate(e_new, tuple(sorted((x_bad, inner))), "support-boundary", True)


class QubitMixingML(TransformerMixin, BaseEstimator):
    """Blind separation of the two-qubit mixture by maximum likelihood.

    ``fit`` estimates the coupling ``v_`` from observations ``X`` (columns
    ``p1, p2, p3``); ``transform`` restores the sources ``(r1, r2, delta)``
    at that coupling and ``inverse_transform`` mixes sources back.

    Parameters
    ----------
    priors : PriorConfig, default=None
        Source priors; ``None`` uses the default configuration.
    gradient : {"total", "partial-only"}, default="total"
        Gradient used to locate stationary points.
    search_lo, search_hi : float
        Search domain for the coupling.
    n_scan : int
        Coarse-scan resolution.
    vtol, gtol : float
        Bisection width and gradient tolerances.
    allow_exclusion : bool
        Drop near-singular samples instead of failing.
    """

    def __init__(self, priors=None, gradient="total", search_lo=0.05, search_hi=0.95,
                 n_scan=64, vtol=1e-10, gtol=1e-8, allow_exclusion=False):
        self.priors = priors
        self.gradient = gradient
        self.search_lo = search_lo
        self.search_hi = search_hi
        self.n_scan = n_scan
        self.vtol = vtol
        self.gtol = gtol
        self.allow_exclusion = allow_exclusion

    def _options(self):
        return SearchOptions(
            lo=self.search_lo, hi=self.search_hi, n_scan=self.n_scan, gtol=self.gtol,
            vtol=self.vtol, allow_exclusion=self.allow_exclusion, gradient=self.gradient,
        )

    def _cfg(self):
        return self.priors if self.priors is not None else PriorConfig()

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_features=3)
        if X.shape[1] != 3:
            raise ValueError(f"X must have 3 columns (p1, p2, p3), got {X.shape[1]}")
        result = estimate_v(SampleSet(X), self._cfg(), self._options())
        self.result_ = result
        self.v_ = result.v_hat
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "v_")
        X = check_array(X, dtype=np.float64)
        s = mixing.invert(mixing.ObservationVector(*X.T), self.v_)
        return np.column_stack([np.atleast_1d(c) for c in s])

    def inverse_transform(self, S):
        check_is_fitted(self, "v_")
        S = check_array(S, dtype=np.float64)
        x = mixing.forward(mixing.SourceVector(*S.T), self.v_)
        return np.column_stack([np.atleast_1d(c) for c in x])

    def score(self, X, y=None):
        """Mean log-likelihood of ``X`` at the fitted coupling."""
        check_is_fitted(self, "v_")
        X = check_array(X, dtype=np.float64)
        return likelihood.log_likelihood(SampleSet(X), self.v_, self._cfg())


def with_gradient(opts, variant):
    """Copy of ``opts`` using another gradient variant."""
    return replace(opts, gradient=variant)
