"""Normalized log-likelihood of the coupling and its derivative.

The sources are recomputed from the fixed observations at every queried v,
so they are functions of v.  Two gradients are provided:

* :func:`dlogl_dv_total` -- the total derivative, which carries the drift of
  delta with v through the Jacobian term (the correct gradient).
* :func:`dlogl_dv_partial_only` -- the same expression with the Jacobian's
  fixed-source v-partial in place of its total derivative.  It is wrong
  whenever the phases are not all zero and is kept to demonstrate the error.

All temporal averages are unweighted arithmetic means over the samples.
"""

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import mixing, priors
from .errors import DomainError, EvaluationError
from .mixing import NEAR_SINGULAR_COS, ObservationVector, SourceVector

VARIANTS = ("total", "partial-only")


@dataclass(frozen=True)
class SampleSet:
    """Immutable sequence of observation triples plus generation metadata.

    ``observations`` is an ``(n, 3)`` array with columns ``p1, p2, p3``.
    """

    observations: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        obs = np.array(self.observations, dtype=float, copy=True)
        if obs.ndim != 2 or obs.shape[1] != 3:
            raise DomainError(f"observations must have shape (n, 3), got {obs.shape}", field="observations")
        if obs.shape[0] == 0:
            raise DomainError("a SampleSet needs at least one observation", field="observations")
        if not np.all(np.isfinite(obs)):
            raise DomainError("observations must be finite", field="observations")
        x = ObservationVector(obs[:, 0], obs[:, 1], obs[:, 2])
        mixing.check_observations(x)
        mixing.invert_amplitudes(x)
        obs.setflags(write=False)
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self):
        return self.observations.shape[0]

    @property
    def x(self):
        obs = self.observations
        return ObservationVector(obs[:, 0], obs[:, 1], obs[:, 2])

    def subset(self, mask):
        """New SampleSet restricted to ``mask`` (boolean or index array)."""
        return SampleSet(self.observations[mask], meta=self.meta)

    def __eq__(self, other):
        if not isinstance(other, SampleSet):
            return NotImplemented
        return np.array_equal(self.observations, other.observations) and self.meta == other.meta

    __hash__ = None


@dataclass
class GradientReport:
    """Analytic gradient against its finite-difference oracle at one coupling."""

    v: float
    variant: str
    analytic: float
    fd: float
    abs_err: float
    rel_err: float
    skipped: int
    error: Optional[str] = None


class Evaluation(NamedTuple):
    v: float
    logl: float
    grad: float
    excluded: int


class _Terms(NamedTuple):
    sources: SourceVector
    v: float
    excluded: int


def _first(exc):
    idx = getattr(exc, "index", None)
    return 0 if idx is None or len(idx) == 0 else int(idx[0])


def _sources_at(data, v, exclude_singular=False):
    """Invert every sample at ``v``; failures become :class:`EvaluationError`."""
    v = mixing.check_coupling(v)
    x = data.x
    try:
        r1, r2 = mixing.invert_amplitudes(x)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", mixing.NearSingularPhaseWarning)
            delta = mixing.invert_phase(x, r1, r2, v)
    except DomainError as exc:
        raise EvaluationError(_first(exc), exc, v) from exc
    r1, r2, delta = (np.atleast_1d(a) for a in (r1, r2, delta))
    singular = np.abs(np.cos(delta)) < NEAR_SINGULAR_COS
    excluded = 0
    if np.any(singular):
        if not exclude_singular:
            idx = int(np.flatnonzero(singular)[0])
            raise EvaluationError(idx, f"near-singular phase (|cos delta| < {NEAR_SINGULAR_COS})", v)
        keep = ~singular
        excluded = int(singular.sum())
        if not np.any(keep):
            raise EvaluationError(0, "every sample is near-singular", v)
        r1, r2, delta = r1[keep], r2[keep], delta[keep]
    return _Terms(SourceVector(r1, r2, delta), v, excluded)


def _scores(cfg, s, v):
    try:
        return [priors.score(cfg, i, s[i]) for i in range(3)]
    except DomainError as exc:
        raise EvaluationError(_first(exc), exc, v) from exc


def sample_log_likelihood(data, v, cfg, exclude_singular=False):
    """Per-sample log-likelihood terms and the number of excluded samples."""
    s, v, excluded = _sources_at(data, v, exclude_singular)
    try:
        log_dens = sum(priors.log_pdf(cfg, i, s[i]) for i in range(3))
    except DomainError as exc:
        raise EvaluationError(_first(exc), exc, v) from exc
    jg = mixing.jacobian(s, v, check=False)
    return log_dens - np.log(np.abs(jg)), excluded


def log_likelihood(data, v, cfg):
    """Mean over samples of ``sum_i log f_i(s_i) - log|Jg(s)|`` at coupling ``v``.

    Raises:
        EvaluationError: a sample cannot be inverted at ``v``, is near-singular,
            or falls outside its prior support.
    """
    terms, _ = sample_log_likelihood(data, v, cfg)
    return float(np.mean(terms))


def _closed_form_gradient(s, v, cfg):
    r1, r2, delta = s
    psi = _scores(cfg, s, v)[2]
    k = mixing._common(r1, r2) * np.sqrt(1.0 - v**2)
    c = np.cos(delta)
    sn = np.sin(delta)
    w = (1.0 - v**2) * v
    dr = r2**2 - r1**2
    score_part = dr / (k * c) - (1.0 - 2.0 * v**2) * sn / (w * c)
    jac_part = (1.0 - 2.0 * v**2) / (w * c**2) - dr * sn / (k * c**2)
    return -np.mean(psi * score_part) - np.mean(jac_part)


def _assembled_gradient(s, v, cfg, jac_derivative):
    psi = _scores(cfg, s, v)
    drift = mixing.ds3_dv(s, v, check=False)
    zero = np.zeros_like(drift)
    score_sum = psi[0] * zero + psi[1] * zero + psi[2] * drift
    jg = mixing.jacobian(s, v, check=False)
    return -np.mean(score_sum) - np.mean(jac_derivative(s, v, check=False) / jg)


def dlogl_dv_total(data, v, cfg):
    """Total derivative of :func:`log_likelihood` with respect to v (closed form)."""
    s, v, _ = _sources_at(data, v)
    return float(_closed_form_gradient(s, v, cfg))


def dlogl_dv_total_assembled(data, v, cfg):
    """Same quantity as :func:`dlogl_dv_total`, assembled from the score terms,
    the implicit phase derivative and the Jacobian's total derivative."""
    s, v, _ = _sources_at(data, v)
    return float(_assembled_gradient(s, v, cfg, mixing.djg_dv_total))


def dlogl_dv_partial_only(data, v, cfg):
    """Incorrect gradient: the Jacobian term ignores the drift of delta with v."""
    s, v, _ = _sources_at(data, v)
    return float(_assembled_gradient(s, v, cfg, mixing.djg_dv_partial))


def evaluate(data, v, cfg, variant="total", exclude_singular=False):
    """Log-likelihood and gradient at ``v`` in one inversion pass.

    With ``exclude_singular`` the samples whose phase is near-singular at ``v``
    are dropped from both means and counted in ``excluded``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    s, v, excluded = _sources_at(data, v, exclude_singular)
    try:
        log_dens = sum(priors.log_pdf(cfg, i, s[i]) for i in range(3))
    except DomainError as exc:
        raise EvaluationError(_first(exc), exc, v) from exc
    logl = float(np.mean(log_dens - np.log(np.abs(mixing.jacobian(s, v, check=False)))))
    if variant == "total":
        grad = _closed_form_gradient(s, v, cfg)
    else:
        grad = _assembled_gradient(s, v, cfg, mixing.djg_dv_partial)
    return Evaluation(v, logl, float(grad), excluded)


def gradient(data, v, cfg, variant="total"):
    if variant == "total":
        return dlogl_dv_total(data, v, cfg)
    if variant == "partial-only":
        return dlogl_dv_partial_only(data, v, cfg)
    raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")


def usable_mask(data, v, cfg, min_cos=NEAR_SINGULAR_COS):
    """Boolean mask of samples that invert at ``v`` inside the prior support
    with ``|cos(delta)| >= min_cos``.  Never raises for per-sample failures."""
    x = data.x
    r1, r2 = mixing.invert_amplitudes(x)
    q = np.atleast_1d(mixing.phase_argument(x, r1, r2, mixing.check_coupling(v)))
    ok = np.abs(q) <= 1.0
    delta = np.arcsin(np.clip(q, -1.0, 1.0))
    ok &= np.abs(np.cos(delta)) >= min_cos
    lo, hi = cfg.delta_support
    ok &= (delta >= lo) & (delta <= hi)
    return ok


__all__ = [
    "SampleSet",
    "GradientReport",
    "Evaluation",
    "VARIANTS",
    "log_likelihood",
    "sample_log_likelihood",
    "dlogl_dv_total",
    "dlogl_dv_total_assembled",
    "dlogl_dv_partial_only",
    "evaluate",
    "gradient",
    "usable_mask",
]
