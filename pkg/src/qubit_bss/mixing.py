"""Nonlinear qubit mixing model x = g(s, v) and its derivative building blocks.

Sources are ``s = (r1, r2, delta)``, observations are ``x = (p1, p2, p3)`` and
``v`` is the scalar coupling parameter in (0, 1).  Every function accepts
scalars or equally shaped numpy arrays (one entry per sample) and returns a
value of the same shape.

Canonical domain: ``0 < r1 < r2 < 1``, ``|delta| < pi/2`` and ``0 < v < 1``.
On it the Jacobian is strictly positive, so ``log|Jg|`` needs no branch logic.
"""

import warnings
from typing import NamedTuple

import numpy as np

from .errors import (
    DomainError,
    InconsistentObservation,
    InvalidObservation,
    NearSingularPhase,
    SingularMixture,
)

#: Smallest accepted discriminant of the amplitude quadratic.
DEGENERACY_TOL = 1e-12
#: Arcsin arguments within this distance beyond +-1 are clamped, not rejected.
CLAMP_TOL = 1e-9
#: Below this |cos(delta)| the phase is treated as singular.
NEAR_SINGULAR_COS = 1e-8

HALF_PI = 0.5 * np.pi


class NearSingularPhaseWarning(RuntimeWarning):
    """Recovered phase sits at (or numerically next to) +-pi/2."""


class SourceVector(NamedTuple):
    """Latent sources; fields may be floats or arrays of equal shape."""

    r1: float
    r2: float
    delta: float


class ObservationVector(NamedTuple):
    """Measured triple; fields may be floats or arrays of equal shape."""

    p1: float
    p2: float
    p3: float


def _out(a):
    a = np.asarray(a, dtype=float)
    return float(a) if a.ndim == 0 else a


def _bad_index(mask):
    mask = np.atleast_1d(mask)
    return np.flatnonzero(mask)


def check_coupling(v):
    """Validate the coupling (scalar or per-sample array) and return it as float(s)."""
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"v must be real, got {v!r}", field="v") from exc
    bad = ~((arr > 0.0) & (arr < 1.0))
    if np.any(bad):
        shown = v if arr.ndim == 0 else arr[np.atleast_1d(bad)][:5].tolist()
        raise DomainError(f"v must lie strictly inside (0, 1), got {shown!r}", field="v",
                          index=None if arr.ndim == 0 else _bad_index(bad))
    return _out(arr)


def check_sources(s):
    """Raise :class:`DomainError` naming the first field that leaves the canonical domain."""
    r1, r2, delta = (np.asarray(c, dtype=float) for c in s)
    checks = (
        ("r1", ~((r1 > 0.0) & (r1 < 1.0)), "r1 must lie in (0, 1)"),
        ("r2", ~((r2 > 0.0) & (r2 < 1.0)), "r2 must lie in (0, 1)"),
        ("r2", ~(r1 < r2), "canonical ordering requires r1 < r2"),
        ("delta", ~(np.abs(delta) < HALF_PI), "delta must lie in (-pi/2, pi/2)"),
    )
    for field, bad, msg in checks:
        if np.any(bad):
            idx = _bad_index(bad)
            raise DomainError(f"{msg} (offending indices {idx[:5].tolist()})", field=field, index=idx)
    return SourceVector(r1, r2, delta)


def check_observations(x):
    """Check the v-independent observation invariants that do not need inversion."""
    p1, p2, p3 = (np.asarray(c, dtype=float) for c in x)
    checks = (
        ("p1", ~(p1 > 0.0), "p1 must be positive"),
        ("p2", ~(p2 > 0.0), "p2 must be positive"),
        ("p3", ~((p3 >= 0.0) & (p3 <= 1.0)), "p3 must lie in [0, 1]"),
    )
    for field, bad, msg in checks:
        if np.any(bad):
            idx = _bad_index(bad)
            raise InvalidObservation(f"{msg} (offending indices {idx[:5].tolist()})", field=field, index=idx)
    return ObservationVector(p1, p2, p3)


def _common(r1, r2):
    return r1 * r2 * np.sqrt(1.0 - r1**2) * np.sqrt(1.0 - r2**2)


def forward(s, v, check=True):
    """Mix sources into observations ``(p1, p2, p3)``."""
    if check:
        s = check_sources(s)
        v = check_coupling(v)
    r1, r2, delta = (np.asarray(c, dtype=float) for c in s)
    p1 = r1**2 * r2**2
    p2 = (1.0 - r1**2) * (1.0 - r2**2)
    p3 = (
        r1**2 * (1.0 - r2**2) * (1.0 - v**2)
        + (1.0 - r1**2) * r2**2 * v**2
        - 2.0 * _common(r1, r2) * np.sqrt(1.0 - v**2) * v * np.sin(delta)
    )
    return ObservationVector(_out(p1), _out(p2), _out(p3))


def jacobian(s, v, check=True):
    """Determinant of ``dg/ds``; positive on the canonical domain."""
    if check:
        s = check_sources(s)
        v = check_coupling(v)
    r1, r2, delta = (np.asarray(c, dtype=float) for c in s)
    jg = (
        8.0 * r1**2 * r2**2 * (r2**2 - r1**2)
        * np.sqrt(1.0 - r1**2) * np.sqrt(1.0 - r2**2)
        * np.sqrt(1.0 - v**2) * v * np.cos(delta)
    )
    return _out(jg)


def invert_amplitudes(x):
    """Recover ``(r1, r2)`` from ``p1`` and ``p2``; the result does not depend on v.

    ``r1**2`` and ``r2**2`` are the roots of ``t**2 - (1 + p1 - p2) t + p1``;
    the smaller root goes to ``r1``.

    Raises:
        SingularMixture: the discriminant is at or below ``DEGENERACY_TOL``.
        InvalidObservation: a root falls outside (0, 1).
    """
    p1, p2, _ = check_observations(x)
    bsum = 1.0 + p1 - p2
    disc = bsum**2 - 4.0 * p1
    bad = ~(disc > DEGENERACY_TOL)
    if np.any(bad):
        idx = _bad_index(bad)
        raise SingularMixture(
            f"amplitude quadratic is degenerate (r1 ~ r2) at indices {idx[:5].tolist()}",
            field="p1", index=idx,
        )
    t_hi = 0.5 * (bsum + np.sqrt(disc))
    # product of roots is p1; avoids cancellation in the small root
    t_lo = p1 / t_hi
    bad = ~((t_lo > 0.0) & (t_hi < 1.0))
    if np.any(bad):
        idx = _bad_index(bad)
        raise InvalidObservation(
            f"squared amplitudes fall outside (0, 1) at indices {idx[:5].tolist()}",
            field="p2", index=idx,
        )
    return _out(np.sqrt(t_lo)), _out(np.sqrt(t_hi))


def phase_argument(x, r1, r2, v):
    """Return ``sin(delta)`` implied by ``p3`` at coupling ``v`` (unclamped)."""
    p3 = np.asarray(x[2], dtype=float)
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    num = r1**2 * (1.0 - r2**2) * (1.0 - v**2) + (1.0 - r1**2) * r2**2 * v**2 - p3
    den = 2.0 * _common(r1, r2) * np.sqrt(1.0 - v**2) * v
    return _out(num / den)


def invert_phase(x, r1, r2, v):
    """Recover delta on the principal arcsin branch.

    Arguments beyond +-1 by at most ``CLAMP_TOL`` are clamped; a
    :class:`NearSingularPhaseWarning` is emitted when any recovered phase has
    ``|cos(delta)| < NEAR_SINGULAR_COS``.
    """
    v = check_coupling(v)
    q = np.asarray(phase_argument(x, r1, r2, v))
    bad = ~(np.abs(q) <= 1.0 + CLAMP_TOL)
    if np.any(bad):
        idx = _bad_index(bad)
        raise InconsistentObservation(
            f"p3 is unreachable at v={v!r} (|sin delta| > 1) at indices {idx[:5].tolist()}",
            field="p3", index=idx,
        )
    delta = np.arcsin(np.clip(q, -1.0, 1.0))
    if np.any(np.cos(delta) < NEAR_SINGULAR_COS):
        warnings.warn("recovered phase is at +-pi/2 (cos(delta) ~ 0)", NearSingularPhaseWarning, stacklevel=2)
    return _out(delta)


def invert(x, v):
    """Restore the sources from observations at coupling ``v``."""
    r1, r2 = invert_amplitudes(x)
    delta = invert_phase(x, r1, r2, v)
    return SourceVector(r1, r2, delta)


def constraint_residual(s3, v, r1, r2, p3):
    """Residual ``F(s3, v)`` of the third mixing equation at fixed ``r1, r2, p3``.

    ``F = 0`` defines delta implicitly as a function of v.
    """
    s = SourceVector(r1, r2, s3)
    return _out(np.asarray(forward(s, v, check=False).p3) - p3)


def dF_ds3(s3, v, r1, r2):
    """Partial of the constraint residual with respect to delta."""
    return _out(-2.0 * _common(np.asarray(r1), np.asarray(r2)) * np.sqrt(1.0 - v**2) * v * np.cos(s3))


def dF_dv(s3, v, r1, r2):
    """Partial of the constraint residual with respect to v."""
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    return _out(
        2.0 * v * (r2**2 - r1**2)
        - 2.0 * _common(r1, r2) * (1.0 - 2.0 * v**2) / np.sqrt(1.0 - v**2) * np.sin(s3)
    )


def _check_cos(delta):
    c = np.cos(delta)
    bad = ~(np.abs(c) >= NEAR_SINGULAR_COS)
    if np.any(bad):
        idx = _bad_index(bad)
        raise NearSingularPhase(
            f"|cos(delta)| < {NEAR_SINGULAR_COS} at indices {idx[:5].tolist()}", field="delta", index=idx
        )
    return c


def ds3_dv(s, v, check=True):
    """Implicit derivative of delta with respect to v at fixed observations.

    Raises:
        NearSingularPhase: ``|cos(delta)|`` below ``NEAR_SINGULAR_COS``.
    """
    if check:
        s = check_sources(s)
        v = check_coupling(v)
    r1, r2, delta = (np.asarray(c, dtype=float) for c in s)
    c = _check_cos(delta)
    out = (
        (r2**2 - r1**2) / (_common(r1, r2) * np.sqrt(1.0 - v**2) * c)
        - (1.0 - 2.0 * v**2) * np.sin(delta) / ((1.0 - v**2) * v * c)
    )
    return _out(out)


def djg_dv_partial(s, v, check=True):
    """v-partial of the Jacobian with the sources held fixed."""
    if check:
        s = check_sources(s)
        v = check_coupling(v)
    r1, r2, delta = (np.asarray(c, dtype=float) for c in s)
    out = (
        8.0 * r1**2 * r2**2 * (r2**2 - r1**2)
        * np.sqrt(1.0 - r1**2) * np.sqrt(1.0 - r2**2)
        * (1.0 - 2.0 * v**2) / np.sqrt(1.0 - v**2) * np.cos(delta)
    )
    return _out(out)


def djg_ds3(s, v, check=True):
    """delta-partial of the Jacobian."""
    if check:
        s = check_sources(s)
        v = check_coupling(v)
    r1, r2, delta = (np.asarray(c, dtype=float) for c in s)
    out = (
        -8.0 * r1**2 * r2**2 * (r2**2 - r1**2)
        * np.sqrt(1.0 - r1**2) * np.sqrt(1.0 - r2**2)
        * np.sqrt(1.0 - v**2) * v * np.sin(delta)
    )
    return _out(out)


def djg_dv_total(s, v, check=True):
    """Total derivative of the Jacobian along v, including the drift of delta.

    Closed form of ``djg_dv_partial + djg_ds3 * ds3_dv`` (the amplitudes do not
    move with v).
    """
    if check:
        s = check_sources(s)
        v = check_coupling(v)
    r1, r2, delta = (np.asarray(c, dtype=float) for c in s)
    c = _check_cos(delta)
    out = (
        8.0 * r1**2 * r2**2 * (r2**2 - r1**2)
        * np.sqrt(1.0 - r1**2) * np.sqrt(1.0 - r2**2)
        * (1.0 - 2.0 * v**2) / np.sqrt(1.0 - v**2) / c
        - 8.0 * r1 * r2 * (r2**2 - r1**2) ** 2 * v * np.sin(delta) / c
    )
    return _out(out)


def feasible_coupling_interval(x):
    """Per-sample interval of couplings at which ``p3`` is reachable.

    Writing ``v = sin(theta)``, ``p3`` is reachable iff
    ``(sqrt(a) cos(theta) - sqrt(b) sin(theta))**2 <= p3 <= (sqrt(a) cos(theta) + sqrt(b) sin(theta))**2``
    with ``a = r1**2 (1 - r2**2)`` and ``b = (1 - r1**2) r2**2``.  The set is an
    interval in theta.  Its end points are where ``|sin(delta)| = 1``.

    Returns:
        ``(v_lo, v_hi)`` arrays; samples reachable at no coupling get NaN.
    """
    r1, r2 = invert_amplitudes(x)
    r1 = np.asarray(r1)
    r2 = np.asarray(r2)
    p3 = np.asarray(x[2], dtype=float)
    sa = r1 * np.sqrt(1.0 - r2**2)
    sb = np.sqrt(1.0 - r1**2) * r2
    radius = np.hypot(sa, sb)
    phi = np.arctan2(sb, sa)
    ratio = np.sqrt(p3) / radius
    alpha = np.arccos(np.clip(ratio, 0.0, 1.0))
    th_lo = np.maximum(np.abs(phi - alpha), 0.0)
    th_hi = np.minimum(np.minimum(phi + alpha, np.pi - alpha - phi), HALF_PI)
    empty = (ratio > 1.0) | (th_lo > th_hi)
    v_lo = np.where(empty, np.nan, np.sin(th_lo))
    v_hi = np.where(empty, np.nan, np.sin(th_hi))
    return _out(v_lo), _out(v_hi)


def valid_observation_mask(x):
    """Boolean mask of observations satisfying the v-independent invariants."""
    p1, p2, p3 = (np.atleast_1d(np.asarray(c, dtype=float)) for c in x)
    with np.errstate(invalid="ignore", divide="ignore"):
        bsum = 1.0 + p1 - p2
        disc = bsum**2 - 4.0 * p1
        t_hi = 0.5 * (bsum + np.sqrt(np.maximum(disc, 0.0)))
        t_lo = p1 / t_hi
        return (
            (p1 > 0.0) & (p2 > 0.0) & (p3 >= 0.0) & (p3 <= 1.0)
            & (disc > DEGENERACY_TOL) & (t_lo > 0.0) & (t_hi < 1.0)
        )
