"""Finite-difference and determinant oracles for the analytic derivatives.

Nothing here calls an analytic derivative from :mod:`qubit_bss.mixing`; the
oracles only evaluate the forward model, the inversion and the
log-likelihood, so they stay independent of the formulas they check.
"""

import logging

import numpy as np

from . import likelihood, mixing
from .errors import DomainError, DomainTooTight, QubitBSSError
from .likelihood import GradientReport

logger = logging.getLogger(__name__)

#: Central-difference step for likelihood gradients.
FD_STEP = 1e-5
#: Denominator floor for relative errors.
REL_FLOOR = 1e-12
#: Couplings this close to 1/sqrt(2) are left out of default audits
#: (the gradient may cross zero there, which makes relative errors meaningless).
CRITICAL_EXCLUSION = 0.02
#: Samples with |cos(delta)| below this at v or v +- h are skipped by audits.
AUDIT_MIN_COS = 0.05


def central_diff(f, v, h=FD_STEP, richardson=False):
    """Central difference ``(f(v + h) - f(v - h)) / (2 h)``.

    With ``richardson=True`` the estimates at ``h`` and ``h / 2`` are
    combined to cancel the ``h**2`` error term.
    """
    d_h = (f(v + h) - f(v - h)) / (2.0 * h)
    if not richardson:
        return d_h
    half = 0.5 * h
    d_half = (f(v + half) - f(v - half)) / (2.0 * half)
    return (4.0 * d_half - d_h) / 3.0


def fd_jacobian_matrix(func, point, h):
    """Central-difference Jacobian matrix of a vector function at ``point``."""
    point = np.asarray(point, dtype=float)
    cols = []
    for j in range(point.size):
        step = np.zeros_like(point)
        step[j] = h
        plus = np.asarray(func(point + step), dtype=float)
        minus = np.asarray(func(point - step), dtype=float)
        cols.append((plus - minus) / (2.0 * h))
    return np.column_stack(cols)


def fd_jacobian_det(s, v, h=1e-6):
    """Determinant of the finite-difference matrix ``dg_i/ds_j`` at ``(s, v)``.

    Raises:
        DomainTooTight: a stencil point ``s +- h e_j`` leaves the canonical
            domain; retry with a smaller ``h``.
    """
    s = mixing.check_sources(s)
    v = mixing.check_coupling(v)
    point = np.array([float(c) for c in s])
    for j in range(3):
        for sign in (1.0, -1.0):
            moved = point.copy()
            moved[j] += sign * h
            try:
                mixing.check_sources(mixing.SourceVector(*moved))
            except DomainError as exc:
                raise DomainTooTight(
                    f"stencil point leaves the domain along {exc.field} (h={h})", field=exc.field
                ) from exc

    def g(p):
        return np.array(mixing.forward(mixing.SourceVector(*p), v, check=False))

    return float(np.linalg.det(fd_jacobian_matrix(g, point, h)))


def fd_phase_derivative(x, v, h=1e-5, richardson=True):
    """Finite-difference derivative of the recovered phase along v at fixed x."""
    return central_diff(lambda u: np.asarray(mixing.invert(x, u).delta), v, h, richardson)


def fd_jacobian_path_derivative(x, v, h=1e-5, richardson=True):
    """Finite-difference derivative of ``v -> Jg(invert(x, v), v)``."""
    return central_diff(lambda u: np.asarray(mixing.jacobian(mixing.invert(x, u), u)), v, h, richardson)


def default_audit_grid():
    """Couplings 0.10, 0.15, ..., 0.90 minus the neighbourhood of 1/sqrt(2)."""
    grid = np.round(np.arange(0.10, 0.90 + 1e-9, 0.05), 10)
    return [float(v) for v in grid if abs(v - 1.0 / np.sqrt(2.0)) > CRITICAL_EXCLUSION]


def _report(v, variant, analytic, fd, skipped, rel_floor):
    abs_err = abs(analytic - fd)
    return GradientReport(
        v=v, variant=variant, analytic=analytic, fd=fd,
        abs_err=abs_err, rel_err=abs_err / max(abs(fd), rel_floor), skipped=skipped,
    )


def gradient_audit(data, cfg, grid, h=FD_STEP, min_cos=AUDIT_MIN_COS, rel_floor=REL_FLOOR):
    """Compare both gradient variants against the central difference of the
    log-likelihood at every grid coupling.

    The comparison at ``v`` runs on the samples usable at ``v - h``, ``v`` and
    ``v + h`` (invertible, inside the prior support, ``|cos(delta)| >= min_cos``);
    the others are counted in ``skipped``.  Per-point failures are recorded in
    the report's ``error`` field and never raised.

    Returns:
        list of :class:`GradientReport`, a ``"total"`` and a ``"partial-only"``
        row per grid point.
    """
    rows = []
    n = len(data)
    for v in grid:
        v = float(v)
        try:
            if not (0.0 < v - h and v + h < 1.0):
                raise DomainError(f"stencil v +- h leaves (0, 1) at v={v}", field="v")
            keep = np.ones(n, dtype=bool)
            for u in (v - h, v, v + h):
                keep &= likelihood.usable_mask(data, u, cfg, min_cos)
            skipped = int(n - keep.sum())
            if not keep.any():
                raise QubitBSSError(f"no usable samples at v={v}")
            sub = data.subset(keep)
            fd = central_diff(lambda u: likelihood.log_likelihood(sub, u, cfg), v, h)
            for variant in likelihood.VARIANTS:
                analytic = likelihood.gradient(sub, v, cfg, variant)
                rows.append(_report(v, variant, analytic, fd, skipped, rel_floor))
        except QubitBSSError as exc:
            logger.warning("audit point v=%s failed: %s", v, exc)
            for variant in likelihood.VARIANTS:
                nan = float("nan")
                rows.append(GradientReport(v, variant, nan, nan, nan, nan, n, error=str(exc)))
    return rows
