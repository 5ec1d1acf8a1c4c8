"""Source priors: densities, samplers and score functions.

The three sources are independent.  Source indices are 0-based and follow
the column order of :class:`~qubit_bss.mixing.SourceVector`:
``0 -> r1``, ``1 -> r2``, ``2 -> delta``.

Amplitudes are uniform on disjoint intervals (``sup(r1) < inf(r2)``), which
enforces ``r1 < r2`` under independent sampling.  The phase is either uniform
on a sub-interval of (-pi/2, pi/2) or follows a cosine-power density
``c_k cos(u)**k`` on the whole open interval; ``k = 1`` is the raised-cosine
family with density ``cos(u) / 2`` and score ``tan(u)``.
"""

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special, stats

from .errors import ConfigError, OutOfSupport
from .mixing import HALF_PI, SourceVector

DELTA_FAMILIES = ("uniform", "raised-cosine")


@dataclass(frozen=True)
class PriorConfig:
    """Declared source priors.

    ``delta_support`` applies to the uniform phase family only; the
    raised-cosine family always lives on the full open interval.
    ``delta_power`` is the exponent ``k`` of the raised-cosine family.
    """

    r1_support: tuple = (0.15, 0.45)
    r2_support: tuple = (0.55, 0.85)
    delta_family: str = "raised-cosine"
    delta_support: tuple = (-HALF_PI, HALF_PI)
    delta_power: float = 1.0

    def __post_init__(self):
        for name in ("r1_support", "r2_support", "delta_support"):
            val = getattr(self, name)
            try:
                lo, hi = (float(t) for t in val)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{name} must be a pair of numbers, got {val!r}") from exc
            if not lo < hi:
                raise ConfigError(f"{name} must satisfy lo < hi, got {val!r}")
            object.__setattr__(self, name, (lo, hi))
        for name in ("r1_support", "r2_support"):
            lo, hi = getattr(self, name)
            if lo <= 0.0 or hi >= 1.0:
                raise ConfigError(f"{name} must lie inside (0, 1), got {(lo, hi)!r}")
        if not self.r1_support[1] < self.r2_support[0]:
            raise ConfigError("r1_support must lie entirely below r2_support")
        if self.delta_family not in DELTA_FAMILIES:
            raise ConfigError(f"delta_family must be one of {DELTA_FAMILIES}, got {self.delta_family!r}")
        lo, hi = self.delta_support
        if lo < -HALF_PI or hi > HALF_PI:
            raise ConfigError(f"delta_support must lie within (-pi/2, pi/2), got {(lo, hi)!r}")
        if self.delta_family == "raised-cosine" and (lo, hi) != (-HALF_PI, HALF_PI):
            raise ConfigError("delta_support is fixed to (-pi/2, pi/2) for the raised-cosine family")
        if not (isinstance(self.delta_power, (int, float)) and self.delta_power > 0):
            raise ConfigError(f"delta_power must be positive, got {self.delta_power!r}")
        object.__setattr__(self, "delta_power", float(self.delta_power))

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError(f"priors must be a JSON object, got {type(data).__name__}")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown prior keys: {sorted(unknown)}")
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        return cls(**kwargs)

    def digest(self):
        """Short stable hash of the configuration (recorded in dataset metadata)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def support(self, i):
        _check_index(i)
        if i == 0:
            return self.r1_support
        if i == 1:
            return self.r2_support
        return self.delta_support


def _check_index(i):
    if i not in (0, 1, 2):
        raise ConfigError(f"source index must be 0, 1 or 2, got {i!r}")


def _cosine_log_norm(k):
    # c_k = Gamma(k/2 + 1) / (sqrt(pi) Gamma((k + 1)/2)); c_1 = 1/2
    return special.gammaln(0.5 * k + 1.0) - 0.5 * math.log(math.pi) - special.gammaln(0.5 * (k + 1.0))


def _in_support(cfg, i, u):
    lo, hi = cfg.support(i)
    if i == 2 and cfg.delta_family == "raised-cosine":
        inside = (u > lo) & (u < hi)
    else:
        inside = (u >= lo) & (u <= hi)
    if not np.all(inside):
        idx = np.flatnonzero(~np.atleast_1d(inside))
        names = ("r1", "r2", "delta")
        raise OutOfSupport(
            f"{names[i]} outside prior support {(lo, hi)} at indices {idx[:5].tolist()}",
            field=names[i], index=idx,
        )


def _ret(a):
    return float(a) if np.ndim(a) == 0 else a


def log_pdf(cfg, i, u):
    """Log-density of source ``i`` at ``u``.

    Raises:
        OutOfSupport: ``u`` lies outside the support (the density is zero).
    """
    _check_index(i)
    u = np.asarray(u, dtype=float)
    _in_support(cfg, i, u)
    if i < 2 or cfg.delta_family == "uniform":
        lo, hi = cfg.support(i)
        return _ret(np.full(u.shape, -math.log(hi - lo)))
    k = cfg.delta_power
    with np.errstate(divide="ignore"):
        return _ret(_cosine_log_norm(k) + k * np.log(np.cos(u)))


def pdf(cfg, i, u):
    return _ret(np.exp(log_pdf(cfg, i, u)))


def score(cfg, i, u):
    """Score ``-d log f_i(u) / du``: zero for uniform, ``k tan(u)`` for raised-cosine."""
    _check_index(i)
    u = np.asarray(u, dtype=float)
    _in_support(cfg, i, u)
    if i < 2 or cfg.delta_family == "uniform":
        return _ret(np.zeros(u.shape))
    return _ret(cfg.delta_power * np.tan(u))


def cdf(cfg, i, u):
    """Cumulative distribution of source ``i`` (used by goodness-of-fit checks)."""
    _check_index(i)
    u = np.asarray(u, dtype=float)
    lo, hi = cfg.support(i)
    if i < 2 or cfg.delta_family == "uniform":
        return _ret(np.clip((u - lo) / (hi - lo), 0.0, 1.0))
    # sin(delta) is a Beta((k+1)/2, (k+1)/2) variable mapped to (-1, 1)
    a = 0.5 * (cfg.delta_power + 1.0)
    w = 0.5 * (1.0 + np.sin(np.clip(u, -HALF_PI, HALF_PI)))
    return _ret(stats.beta.cdf(w, a, a))


def sample_sources(cfg, n, seed):
    """Draw ``n`` independent source triples; deterministic given ``seed``.

    Returns:
        :class:`SourceVector` whose fields are arrays of length ``n``.
    """
    if not isinstance(cfg, PriorConfig):
        raise ConfigError(f"expected PriorConfig, got {type(cfg).__name__}")
    if int(n) != n or n < 1:
        raise ConfigError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    rng = np.random.default_rng(seed)
    r1 = rng.uniform(*cfg.r1_support, size=n)
    r2 = rng.uniform(*cfg.r2_support, size=n)
    if cfg.delta_family == "uniform":
        delta = rng.uniform(*cfg.delta_support, size=n)
    else:
        a = 0.5 * (cfg.delta_power + 1.0)
        delta = np.arcsin(2.0 * rng.beta(a, a, size=n) - 1.0)
    # arcsin(+-1) would land on the excluded boundary
    delta = np.clip(delta, np.nextafter(-HALF_PI, 0.0), np.nextafter(HALF_PI, 0.0))
    return SourceVector(r1, r2, delta)
