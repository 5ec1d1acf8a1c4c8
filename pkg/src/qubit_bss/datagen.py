"""Synthetic experiments: priors -> forward model -> SampleSet.

The mixing model is exact; :func:`perturb` adds optional Gaussian noise for
robustness studies only.
"""

import numpy as np

from . import mixing, priors
from .errors import DegenerateData
from .likelihood import SampleSet


def generate(cfg, v_true, n, seed):
    """Draw ``n`` sources from ``cfg`` and mix them at ``v_true``.

    Pure function of its arguments; ``meta`` records ``v_true``, ``seed``,
    ``n`` and the prior digest.
    """
    v_true = mixing.check_coupling(v_true)
    s = priors.sample_sources(cfg, n, seed)
    x = mixing.forward(s, v_true)
    obs = np.column_stack([np.atleast_1d(c) for c in x])
    meta = {"v_true": v_true, "seed": seed, "n": int(n), "prior_digest": cfg.digest()}
    return SampleSet(obs, meta=meta)


def perturb(data, noise_scale, seed):
    """Add N(0, noise_scale**2) noise to every p_j, then project back to validity.

    Projection clips p1, p2 to (0, 1] and p3 to [0, 1]; rows that still break
    the observation invariants are dropped and counted in ``meta["dropped"]``.

    Raises:
        DegenerateData: every row was dropped.
    """
    if not noise_scale >= 0.0:
        raise ValueError(f"noise_scale must be non-negative, got {noise_scale!r}")
    if noise_scale == 0.0:
        return data
    rng = np.random.default_rng(seed)
    obs = data.observations + rng.normal(0.0, noise_scale, size=data.observations.shape)
    tiny = np.finfo(float).tiny
    obs[:, :2] = np.clip(obs[:, :2], tiny, 1.0)
    obs[:, 2] = np.clip(obs[:, 2], 0.0, 1.0)
    ok = mixing.valid_observation_mask(mixing.ObservationVector(*obs.T))
    if not ok.any():
        raise DegenerateData("every sample was invalidated by the perturbation")
    meta = dict(data.meta, noise_scale=float(noise_scale), noise_seed=seed, dropped=int((~ok).sum()))
    return SampleSet(obs[ok], meta=meta)
