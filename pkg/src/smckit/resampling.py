"""Weight normalization, effective sample size, resampling kernels.

All three resamplers return ids sorted ascending, so a resampled cloud
has a deterministic row order given the draws.  The ESS/threshold rule
is the strict inequality ESS/K < tau: tau=0 never resamples, tau=1
resamples whenever weights are unequal, and exactly equal weights never
trigger (ESS/K is then 1, not below it).
"""

from __future__ import annotations

import numpy as np

from . import kernels

METHODS = ("systematic", "residual", "multinomial")


def normalize(logw) -> tuple[np.ndarray, float]:
    """(normalized probabilities, log of the mean raw weight)."""
    return kernels.normalize_logw(logw)


def ess(probs) -> float:
    """Effective sample size 1/sum(pi^2), clamped into [1, K]."""
    probs = np.asarray(probs, dtype=np.float64)
    value = kernels.ess(probs)
    return float(min(max(value, 1.0), probs.shape[0]))


def should_resample(probs, tau: float) -> bool:
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"resampling threshold must lie in [0, 1], got {tau}")
    probs = np.asarray(probs, dtype=np.float64)
    # exactly equal weights give ESS/K = 1 by definition; never resample
    if np.all(probs == probs[0]):
        return False
    return ess(probs) / probs.shape[0] < tau


def resample(probs, n_out: int, method: str, rng) -> np.ndarray:
    """Draw n_out particle indices proportional to probs, ascending."""
    probs = np.asarray(probs, dtype=np.float64)
    if method == "systematic":
        return kernels.systematic_ids(probs, n_out, rng.random())
    if method == "multinomial":
        return kernels.multinomial_ids(probs, rng.random(n_out))
    if method == "residual":
        scaled = n_out * probs
        counts = np.floor(scaled).astype(np.int64)
        ids_det = np.repeat(np.arange(probs.shape[0]), counts)
        n_rand = n_out - ids_det.shape[0]
        if n_rand == 0:
            return ids_det
        resid = scaled - counts
        resid = resid / np.cumsum(resid)[-1]
        ids_rand = kernels.multinomial_ids(resid, rng.random(n_rand))
        return np.sort(np.concatenate([ids_det, ids_rand]))
    raise ValueError(f"unknown resampling method {method!r}")
