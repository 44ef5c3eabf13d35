"""Pure-numpy kernel implementations.

This module and the compiled `_kernels` extension implement the same
contracts and must return bit-identical results.  To keep that promise the
reference semantics pin the order of floating-point reductions: every sum
here is a left-to-right sequential sum (``np.cumsum(...)[-1]``, which numpy
evaluates sequentially, unlike ``np.sum``'s pairwise reduction).  The
compiled core uses plain sequential loops, matching exactly.

Inputs are assumed validated by `smckit.kernels`: 1-D contiguous float64,
at least one finite log-weight, probabilities normalized.
"""

from __future__ import annotations

import numpy as np


def normalize_logw(logw: np.ndarray) -> tuple[np.ndarray, float]:
    """Return (normalized probabilities, log of the mean raw weight)."""
    m = float(np.max(logw))
    w = np.exp(logw - m)
    s = float(np.cumsum(w)[-1])
    return w / s, m + np.log(s) - np.log(logw.shape[0])


def ess(probs: np.ndarray) -> float:
    """Effective sample size 1 / sum(p^2) of normalized probabilities."""
    return 1.0 / float(np.cumsum(probs * probs)[-1])


def inverse_cdf_lookup(cumw: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Map sorted points in [0,1) to indices via the weight CDF.

    Returns the first index i with points < cumw[i], clamped to the last
    index so roundoff in cumw's final entry cannot fall off the end.
    """
    ids = np.searchsorted(cumw, points, side="right")
    return np.minimum(ids, cumw.shape[0] - 1).astype(np.int64)


def systematic_ids(probs: np.ndarray, n_out: int, u0: float) -> np.ndarray:
    """Systematic resampling: one uniform offset, a 1/n grid of points."""
    cumw = np.cumsum(probs)
    points = (np.arange(n_out, dtype=np.float64) + u0) / n_out
    return inverse_cdf_lookup(cumw, points)


def multinomial_ids(probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Multinomial resampling from pre-drawn uniforms; ids come back sorted."""
    cumw = np.cumsum(probs)
    return inverse_cdf_lookup(cumw, np.sort(uniforms))


def weighted_quantiles(
    values: np.ndarray, probs: np.ndarray, qs: np.ndarray
) -> np.ndarray:
    """Left-continuous inverse of the weighted ECDF.

    Particles are sorted by value with ties broken by original index
    (stable sort); the q-quantile is the first sorted value whose
    cumulative weight reaches q.
    """
    order = np.argsort(values, kind="stable")
    cumw = np.cumsum(probs[order])
    idx = np.searchsorted(cumw, qs, side="left")
    idx = np.minimum(idx, values.shape[0] - 1)
    return values[order[idx]]
