"""Kernel backend selection and validation.

The hot per-time-step kernels (log-weight normalization, ESS, resampling
index walks, weighted quantiles) exist twice: a Cython extension
(`smckit._kernels`) and a pure-numpy fallback (`smckit._kernels_py`) with
bit-identical semantics.  The compiled core is preferred when importable;
set ``SMCKIT_PURE_PYTHON=1`` to force the fallback (used by the parity
tests and the benchmark).

Everything below validates inputs once and delegates to the active
backend.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import DegenerateWeightsError

if os.environ.get("SMCKIT_PURE_PYTHON"):
    from . import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as _impl  # type: ignore[no-redef]

        BACKEND = "python"


def _as_logw(logw) -> np.ndarray:
    arr = np.ascontiguousarray(logw, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] == 0:
        raise ValueError("log-weights must be a non-empty 1-D array")
    if np.isnan(arr).any():
        raise ValueError("NaN log-weight encountered")
    if not np.any(np.isfinite(arr)):
        raise DegenerateWeightsError(
            "all particles have log-weight -inf (every particle impossible)"
        )
    if np.isposinf(arr).any():
        raise ValueError("+inf log-weight encountered")
    return arr


def normalize_logw(logw) -> tuple[np.ndarray, float]:
    """Normalize log-weights: (probabilities, log of mean raw weight)."""
    return _impl.normalize_logw(_as_logw(logw))


def ess(probs) -> float:
    """Effective sample size of normalized probabilities, in [1, K]."""
    arr = np.ascontiguousarray(probs, dtype=np.float64)
    return _impl.ess(arr)


def systematic_ids(probs, n_out: int, u0: float) -> np.ndarray:
    return _impl.systematic_ids(
        np.ascontiguousarray(probs, dtype=np.float64), int(n_out), float(u0)
    )


def multinomial_ids(probs, uniforms) -> np.ndarray:
    return _impl.multinomial_ids(
        np.ascontiguousarray(probs, dtype=np.float64),
        np.ascontiguousarray(uniforms, dtype=np.float64),
    )


def inverse_cdf_lookup(cumw, sorted_points) -> np.ndarray:
    """Indices of ascending points under a cumulative weight array."""
    return _impl.inverse_cdf_lookup(
        np.ascontiguousarray(cumw, dtype=np.float64),
        np.ascontiguousarray(sorted_points, dtype=np.float64),
    )


def weighted_quantiles(values, probs, qs) -> np.ndarray:
    """Left-continuous inverse of the weighted ECDF at each q."""
    return _impl.weighted_quantiles(
        np.ascontiguousarray(values, dtype=np.float64),
        np.ascontiguousarray(probs, dtype=np.float64),
        np.ascontiguousarray(qs, dtype=np.float64),
    )
