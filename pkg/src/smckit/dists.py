"""Distribution registry: log densities, samplers, scale conversions.

Densities accept either scalars or same-length 1-D arrays for value and
parameters (broadcasting elementwise), so a single call scores a whole
particle population.

``dnorm`` follows the precision convention: the second positional
argument is ``tau`` (1 / variance).  Named arguments ``sd=``, ``var=``
and ``tau=`` are interchangeable; ``dgamma`` accepts ``rate=`` or
``scale=``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln, xlogy

from .errors import ParameterDomainError

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class DistSpec:
    """Shape of one distribution's parameter list."""

    name: str
    positional: tuple[str, ...]
    named: frozenset[str]
    support: str  # "real" | "unit" | "positive" | "interval"


REGISTRY: dict[str, DistSpec] = {
    "dnorm": DistSpec(
        "dnorm", ("mean", "tau"), frozenset({"mean", "tau", "sd", "var"}), "real"
    ),
    "dbeta": DistSpec(
        "dbeta", ("shape1", "shape2"), frozenset({"shape1", "shape2"}), "unit"
    ),
    "dgamma": DistSpec(
        "dgamma", ("shape", "rate"), frozenset({"shape", "rate", "scale"}), "positive"
    ),
    "dunif": DistSpec("dunif", ("min", "max"), frozenset({"min", "max"}), "interval"),
}


def convert_scale(value, src: str, dst: str):
    """Convert among the dnorm spread parameterizations tau / var / sd."""
    for name in (src, dst):
        if name not in ("tau", "var", "sd"):
            raise ValueError(f"unknown scale parameterization {name!r}")
    if src == dst:
        return value
    value = np.asarray(value, dtype=np.float64)
    if src == "sd":
        var = value * value
    elif src == "tau":
        var = 1.0 / value
    else:
        var = value
    if dst == "var":
        out = var
    elif dst == "tau":
        out = 1.0 / var
    else:
        out = np.sqrt(var)
    return float(out) if out.ndim == 0 else out


def _variance_of(params: dict, name: str, strict: bool):
    if "var" in params:
        var = np.asarray(params["var"], dtype=np.float64)
    elif "sd" in params:
        sd = np.asarray(params["sd"], dtype=np.float64)
        var = sd * sd
    else:
        tau = np.asarray(params["tau"], dtype=np.float64)
        with np.errstate(divide="ignore"):
            var = np.where(tau > 0, 1.0 / np.where(tau > 0, tau, 1.0), -1.0)
    bad = ~(var > 0)
    if strict and np.any(bad):
        raise ParameterDomainError(f"{name}: variance must be positive", node=None)
    return var, bad


def _rate_of(params: dict):
    if "scale" in params:
        scale = np.asarray(params["scale"], dtype=np.float64)
        with np.errstate(divide="ignore"):
            return np.where(scale > 0, 1.0 / np.where(scale > 0, scale, 1.0), -1.0)
    return np.asarray(params["rate"], dtype=np.float64)


def _check(bad, strict: bool, message: str):
    if strict and np.any(bad):
        raise ParameterDomainError(message, node=None)
    return bad


def log_density(name: str, x, params: dict, strict: bool = True):
    """Elementwise log density.

    With ``strict=True`` invalid parameters raise ParameterDomainError.
    With ``strict=False`` entries with invalid parameters score -inf,
    which lets a filter zero-weight individual bad particles instead of
    aborting the whole step.
    """
    x = np.asarray(x, dtype=np.float64)

    if name == "dnorm":
        mean = np.asarray(params["mean"], dtype=np.float64)
        var, bad = _variance_of(params, "dnorm", strict)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -0.5 * (LOG_2PI + np.log(np.abs(var))) - 0.5 * (x - mean) ** 2 / var
        out = np.where(bad, -np.inf, out)
    elif name == "dbeta":
        a = np.asarray(params["shape1"], dtype=np.float64)
        b = np.asarray(params["shape2"], dtype=np.float64)
        bad = _check(~((a > 0) & (b > 0)), strict, "dbeta: shapes must be positive")
        inside = (x > 0) & (x < 1)
        xs = np.where(inside, x, 0.5)
        out = xlogy(a - 1.0, xs) + xlogy(b - 1.0, 1.0 - xs) - betaln(a, b)
        out = np.where(inside & ~bad, out, -np.inf)
    elif name == "dgamma":
        shape = np.asarray(params["shape"], dtype=np.float64)
        rate = _rate_of(params)
        bad = _check(
            ~((shape > 0) & (rate > 0)), strict, "dgamma: shape and rate must be positive"
        )
        inside = x > 0
        xs = np.where(inside, x, 1.0)
        with np.errstate(invalid="ignore"):
            out = (
                xlogy(shape, np.abs(rate))
                + xlogy(shape - 1.0, xs)
                - rate * xs
                - gammaln(np.abs(shape))
            )
        out = np.where(inside & ~bad, out, -np.inf)
    elif name == "dunif":
        lo = np.asarray(params["min"], dtype=np.float64)
        hi = np.asarray(params["max"], dtype=np.float64)
        bad = _check(~(hi > lo), strict, "dunif: max must exceed min")
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -np.log(np.abs(hi - lo))
        out = np.where((x >= lo) & (x <= hi) & ~bad, out, -np.inf)
    else:
        raise ValueError(f"unknown distribution {name!r}")

    out = np.asarray(out, dtype=np.float64)
    return float(out) if out.ndim == 0 else out


def sample(name: str, rng, params: dict, size=None):
    """Draw from a distribution; invalid parameters always raise."""
    if name == "dnorm":
        mean = np.asarray(params["mean"], dtype=np.float64)
        var, _ = _variance_of(params, "dnorm", strict=True)
        return mean + np.sqrt(var) * rng.standard_normal(size)
    if name == "dbeta":
        a = np.asarray(params["shape1"], dtype=np.float64)
        b = np.asarray(params["shape2"], dtype=np.float64)
        _check(~((a > 0) & (b > 0)), True, "dbeta: shapes must be positive")
        return rng.beta(a, b, size)
    if name == "dgamma":
        shape = np.asarray(params["shape"], dtype=np.float64)
        rate = _rate_of(params)
        _check(
            ~((shape > 0) & (rate > 0)), True, "dgamma: shape and rate must be positive"
        )
        return rng.gamma(shape, 1.0 / rate, size)
    if name == "dunif":
        lo = np.asarray(params["min"], dtype=np.float64)
        hi = np.asarray(params["max"], dtype=np.float64)
        _check(~(hi > lo), True, "dunif: max must exceed min")
        return lo + (hi - lo) * rng.random(size)
    raise ValueError(f"unknown distribution {name!r}")


def support_of(name: str) -> str:
    spec = REGISTRY.get(name)
    if spec is None:
        raise ValueError(f"unknown distribution {name!r}")
    return spec.support


def resolve_params(name: str, args: list, kwargs: dict) -> dict:
    """Map positional + named arguments to a parameter dict.

    ``args``/``kwargs`` hold arbitrary payloads (expression AST nodes at
    compile time, numbers at evaluation time); this only assigns names.
    """
    spec = REGISTRY.get(name)
    if spec is None:
        raise ValueError(f"unknown distribution {name!r}")
    params: dict = {}
    if len(args) > len(spec.positional):
        raise ValueError(
            f"{name} takes at most {len(spec.positional)} positional arguments"
        )
    for slot, value in zip(spec.positional, args):
        params[slot] = value
    for key, value in kwargs.items():
        if key not in spec.named:
            raise ValueError(f"{name} has no parameter {key!r}")
        if key in params:
            raise ValueError(f"{name}: parameter {key!r} given more than once")
        params[key] = value
    spread = {"tau", "sd", "var"} & set(params)
    if name == "dnorm" and len(spread) > 1:
        raise ValueError("dnorm: give only one of tau=, sd=, var=")
    if name == "dgamma" and {"rate", "scale"} <= set(params):
        raise ValueError("dgamma: give only one of rate=, scale=")
    required = {
        "dnorm": {"mean"},
        "dbeta": {"shape1", "shape2"},
        "dgamma": {"shape"},
        "dunif": {"min", "max"},
    }[name]
    missing = required - set(params)
    if missing:
        raise ValueError(f"{name}: missing parameter(s) {sorted(missing)}")
    if name == "dnorm" and not spread:
        raise ValueError("dnorm: a spread parameter (tau, sd or var) is required")
    if name == "dgamma" and not ({"rate", "scale"} & set(params)):
        raise ValueError("dgamma: a rate or scale parameter is required")
    return params
