"""Exact filtering for linear-Gaussian state-space models.

The oracle covers scalar-state, scalar-observation models

    x_1 ~ N(m0, P0)
    x_t ~ N(A x_{t-1} + b, Q_t)      t = 2..T
    y_t ~ N(H x_t + c, R_t)          t = 1..T

with constant A, b, H, c and per-time noise variances.  It provides
exact means, variances, gains, and the marginal log likelihood, plus a
structural extractor that recognizes graphs of this form (anything else
gets a report naming the first offending node).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import exprs, lang
from .errors import NumericalError
from .graph import ModelGraph

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GaussianSSM:
    A: float
    Q: np.ndarray  # (T-1,) transition noise variances, step into t=2..T
    H: float
    R: np.ndarray  # (T,) observation noise variances
    m0: float
    P0: float
    b: float = 0.0  # transition mean offset
    c: float = 0.0  # observation mean offset

    def __post_init__(self):
        object.__setattr__(self, "Q", np.atleast_1d(np.asarray(self.Q, dtype=np.float64)))
        object.__setattr__(self, "R", np.atleast_1d(np.asarray(self.R, dtype=np.float64)))
        if self.P0 <= 0 or np.any(self.Q <= 0) or np.any(self.R <= 0):
            raise ValueError("P0, Q and R must all be positive")


@dataclass(frozen=True)
class KalmanResult:
    means: np.ndarray
    variances: np.ndarray
    gains: np.ndarray
    pred_means: np.ndarray
    pred_variances: np.ndarray
    step_logliks: np.ndarray
    loglik: float


def _per_time(values: np.ndarray, T: int, what: str) -> np.ndarray:
    if values.shape[0] == 1:
        return np.full(T, float(values[0]))
    if values.shape[0] != T:
        raise ValueError(f"{what} has length {values.shape[0]}, need {T}")
    return values


def kalman_filter(ssm: GaussianSSM, y) -> KalmanResult:
    """Exact predict/update recursion over an observation series."""
    y = np.asarray(y, dtype=np.float64)
    T = y.shape[0]
    if T < 1:
        raise ValueError("need at least one observation")
    Q = _per_time(ssm.Q, max(T - 1, 1), "Q")
    R = _per_time(ssm.R, T, "R")

    means = np.empty(T)
    variances = np.empty(T)
    gains = np.empty(T)
    pred_means = np.empty(T)
    pred_variances = np.empty(T)
    steps = np.empty(T)

    m, P = 0.0, 0.0
    loglik = 0.0
    for t in range(T):
        if t == 0:
            m_pred, P_pred = ssm.m0, ssm.P0
        else:
            m_pred = ssm.A * m + ssm.b
            P_pred = ssm.A * ssm.A * P + Q[t - 1]
        S = ssm.H * ssm.H * P_pred + R[t]
        if not (S > 0 and np.isfinite(S)):
            raise NumericalError(
                "predictive observation variance is not positive and finite",
                time_step=t + 1,
            )
        gain = P_pred * ssm.H / S
        innov = y[t] - (ssm.H * m_pred + ssm.c)
        m = m_pred + gain * innov
        # Joseph form keeps the variance positive
        P = (1.0 - gain * ssm.H) ** 2 * P_pred + gain * gain * R[t]
        if not (P > 0 and np.isfinite(P)):
            raise NumericalError(
                "filtered variance is not positive and finite", time_step=t + 1
            )
        step = -0.5 * (LOG_2PI + np.log(S)) - 0.5 * innov * innov / S
        loglik += step
        means[t] = m
        variances[t] = P
        gains[t] = gain
        pred_means[t] = m_pred
        pred_variances[t] = P_pred
        steps[t] = step

    return KalmanResult(means, variances, gains, pred_means, pred_variances,
                        steps, float(loglik))


def _spread_expr(node):
    """The declared spread parameter of a dnorm node: (kind, expression)."""
    for key in ("var", "sd", "tau"):
        if key in node.params:
            return key, node.params[key]
    raise AssertionError("dnorm node without a spread parameter")


def _affine_degree(expr, target: str) -> int:
    """0 = target absent, 1 = affine in target, 2 = nonlinear."""
    if isinstance(expr, lang.Num):
        return 0
    if isinstance(expr, (lang.Name, lang.Subscript)):
        if isinstance(expr, lang.Name):
            key = expr.id
        else:
            key = exprs.subscript_key(expr.id, int(expr.index.value))
        return 1 if key == target else 0
    if isinstance(expr, lang.Unary):
        return _affine_degree(expr.operand, target)
    if isinstance(expr, lang.Bin):
        left = _affine_degree(expr.lhs, target)
        right = _affine_degree(expr.rhs, target)
        if expr.op in ("+", "-"):
            return max(left, right)
        if expr.op == "*":
            return 2 if (left and right) else max(left, right)
        if expr.op == "/":
            return 2 if right else left
        return 2 if (left or right) else 0  # '^'
    if isinstance(expr, lang.Call):
        return 2 if _affine_degree(expr.args[0], target) else 0
    raise TypeError(f"not an expression node: {expr!r}")


def _report(node, reason):
    return None, f"{node.name}: {reason}"


def _gaussian_structure(graph: ModelGraph, latent_var: str):
    """Time-ordered (chain, observations) if the graph is linear-Gaussian.

    Returns ((chain, observations), None) or (None, report).  Checked in
    time order, transition before observation, so the first offending
    node is named.
    """
    chain = graph.latent_nodes(latent_var)
    latent_keys = {n.name for n in chain}
    report = _report

    observations = []
    for t, node in enumerate(chain, start=1):
        if node.dist != "dnorm":
            return report(node, "transition is not normal")
        _, spread = _spread_expr(node)
        if exprs.expr_keys(spread) & latent_keys:
            return report(node, "transition variance depends on the latent state")
        mean_expr = node.params["mean"]
        mean_refs = exprs.expr_keys(mean_expr) & latent_keys
        if t == 1:
            if mean_refs:
                return report(node, "initial state mean references the latent chain")
        else:
            prev = exprs.subscript_key(latent_var, t - 1)
            if mean_refs - {prev}:
                return report(node, "transition mean references other latent times")
            if _affine_degree(mean_expr, prev) > 1:
                return report(node, "transition mean is not linear in the state")

        deps = graph.dependencies(node.name, "data")
        seen = {o.name for o in observations}
        this_t = [d for d in deps if d.name not in seen]
        if len(this_t) != 1:
            return report(
                node, f"expected exactly one observation node, found {len(this_t)}"
            )
        obs = this_t[0]
        observations.append(obs)
        if obs.dist != "dnorm":
            return report(obs, "observation is not normal")
        _, obs_spread = _spread_expr(obs)
        if exprs.expr_keys(obs_spread) & latent_keys:
            return report(obs, "observation variance depends on the latent state")
        obs_mean = obs.params["mean"]
        if exprs.expr_keys(obs_mean) & (latent_keys - {node.name}):
            return report(obs, "observation mean references other latent times")
        if _affine_degree(obs_mean, node.name) > 1:
            return report(obs, "observation mean is not linear in the state")

    stray = [
        n for n in graph.nodes_by_role("observation")
        if n.name not in {o.name for o in observations}
    ]
    if stray:
        return report(stray[0], "observation is not attached to the latent chain")
    return (chain, observations), None


def _gaussian_coefficients(chain, observations, latent_var: str, env: dict):
    """Evaluate the SSM coefficients of a structurally valid graph."""
    T = len(chain)
    report = _report

    def variance_of(node):
        kind, spread = _spread_expr(node)
        for ref in sorted(exprs.expr_keys(spread)):
            if ref not in env or not np.isfinite(env[ref]):
                return None, f"variance parameter {ref!r} has no numeric value"
        raw = float(node.param_fns[kind](env))
        if kind == "sd":
            value = raw * raw
        elif kind == "tau":
            value = 1.0 / raw if raw > 0 else -1.0
        else:
            value = raw
        if not np.isfinite(value) or not value > 0:
            return None, "variance is not a positive number"
        return value, None

    def affine_of(node, expr, target):
        try:
            coef, const = exprs.linearize(expr, target, env)
        except exprs.NonAffineError as exc:
            return None, str(exc)
        if not (np.isfinite(coef) and np.isfinite(const)):
            return None, "mean has no numeric value"
        return (coef, const), None

    A = b = None
    Qs = np.empty(max(T - 1, 1))
    Rs = np.empty(T)
    Qs[:] = 1.0  # T=1 has no transition; placeholder satisfies positivity
    H = c = None
    m0 = P0 = None

    for t, (node, obs) in enumerate(zip(chain, observations), start=1):
        var, reason = variance_of(node)
        if reason is not None:
            return report(node, reason)
        if t == 1:
            got, reason = affine_of(node, node.params["mean"], "")
            if reason is not None:
                return report(node, reason)
            m0, P0 = got[1], var
        else:
            prev = exprs.subscript_key(latent_var, t - 1)
            got, reason = affine_of(node, node.params["mean"], prev)
            if reason is not None:
                return report(node, reason)
            if A is None:
                A, b = got
            elif got != (A, b):
                return report(node, "transition coefficients vary over time")
            Qs[t - 2] = var

        var, reason = variance_of(obs)
        if reason is not None:
            return report(obs, reason)
        got, reason = affine_of(obs, obs.params["mean"], node.name)
        if reason is not None:
            return report(obs, reason)
        if H is None:
            H, c = got
        elif got != (H, c):
            return report(obs, "observation coefficients vary over time")
        Rs[t - 1] = var

    return GaussianSSM(A=0.0 if A is None else A, Q=Qs, H=H, R=Rs, m0=m0, P0=P0,
                       b=0.0 if b is None else b, c=c), None


def extract_gaussian(graph: ModelGraph, latent_var: str, values: dict | None = None):
    """Structural extraction of a GaussianSSM from a compiled graph.

    Returns (ssm, None) on success, or (None, report) naming the first
    node that breaks the linear-Gaussian form.  Structure is checked for
    every node before any coefficient is evaluated, so a structural
    mismatch is always reported in preference to a missing parameter
    value.
    """
    structure, report = _gaussian_structure(graph, latent_var)
    if report is not None:
        return None, report
    chain, observations = structure
    env = graph.base_values() if values is None else dict(values)
    return _gaussian_coefficients(chain, observations, latent_var, env)
