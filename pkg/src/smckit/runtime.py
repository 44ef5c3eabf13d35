"""Model execution primitives: simulate, calculate, copy, resize.

A ModelState holds one scalar value per graph node.  A ParticleCloud
holds K rows of values for a fixed set of node columns, plus log
weights.  The same compiled node closures serve both this scalar path
and the vectorized filter engines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dists
from .errors import ContractViolationError, ParameterDomainError
from .graph import ModelGraph, Node


def _names(nodes) -> list:
    if nodes is None:
        return []
    if isinstance(nodes, (str, Node)):
        nodes = [nodes]
    return [n.name if isinstance(n, Node) else n for n in nodes]


class ModelState:
    """Scalar value per node; starts from data, inits, and deterministic
    propagation (missing values are NaN until simulated or set)."""

    def __init__(self, graph: ModelGraph, values: dict | None = None):
        self.graph = graph
        self.values = graph.base_values() if values is None else dict(values)

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def __setitem__(self, name: str, value: float) -> None:
        if name not in self.graph:
            raise KeyError(f"no node named {name!r}")
        self.values[name] = float(value)

    def copy(self) -> "ModelState":
        return ModelState(self.graph, self.values)


def simulate(graph: ModelGraph, state: ModelState, nodes, rng) -> None:
    """Draw fresh values for stochastic non-data nodes, in graph order."""
    for node in graph.topo_sort(_names(nodes)):
        if node.kind != "stochastic":
            raise ContractViolationError(
                f"cannot simulate deterministic node {node.name!r}"
            )
        if node.role == "observation":
            raise ContractViolationError(
                f"cannot simulate data node {node.name!r}"
            )
        params = {k: fn(state.values) for k, fn in node.param_fns.items()}
        state.values[node.name] = float(dists.sample(node.dist, rng, params))


def calculate(graph: ModelGraph, state: ModelState, nodes) -> float:
    """Refresh deterministic nodes; return the summed log density of the
    stochastic nodes in the list."""
    total = 0.0
    for node in graph.topo_sort(_names(nodes)):
        if node.kind == "deterministic":
            state.values[node.name] = float(node.expr_fn(state.values))
            continue
        params = {k: fn(state.values) for k, fn in node.param_fns.items()}
        try:
            total += dists.log_density(node.dist, state.values[node.name], params)
        except ParameterDomainError as exc:
            raise ParameterDomainError(exc.bare_message, node=node.name) from None
    return total


@dataclass(eq=False)
class ParticleCloud:
    """K particle rows over a fixed set of node columns.

    ``logw`` carries normalized log weights; the equally-weighted
    container keeps them uniform by construction.
    """

    names: tuple
    values: np.ndarray  # (K, len(names))
    logw: np.ndarray  # (K,)
    equally_weighted: bool = False

    @classmethod
    def empty(cls, names, K: int, equally_weighted: bool = False) -> "ParticleCloud":
        names = tuple(_names(names))
        if K < 1:
            raise ValueError("particle count must be at least 1")
        values = np.full((K, len(names)), np.nan)
        logw = np.full(K, -np.log(K))
        return cls(names, values, logw, equally_weighted)

    @property
    def K(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def probs(self) -> np.ndarray:
        w = np.exp(self.logw - np.max(self.logw))
        return w / np.cumsum(w)[-1]


def resize(cloud: ParticleCloud, K: int) -> None:
    """Set capacity to K rows; prior contents are invalidated."""
    if K < 1:
        raise ValueError("particle count must be at least 1")
    cloud.values = np.full((K, len(cloud.names)), np.nan)
    cloud.logw = np.full(K, -np.log(K))


def _check_row(cloud: ParticleCloud, row: int) -> int:
    if not 0 <= row < cloud.K:
        raise IndexError(f"row {row} out of range for cloud of {cloud.K}")
    return row


def copy(src, dst, nodes, row: int | None = None, row_to: int | None = None) -> None:
    """Transfer node values between clouds and states, bit for bit.

    Rows index particles: ``row`` selects in a source cloud, ``row_to``
    in a destination cloud.  Weights never transfer.
    """
    names = _names(nodes)
    if isinstance(src, ParticleCloud) and isinstance(dst, ModelState):
        r = _check_row(src, 0 if row is None else row)
        for name in names:
            dst.values[name] = float(src.values[r, src.names.index(name)])
    elif isinstance(src, ModelState) and isinstance(dst, ParticleCloud):
        r = _check_row(dst, 0 if row_to is None else row_to)
        for name in names:
            dst.values[r, dst.names.index(name)] = src.values[name]
    elif isinstance(src, ParticleCloud) and isinstance(dst, ParticleCloud):
        r = _check_row(src, 0 if row is None else row)
        rt = _check_row(dst, 0 if row_to is None else row_to)
        for name in names:
            dst.values[rt, dst.names.index(name)] = src.values[r, src.names.index(name)]
    else:
        raise TypeError("copy endpoints must be ParticleCloud or ModelState")
