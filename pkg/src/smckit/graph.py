"""Compile parsed model source into a scalar node graph.

Loops are unrolled at compile time (constants resolve the bounds), so
every node is scalar: ``x[3]``, ``phiStar``.  Constants are substituted
inline during unrolling.  Roles:

  latent        stochastic, indexed, member of the caller-designated chain
  observation   stochastic with an attached data value
  parameter     any other stochastic node
  deterministic ``<-`` declarations

Data nodes are never simulated; the latent chain must be indexed 1..T
with one scalar node per time point.
"""

from __future__ import annotations

import heapq
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import exprs, lang
from .dists import resolve_params
from .errors import CompileError


@dataclass(eq=False)
class Node:
    name: str
    var: str
    index: int | None
    kind: str  # 'stochastic' | 'deterministic'
    role: str = "parameter"
    dist: str | None = None
    params: dict | None = None  # param name -> resolved expression
    expr: object | None = None  # deterministic expression
    parents: tuple = ()
    children: tuple = ()
    observed: float | None = None
    init: float | None = None
    param_fns: dict | None = None
    expr_fn: object | None = None

    @property
    def time(self) -> int | None:
        return self.index if self.role == "latent" else None


@dataclass(eq=False)
class ModelGraph:
    nodes: list
    order: tuple  # node ids in topological order
    latent_var: str | None
    constants: dict
    source: lang.Model
    _by_name: dict = field(default_factory=dict, repr=False)
    _dep_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._by_name = {n.name: i for i, n in enumerate(self.nodes)}
        self._topo_pos = {nid: pos for pos, nid in enumerate(self.order)}

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def node(self, name: str) -> Node:
        if name not in self._by_name:
            raise KeyError(f"no node named {name!r}")
        return self.nodes[self._by_name[name]]

    def node_id(self, name: str) -> int:
        if name not in self._by_name:
            raise KeyError(f"no node named {name!r}")
        return self._by_name[name]

    def nodes_by_role(self, role: str) -> list:
        return [n for n in self.nodes if n.role == role]

    def topo_sort(self, names) -> list:
        """The named nodes, in this graph's topological order."""
        ids = sorted(
            (self.node_id(n.name if isinstance(n, Node) else n) for n in names),
            key=self._topo_pos.__getitem__,
        )
        return [self.nodes[i] for i in ids]

    def latent_nodes(self, var: str) -> list:
        """Nodes of an indexed stochastic variable, ascending by index."""
        found = [
            n
            for n in self.nodes
            if n.var == var and n.index is not None and n.kind == "stochastic"
        ]
        if not found:
            raise KeyError(f"no indexed stochastic variable {var!r}")
        return sorted(found, key=lambda n: n.index)

    def dependencies(self, name: str, which: str = "all") -> list:
        """Downstream dependents of a node in topological order.

        Traversal continues through deterministic nodes only; stochastic
        dependents are included but not crossed.  ``which`` restricts the
        result: 'all', 'deterministic', or 'data'.
        """
        if which not in ("all", "deterministic", "data"):
            raise ValueError(f"unknown dependency filter {which!r}")
        nid = self.node_id(name)
        key = (nid, which)
        if key in self._dep_cache:
            return [self.nodes[i] for i in self._dep_cache[key]]
        seen: set = set()
        frontier = list(self.nodes[nid].children)
        while frontier:
            cid = frontier.pop()
            if cid in seen:
                continue
            seen.add(cid)
            if self.nodes[cid].kind == "deterministic":
                frontier.extend(self.nodes[cid].children)
        ordered = sorted(seen, key=self._topo_pos.__getitem__)
        if which == "deterministic":
            ordered = [i for i in ordered if self.nodes[i].kind == "deterministic"]
        elif which == "data":
            ordered = [i for i in ordered if self.nodes[i].role == "observation"]
        self._dep_cache[key] = ordered
        return [self.nodes[i] for i in ordered]

    def base_values(self) -> dict:
        """Starting environment: data, inits, computed deterministics.

        Nodes with no available value map to NaN.
        """
        env: dict = {}
        with np.errstate(all="ignore"):
            for nid in self.order:
                node = self.nodes[nid]
                if node.role == "observation":
                    env[node.name] = node.observed
                elif node.kind == "stochastic":
                    env[node.name] = float("nan") if node.init is None else node.init
                else:
                    env[node.name] = float(node.expr_fn(env))
        return env


def _resolve_expr(expr, env: dict):
    """Substitute loop variables and constants; make indices literal."""
    if isinstance(expr, lang.Num):
        return expr
    if isinstance(expr, lang.Name):
        if expr.id in env:
            return lang.Num(float(env[expr.id]), pos=expr.pos)
        return expr
    if isinstance(expr, lang.Subscript):
        idx = exprs.eval_int_const(expr.index, env, f"index of {expr.id}")
        return lang.Subscript(expr.id, lang.Num(float(idx)), pos=expr.pos)
    if isinstance(expr, lang.Unary):
        return lang.Unary(expr.op, _resolve_expr(expr.operand, env), pos=expr.pos)
    if isinstance(expr, lang.Bin):
        return lang.Bin(
            expr.op,
            _resolve_expr(expr.lhs, env),
            _resolve_expr(expr.rhs, env),
            pos=expr.pos,
        )
    if isinstance(expr, lang.Call):
        return lang.Call(
            expr.func,
            tuple(_resolve_expr(a, env) for a in expr.args),
            pos=expr.pos,
        )
    raise TypeError(f"not an expression node: {expr!r}")


def _unroll(stmts, env: dict, out: list) -> None:
    for stmt in stmts:
        if isinstance(stmt, lang.Loop):
            lo = exprs.eval_int_const(stmt.lo, env, "loop lower bound")
            hi = exprs.eval_int_const(stmt.hi, env, "loop upper bound")
            shadowed = env.get(stmt.var)
            for i in range(lo, hi + 1):
                env[stmt.var] = i
                _unroll(stmt.body, env, out)
            if shadowed is None:
                env.pop(stmt.var, None)
            else:
                env[stmt.var] = shadowed
        else:
            target = stmt.target
            if isinstance(target, lang.Subscript):
                idx = exprs.eval_int_const(target.index, env, f"index of {target.id}")
                var, index = target.id, idx
            else:
                var, index = target.id, None
            if isinstance(stmt, lang.Stochastic):
                d = stmt.dist
                params = resolve_params(d.dist, list(d.args), dict(d.kwargs))
                resolved = {k: _resolve_expr(v, env) for k, v in params.items()}
                out.append((var, index, "stochastic", d.dist, resolved, None))
            else:
                out.append(
                    (var, index, "deterministic", None, None,
                     _resolve_expr(stmt.expr, env))
                )


def _node_name(var: str, index: int | None) -> str:
    return var if index is None else exprs.subscript_key(var, index)


def _attach_data(nodes: list, by_name: dict, by_var: dict, data: dict) -> None:
    for var, values in data.items():
        arr = np.atleast_1d(np.asarray(values, dtype=np.float64))
        if np.isnan(arr).any():
            raise CompileError(f"data for {var!r} contains missing values")
        targets = by_var.get(var)
        if not targets:
            raise CompileError(f"data provided for nonexistent node {var!r}")
        sample = nodes[targets[0]]
        if sample.kind != "stochastic":
            raise CompileError(f"data target {var!r} is not stochastic")
        if sample.index is None:
            if arr.shape != (1,):
                raise CompileError(f"data for scalar node {var!r} must be a single value")
            nodes[targets[0]].observed = float(arr[0])
            nodes[targets[0]].role = "observation"
            continue
        indices = sorted(nodes[i].index for i in targets)
        if indices != list(range(1, len(indices) + 1)):
            raise CompileError(f"data variable {var!r} is not indexed 1..T")
        if arr.shape[0] != len(indices):
            raise CompileError(
                f"data for {var!r} has {arr.shape[0]} rows, model declares "
                f"{len(indices)} nodes"
            )
        for i in targets:
            node = nodes[i]
            node.observed = float(arr[node.index - 1])
            node.role = "observation"


def compile_model(
    source,
    constants: dict | None = None,
    data: dict | None = None,
    inits: dict | None = None,
    latent: str | None = None,
) -> ModelGraph:
    """Compile model source (text or parsed AST) into a ModelGraph."""
    model = lang.parse(source) if isinstance(source, str) else source
    constants = dict(constants or {})
    data = dict(data or {})
    inits = dict(inits or {})

    decls: list = []
    _unroll(model.stmts, dict(constants), decls)

    nodes: list = []
    by_name: dict = {}
    by_var: dict = {}
    for var, index, kind, dist, params, expr in decls:
        name = _node_name(var, index)
        if name in by_name:
            raise CompileError(f"node {name!r} declared more than once")
        if var in constants:
            raise CompileError(f"{var!r} is both a constant and a declared node")
        node = Node(name=name, var=var, index=index, kind=kind, dist=dist,
                    params=params, expr=expr)
        by_name[name] = len(nodes)
        by_var.setdefault(var, []).append(len(nodes))
        nodes.append(node)

    # parent links; everything referenced must be a declared node by now
    # (constants were substituted inline during unrolling)
    for nid, node in enumerate(nodes):
        refs: set = set()
        if node.kind == "stochastic":
            for e in node.params.values():
                refs |= exprs.expr_keys(e)
        else:
            refs = exprs.expr_keys(node.expr)
        parents = []
        for key in sorted(refs):
            if key not in by_name:
                raise CompileError(f"unresolved identifier {key!r}")
            parents.append(by_name[key])
        node.parents = tuple(parents)
    children: dict = {i: [] for i in range(len(nodes))}
    for nid, node in enumerate(nodes):
        for p in node.parents:
            children[p].append(nid)
    for nid, node in enumerate(nodes):
        node.children = tuple(children[nid])

    _attach_data(nodes, by_name, by_var, data)

    # topological order, declaration order breaking ties
    indeg = [len(n.parents) for n in nodes]
    ready = [i for i, d in enumerate(indeg) if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(nid)
        for cid in nodes[nid].children:
            indeg[cid] -= 1
            if indeg[cid] == 0:
                heapq.heappush(ready, cid)
    if len(order) != len(nodes):
        stuck = next(n.name for i, n in enumerate(nodes) if indeg[i] > 0)
        raise CompileError(f"cyclic definition involving {stuck!r}")

    if latent is not None:
        targets = by_var.get(latent)
        if not targets:
            raise CompileError(f"latent variable {latent!r} not declared")
        indices = []
        for i in targets:
            node = nodes[i]
            if node.kind != "stochastic":
                raise CompileError(f"latent variable {latent!r} is deterministic")
            if node.role == "observation":
                raise CompileError(f"latent node {node.name!r} carries data")
            if node.index is None:
                raise CompileError(f"latent variable {latent!r} is not indexed")
            indices.append(node.index)
        if sorted(indices) != list(range(1, len(indices) + 1)):
            raise CompileError(f"latent chain {latent!r} must be indexed 1..T")
        for i in targets:
            nodes[i].role = "latent"

    for node in nodes:
        if node.kind == "deterministic":
            node.role = "deterministic"

    for name, value in inits.items():
        if name not in by_name:
            raise CompileError(f"init provided for unknown node {name!r}")
        node = nodes[by_name[name]]
        if node.kind == "deterministic":
            warnings.warn(
                f"init for deterministic node {name!r} ignored; its value is "
                "recomputed from its parents",
                stacklevel=2,
            )
            continue
        if node.role == "observation":
            raise CompileError(f"init provided for data node {name!r}")
        node.init = float(value)

    for node in nodes:
        if node.kind == "stochastic":
            node.param_fns = {k: exprs.compile_expr(v) for k, v in node.params.items()}
        else:
            node.expr_fn = exprs.compile_expr(node.expr)

    return ModelGraph(
        nodes=nodes,
        order=tuple(order),
        latent_var=latent,
        constants=constants,
        source=model,
    )
