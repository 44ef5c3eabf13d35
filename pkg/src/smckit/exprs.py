"""Expression evaluation over resolved ASTs.

After loop unrolling every Subscript index is a literal integer, so a
scalar node is addressed by a string key: ``x[3]``, ``phi``.  This
module turns expression trees into closures over an environment dict
mapping those keys to floats or numpy arrays (one entry per particle),
evaluates compile-time constants (loop bounds, index arithmetic), and
linearizes expressions for the structural checks the exact-filter
extraction needs.
"""

from __future__ import annotations

import numpy as np

from . import lang
from .errors import CompileError


def subscript_key(var: str, index: int) -> str:
    return f"{var}[{index}]"


def eval_const(expr, env: dict) -> float:
    """Evaluate an expression over plain numbers; loop bounds and index
    arithmetic go through here."""
    if isinstance(expr, lang.Num):
        return expr.value
    if isinstance(expr, lang.Name):
        if expr.id not in env:
            raise CompileError(f"unresolved identifier {expr.id!r}")
        return float(env[expr.id])
    if isinstance(expr, lang.Unary):
        return -eval_const(expr.operand, env)
    if isinstance(expr, lang.Bin):
        lhs = eval_const(expr.lhs, env)
        rhs = eval_const(expr.rhs, env)
        if expr.op == "+":
            return lhs + rhs
        if expr.op == "-":
            return lhs - rhs
        if expr.op == "*":
            return lhs * rhs
        if expr.op == "/":
            return lhs / rhs
        return float(np.power(lhs, rhs))
    if isinstance(expr, lang.Call):
        arg = eval_const(expr.args[0], env)
        return float(_FUNCS[expr.func](arg))
    raise CompileError(f"expression not constant: {lang.unparse_expr(expr)}")


def eval_int_const(expr, env: dict, what: str) -> int:
    value = eval_const(expr, env)
    if float(value) != int(value):
        raise CompileError(f"{what} must be an integer, got {value}")
    return int(value)


_FUNCS = {"exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs}


def expr_keys(expr) -> set:
    """All environment keys an expression reads."""
    if isinstance(expr, lang.Num):
        return set()
    if isinstance(expr, lang.Name):
        return {expr.id}
    if isinstance(expr, lang.Subscript):
        if not isinstance(expr.index, lang.Num):
            raise CompileError(
                f"unresolved index in {lang.unparse_expr(expr)}"
            )
        return {subscript_key(expr.id, int(expr.index.value))}
    if isinstance(expr, lang.Unary):
        return expr_keys(expr.operand)
    if isinstance(expr, lang.Bin):
        return expr_keys(expr.lhs) | expr_keys(expr.rhs)
    if isinstance(expr, lang.Call):
        return expr_keys(expr.args[0])
    raise TypeError(f"not an expression node: {expr!r}")


def compile_expr(expr):
    """Compile a resolved expression to a closure env -> value.

    Values may be scalars or same-length numpy arrays; operations
    broadcast elementwise, so one closure serves both the single-state
    and the particle-population evaluation paths.
    """
    if isinstance(expr, lang.Num):
        value = float(expr.value)
        return lambda env: value
    if isinstance(expr, lang.Name):
        key = expr.id
        return lambda env: env[key]
    if isinstance(expr, lang.Subscript):
        if not isinstance(expr.index, lang.Num):
            raise CompileError(f"unresolved index in {lang.unparse_expr(expr)}")
        key = subscript_key(expr.id, int(expr.index.value))
        return lambda env: env[key]
    if isinstance(expr, lang.Unary):
        inner = compile_expr(expr.operand)
        return lambda env: -inner(env)
    if isinstance(expr, lang.Bin):
        lhs = compile_expr(expr.lhs)
        rhs = compile_expr(expr.rhs)
        op = expr.op
        if op == "+":
            return lambda env: lhs(env) + rhs(env)
        if op == "-":
            return lambda env: lhs(env) - rhs(env)
        if op == "*":
            return lambda env: lhs(env) * rhs(env)
        if op == "/":
            return lambda env: lhs(env) / rhs(env)
        return lambda env: np.power(lhs(env), rhs(env))
    if isinstance(expr, lang.Call):
        inner = compile_expr(expr.args[0])
        fn = _FUNCS[expr.func]
        return lambda env: fn(inner(env))
    raise TypeError(f"not an expression node: {expr!r}")


class NonAffineError(Exception):
    """Expression is not affine in the inspected variable."""


def linearize(expr, target_key: str, env: dict) -> tuple[float, float]:
    """Write an expression as coef*target + const, or raise NonAffineError.

    Every identifier other than the target is resolved to a number
    through env, so the result is a concrete (coef, const) pair.
    """
    if isinstance(expr, lang.Num):
        return 0.0, float(expr.value)
    if isinstance(expr, (lang.Name, lang.Subscript)):
        if isinstance(expr, lang.Name):
            key = expr.id
        else:
            key = subscript_key(expr.id, int(expr.index.value))
        if key == target_key:
            return 1.0, 0.0
        if key not in env:
            raise NonAffineError(f"no value available for {key}")
        return 0.0, float(env[key])
    if isinstance(expr, lang.Unary):
        coef, const = linearize(expr.operand, target_key, env)
        return -coef, -const
    if isinstance(expr, lang.Bin):
        lc, lk = linearize(expr.lhs, target_key, env)
        rc, rk = linearize(expr.rhs, target_key, env)
        if expr.op == "+":
            return lc + rc, lk + rk
        if expr.op == "-":
            return lc - rc, lk - rk
        if expr.op == "*":
            if lc == 0.0:
                return lk * rc, lk * rk
            if rc == 0.0:
                return rk * lc, rk * lk
            raise NonAffineError("product of two terms containing the state")
        if expr.op == "/":
            if rc != 0.0:
                raise NonAffineError("state appears in a denominator")
            return lc / rk, lk / rk
        # '^'
        if lc != 0.0 or rc != 0.0:
            raise NonAffineError("state appears under a power")
        return 0.0, float(np.power(lk, rk))
    if isinstance(expr, lang.Call):
        coef, const = linearize(expr.args[0], target_key, env)
        if coef != 0.0:
            raise NonAffineError(f"state appears inside {expr.func}()")
        return 0.0, float(_FUNCS[expr.func](const))
    raise TypeError(f"not an expression node: {expr!r}")
