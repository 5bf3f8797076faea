"""Bounded interpreter for the atomic-function DSL.

Evaluation is a pure function of (ast, args, capabilities, step_budget):
no recursion or while loops exist, every loop iterates a materialized
sequence, and a statement budget backstops termination. All values are
immutable (ints, floats, bools, strings, Coord, tuples, mapping-proxied
records), so concurrent episode runners can share everything.
"""

from __future__ import annotations

from types import MappingProxyType
from typing import Any, Callable, Mapping

from ..errors import CapabilityError, DslTypeError, EvalError, StepBudgetExceeded
from .nodes import (
    Assign,
    Binary,
    Call,
    Coord,
    CoordLit,
    Expr,
    FieldAccess,
    ForEach,
    FunctionAst,
    If,
    Let,
    ListLit,
    Literal,
    RecordLit,
    Return,
    Unary,
    Var,
)
from .parser import KEYWORDS

DEFAULT_STEP_BUDGET = 100_000
_RANGE_CAP = 10_000

Value = Any  # int | float | bool | str | Coord | tuple | Mapping


def kind_of(value: Value) -> str:
    if value is True or value is False:
        return "bool"
    if isinstance(value, Coord):
        return "coord"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "real"
    if isinstance(value, str):
        return "text"
    if isinstance(value, tuple):
        return "list"
    if isinstance(value, Mapping):
        return "record"
    raise DslTypeError(f"value {value!r} is not a DSL value")


def record(**fields: Value) -> Mapping[str, Value]:
    """Build an immutable record value."""
    return MappingProxyType(dict(fields))


def freeze(value: Any) -> Value:
    """Coerce host data (lists, dicts, 2-tuples of ints) into DSL values."""
    if isinstance(value, Coord) or value is True or value is False:
        return value
    if isinstance(value, (int, float, str)):
        return value
    if isinstance(value, Mapping):
        return MappingProxyType({k: freeze(v) for k, v in value.items()})
    if isinstance(value, (list, tuple)):
        return tuple(freeze(v) for v in value)
    raise DslTypeError(f"cannot convert host value {value!r}")


class CapabilityTable:
    """Scenario capabilities: name -> evaluator already bound to a state.

    Names must not shadow DSL keywords. Builtins (len, append, ...) are
    implicit and need not be registered.
    """

    def __init__(self, entries: Mapping[str, Callable[..., Value]] | None = None):
        self._entries: dict[str, Callable[..., Value]] = {}
        for name, fn in (entries or {}).items():
            self.register(name, fn)

    def register(self, name: str, fn: Callable[..., Value]) -> None:
        if name in KEYWORDS:
            raise ValueError(f"capability {name!r} shadows a DSL keyword")
        self._entries[name] = fn

    def names(self) -> frozenset[str]:
        return frozenset(self._entries)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __getitem__(self, name: str) -> Callable[..., Value]:
        return self._entries[name]


def _builtin_sort_key(v: Value):
    # stable cross-kind ordering for sort(); scalars only
    return (kind_of(v), v)


def _require_list(value: Value, what: str) -> tuple:
    if not isinstance(value, tuple) or isinstance(value, Coord):
        raise DslTypeError(f"{what} expects a list, got {kind_of(value)}")
    return value


def _builtin_range(n: Value) -> tuple:
    if not isinstance(n, int) or n is True or n is False:
        raise DslTypeError("range expects an int")
    if n < 0 or n > _RANGE_CAP:
        raise EvalError(f"range argument {n} outside [0, {_RANGE_CAP}]")
    return tuple(range(n))


def _builtin_manhattan(a: Value, b: Value) -> int:
    if not isinstance(a, Coord) or not isinstance(b, Coord):
        raise DslTypeError("manhattan expects two coords")
    return abs(a.x - b.x) + abs(a.y - b.y)


def _builtin_in_rect(cell: Value, lo: Value, hi: Value) -> bool:
    if not all(isinstance(c, Coord) for c in (cell, lo, hi)):
        raise DslTypeError("in_rect expects three coords")
    return lo.x <= cell.x <= hi.x and lo.y <= cell.y <= hi.y


def _builtin_sort_by(seq: Value, field: Value) -> tuple:
    items = _require_list(seq, "sort_by")
    if not isinstance(field, str):
        raise DslTypeError("sort_by expects a field name")
    for item in items:
        if not isinstance(item, Mapping) or field not in item:
            raise DslTypeError(f"sort_by: element missing field {field!r}")
    return tuple(sorted(items, key=lambda r: r[field]))


def _builtin_min(a: Value, b: Value) -> Value:
    _require_number_pair(a, b, "min")
    return a if a <= b else b


def _builtin_max(a: Value, b: Value) -> Value:
    _require_number_pair(a, b, "max")
    return a if a >= b else b


def _require_number_pair(a: Value, b: Value, what: str) -> None:
    for v in (a, b):
        if not isinstance(v, (int, float)) or v is True or v is False:
            raise DslTypeError(f"{what} expects numbers")


BUILTINS: dict[str, Callable[..., Value]] = {
    "len": lambda v: len(v) if isinstance(v, (tuple, str)) else _bad_len(v),
    "abs": lambda v: abs(v) if isinstance(v, (int, float)) and v is not True and v is not False else _bad_abs(v),
    "min": _builtin_min,
    "max": _builtin_max,
    "contains": lambda seq, v: v in _require_list(seq, "contains"),
    "append": lambda seq, v: _require_list(seq, "append") + (v,),
    "concat": lambda a, b: _require_list(a, "concat") + _require_list(b, "concat"),
    "range": _builtin_range,
    "sort": lambda seq: tuple(sorted(_require_list(seq, "sort"), key=_builtin_sort_key)),
    "sort_by": _builtin_sort_by,
    "reverse": lambda seq: tuple(reversed(_require_list(seq, "reverse"))),
    "manhattan": _builtin_manhattan,
    "in_rect": _builtin_in_rect,
}


def _bad_len(v: Value):
    raise DslTypeError(f"len expects a list or text, got {kind_of(v)}")


def _bad_abs(v: Value):
    raise DslTypeError(f"abs expects a number, got {kind_of(v)}")


class _ReturnSignal(Exception):
    def __init__(self, value: Value):
        self.value = value


class _Frame:
    __slots__ = ("scopes", "steps")

    def __init__(self, budget: int):
        self.scopes: list[dict[str, Value]] = [{}]
        self.steps = budget

    def lookup(self, name: str) -> Value:
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        raise EvalError(f"unbound name {name!r}")  # unreachable after static checks

    def bind(self, name: str, value: Value) -> None:
        self.scopes[-1][name] = value

    def rebind(self, name: str, value: Value) -> None:
        for scope in reversed(self.scopes):
            if name in scope:
                scope[name] = value
                return
        raise EvalError(f"assignment to unbound name {name!r}")

    def tick(self) -> None:
        self.steps -= 1
        if self.steps < 0:
            raise StepBudgetExceeded("statement budget exhausted")


def evaluate(
    ast: FunctionAst,
    args: list[Value] | tuple[Value, ...],
    caps: CapabilityTable | None = None,
    step_budget: int = DEFAULT_STEP_BUDGET,
) -> Value:
    """Run one atomic function and return its result.

    Raises DslTypeError on arity/type mismatches, StepBudgetExceeded when
    the budget runs out, CapabilityError when a capability fails, and
    EvalError for arithmetic faults; it never diverges or crashes.
    """
    if step_budget <= 0:
        raise ValueError("step_budget must be positive")
    caps = caps or CapabilityTable()
    if len(args) != len(ast.params):
        raise DslTypeError(f"{ast.name} expects {len(ast.params)} arguments, got {len(args)}")
    frame = _Frame(step_budget)
    for param, value in zip(ast.params, args):
        value = freeze(value)
        _check_kind(value, param.type, f"argument {param.name!r}")
        frame.bind(param.name, value)
    try:
        _exec_body(ast.body, frame, caps)
    except _ReturnSignal as sig:
        result = sig.value
        _check_kind(result, ast.return_type, f"{ast.name} return value")
        return result
    raise EvalError(f"{ast.name} finished without returning")


def _check_kind(value: Value, declared: str, what: str) -> None:
    kind = kind_of(value)
    if kind == declared or (declared == "real" and kind == "int"):
        return
    raise DslTypeError(f"{what}: expected {declared}, got {kind}")


def _exec_body(body, frame: _Frame, caps: CapabilityTable) -> None:
    for stmt in body:
        frame.tick()
        if isinstance(stmt, Let):
            frame.bind(stmt.name, _eval(stmt.expr, frame, caps))
        elif isinstance(stmt, Assign):
            frame.rebind(stmt.name, _eval(stmt.expr, frame, caps))
        elif isinstance(stmt, Return):
            raise _ReturnSignal(_eval(stmt.expr, frame, caps))
        elif isinstance(stmt, If):
            cond = _eval(stmt.cond, frame, caps)
            if not isinstance(cond, bool):
                raise DslTypeError(f"if condition must be bool, got {kind_of(cond)}")
            frame.scopes.append({})
            try:
                _exec_body(stmt.then_body if cond else stmt.else_body, frame, caps)
            finally:
                frame.scopes.pop()
        elif isinstance(stmt, ForEach):
            seq = _eval(stmt.seq, frame, caps)
            items = _require_list(seq, "for-each")
            for item in items:
                frame.tick()
                frame.scopes.append({stmt.var: item})
                try:
                    _exec_body(stmt.body, frame, caps)
                finally:
                    frame.scopes.pop()
        else:  # pragma: no cover
            raise EvalError(f"unknown statement {stmt!r}")


def _eval(expr: Expr, frame: _Frame, caps: CapabilityTable) -> Value:
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, Var):
        return frame.lookup(expr.name)
    if isinstance(expr, CoordLit):
        x = _eval(expr.x, frame, caps)
        y = _eval(expr.y, frame, caps)
        for c in (x, y):
            if not isinstance(c, int) or c is True or c is False:
                raise DslTypeError("coordinate components must be ints")
        return Coord(x, y)
    if isinstance(expr, ListLit):
        return tuple(_eval(item, frame, caps) for item in expr.items)
    if isinstance(expr, RecordLit):
        return MappingProxyType({name: _eval(value, frame, caps) for name, value in expr.fields})
    if isinstance(expr, FieldAccess):
        obj = _eval(expr.obj, frame, caps)
        if isinstance(obj, Coord):
            if expr.name in ("x", "y"):
                return getattr(obj, expr.name)
            raise EvalError(f"coord has no field {expr.name!r}")
        if isinstance(obj, Mapping):
            if expr.name in obj:
                return obj[expr.name]
            raise EvalError(f"record has no field {expr.name!r}")
        raise DslTypeError(f"cannot access field {expr.name!r} on {kind_of(obj)}")
    if isinstance(expr, Unary):
        value = _eval(expr.rhs, frame, caps)
        if expr.op == "not":
            if not isinstance(value, bool):
                raise DslTypeError(f"not expects bool, got {kind_of(value)}")
            return not value
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise DslTypeError(f"unary - expects a number, got {kind_of(value)}")
        return -value
    if isinstance(expr, Binary):
        return _eval_binary(expr, frame, caps)
    if isinstance(expr, Call):
        args = [_eval(a, frame, caps) for a in expr.args]
        if expr.name in BUILTINS:
            try:
                return BUILTINS[expr.name](*args)
            except (EvalError, DslTypeError):
                raise
            except Exception as exc:
                raise EvalError(f"builtin {expr.name!r} failed: {exc}") from exc
        if expr.name in caps:
            try:
                return freeze(caps[expr.name](*args))
            except (EvalError, DslTypeError):
                raise
            except Exception as exc:
                raise CapabilityError(f"capability {expr.name!r} failed: {exc}") from exc
        raise CapabilityError(f"capability {expr.name!r} not provided")
    raise EvalError(f"unknown expression {expr!r}")  # pragma: no cover


def _eval_binary(expr: Binary, frame: _Frame, caps: CapabilityTable) -> Value:
    op = expr.op
    if op == "and":
        lhs = _eval(expr.lhs, frame, caps)
        _require_bool(lhs, op)
        if not lhs:
            return False
        rhs = _eval(expr.rhs, frame, caps)
        _require_bool(rhs, op)
        return rhs
    if op == "or":
        lhs = _eval(expr.lhs, frame, caps)
        _require_bool(lhs, op)
        if lhs:
            return True
        rhs = _eval(expr.rhs, frame, caps)
        _require_bool(rhs, op)
        return rhs
    lhs = _eval(expr.lhs, frame, caps)
    rhs = _eval(expr.rhs, frame, caps)
    if op in ("==", "!="):
        equal = _values_equal(lhs, rhs)
        return equal if op == "==" else not equal
    if op in ("<", "<=", ">", ">="):
        _require_number_pair(lhs, rhs, op)
        return {"<": lhs < rhs, "<=": lhs <= rhs, ">": lhs > rhs, ">=": lhs >= rhs}[op]
    if op == "+" and isinstance(lhs, str) and isinstance(rhs, str):
        return lhs + rhs
    _require_number_pair(lhs, rhs, op)
    if op == "+":
        return lhs + rhs
    if op == "-":
        return lhs - rhs
    if op == "*":
        return lhs * rhs
    if op == "/":
        if rhs == 0:
            raise EvalError("division by zero")
        if isinstance(lhs, int) and isinstance(rhs, int):
            q = abs(lhs) // abs(rhs)  # truncate toward zero
            return q if (lhs >= 0) == (rhs >= 0) else -q
        return lhs / rhs
    if op == "%":
        if rhs == 0:
            raise EvalError("modulo by zero")
        if isinstance(lhs, int) and isinstance(rhs, int):
            return lhs - rhs * _trunc_div(lhs, rhs)
        raise DslTypeError("% expects ints")
    raise EvalError(f"unknown operator {op!r}")  # pragma: no cover


def _trunc_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _require_bool(value: Value, op: str) -> None:
    if not isinstance(value, bool):
        raise DslTypeError(f"{op} expects bool operands, got {kind_of(value)}")


def _values_equal(lhs: Value, rhs: Value) -> bool:
    lk, rk = kind_of(lhs), kind_of(rhs)
    if {lk, rk} <= {"int", "real"}:
        return lhs == rhs
    if lk != rk:
        return False
    if lk == "record":
        return dict(lhs) == dict(rhs)
    return lhs == rhs
