"""Canonical formatting for the DSL.

pretty_print produces the one canonical text for a tree: LF line endings,
two-space indentation, one statement per line, single spaces. The printer
emits a token stream and renders it with `render`; the reference tokenizer
scans canonical text back to the same stream, so detokenization is exact
by construction and token diffs are stable.
"""

from __future__ import annotations

from .nodes import (
    Assign,
    Binary,
    Call,
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
    Stmt,
    Unary,
    Var,
)
from .parser import KEYWORDS

NEWLINE = "\n"

_NO_SPACE_BEFORE = frozenset((")", "]", "}", ",", ":", "."))
_NO_SPACE_AFTER = frozenset(("(", "[", "."))
_UNARY_CONTEXT = frozenset(
    ("(", "[", "{", ",", ":", "=", "==", "!=", "<", "<=", ">", ">=",
     "+", "-", "*", "/", "%", "->", "return", "and", "or", "not", "in", "if")
)


def render(tokens: list[str]) -> str:
    """Join a token stream back into canonical text."""
    lines: list[str] = []
    current: list[str] = []
    depth = 0
    prev: str | None = None
    prev_prev: str | None = None
    for tok in tokens:
        if tok == NEWLINE:
            line = "".join(current)
            if line:
                indent = depth - (1 if line.startswith("}") else 0)
                lines.append("  " * max(indent, 0) + line)
                depth += line.count("{") - line.count("}")
            else:
                lines.append("")
            current = []
            prev = None
            prev_prev = None
            continue
        if current and _needs_space(prev, tok, prev_prev):
            current.append(" ")
        current.append(tok)
        prev_prev = prev
        prev = tok
    if current:
        line = "".join(current)
        indent = depth - (1 if line.startswith("}") else 0)
        lines.append("  " * max(indent, 0) + line)
    return "\n".join(lines)


def _needs_space(prev: str | None, tok: str, prev_prev: str | None) -> bool:
    if prev is None:
        return False
    if prev.startswith("#"):
        return True
    if tok in _NO_SPACE_BEFORE:
        return False
    if prev in _NO_SPACE_AFTER:
        return False
    if tok == "(":
        # call parens attach to the callee; grouping/coord parens do not
        return not (_is_word(prev) and prev not in KEYWORDS)
    if prev == "{":
        return False
    if tok == "{":
        return True
    if prev == "-" and (prev_prev is None or prev_prev in _UNARY_CONTEXT):
        return False
    return True


def _is_word(tok: str) -> bool:
    return bool(tok) and (tok[0].isalpha() or tok[0] == "_")


def function_tokens(ast: FunctionAst) -> list[str]:
    """The canonical token stream for a function, newline tokens included."""
    out: list[str] = []
    for line in ast.spec_text:
        out.extend((f"# {line}" if line else "#", NEWLINE))
    out.extend(("fn", ast.name, "("))
    for i, param in enumerate(ast.params):
        if i:
            out.append(",")
        out.extend((param.name, ":", param.type))
    out.extend((")", "->", ast.return_type, "{", NEWLINE))
    for stmt in ast.body:
        _stmt_tokens(stmt, out)
    out.extend(("}", NEWLINE))
    return out


def _stmt_tokens(stmt: Stmt, out: list[str]) -> None:
    if isinstance(stmt, Let):
        out.extend(("let", stmt.name, "="))
        _expr_tokens(stmt.expr, out)
        out.append(NEWLINE)
    elif isinstance(stmt, Assign):
        out.extend(("set", stmt.name, "="))
        _expr_tokens(stmt.expr, out)
        out.append(NEWLINE)
    elif isinstance(stmt, Return):
        out.append("return")
        _expr_tokens(stmt.expr, out)
        out.append(NEWLINE)
    elif isinstance(stmt, If):
        out.append("if")
        _expr_tokens(stmt.cond, out)
        out.extend(("{", NEWLINE))
        for s in stmt.then_body:
            _stmt_tokens(s, out)
        if stmt.else_body:
            if len(stmt.else_body) == 1 and isinstance(stmt.else_body[0], If):
                out.extend(("}", "else"))
                # chained else-if shares the line with the closing brace
                nested: list[str] = []
                _stmt_tokens(stmt.else_body[0], nested)
                out.extend(nested)
            else:
                out.extend(("}", "else", "{", NEWLINE))
                for s in stmt.else_body:
                    _stmt_tokens(s, out)
                out.extend(("}", NEWLINE))
        else:
            out.extend(("}", NEWLINE))
    elif isinstance(stmt, ForEach):
        out.extend(("for", stmt.var, "in"))
        _expr_tokens(stmt.seq, out)
        out.extend(("{", NEWLINE))
        for s in stmt.body:
            _stmt_tokens(s, out)
        out.extend(("}", NEWLINE))
    else:  # pragma: no cover
        raise TypeError(f"unknown statement {stmt!r}")


_PRECEDENCE = {
    "or": 1, "and": 2,
    "==": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5,
    "*": 6, "/": 6, "%": 6,
}


def _expr_tokens(expr: Expr, out: list[str], parent_prec: int = 0) -> None:
    if isinstance(expr, Literal):
        value = expr.value
        if isinstance(value, (int, float)) and not isinstance(value, bool) and value < 0:
            out.extend(("-", _literal_token(-value)))
        else:
            out.append(_literal_token(value))
    elif isinstance(expr, Var):
        out.append(expr.name)
    elif isinstance(expr, CoordLit):
        out.append("(")
        _expr_tokens(expr.x, out)
        out.append(",")
        _expr_tokens(expr.y, out)
        out.append(")")
    elif isinstance(expr, ListLit):
        out.append("[")
        for i, item in enumerate(expr.items):
            if i:
                out.append(",")
            _expr_tokens(item, out)
        out.append("]")
    elif isinstance(expr, RecordLit):
        out.append("{")
        for i, (name, value) in enumerate(expr.fields):
            if i:
                out.append(",")
            out.extend((name, ":"))
            _expr_tokens(value, out)
        out.append("}")
    elif isinstance(expr, FieldAccess):
        _expr_tokens(expr.obj, out, 8)
        out.extend((".", expr.name))
    elif isinstance(expr, Call):
        out.extend((expr.name, "("))
        for i, arg in enumerate(expr.args):
            if i:
                out.append(",")
            _expr_tokens(arg, out)
        out.append(")")
    elif isinstance(expr, Unary):
        if expr.op == "not":
            prec = 3
            if parent_prec > prec:
                out.append("(")
            out.append("not")
            _expr_tokens(expr.rhs, out, prec)
            if parent_prec > prec:
                out.append(")")
        else:
            prec = 7
            if parent_prec > prec:
                out.append("(")
            out.append("-")
            _expr_tokens(expr.rhs, out, prec)
            if parent_prec > prec:
                out.append(")")
    elif isinstance(expr, Binary):
        prec = _PRECEDENCE[expr.op]
        if parent_prec > prec:
            out.append("(")
        _expr_tokens(expr.lhs, out, prec)
        out.append(expr.op)
        _expr_tokens(expr.rhs, out, prec + 1)
        if parent_prec > prec:
            out.append(")")
    else:  # pragma: no cover
        raise TypeError(f"unknown expression {expr!r}")


def _literal_token(value) -> str:
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = repr(value)
        if "e" in text or "E" in text or "." not in text:
            text = f"{value:.9f}".rstrip("0")
            if text.endswith("."):
                text += "0"
        return text
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        return f'"{escaped}"'
    raise TypeError(f"unknown literal {value!r}")  # pragma: no cover


def pretty_print(ast: FunctionAst) -> str:
    """Render the canonical source for a tree. Deterministic and byte-stable."""
    text = render(function_tokens(ast))
    return text if text.endswith("\n") else text + "\n"
