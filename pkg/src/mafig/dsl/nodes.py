"""AST node types for the atomic-function DSL.

All nodes are frozen dataclasses, so tree equality is structural equality
and trees are safe to share between concurrent episode runners.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Union


class Coord(NamedTuple):
    """A grid coordinate. Distinct from a generic 2-element sequence."""

    x: int
    y: int


#: Runtime value kinds, in the order used by error messages.
TYPE_NAMES = ("int", "real", "bool", "text", "coord", "list", "record")


@dataclass(frozen=True)
class Param:
    name: str
    type: str


# --- expressions ---

@dataclass(frozen=True)
class Literal:
    value: Union[int, float, bool, str]


@dataclass(frozen=True)
class CoordLit:
    x: "Expr"
    y: "Expr"


@dataclass(frozen=True)
class ListLit:
    items: tuple["Expr", ...]


@dataclass(frozen=True)
class RecordLit:
    fields: tuple[tuple[str, "Expr"], ...]


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class FieldAccess:
    obj: "Expr"
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "-" | "not"
    rhs: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / % == != < <= > >= and or
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expr", ...]


Expr = Union[Literal, CoordLit, ListLit, RecordLit, Var, FieldAccess, Unary, Binary, Call]


# --- statements ---

@dataclass(frozen=True)
class Let:
    name: str
    expr: Expr


@dataclass(frozen=True)
class Assign:
    name: str
    expr: Expr


@dataclass(frozen=True)
class If:
    cond: Expr
    then_body: tuple["Stmt", ...]
    else_body: tuple["Stmt", ...]


@dataclass(frozen=True)
class ForEach:
    var: str
    seq: Expr
    body: tuple["Stmt", ...]


@dataclass(frozen=True)
class Return:
    expr: Expr


Stmt = Union[Let, Assign, If, ForEach, Return]


@dataclass(frozen=True)
class FunctionAst:
    """One atomic function: name, typed parameters, doc block and body."""

    name: str
    params: tuple[Param, ...]
    return_type: str
    spec_text: tuple[str, ...] = field(default=())
    body: tuple[Stmt, ...] = field(default=())


@dataclass(frozen=True)
class SourceText:
    """DSL source plus a provenance label (library | generated | edited)."""

    text: str
    origin: str = "library"

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("source text must be non-empty")
        if self.origin not in ("library", "generated", "edited"):
            raise ValueError(f"unknown source origin: {self.origin!r}")
