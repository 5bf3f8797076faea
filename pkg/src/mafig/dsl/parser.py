"""Lexer and recursive-descent parser for the atomic-function DSL.

The grammar is documented in docs/grammar.ebnf. Parsing is strict: any
byte-level edit either produces a parse error or a valid tree. Variable
references are resolved statically against parameters, local bindings and
the capability names supplied by the caller; `while` and self-calls are
rejected as banned constructs so every accepted function terminates.
"""

from __future__ import annotations

import re

from ..errors import BannedConstructError, ParseError, UnresolvedReferenceError
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
    Param,
    RecordLit,
    Return,
    SourceText,
    Stmt,
    Unary,
    Var,
)

KEYWORDS = frozenset(
    "fn let set if else for in return and or not true false while "
    "int real bool text coord list record".split()
)
TYPE_KEYWORDS = frozenset("int real bool text coord list record".split())

#: Host helpers available to every function regardless of scenario.
BUILTIN_ARITNESS = {
    "len": 1,
    "abs": 1,
    "min": 2,
    "max": 2,
    "contains": 2,
    "append": 2,
    "concat": 2,
    "range": 1,
    "sort": 1,
    "sort_by": 2,
    "reverse": 1,
    "manhattan": 2,
    "in_rect": 3,
}
BUILTIN_NAMES = frozenset(BUILTIN_ARITNESS)

_TOKEN_RE = re.compile(
    r"""
    (?P<marker><<[A-Z_]+>>)
  | (?P<comment>\#[^\n]*)
  | (?P<real>\d+\.\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:\\.|[^"\\\n])*")
  | (?P<op>->|==|!=|<=|>=|[+\-*/%<>=(){}\[\],:.])
  | (?P<nl>\n)
  | (?P<space>[ \t\r]+)
    """,
    re.VERBOSE,
)


class Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind: str, text: str, line: int, col: int):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col

    def __repr__(self) -> str:  # pragma: no cover
        return f"Token({self.kind}, {self.text!r}, {self.line}:{self.col})"


def lex(text: str, keep_layout: bool = False) -> list[Token]:
    """Split source into tokens.

    With keep_layout the newline and comment tokens are retained, which is
    what the reference tokenizer uses; the parser drops them.
    """
    tokens: list[Token] = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup or ""
        value = m.group()
        if kind == "nl":
            if keep_layout:
                tokens.append(Token("nl", "\n", line, col))
            line += 1
            col = 1
        elif kind == "space":
            col += len(value)
        elif kind == "comment":
            tokens.append(Token("comment", value, line, col))
            col += len(value)
        else:
            if kind == "ident" and value in KEYWORDS:
                kind = "keyword"
            tokens.append(Token(kind, value, line, col))
            col += len(value)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token], capabilities: frozenset[str]):
        self.tokens = [t for t in tokens if t.kind != "nl"]
        self.pos = 0
        self.capabilities = capabilities
        self.scopes: list[set[str]] = []
        self.fn_name = ""

    # --- token plumbing ---

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok.line, tok.col)
        return self.advance()

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.peek()
        return ParseError(message, tok.line, tok.col)

    # --- scope tracking ---

    def declare(self, name: str, tok: Token) -> None:
        if any(name in scope for scope in self.scopes):
            raise ParseError(f"name {name!r} already bound", tok.line, tok.col)
        self.scopes[-1].add(name)

    def resolves(self, name: str) -> bool:
        return any(name in scope for scope in self.scopes)

    # --- grammar ---

    def parse_function(self) -> FunctionAst:
        spec_lines: list[str] = []
        while self.peek().kind == "comment":
            spec_lines.append(self.advance().text[1:].strip())
        self.expect("fn")
        name_tok = self.peek()
        name = self.parse_ident("function name")
        self.fn_name = name
        self.expect("(")
        params: list[Param] = []
        self.scopes.append(set())
        if self.peek().text != ")":
            while True:
                p_tok = self.peek()
                p_name = self.parse_ident("parameter name")
                self.expect(":")
                p_type = self.parse_type()
                if any(p.name == p_name for p in params):
                    raise ParseError(f"duplicate parameter {p_name!r}", p_tok.line, p_tok.col)
                params.append(Param(p_name, p_type))
                self.scopes[-1].add(p_name)
                if self.peek().text != ",":
                    break
                self.advance()
        self.expect(")")
        self.expect("->")
        return_type = self.parse_type()
        body = self.parse_block()
        tok = self.peek()
        if tok.kind != "eof":
            raise self.error(f"unexpected trailing input {tok.text!r}")
        if name_tok.text in KEYWORDS:
            raise ParseError(f"function name {name!r} is a keyword", name_tok.line, name_tok.col)
        return FunctionAst(name, tuple(params), return_type, tuple(spec_lines), body)

    def parse_ident(self, what: str) -> str:
        tok = self.peek()
        if tok.kind != "ident":
            raise self.error(f"expected {what}, found {tok.text!r}")
        return self.advance().text

    def parse_type(self) -> str:
        tok = self.peek()
        if tok.text not in TYPE_KEYWORDS:
            raise self.error(f"expected a type, found {tok.text!r}")
        return self.advance().text

    def parse_block(self) -> tuple[Stmt, ...]:
        self.expect("{")
        self.scopes.append(set())
        stmts: list[Stmt] = []
        while self.peek().text != "}":
            if self.peek().kind == "eof":
                raise self.error("unterminated block")
            stmts.append(self.parse_stmt())
        self.expect("}")
        self.scopes.pop()
        return tuple(stmts)

    def parse_stmt(self) -> Stmt:
        tok = self.peek()
        if tok.text == "while":
            raise BannedConstructError("while loops are banned; use a bounded for-each", tok.line, tok.col)
        if tok.text == "let":
            self.advance()
            name_tok = self.peek()
            name = self.parse_ident("binding name")
            self.expect("=")
            expr = self.parse_expr()
            self.declare(name, name_tok)
            return Let(name, expr)
        if tok.text == "set":
            self.advance()
            name_tok = self.peek()
            name = self.parse_ident("binding name")
            if not self.resolves(name):
                raise UnresolvedReferenceError(f"assignment to unbound name {name!r}", name_tok.line, name_tok.col)
            self.expect("=")
            return Assign(name, self.parse_expr())
        if tok.text == "if":
            self.advance()
            cond = self.parse_expr()
            then_body = self.parse_block()
            else_body: tuple[Stmt, ...] = ()
            if self.peek().text == "else":
                self.advance()
                if self.peek().text == "if":
                    else_body = (self.parse_stmt(),)
                else:
                    else_body = self.parse_block()
            return If(cond, then_body, else_body)
        if tok.text == "for":
            self.advance()
            var_tok = self.peek()
            var = self.parse_ident("loop variable")
            self.expect("in")
            seq = self.parse_expr()
            self.scopes.append(set())
            self.declare(var, var_tok)
            body = self.parse_block()
            self.scopes.pop()
            return ForEach(var, seq, body)
        if tok.text == "return":
            self.advance()
            return Return(self.parse_expr())
        raise self.error(f"expected a statement, found {tok.text or 'end of input'!r}")

    # Precedence: or < and < not < comparison < additive < multiplicative < unary < postfix.

    def parse_expr(self) -> Expr:
        return self.parse_or()

    def parse_or(self) -> Expr:
        node = self.parse_and()
        while self.peek().text == "or":
            self.advance()
            node = Binary("or", node, self.parse_and())
        return node

    def parse_and(self) -> Expr:
        node = self.parse_not()
        while self.peek().text == "and":
            self.advance()
            node = Binary("and", node, self.parse_not())
        return node

    def parse_not(self) -> Expr:
        if self.peek().text == "not":
            self.advance()
            return Unary("not", self.parse_not())
        return self.parse_comparison()

    def parse_comparison(self) -> Expr:
        node = self.parse_additive()
        if self.peek().text in ("==", "!=", "<", "<=", ">", ">="):
            op = self.advance().text
            node = Binary(op, node, self.parse_additive())
        return node

    def parse_additive(self) -> Expr:
        node = self.parse_multiplicative()
        while self.peek().text in ("+", "-"):
            op = self.advance().text
            node = Binary(op, node, self.parse_multiplicative())
        return node

    def parse_multiplicative(self) -> Expr:
        node = self.parse_unary()
        while self.peek().text in ("*", "/", "%"):
            op = self.advance().text
            node = Binary(op, node, self.parse_unary())
        return node

    def parse_unary(self) -> Expr:
        if self.peek().text == "-":
            self.advance()
            return Unary("-", self.parse_unary())
        return self.parse_postfix()

    def parse_postfix(self) -> Expr:
        node = self.parse_primary()
        while self.peek().text == ".":
            self.advance()
            node = FieldAccess(node, self.parse_ident("field name"))
        return node

    def parse_primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "int":
            self.advance()
            return Literal(int(tok.text))
        if tok.kind == "real":
            self.advance()
            return Literal(float(tok.text))
        if tok.kind == "string":
            self.advance()
            return Literal(_unescape(tok.text[1:-1]))
        if tok.text == "true":
            self.advance()
            return Literal(True)
        if tok.text == "false":
            self.advance()
            return Literal(False)
        if tok.text == "(":
            self.advance()
            first = self.parse_expr()
            if self.peek().text == ",":
                self.advance()
                second = self.parse_expr()
                self.expect(")")
                return CoordLit(first, second)
            self.expect(")")
            return first
        if tok.text == "[":
            self.advance()
            items: list[Expr] = []
            if self.peek().text != "]":
                while True:
                    items.append(self.parse_expr())
                    if self.peek().text != ",":
                        break
                    self.advance()
            self.expect("]")
            return ListLit(tuple(items))
        if tok.text == "{":
            self.advance()
            fields: list[tuple[str, Expr]] = []
            if self.peek().text != "}":
                while True:
                    f_tok = self.peek()
                    f_name = self.parse_ident("field name")
                    if any(n == f_name for n, _ in fields):
                        raise ParseError(f"duplicate record field {f_name!r}", f_tok.line, f_tok.col)
                    self.expect(":")
                    fields.append((f_name, self.parse_expr()))
                    if self.peek().text != ",":
                        break
                    self.advance()
            self.expect("}")
            return RecordLit(tuple(fields))
        if tok.kind == "ident":
            self.advance()
            if self.peek().text == "(":
                return self.parse_call(tok)
            if not self.resolves(tok.text):
                raise UnresolvedReferenceError(f"unresolved reference {tok.text!r}", tok.line, tok.col)
            return Var(tok.text)
        if tok.kind == "marker":
            raise self.error(f"unexpected marker token {tok.text!r}")
        raise self.error(f"expected an expression, found {tok.text or 'end of input'!r}")

    def parse_call(self, name_tok: Token) -> Expr:
        name = name_tok.text
        if name == self.fn_name:
            raise BannedConstructError("recursion is banned", name_tok.line, name_tok.col)
        if name not in BUILTIN_NAMES and name not in self.capabilities:
            raise UnresolvedReferenceError(f"call to undeclared capability {name!r}", name_tok.line, name_tok.col)
        self.expect("(")
        args: list[Expr] = []
        if self.peek().text != ")":
            while True:
                args.append(self.parse_expr())
                if self.peek().text != ",":
                    break
                self.advance()
        self.expect(")")
        if name in BUILTIN_ARITNESS and len(args) != BUILTIN_ARITNESS[name]:
            raise ParseError(
                f"{name} expects {BUILTIN_ARITNESS[name]} arguments, got {len(args)}",
                name_tok.line,
                name_tok.col,
            )
        return Call(name, tuple(args))


def _unescape(body: str) -> str:
    return body.replace("\\n", "\n").replace('\\"', '"').replace("\\\\", "\\")


def parse(src: SourceText | str, capabilities=None) -> FunctionAst:
    """Parse one function definition.

    capabilities is the set of scenario capability names callable from the
    body; builtins are always available. Unknown calls, unbound variables,
    `while` and self-calls are rejected.
    """
    text = src.text if isinstance(src, SourceText) else src
    if not text.strip():
        raise ParseError("empty source")
    if capabilities is None:
        caps: frozenset[str] = frozenset()
    elif isinstance(capabilities, frozenset):
        caps = capabilities
    else:
        caps = frozenset(capabilities)
    # Leading comments form the doc block; comments inside the body are
    # layout only and never part of the tree.
    tokens: list[Token] = []
    seen_code = False
    for tok in lex(text):
        if tok.kind == "comment":
            if not seen_code:
                tokens.append(tok)
            continue
        if tok.kind not in ("eof", "nl"):
            seen_code = True
        tokens.append(tok)
    return _Parser(tokens, caps).parse_function()
