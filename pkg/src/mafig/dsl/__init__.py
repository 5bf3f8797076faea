"""Parser, printer, tokenizer and bounded interpreter for the function DSL."""

from .interp import (
    BUILTINS,
    DEFAULT_STEP_BUDGET,
    CapabilityTable,
    Value,
    evaluate,
    freeze,
    kind_of,
    record,
)
from .nodes import Coord, FunctionAst, Param, SourceText
from .parser import BUILTIN_NAMES, KEYWORDS, parse
from .printer import pretty_print
from .tokenizer import EDIT_END, EDIT_START, TOKENIZER_ID, detokenize, tokenize

__all__ = [
    "BUILTINS",
    "BUILTIN_NAMES",
    "CapabilityTable",
    "Coord",
    "DEFAULT_STEP_BUDGET",
    "EDIT_END",
    "EDIT_START",
    "FunctionAst",
    "KEYWORDS",
    "Param",
    "SourceText",
    "TOKENIZER_ID",
    "Value",
    "detokenize",
    "evaluate",
    "freeze",
    "kind_of",
    "parse",
    "pretty_print",
    "record",
    "tokenize",
]
