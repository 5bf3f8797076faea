"""Reference tokenizer over canonical DSL text.

Whitespace-splitting with punctuation as separate tokens; newlines are
explicit tokens so detokenization is exact; the edit-marker byte sequences
are always single atomic tokens. A real model tokenizer can substitute as
long as it honors the same contract.
"""

from __future__ import annotations

from .parser import lex
from .printer import render

TOKENIZER_ID = "ws-punct-v1"

EDIT_START = "<<EDIT_START>>"
EDIT_END = "<<EDIT_END>>"


def tokenize(text: str) -> list[str]:
    """Split canonical text into tokens (newlines kept, markers atomic)."""
    return [tok.text for tok in lex(text, keep_layout=True) if tok.kind != "eof"]


def detokenize(tokens: list[str]) -> str:
    """Rebuild canonical text from a token stream; inverse of tokenize."""
    text = render(list(tokens))
    return text if text.endswith("\n") or not text else text + "\n"
