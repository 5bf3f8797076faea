"""Span-focused distillation pipeline.

Builds edit-span supervision from (original, revised) function pairs:
token-level diff span extraction, marker insertion, per-token weight
vectors, the span-weighted negative log likelihood, statistics-based
embedding initialization for the marker tokens, and JSONL dataset
emission for the trainer.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dsl import EDIT_END, EDIT_START, TOKENIZER_ID, detokenize, parse, tokenize
from .errors import IdenticalSequencesError, SflError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_LAMBDA_EDIT = 5.0
DEFAULT_GAMMA = 0.01

#: Distillation dataset sizes per scenario fixture.
DISTILL_COUNTS = {"port": 80, "warehouse": 170, "deck": 120}


@dataclass(frozen=True)
class TokenSeq:
    tokens: tuple[str, ...]
    tokenizer_id: str = TOKENIZER_ID

    def __len__(self) -> int:
        return len(self.tokens)


def token_seq(text: str) -> TokenSeq:
    return TokenSeq(tuple(tokenize(text)))


@dataclass(frozen=True)
class EditSpan:
    """1-based span [k, k+m] in the revised sequence; m = -1 means empty."""

    k: int
    m: int

    def __post_init__(self) -> None:
        if self.k < 1 or self.m < -1:
            raise SflError(f"invalid span k={self.k}, m={self.m}")


@dataclass(frozen=True)
class SupervisionTarget:
    y: TokenSeq
    span_range: tuple[int, int]  # 0-based [start, stop) of span tokens inside y, markers excluded

    def __post_init__(self) -> None:
        toks = self.y.tokens
        if toks.count(EDIT_START) != 1 or toks.count(EDIT_END) != 1:
            raise SflError("target must contain exactly one start and one end marker")
        if toks.index(EDIT_START) >= toks.index(EDIT_END):
            raise SflError("start marker must precede end marker")


def strip_markers(y: TokenSeq) -> TokenSeq:
    return TokenSeq(tuple(t for t in y.tokens if t not in (EDIT_START, EDIT_END)), y.tokenizer_id)


def diff_span(f: TokenSeq, fstar: TokenSeq) -> EditSpan:
    """Locate the minimal contiguous edit region of the revised sequence.

    The prefix is the longest common prefix; the suffix is the longest
    common suffix of the remainders. Multi-hunk edits collapse to the
    minimal covering span; a pure deletion yields an empty span whose
    markers end up adjacent.
    """
    a, b = f.tokens, fstar.tokens
    if a == b:
        raise IdenticalSequencesError("sequences are identical; nothing to diff")
    limit = min(len(a), len(b))
    p = 0
    while p < limit and a[p] == b[p]:
        p += 1
    s = 0
    while s < limit - p and a[len(a) - 1 - s] == b[len(b) - 1 - s]:
        s += 1
    k = p + 1
    end = len(b) - s  # last spanned position, 1-based
    return EditSpan(k, end - k)


def insert_markers(fstar: TokenSeq, span: EditSpan) -> SupervisionTarget:
    """Wrap the edit span of the revised sequence in the marker tokens."""
    toks = fstar.tokens
    start = span.k - 1
    stop = span.k + span.m  # exclusive, 0-based
    if start < 0 or stop > len(toks) or start > stop:
        raise SflError(f"span [{span.k}, {span.k + span.m}] out of range for length {len(toks)}")
    y = toks[:start] + (EDIT_START,) + toks[start:stop] + (EDIT_END,) + toks[stop:]
    return SupervisionTarget(TokenSeq(y, fstar.tokenizer_id), (start + 1, stop + 1))


@dataclass(frozen=True)
class WeightVector:
    w: tuple[float, ...]

    def __post_init__(self) -> None:
        if sum(self.w) <= 0:
            raise SflError("weight vector must have positive mass")


def weight_vector(target: SupervisionTarget, lambda_edit: float = DEFAULT_LAMBDA_EDIT, padded_len: int | None = None) -> WeightVector:
    """Per-token weights: lambda on the span and both markers, 1 on other
    real tokens, 0 on the padding tail. lambda is usually > 1; exactly 1
    degrades to plain NLL weighting.
    """
    if lambda_edit < 1:
        raise SflError("lambda_edit must be >= 1")
    return _weights(target, lambda_edit, padded_len)


def _weights(target: SupervisionTarget, lambda_edit: float, padded_len: int | None) -> WeightVector:
    n = len(target.y)
    total = n if padded_len is None else padded_len
    if total < n:
        raise SflError(f"padded length {total} shorter than sequence {n}")
    start, stop = target.span_range
    w = [1.0] * n + [0.0] * (total - n)
    for i in range(start - 1, stop + 1):  # span plus the two adjacent markers
        w[i] = float(lambda_edit)
    return WeightVector(tuple(w))


def weighted_nll(logprobs: Sequence[float], weights: WeightVector | Sequence[float]) -> float:
    """Weighted negative log likelihood: -(sum w_i * lp_i) / (sum w_i)."""
    w = weights.w if isinstance(weights, WeightVector) else tuple(weights)
    if len(logprobs) != len(w):
        raise SflError(f"length mismatch: {len(logprobs)} logprobs vs {len(w)} weights")
    if any(lp > 0 for lp in logprobs):
        raise SflError("logprobs must be <= 0")
    mass = sum(w)
    if mass <= 0:
        raise SflError("weights sum to zero")
    return -sum(wi * lp for wi, lp in zip(w, logprobs)) / mass


@dataclass(frozen=True)
class EmbeddingStats:
    """Per-dimension mean/variance of an embedding matrix plus the noise scale."""

    dim: int
    mu: tuple[float, ...]
    var: tuple[float, ...]
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self) -> None:
        if len(self.mu) != self.dim or len(self.var) != self.dim:
            raise SflError("statistics do not match the declared dimension")
        if any(v < 0 for v in self.var):
            raise SflError("variance must be componentwise nonnegative")
        if self.gamma < 0:
            raise SflError("gamma must be nonnegative")


def embedding_stats(matrix, gamma: float = DEFAULT_GAMMA, scalar: bool = False) -> EmbeddingStats:
    """Compute mean/variance statistics of existing token embeddings.

    scalar=True collapses to a single mean/variance broadcast across
    dimensions instead of the per-dimension default.
    """
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2:
        raise SflError("embedding matrix must be 2-dimensional")
    dim = arr.shape[1]
    if scalar:
        mu = float(arr.mean())
        var = float(arr.var())
        return EmbeddingStats(dim, (mu,) * dim, (var,) * dim, gamma)
    return EmbeddingStats(dim, tuple(arr.mean(axis=0)), tuple(arr.var(axis=0)), gamma)


def embedding_init(stats: EmbeddingStats, seed: int) -> np.ndarray:
    """Draw one new embedding row: mean plus Normal(0, gamma * var) noise."""
    rng = np.random.default_rng(seed)
    mu = np.array(stats.mu)
    if stats.gamma == 0:
        return mu.copy()
    sigma = np.sqrt(stats.gamma * np.array(stats.var))
    return mu + rng.normal(0.0, 1.0, size=stats.dim) * sigma


@dataclass(frozen=True)
class DistillPair:
    """One teacher pair: aggregated context, original source, revised source."""

    case_id: str
    scenario: str
    category: str
    function: str
    context: str
    original: str
    revised: str


@dataclass
class DistillRecord:
    context: str
    original: str
    target_with_markers: str
    meta: dict = field(default_factory=dict)


def build_record(pair: DistillPair, lambda_edit: float = DEFAULT_LAMBDA_EDIT) -> DistillRecord:
    f = token_seq(pair.original)
    fstar = token_seq(pair.revised)
    span = diff_span(f, fstar)
    target = insert_markers(fstar, span)
    marked_text = detokenize(list(target.y.tokens))
    stripped = strip_markers(target.y)
    if stripped.tokens != fstar.tokens:
        raise SflError("marker round-trip failed")  # unreachable by construction
    parse(_drop_markers_text(marked_text), capabilities=_ANY_CAPS)
    return DistillRecord(
        context=pair.context,
        original=pair.original,
        target_with_markers=marked_text,
        meta={
            "scenario": pair.scenario,
            "category": pair.category,
            "function": pair.function,
            "case_id": pair.case_id,
            "lambda_edit": lambda_edit,
            "tokenizer_id": f.tokenizer_id,
            "schema_version": SCHEMA_VERSION,
        },
    )


class _AnyCaps(frozenset):
    def __contains__(self, name) -> bool:  # noqa: D105
        return True


_ANY_CAPS = _AnyCaps()


def _drop_markers_text(marked_text: str) -> str:
    return detokenize([t for t in tokenize(marked_text) if t not in (EDIT_START, EDIT_END)])


def build_distill_dataset(
    pairs: Iterable[DistillPair],
    out_path: str | Path,
    lambda_edit: float = DEFAULT_LAMBDA_EDIT,
) -> list[DistillRecord]:
    """Write one JSONL record per pair, skipping identical pairs with a
    logged warning. Output ordering is deterministic (sorted by case id)."""
    records: list[tuple[str, DistillRecord]] = []
    for pair in pairs:
        try:
            records.append((pair.case_id, build_record(pair, lambda_edit)))
        except IdenticalSequencesError:
            log.warning("skipping identical pair for %s/%s", pair.case_id, pair.function)
    records.sort(key=lambda item: item[0])
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for _, rec in records:
            fh.write(json.dumps({
                "context": rec.context,
                "original": rec.original,
                "target_with_markers": rec.target_with_markers,
                "meta": rec.meta,
            }, sort_keys=True) + "\n")
    return [rec for _, rec in records]
