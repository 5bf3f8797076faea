"""Dataset loading for the span-focused distillation JSONL.

The trainer consumes only the published record schema: {context, original,
target_with_markers, meta:{scenario, category, function, case_id,
lambda_edit, tokenizer_id, schema_version}}. Sequences are tokenized with
a WordLevel tokenizer trained on the dataset corpus, and each target gets
a per-token weight mask: lambda on the edit span and both markers, 1 on
other real tokens, 0 on padding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch
from tokenizers import Tokenizer, models, pre_tokenizers, trainers
from transformers import PreTrainedTokenizerFast

EDIT_START = "<<EDIT_START>>"
EDIT_END = "<<EDIT_END>>"
SCHEMA_VERSION = 1
MAX_TOKENS = 2560

_META_FIELDS = {"scenario", "category", "function", "case_id", "lambda_edit", "tokenizer_id", "schema_version"}
_RECORD_FIELDS = {"context", "original", "target_with_markers", "meta"}


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    context: str
    original: str
    target: str
    lambda_edit: float
    meta: dict


def load_dataset(path: str | Path) -> list[Record]:
    """Read and schema-check a distillation JSONL file."""
    records = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        data = json.loads(line)
        missing = _RECORD_FIELDS - set(data)
        if missing:
            raise DatasetError(f"line {line_no}: missing fields {sorted(missing)}")
        meta = data["meta"]
        meta_missing = _META_FIELDS - set(meta)
        if meta_missing:
            raise DatasetError(f"line {line_no}: missing meta fields {sorted(meta_missing)}")
        if meta["schema_version"] != SCHEMA_VERSION:
            raise DatasetError(f"line {line_no}: unsupported schema_version {meta['schema_version']!r}")
        target = data["target_with_markers"]
        if target.count(EDIT_START) != 1 or target.count(EDIT_END) != 1:
            raise DatasetError(f"line {line_no}: target must carry exactly one marker pair")
        records.append(Record(
            context=data["context"],
            original=data["original"],
            target=target,
            lambda_edit=float(meta["lambda_edit"]),
            meta=meta,
        ))
    if not records:
        raise DatasetError(f"no records in {path}")
    lambdas = {r.lambda_edit for r in records}
    if len(lambdas) > 1:
        raise DatasetError(f"mixed lambda_edit values in dataset: {sorted(lambdas)}")
    return records


def build_tokenizer(records: Sequence[Record]) -> PreTrainedTokenizerFast:
    """Train a WordLevel tokenizer on the corpus, markers excluded.

    The marker byte sequences stay out of the vocabulary so that the
    vocabulary-extension step starts from a clean slate.
    """
    tokenizer = Tokenizer(models.WordLevel(unk_token="[UNK]"))
    tokenizer.pre_tokenizer = pre_tokenizers.Whitespace()
    trainer = trainers.WordLevelTrainer(special_tokens=["[UNK]", "[PAD]"])
    corpus = [r.context for r in records] + [r.original for r in records]
    tokenizer.train_from_iterator(corpus, trainer)
    return PreTrainedTokenizerFast(
        tokenizer_object=tokenizer,
        unk_token="[UNK]",
        pad_token="[PAD]",
    )


def build_weight_mask(
    ids: Sequence[int],
    start_id: int,
    end_id: int,
    lambda_edit: float,
    padded_len: int,
    pad_id: int,
) -> list[float]:
    """Per-token weights over one padded sequence.

    lambda on the span and both markers, 1 on other real tokens, 0 on the
    padding tail. Mirrors the dataset pipeline's weight-vector contract.
    """
    if lambda_edit < 1:
        raise DatasetError("lambda_edit must be >= 1")
    if padded_len < len(ids):
        raise DatasetError(f"padded length {padded_len} shorter than sequence {len(ids)}")
    positions = [i for i, t in enumerate(ids) if t == start_id]
    ends = [i for i, t in enumerate(ids) if t == end_id]
    if len(positions) != 1 or len(ends) != 1 or positions[0] >= ends[0]:
        raise DatasetError("sequence must carry one start marker before one end marker")
    weights = [1.0] * len(ids) + [0.0] * (padded_len - len(ids))
    for i in range(positions[0], ends[0] + 1):
        weights[i] = float(lambda_edit)
    return weights


@dataclass
class Batch:
    input_ids: torch.Tensor  # (B, T)
    weights: torch.Tensor  # (B, T)


def encode_targets(
    tokenizer: PreTrainedTokenizerFast,
    records: Sequence[Record],
    max_tokens: int = MAX_TOKENS,
) -> Batch:
    """Tokenize the marked targets into one padded tensor pair."""
    start_id = tokenizer.convert_tokens_to_ids(EDIT_START)
    end_id = tokenizer.convert_tokens_to_ids(EDIT_END)
    unk_id = tokenizer.convert_tokens_to_ids(tokenizer.unk_token)
    if start_id in (None, unk_id) or end_id in (None, unk_id):
        raise DatasetError("tokenizer does not know the marker tokens; extend the vocabulary first")
    encoded = [tokenizer(r.target, add_special_tokens=False)["input_ids"] for r in records]
    for ids, record in zip(encoded, records):
        if len(ids) > max_tokens:
            raise DatasetError(
                f"record {record.meta['case_id']}/{record.meta['function']} "
                f"has {len(ids)} tokens, exceeding the {max_tokens} cap"
            )
    width = max(len(ids) for ids in encoded)
    pad_id = tokenizer.pad_token_id
    rows, masks = [], []
    for ids, record in zip(encoded, records):
        rows.append(ids + [pad_id] * (width - len(ids)))
        masks.append(build_weight_mask(ids, start_id, end_id, record.lambda_edit, width, pad_id))
    return Batch(torch.tensor(rows, dtype=torch.long), torch.tensor(masks, dtype=torch.float32))
