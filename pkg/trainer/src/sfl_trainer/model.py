"""Vocabulary extension and a minimal low-rank adapter.

New marker embeddings are drawn from the statistics of the existing
rows: row = mean + Normal(0, gamma * variance) per dimension, so the new
tokens start out statistically aligned with the pretrained space. The
adapter wraps the attention projections with rank-r updates (B zero-
initialized, so training starts from the base function exactly).
"""

from __future__ import annotations

import torch
from torch import nn

from .data import EDIT_END, EDIT_START, DatasetError

MARKERS = (EDIT_START, EDIT_END)


def extend_vocabulary(model, tokenizer, gamma: float = 0.01, seed: int = 0):
    """Add both markers as single tokens and initialize their embeddings.

    Preconditions: the markers are absent from the vocabulary. Existing
    rows are left untouched; with gamma=0 the new rows equal the
    per-dimension mean of the old matrix exactly.
    """
    if gamma < 0:
        raise DatasetError("gamma must be nonnegative")
    vocab = tokenizer.get_vocab()
    present = [m for m in MARKERS if m in vocab]
    if present:
        raise DatasetError(f"markers already present in the vocabulary: {present}")
    old_matrix = model.get_input_embeddings().weight.detach().clone()
    added = tokenizer.add_special_tokens({"additional_special_tokens": list(MARKERS)})
    assert added == len(MARKERS)
    model.resize_token_embeddings(len(tokenizer), mean_resizing=False)
    embeddings = model.get_input_embeddings().weight
    mu = old_matrix.mean(dim=0)
    var = old_matrix.var(dim=0, unbiased=False)
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        embeddings[: old_matrix.shape[0]] = old_matrix
        for offset, marker in enumerate(MARKERS):
            row_index = tokenizer.convert_tokens_to_ids(marker)
            noise = torch.randn(old_matrix.shape[1], generator=generator) * torch.sqrt(gamma * var)
            embeddings[row_index] = mu + noise
    for marker in MARKERS:
        ids = tokenizer(marker, add_special_tokens=False)["input_ids"]
        if len(ids) != 1:
            raise DatasetError(f"{marker} does not tokenize to a single id")
    return model, tokenizer


class LoraLayer(nn.Module):
    """Rank-r additive update around a frozen projection.

    Handles both nn.Linear (weight (out, in)) and the Conv1D modules used
    by GPT-2 blocks (weight (in, out)).
    """

    def __init__(self, base: nn.Module, rank: int, alpha: float = 16.0):
        super().__init__()
        self.base = base
        weight = base.weight
        if isinstance(base, nn.Linear):
            in_features, out_features = weight.shape[1], weight.shape[0]
        else:  # Conv1D: weight is (in, out)
            in_features, out_features = weight.shape[0], weight.shape[1]
        self.lora_a = nn.Parameter(torch.empty(in_features, rank))
        self.lora_b = nn.Parameter(torch.zeros(rank, out_features))
        nn.init.normal_(self.lora_a, std=0.02)
        self.scale = alpha / rank
        for parameter in self.base.parameters():
            parameter.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + (x @ self.lora_a @ self.lora_b) * self.scale


def apply_lora(model, rank: int = 8, alpha: float = 16.0) -> list[str]:
    """Freeze the base model and wrap every attention projection with a
    rank-r adapter. Returns the wrapped module paths."""
    for parameter in model.parameters():
        parameter.requires_grad_(False)
    wrapped: list[str] = []
    for name, module in list(model.named_modules()):
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("c_attn", "c_proj") and "attn" in name:
            parent = model.get_submodule(name.rsplit(".", 1)[0])
            setattr(parent, leaf, LoraLayer(module, rank, alpha))
            wrapped.append(name)
    if not wrapped:
        raise DatasetError("no attention projections found to adapt")
    return wrapped


def adapter_state(model) -> dict[str, torch.Tensor]:
    return {
        name: parameter.detach().clone()
        for name, parameter in model.named_parameters()
        if "lora_" in name
    }
