"""Reference consumer of the span-focused distillation dataset."""

from .data import Batch, DatasetError, build_tokenizer, build_weight_mask, encode_targets, load_dataset
from .model import adapter_state, apply_lora, extend_vocabulary
from .train import TrainConfig, batch_loss, sequence_weighted_nll, standard_nll, train

__all__ = [
    "Batch",
    "DatasetError",
    "TrainConfig",
    "adapter_state",
    "apply_lora",
    "batch_loss",
    "build_tokenizer",
    "build_weight_mask",
    "encode_targets",
    "extend_vocabulary",
    "load_dataset",
    "sequence_weighted_nll",
    "standard_nll",
    "train",
]
