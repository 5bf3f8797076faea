"""Toy fine-tune over the distillation dataset with the span-weighted loss.

Per-sequence loss: -(sum_i w_i * log P(x_i | x_<i)) / (sum_i w_i), where
the weights put lambda on the edit span and markers, 1 on other real
tokens and 0 on padding; the batch loss is the mean over sequences.
With every weight at 1 this reduces to the standard per-token NLL.
"""

from __future__ import annotations

import argparse
import csv
import math
from dataclasses import dataclass
from pathlib import Path

import torch
from torch.optim import AdamW
from torch.optim.lr_scheduler import CosineAnnealingLR
from transformers import GPT2Config, GPT2LMHeadModel

from .data import Batch, DatasetError, build_tokenizer, encode_targets, load_dataset
from .model import apply_lora, adapter_state, extend_vocabulary


@dataclass
class TrainConfig:
    dataset_path: str
    out_dir: str = "adapter-out"
    learning_rate: float = 5e-5
    epochs: int = 3
    batch_size: int = 4
    lora_rank: int = 8
    half_precision: bool = True
    gamma: float = 0.01
    seed: int = 0
    max_tokens: int = 2560
    # toy base-model dimensions; well under the desk-scale parameter cap
    n_layer: int = 2
    n_head: int = 4
    n_embd: int = 128
    n_positions: int = 1024


def sequence_weighted_nll(logits: torch.Tensor, input_ids: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """Per-sequence weighted NLL for a causal LM, batched.

    Position i is scored by the logits at i-1 (no loss for the first
    token, which has no context); weights align with the scored token.
    """
    logprobs = torch.log_softmax(logits[:, :-1].float(), dim=-1)
    scored = logprobs.gather(-1, input_ids[:, 1:].unsqueeze(-1)).squeeze(-1)
    w = weights[:, 1:]
    mass = w.sum(dim=1)
    if torch.any(mass <= 0):
        raise DatasetError("a sequence has zero weight mass")
    return -(w * scored).sum(dim=1) / mass


def batch_loss(logits: torch.Tensor, batch: Batch) -> torch.Tensor:
    return sequence_weighted_nll(logits, batch.input_ids, batch.weights).mean()


def standard_nll(logits: torch.Tensor, input_ids: torch.Tensor, pad_id: int) -> torch.Tensor:
    """Plain per-token NLL over real tokens, per sequence then averaged."""
    logprobs = torch.log_softmax(logits[:, :-1].float(), dim=-1)
    scored = logprobs.gather(-1, input_ids[:, 1:].unsqueeze(-1)).squeeze(-1)
    mask = (input_ids[:, 1:] != pad_id).float()
    return (-(mask * scored).sum(dim=1) / mask.sum(dim=1)).mean()


def build_model(config: TrainConfig, vocab_size: int) -> GPT2LMHeadModel:
    torch.manual_seed(config.seed)
    model_config = GPT2Config(
        vocab_size=vocab_size,
        n_layer=config.n_layer,
        n_head=config.n_head,
        n_embd=config.n_embd,
        n_positions=config.n_positions,
        bos_token_id=None,
        eos_token_id=None,
    )
    return GPT2LMHeadModel(model_config)


def prepare(config: TrainConfig):
    """Dataset -> tokenizer -> extended model -> adapter; shared by the
    trainer and the tests."""
    records = load_dataset(config.dataset_path)
    lambda_edit = records[0].lambda_edit
    tokenizer = build_tokenizer(records)
    model = build_model(config, len(tokenizer))
    model, tokenizer = extend_vocabulary(model, tokenizer, gamma=config.gamma, seed=config.seed)
    apply_lora(model, rank=config.lora_rank)
    return records, tokenizer, model, lambda_edit


def train(config: TrainConfig) -> list[float]:
    """Fine-tune and write adapter weights plus a per-epoch loss curve.

    Returns the per-epoch mean losses (length config.epochs).
    """
    records, tokenizer, model, _ = prepare(config)
    batch = encode_targets(tokenizer, records, config.max_tokens)
    trainable = [p for p in model.parameters() if p.requires_grad]
    optimizer = AdamW(trainable, lr=config.learning_rate)
    steps_per_epoch = math.ceil(len(records) / config.batch_size)
    scheduler = CosineAnnealingLR(optimizer, T_max=max(steps_per_epoch * config.epochs, 1))
    autocast_dtype = torch.bfloat16 if config.half_precision else None
    epoch_losses: list[float] = []
    step_rows: list[tuple[int, int, float]] = []
    model.train()
    step = 0
    for epoch in range(config.epochs):
        total = 0.0
        count = 0
        for offset in range(0, batch.input_ids.shape[0], config.batch_size):
            ids = batch.input_ids[offset: offset + config.batch_size]
            weights = batch.weights[offset: offset + config.batch_size]
            optimizer.zero_grad()
            if autocast_dtype is not None:
                with torch.autocast("cpu", dtype=autocast_dtype):
                    logits = model(input_ids=ids).logits
            else:
                logits = model(input_ids=ids).logits
            loss = batch_loss(logits, Batch(ids, weights))
            loss.backward()
            optimizer.step()
            scheduler.step()
            step += 1
            total += float(loss.detach())
            count += 1
            step_rows.append((epoch, step, float(loss.detach())))
        epoch_losses.append(total / count)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(adapter_state(model), out / "adapter.pt")
    with (out / "loss_curve.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "step", "loss"])
        writer.writerows(step_rows)
    return epoch_losses


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Fine-tune a toy causal LM on the distillation dataset.")
    parser.add_argument("--dataset", required=True)
    parser.add_argument("--out", default="adapter-out")
    parser.add_argument("--epochs", type=int, default=3)
    parser.add_argument("--batch-size", type=int, default=4)
    parser.add_argument("--learning-rate", type=float, default=5e-5)
    parser.add_argument("--lora-rank", type=int, default=8)
    parser.add_argument("--fp32", action="store_true", help="disable mixed precision")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    config = TrainConfig(
        dataset_path=args.dataset,
        out_dir=args.out,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        lora_rank=args.lora_rank,
        half_precision=not args.fp32,
        seed=args.seed,
    )
    losses = train(config)
    for epoch, loss in enumerate(losses, 1):
        print(f"epoch {epoch}: loss {loss:.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
