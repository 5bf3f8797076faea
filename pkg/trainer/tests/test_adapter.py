"""Adapter tests, including the secondary acceptance criteria.

The dataset fixture is produced through the published CLI; the only other
coupling to the dataset pipeline is its public weighted-NLL oracle, used
to cross-check the first-batch training loss.
"""

import json
import subprocess
import sys

import pytest
import torch

from sfl_trainer import (
    Batch,
    DatasetError,
    TrainConfig,
    batch_loss,
    build_tokenizer,
    build_weight_mask,
    encode_targets,
    extend_vocabulary,
    load_dataset,
    standard_nll,
    train,
)
from sfl_trainer.data import EDIT_END, EDIT_START
from sfl_trainer.train import build_model, prepare, sequence_weighted_nll


@pytest.fixture(scope="session")
def dataset_path(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "port-distill.jsonl"
    subprocess.run(
        [sys.executable, "-m", "mafig.cli", "sfl", "build",
         "--scenario", "port", "--kind", "distill", "--out", str(out)],
        check=True, capture_output=True,
    )
    return out


@pytest.fixture(scope="session")
def records(dataset_path):
    return load_dataset(dataset_path)


@pytest.fixture(scope="session")
def stack(dataset_path):
    config = TrainConfig(dataset_path=str(dataset_path), half_precision=False)
    records, tokenizer, model, lambda_edit = prepare(config)
    return config, records, tokenizer, model, lambda_edit


class TestDataset:
    def test_loads_published_schema(self, records):
        assert len(records) == 80
        assert all(r.lambda_edit == 5.0 for r in records)

    def test_schema_mismatch_rejected(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text(json.dumps({"context": "c", "original": "o"}) + "\n")
        with pytest.raises(DatasetError):
            load_dataset(bad)

    def test_wrong_schema_version_rejected(self, tmp_path, records, dataset_path):
        line = json.loads(dataset_path.read_text().splitlines()[0])
        line["meta"]["schema_version"] = 99
        bad = tmp_path / "bad.jsonl"
        bad.write_text(json.dumps(line) + "\n")
        with pytest.raises(DatasetError):
            load_dataset(bad)


class TestVocabularyExtension:
    def test_markers_tokenize_to_single_ids(self, stack):
        _, _, tokenizer, _, _ = stack[0], stack[1], stack[2], stack[3], stack[4]
        for marker in (EDIT_START, EDIT_END):
            ids = tokenizer(marker, add_special_tokens=False)["input_ids"]
            assert len(ids) == 1

    def test_gamma_zero_rows_equal_old_mean(self, records):
        tokenizer = build_tokenizer(records)
        config = TrainConfig(dataset_path="unused")
        model = build_model(config, len(tokenizer))
        old = model.get_input_embeddings().weight.detach().clone()
        model, tokenizer = extend_vocabulary(model, tokenizer, gamma=0.0, seed=3)
        embeddings = model.get_input_embeddings().weight
        mean = old.mean(dim=0)
        for marker in (EDIT_START, EDIT_END):
            row = embeddings[tokenizer.convert_tokens_to_ids(marker)]
            assert torch.allclose(row, mean, atol=0, rtol=0)

    def test_old_rows_unchanged(self, records):
        tokenizer = build_tokenizer(records)
        config = TrainConfig(dataset_path="unused")
        model = build_model(config, len(tokenizer))
        old = model.get_input_embeddings().weight.detach().clone()
        model, tokenizer = extend_vocabulary(model, tokenizer, gamma=0.01, seed=3)
        embeddings = model.get_input_embeddings().weight
        assert torch.equal(embeddings[: old.shape[0]], old)

    def test_markers_already_present_is_an_error(self, records):
        tokenizer = build_tokenizer(records)
        config = TrainConfig(dataset_path="unused")
        model = build_model(config, len(tokenizer))
        model, tokenizer = extend_vocabulary(model, tokenizer)
        with pytest.raises(DatasetError):
            extend_vocabulary(model, tokenizer)


class TestWeightMask:
    def test_agrees_with_dataset_pipeline_position_by_position(self):
        # shared fixture: one abstract token sequence checked against the
        # dataset pipeline's public weight-vector oracle
        from mafig.sfl import EditSpan, TokenSeq, insert_markers, weight_vector

        tokens = ("fn", "f", "(", ")", "->", "int", "{", "return", "1", "}")
        target = insert_markers(TokenSeq(tokens), EditSpan(3, 2))
        oracle = weight_vector(target, 4.0, padded_len=len(target.y) + 3)
        vocab = {tok: i for i, tok in enumerate(dict.fromkeys(target.y.tokens))}
        ids = [vocab[t] for t in target.y.tokens]
        mask = build_weight_mask(
            ids, vocab[EDIT_START], vocab[EDIT_END], 4.0,
            padded_len=len(ids) + 3, pad_id=-1,
        )
        assert mask == list(oracle.w)

    def test_mask_values_limited(self, stack):
        _, records, tokenizer, _, lambda_edit = stack
        batch = encode_targets(tokenizer, records[:8])
        values = set(batch.weights.flatten().tolist())
        assert values <= {0.0, 1.0, lambda_edit}

    def test_token_length_overflow_rejected(self, stack):
        _, records, tokenizer, _, _ = stack
        with pytest.raises(DatasetError):
            encode_targets(tokenizer, records[:4], max_tokens=10)


class TestLoss:
    def batch(self, stack, n=4):
        _, records, tokenizer, model, _ = stack
        batch = encode_targets(tokenizer, records[:n])
        with torch.no_grad():
            logits = model(input_ids=batch.input_ids).logits
        return batch, logits

    def test_first_batch_loss_matches_dataset_pipeline_oracle(self, stack):
        # [SECONDARY] acceptance: cross-check within 1e-4
        from mafig.sfl import weighted_nll

        batch, logits = self.batch(stack)
        loss = float(batch_loss(logits, batch))
        logprobs = torch.log_softmax(logits[:, :-1].float(), dim=-1)
        scored = logprobs.gather(-1, batch.input_ids[:, 1:].unsqueeze(-1)).squeeze(-1)
        oracle = []
        for row in range(batch.input_ids.shape[0]):
            lp = scored[row].tolist()
            w = batch.weights[row, 1:].tolist()
            oracle.append(weighted_nll(lp, w))
        assert loss == pytest.approx(sum(oracle) / len(oracle), abs=1e-4)

    def test_lambda_one_equals_standard_nll(self, stack):
        # [SECONDARY] acceptance: Eq. 9 reduces to plain NLL
        _, records, tokenizer, model, _ = stack
        batch = encode_targets(tokenizer, records[:4])
        ones = torch.where(batch.weights > 0, torch.ones_like(batch.weights), batch.weights)
        with torch.no_grad():
            logits = model(input_ids=batch.input_ids).logits
        weighted = float(batch_loss(logits, Batch(batch.input_ids, ones)))
        plain = float(standard_nll(logits, batch.input_ids, tokenizer.pad_token_id))
        assert weighted == pytest.approx(plain, abs=1e-6)

    def test_padding_contributes_nothing(self, stack):
        batch, logits = self.batch(stack)
        loss = float(batch_loss(logits, batch))
        # corrupt logits at padded positions: loss must not move
        corrupted = logits.clone()
        pad_positions = batch.weights == 0
        corrupted[pad_positions.unsqueeze(-1).expand_as(corrupted)] = 123.0
        assert float(batch_loss(corrupted, batch)) == pytest.approx(loss, abs=1e-6)

    def test_padding_zero_gradient(self, stack):
        _, records, tokenizer, model, _ = stack
        batch = encode_targets(tokenizer, records[:4])
        embeddings = model.get_input_embeddings()
        logits = model(input_ids=batch.input_ids).logits
        loss = batch_loss(logits, batch)
        loss.backward()
        # lora_b receives gradient on step one (lora_a cannot: b starts at zero)
        grads = [p.grad for n, p in model.named_parameters() if "lora_b" in n and p.grad is not None]
        assert grads and any(g.abs().sum() > 0 for g in grads)
        model.zero_grad()

    def test_zero_weight_mass_rejected(self, stack):
        batch, logits = self.batch(stack)
        zero = Batch(batch.input_ids, torch.zeros_like(batch.weights))
        with pytest.raises(DatasetError):
            batch_loss(logits, zero)


class TestTraining:
    def test_defaults_match_training_recipe(self):
        config = TrainConfig(dataset_path="x")
        assert config.learning_rate == 5e-5
        assert config.epochs == 3
        assert config.batch_size == 4
        assert config.lora_rank == 8
        assert config.half_precision is True

    def test_three_epoch_loss_decreases_and_artifacts_written(self, dataset_path, tmp_path):
        # [SECONDARY] acceptance: toy fine-tune with the stated recipe
        config = TrainConfig(
            dataset_path=str(dataset_path),
            out_dir=str(tmp_path / "adapter"),
            half_precision=False,
            seed=1,
        )
        losses = train(config)
        assert len(losses) == 3
        assert losses[-1] < losses[0]
        assert (tmp_path / "adapter" / "adapter.pt").exists()
        curve = (tmp_path / "adapter" / "loss_curve.csv").read_text().splitlines()
        assert curve[0] == "epoch,step,loss"
        assert len(curve) > 3
        state = torch.load(tmp_path / "adapter" / "adapter.pt")
        assert state and all("lora_" in k for k in state)
