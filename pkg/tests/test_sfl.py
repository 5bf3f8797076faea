import json
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mafig.dsl import EDIT_END, EDIT_START
from mafig.errors import IdenticalSequencesError, SflError
from mafig.sfl import (
    DistillPair,
    EditSpan,
    EmbeddingStats,
    TokenSeq,
    build_distill_dataset,
    build_record,
    diff_span,
    embedding_init,
    embedding_stats,
    insert_markers,
    strip_markers,
    token_seq,
    weight_vector,
    weighted_nll,
)


def brute_force_span(f: tuple, fstar: tuple) -> tuple[int, int]:
    """Independent oracle: maximize common prefix+suffix over all splits,
    preferring the largest prefix on ties."""
    best = None
    limit = min(len(f), len(fstar))
    for p in range(limit + 1):
        if f[:p] != fstar[:p]:
            break
        for s in range(limit - p + 1):
            if (s == 0 or (f[len(f) - s:] == fstar[len(fstar) - s:])) and p + s <= limit:
                key = (p + s, p, s)
                if best is None or key > best:
                    best = key
    assert best is not None
    _, p, s = best
    return p + 1, (len(fstar) - s) - (p + 1)


def seqs(*tokens):
    return TokenSeq(tuple(tokens))


class TestDiffSpan:
    def test_substitution_example(self):
        span = diff_span(seqs("a", "b", "c", "d"), seqs("a", "x", "y", "d"))
        assert (span.k, span.m) == (2, 1)

    def test_pure_insertion_example(self):
        span = diff_span(seqs("a", "b"), seqs("a", "z", "b"))
        assert (span.k, span.m) == (2, 0)

    def test_identical_sequences_error(self):
        with pytest.raises(IdenticalSequencesError):
            diff_span(seqs("a", "b"), seqs("a", "b"))

    def test_pure_deletion_yields_empty_span(self):
        span = diff_span(seqs("a", "b", "c"), seqs("a", "c"))
        assert span.m == -1
        target = insert_markers(seqs("a", "c"), span)
        assert list(target.y.tokens) == ["a", EDIT_START, EDIT_END, "c"]

    def test_matches_brute_force_oracle_randomized(self):
        rng = random.Random(11)
        vocab = list("abcde")
        for _ in range(400):
            f = tuple(rng.choice(vocab) for _ in range(rng.randint(1, 12)))
            fstar = tuple(rng.choice(vocab) for _ in range(rng.randint(1, 12)))
            if f == fstar:
                continue
            span = diff_span(TokenSeq(f), TokenSeq(fstar))
            assert (span.k, span.m) == brute_force_span(f, fstar)

    def test_prefix_suffix_alignment_invariant(self):
        rng = random.Random(5)
        vocab = list("xyz")
        for _ in range(200):
            f = tuple(rng.choice(vocab) for _ in range(rng.randint(1, 10)))
            fstar = tuple(rng.choice(vocab) for _ in range(rng.randint(1, 10)))
            if f == fstar:
                continue
            span = diff_span(TokenSeq(f), TokenSeq(fstar))
            p = span.k - 1
            s = len(fstar) - (span.k + span.m)
            assert f[:p] == fstar[:p]
            assert s >= 0
            assert (s == 0) or f[len(f) - s:] == fstar[len(fstar) - s:]


class TestMarkers:
    def test_insert_markers_example(self):
        target = insert_markers(seqs("a", "x", "y", "d"), EditSpan(2, 1))
        assert list(target.y.tokens) == ["a", EDIT_START, "x", "y", EDIT_END, "d"]
        assert len(target.y) == 6

    def test_whole_sequence_span(self):
        target = insert_markers(seqs("p", "q"), EditSpan(1, 1))
        assert list(target.y.tokens) == [EDIT_START, "p", "q", EDIT_END]

    def test_strip_inverts_insert(self):
        rng = random.Random(3)
        for _ in range(100):
            n = rng.randint(1, 8)
            toks = tuple(f"t{i}" for i in range(n))
            k = rng.randint(1, n)
            m = rng.randint(-1, n - k)
            target = insert_markers(TokenSeq(toks), EditSpan(k, m))
            assert strip_markers(target.y).tokens == toks

    def test_out_of_range_span_rejected(self):
        with pytest.raises(SflError):
            insert_markers(seqs("a"), EditSpan(3, 0))

    def test_marker_count_validated(self):
        with pytest.raises(SflError):
            from mafig.sfl import SupervisionTarget
            SupervisionTarget(seqs("a", EDIT_START, "b"), (2, 3))


class TestWeights:
    def target(self):
        return insert_markers(seqs("a", "x", "y", "d"), EditSpan(2, 1))

    def test_weight_vector_example(self):
        w = weight_vector(self.target(), 5.0, padded_len=8)
        assert list(w.w) == [1, 5, 5, 5, 5, 1, 0, 0]

    def test_lambda_one_gives_all_ones(self):
        w = weight_vector(self.target(), 1.0)
        assert list(w.w) == [1.0] * 6

    def test_no_padding_means_no_zeros(self):
        w = weight_vector(self.target(), 5.0)
        assert 0.0 not in w.w

    def test_values_limited_to_zero_one_lambda(self):
        w = weight_vector(self.target(), 7.5, padded_len=11)
        assert set(w.w) <= {0.0, 1.0, 7.5}

    def test_too_small_padded_len_rejected(self):
        with pytest.raises(SflError):
            weight_vector(self.target(), 5.0, padded_len=3)

    def test_lambda_below_one_rejected(self):
        with pytest.raises(SflError):
            weight_vector(self.target(), 0.5)


class TestWeightedNll:
    def test_hand_checked_example(self):
        value = weighted_nll([-0.1, -2.0, -1.0, -3.0], [1.0, 5.0, 5.0, 0.0])
        assert value == pytest.approx(15.1 / 11, abs=1e-12)

    def test_uniform_weights_reduce_to_mean_nll(self):
        logprobs = [-0.3, -1.2, -0.7, -2.2]
        assert weighted_nll(logprobs, [1.0] * 4) == pytest.approx(
            -sum(logprobs) / 4, abs=1e-12
        )

    def test_single_real_token(self):
        assert weighted_nll([-0.7, 0.0, 0.0], [1.0, 0.0, 0.0]) == pytest.approx(0.7)

    def test_padding_invariance(self):
        base = weighted_nll([-0.5, -1.5], [1.0, 5.0])
        padded = weighted_nll([-0.5, -1.5, -9.0, -9.0], [1.0, 5.0, 0.0, 0.0])
        assert base == pytest.approx(padded, abs=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(SflError):
            weighted_nll([-1.0], [1.0, 1.0])

    def test_all_zero_weights_rejected(self):
        with pytest.raises(SflError):
            weighted_nll([-1.0, -2.0], [0.0, 0.0])

    def test_positive_logprobs_rejected(self):
        with pytest.raises(SflError):
            weighted_nll([0.5], [1.0])

    def test_monotonicity_in_lambda(self):
        # span NLL above context NLL: loss strictly increases with lambda
        target = insert_markers(seqs("a", "x", "d"), EditSpan(2, 0))
        logprobs = [-0.1, -2.0, -2.0, -2.0, -0.1]  # a START x END d
        losses = [
            weighted_nll(logprobs, weight_vector(target, lam))
            for lam in (1.0, 2.0, 5.0, 10.0)
        ]
        assert losses == sorted(losses)
        assert len(set(losses)) == len(losses)
        # span NLL below context NLL: loss strictly decreases
        easy = [-2.0, -0.1, -0.1, -0.1, -2.0]
        losses = [
            weighted_nll(easy, weight_vector(target, lam))
            for lam in (1.0, 2.0, 5.0, 10.0)
        ]
        assert losses == sorted(losses, reverse=True)
        assert len(set(losses)) == len(losses)

    @given(st.lists(st.floats(min_value=-10, max_value=0), min_size=1, max_size=20))
    @settings(max_examples=100, deadline=None)
    def test_nonnegative(self, logprobs):
        assert weighted_nll(logprobs, [1.0] * len(logprobs)) >= 0


class TestEmbeddingInit:
    def matrix(self):
        rng = np.random.default_rng(0)
        return rng.normal(0.5, 2.0, size=(200, 16))

    def test_gamma_zero_returns_exact_mean(self):
        stats = embedding_stats(self.matrix(), gamma=0.0)
        v = embedding_init(stats, seed=1)
        assert np.array_equal(v, np.array(stats.mu))

    def test_statistical_oracle_mean_and_variance(self):
        matrix = self.matrix()
        stats = embedding_stats(matrix, gamma=0.01)
        draws = np.stack([embedding_init(stats, seed=s) for s in range(10_000)])
        mu = np.array(stats.mu)
        var = np.array(stats.var)
        tol = 4 * np.sqrt(0.01 * var / 10_000)
        assert np.all(np.abs(draws.mean(axis=0) - mu) < tol)
        empirical = draws.var(axis=0)
        assert np.all(np.abs(empirical - 0.01 * var) < 0.1 * 0.01 * var)

    def test_deterministic_given_seed(self):
        stats = embedding_stats(self.matrix(), gamma=0.01)
        assert np.array_equal(embedding_init(stats, 7), embedding_init(stats, 7))

    def test_scalar_mode(self):
        matrix = self.matrix()
        stats = embedding_stats(matrix, gamma=0.0, scalar=True)
        assert len(set(stats.mu)) == 1
        assert stats.mu[0] == pytest.approx(float(matrix.mean()))

    def test_negative_gamma_rejected(self):
        with pytest.raises(SflError):
            EmbeddingStats(2, (0.0, 0.0), (1.0, 1.0), gamma=-0.1)

    def test_negative_variance_rejected(self):
        with pytest.raises(SflError):
            EmbeddingStats(2, (0.0, 0.0), (1.0, -1.0))


SRC_A = "fn f(x: int) -> int {\n  let ids = []\n  return x\n}\n"
SRC_B = "fn f(x: int) -> int {\n  let ids = [5, 3]\n  return x\n}\n"


class TestDatasetBuilder:
    def pair(self, case_id="case-1", revised=SRC_B):
        return DistillPair(case_id, "deck", "vehicle_failure", "f", "ctx", SRC_A, revised)

    def test_record_round_trip(self):
        rec = build_record(self.pair())
        stripped = [t for t in rec.target_with_markers.split() if t not in (EDIT_START, EDIT_END)]
        assert rec.target_with_markers.count(EDIT_START) == 1
        assert rec.target_with_markers.count(EDIT_END) == 1
        restored = strip_markers(token_seq(rec.target_with_markers))
        assert restored.tokens == token_seq(SRC_B).tokens

    def test_identical_pair_skipped_with_logged_warning(self, tmp_path, caplog):
        records = build_distill_dataset(
            [self.pair(), self.pair("case-2", SRC_A)], tmp_path / "d.jsonl"
        )
        assert len(records) == 1
        assert any("skipping identical pair" in r.message for r in caplog.records)

    def test_output_sorted_by_case_id(self, tmp_path):
        pairs = [self.pair("case-9"), self.pair("case-1"), self.pair("case-5")]
        build_distill_dataset(pairs, tmp_path / "d.jsonl")
        ids = [
            json.loads(line)["meta"]["case_id"]
            for line in (tmp_path / "d.jsonl").read_text().splitlines()
        ]
        assert ids == sorted(ids)

    def test_marker_bytes_are_exact(self):
        rec = build_record(self.pair())
        assert "<<EDIT_START>>" in rec.target_with_markers
        assert "<<EDIT_END>>" in rec.target_with_markers
