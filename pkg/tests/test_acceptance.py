"""Acceptance suite: one test per criterion, one pass/fail line each.

Run with `pytest tests/test_acceptance.py -v -s`. Every tolerance is
pinned here; no criterion defers to later calibration. Everything runs
offline with deterministic backends.
"""

import json
import math
import random
import time
from decimal import Decimal

import numpy as np
import pytest

from mafig.datasets import distill_pairs, golden_cases, localization_cases
from mafig.decision import RuleBackend, repair_and_commit
from mafig.dsl import EDIT_END, EDIT_START, tokenize
from mafig.harness import RunConfig, report, run_suite
from mafig.library import commit, make_function, replay_history, trial_execute
from mafig.perception import (
    HeuristicBackend,
    aggregate,
    build_localization_dataset,
    localization_loss,
    localize,
)
from mafig.scenarios import CASE_COUNTS, LIBRARY_SIZES, LOCALIZATION_COUNTS, generate_cases
from mafig.sfl import (
    DISTILL_COUNTS,
    TokenSeq,
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

SCENARIOS = ("port", "warehouse", "deck")
TAXONOMY = {"port": 5, "warehouse": 8, "deck": 15}


def _announce(name: str, ok: bool, note: str = "") -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({note})" if note else ""))
    assert ok, name


@pytest.fixture(scope="module")
def generated(scenarios, libs):
    return {
        name: generate_cases(scenarios[name], 1, CASE_COUNTS[name], libs[name])
        for name in SCENARIOS
    }


@pytest.fixture(scope="module")
def pairs():
    return {name: distill_pairs(name) for name in SCENARIOS}


def test_c01_sfl_formula_suite():
    started = time.perf_counter()
    # uniform weights equal the unweighted mean NLL
    rng = random.Random(1)
    max_delta = 0.0
    for _ in range(200):
        logprobs = [rng.uniform(-8, 0) for _ in range(rng.randint(1, 40))]
        delta = abs(weighted_nll(logprobs, [1.0] * len(logprobs)) - (-sum(logprobs) / len(logprobs)))
        max_delta = max(max_delta, delta)
    assert max_delta < 1e-12
    # padding invariance
    base = weighted_nll([-0.4, -2.5, -1.1], [1.0, 5.0, 1.0])
    padded = weighted_nll([-0.4, -2.5, -1.1, -7.0, -7.0], [1.0, 5.0, 1.0, 0.0, 0.0])
    assert abs(base - padded) < 1e-12
    # the hand-checkable fixture
    value = weighted_nll([-0.1, -2.0, -1.0, -3.0], [1.0, 5.0, 5.0, 0.0])
    assert abs(value - 15.1 / 11) < 1e-12
    assert f"{value:.7f}" == "1.3727273"
    # monotonicity in lambda on fixed logprobs
    target = insert_markers(TokenSeq(("a", "x", "d")), diff_span(TokenSeq(("a", "q", "d")), TokenSeq(("a", "x", "d"))))
    hard = [-0.1, -2.0, -2.0, -2.0, -0.1]
    losses_up = [weighted_nll(hard, weight_vector(target, lam)) for lam in (1, 2, 5, 10)]
    easy = [-2.0, -0.1, -0.1, -0.1, -2.0]
    losses_down = [weighted_nll(easy, weight_vector(target, lam)) for lam in (1, 2, 5, 10)]
    assert all(a < b for a, b in zip(losses_up, losses_up[1:]))
    assert all(a > b for a, b in zip(losses_down, losses_down[1:]))
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0
    _announce("SFL formula suite (|delta| < 1e-12, monotone in lambda)", True, f"{elapsed:.2f}s")


def test_c02_marker_round_trip_all_records(pairs):
    started = time.perf_counter()
    checked = 0
    for name in SCENARIOS:
        for pair in pairs[name]:
            record = build_record(pair)
            target_tokens = tokenize(record.target_with_markers)
            stripped = strip_markers(TokenSeq(tuple(target_tokens)))
            fstar = token_seq(pair.revised)
            assert stripped.tokens == fstar.tokens
            from mafig.dsl import detokenize
            assert detokenize(list(stripped.tokens)) == pair.revised  # byte-for-byte
            # verbatim prefix/suffix alignment with the original
            f = token_seq(pair.original).tokens
            start = target_tokens.index(EDIT_START)
            stop = target_tokens.index(EDIT_END)
            prefix = tuple(target_tokens[:start])
            suffix = tuple(target_tokens[stop + 1:])
            assert f[: len(prefix)] == prefix
            assert suffix == () or f[len(f) - len(suffix):] == suffix
            checked += 1
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0
    assert checked == sum(DISTILL_COUNTS.values())
    _announce("Marker round-trip on 100% of distillation records", True, f"{checked} records, {elapsed:.2f}s")


def brute_force_span(f: tuple, fstar: tuple) -> tuple[int, int]:
    best = None
    limit = min(len(f), len(fstar))
    for p in range(limit + 1):
        if f[:p] != fstar[:p]:
            break
        for s in range(limit - p + 1):
            if s and f[len(f) - s:] != fstar[len(fstar) - s:]:
                continue
            key = (p + s, p, s)
            if best is None or key > best:
                best = key
    _, p, s = best
    return p + 1, (len(fstar) - s) - (p + 1)


def test_c03_diff_span_equals_brute_force_oracle():
    started = time.perf_counter()
    rng = random.Random(42)
    vocab = list("abcdef")
    checked = 0
    while checked < 1000:
        f = tuple(rng.choice(vocab) for _ in range(rng.randint(1, 14)))
        fstar = tuple(rng.choice(vocab) for _ in range(rng.randint(1, 14)))
        if f == fstar:
            continue
        span = diff_span(TokenSeq(f), TokenSeq(fstar))
        assert (span.k, span.m) == brute_force_span(f, fstar)
        checked += 1
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    _announce("diff span equals brute-force oracle", True, f"{checked} pairs, {elapsed:.2f}s")


def test_c04_embedding_sampler():
    started = time.perf_counter()
    matrix = np.random.default_rng(3).normal(0.2, 1.5, size=(300, 12))
    exact = embedding_init(embedding_stats(matrix, gamma=0.0), seed=9)
    assert np.array_equal(exact, np.asarray(embedding_stats(matrix, gamma=0.0).mu))
    stats = embedding_stats(matrix, gamma=0.01)
    draws = np.stack([embedding_init(stats, seed=s) for s in range(10_000)])
    mu = np.asarray(stats.mu)
    var = np.asarray(stats.var)
    mean_tol = 4 * np.sqrt(0.01 * var / 10_000)
    mean_ok = np.all(np.abs(draws.mean(axis=0) - mu) < mean_tol)
    var_ok = np.all(np.abs(draws.var(axis=0) - 0.01 * var) < 0.1 * 0.01 * var)
    elapsed = time.perf_counter() - started
    assert mean_ok and var_ok and elapsed < 10.0
    _announce("Embedding-statistics sampler (mean within 4 sigma, variance within 10%)", True, f"{elapsed:.2f}s")


def test_c05_localization_loss_oracle():
    rng = random.Random(99)
    max_delta = 0.0
    for _ in range(150):
        names = [f"fn{i}" for i in range(rng.randint(1, 12))]
        scores = {n: rng.uniform(0.001, 1.0) for n in names}
        labels = {n: rng.randint(0, 1) for n in names}
        expected = -sum(math.log(scores[n]) for n in names if labels[n] == 1)
        max_delta = max(max_delta, abs(localization_loss(scores, labels) - expected))
    assert max_delta < 1e-12
    # zero iff every positive-labeled score is exactly one
    assert localization_loss({"a": 1.0, "b": 0.4}, {"a": 1, "b": 0}) == 0.0
    assert localization_loss({"a": 1.0 - 1e-9, "b": 0.4}, {"a": 1, "b": 0}) > 0.0
    _announce("Localization loss matches scalar recomputation (|delta| < 1e-12)", True, "150 fixtures")


def test_c06_dataset_cardinalities(scenarios, libs, generated, pairs, tmp_path):
    for name in SCENARIOS:
        assert len(libs[name]) == LIBRARY_SIZES[name]
        loc = build_localization_dataset(
            localization_cases(name, libs[name]), libs[name].specs(), scenarios[name],
            tmp_path / f"{name}-loc.jsonl",
        )
        assert len(loc) == LOCALIZATION_COUNTS[name]
        assert len(pairs[name]) == DISTILL_COUNTS[name]
        cases = generated[name]
        assert len(cases) == CASE_COUNTS[name]
        assert len({c.emergency.category for c in cases}) == TAXONOMY[name]
    _announce(
        "Cardinalities: 8/15/25 functions, 30/50/100 localization, "
        "80/170/120 distillation, 199/398/642 cases over 5/8/15 categories", True,
    )


def test_c07_golden_end_to_end(deck_scn, deck_lib, golden_deck_case):
    started = time.perf_counter()
    case = golden_deck_case
    z = aggregate(case.emergency, case.state, deck_lib.specs(), deck_scn)
    affected = localize(z, HeuristicBackend(), 0.5)
    assert affected.members == {"available_vehicles", "vehicle_position", "plan_route"}
    lib, outcome = repair_and_commit(case, affected, RuleBackend("deck"), deck_lib, deck_scn)
    assert outcome.success
    assert all(p.passed and p.committed for p in outcome.proposals)
    truth = deck_scn.apply_emergency(case.state, case.emergency)
    plan = deck_scn.plan(case.state, lib)
    assert deck_scn.check_feasible(truth, plan).ok
    blast = {(8, 5), (8, 6), (9, 5), (9, 6)}
    for slot in plan["assignments"].values():
        assert slot["vehicle"] not in (5, 3)
        assert not blast & {tuple(c) for c in slot["route"]}
    moved = [slot for slot in plan["assignments"].values() if slot["vehicle"] == 2]
    for slot in moved:
        assert tuple(slot["route"][0]) == (0, 1)
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0
    _announce("Golden deck case end-to-end (repair, commit, feasible routes)", True, f"{elapsed:.2f}s")


def test_c08_rule_backend_suite(scenarios, libs, generated):
    for name in SCENARIOS:
        golden = golden_cases(name, libs[name])
        assert len(golden) >= 10
        config = RunConfig(scenario=name, seed=1)
        summary, records, _ = run_suite(golden, config, libs[name])
        golden_rate = summary.success_rate
        assert golden_rate == 1.0, [r.case_id for r in records if not r.success]
        summary, records, _ = run_suite(generated[name], config, libs[name])
        rate = summary.success_rate
        assert rate >= 0.95, f"{name}: {rate:.4f}"
        print(f"       {name}: golden {golden_rate * 100:.2f}%, generated {rate * 100:.2f}% "
              f"({summary.successes}/{summary.n})")
    _announce("Rule backend: 100% on audited golden, >=95% on generated suites", True)


def test_c09_harness_reproducibility(tmp_path, port_lib, port_scn):
    cases = generate_cases(port_scn, 11, 25, port_lib)
    config = RunConfig(scenario="port", seed=11)
    outputs = []
    for run_dir in (tmp_path / "a", tmp_path / "b"):
        summary, records, _ = run_suite(cases, config, port_lib)
        paths = report(summary, records, run_dir)
        outputs.append((paths["csv"].read_bytes(), paths["episodes"].read_bytes()))
        # avg_time * n equals total_time within rounding
        csv_row = paths["csv"].read_text().splitlines()[1].split(",")
        total, avg = Decimal(csv_row[2]), Decimal(csv_row[3])
        assert abs(avg * summary.n - total) <= Decimal("0.01") * summary.n
    assert outputs[0][0] == outputs[1][0]
    assert outputs[0][1] == outputs[1][1]
    _announce("Harness reproducibility: byte-identical summary.csv and episodes.jsonl", True)


def test_c10_library_laws():
    from mafig.dsl import CapabilityTable
    from mafig.library import FunctionLibrary, FunctionSpec, ProbeCase

    def spec_for(name):
        return FunctionSpec(name, "t", frozenset(), frozenset(), frozenset({"k"}), "port")

    def probe(value):
        return ProbeCase("p", CapabilityTable(), (1,), "int",
                         (("ok", lambda out, want=1 + value: out == want),))

    rng = random.Random(8)
    lib = FunctionLibrary("port", {})
    for _ in range(120):
        name = rng.choice(["f", "g", "h", "k"])
        value = rng.randint(0, 4)
        fn = make_function(f"fn {name}(x: int) -> int {{\n  return x + {value}\n}}\n", spec_for(name))
        verdict = trial_execute(lib, fn, [probe(value)])
        before = len(lib)
        identical = name in lib.entries and lib.get(name).source == fn.source
        new_lib = commit(lib, fn, verdict)
        assert len(new_lib) >= before  # entry count never decreases
        if identical:
            assert new_lib is lib  # idempotence
        lib = new_lib
    for name in lib.names():
        assert replay_history(lib, name) == lib.get(name).source  # history replay
    _announce("Library laws: idempotent commit, monotone entries, history replay", True, "120 random commits")


def test_c11_self_evolution(scenarios, libs):
    for name in SCENARIOS:
        scn, lib = scenarios[name], libs[name]
        case = golden_cases(name, lib)[0]
        config = RunConfig(scenario=name, seed=1)
        # one successful repair run, then the same cases replayed
        summary, records, evolved = run_suite([case], config, lib)
        assert summary.successes == 1
        assert sum(len(r.proposals) for r in records) > 0
        replay_summary, replay_records, evolved2 = run_suite([case, case], config, evolved)
        assert replay_summary.successes == 2
        assert all(r.proposals == () for r in replay_records), name
        assert all(r.detail == "library already handles this case" for r in replay_records)
        assert len(evolved2.history) == len(evolved.history)
    _announce("Self-evolution: replayed cases succeed with zero new proposals", True)
