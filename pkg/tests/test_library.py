import pytest
from hypothesis import given, settings, strategies as st

from mafig.dsl import CapabilityTable
from mafig.errors import CommitRejected, LibraryError
from mafig.library import (
    FunctionSpec,
    ProbeCase,
    commit,
    load_library,
    make_function,
    replay_history,
    save_library,
    trial_execute,
)
from mafig.scenarios import LIBRARY_SIZES, load_fixture_library


def spec_for(name, scenario="port"):
    return FunctionSpec(name, "test function", frozenset(), frozenset(), frozenset({"test"}), scenario)


def counter_source(name: str, value: int) -> str:
    return f"fn {name}(x: int) -> int {{\n  return x + {value}\n}}\n"


def passing_probe(expected_offset: int) -> ProbeCase:
    return ProbeCase(
        "offset", CapabilityTable(), (1,), "int",
        (("offset-correct", lambda out, want=1 + expected_offset: out == want),),
    )


class TestLoad:
    @pytest.mark.parametrize("scenario", ["port", "warehouse", "deck"])
    def test_fixture_counts(self, scenario, libs):
        assert len(libs[scenario]) == LIBRARY_SIZES[scenario]

    def test_empty_directory_is_an_error(self, tmp_path):
        with pytest.raises(LibraryError):
            load_library("port", tmp_path)

    def test_missing_spec_is_an_error(self, tmp_path):
        (tmp_path / "specs.jsonl").write_text("")
        (tmp_path / "f.afn").write_text("fn f(x: int) -> int {\n  return x\n}\n")
        with pytest.raises(LibraryError):
            load_library("port", tmp_path)

    def test_spec_schema_mismatch_is_an_error(self, tmp_path):
        import json
        spec = {"name": "f", "summary": "s", "reads": ["nope.field"], "writes": [],
                "keywords": ["k"], "scenario": "port"}
        (tmp_path / "specs.jsonl").write_text(json.dumps(spec) + "\n")
        (tmp_path / "f.afn").write_text("fn f(x: int) -> int {\n  return x\n}\n")
        with pytest.raises(LibraryError):
            load_library("port", tmp_path, schema_fields=frozenset({"vessels.id"}))

    def test_every_fixture_entry_passes_its_probe_suite(self, scenarios):
        # enforced at load; also the baseline-sanity trial example
        for name, scn in scenarios.items():
            lib = load_fixture_library(scn, validate_probes=True)
            assert len(lib) == LIBRARY_SIZES[name]

    def test_save_load_round_trip(self, tmp_path, port_lib, port_scn):
        save_library(port_lib, tmp_path)
        caps = port_scn.capabilities(port_scn.base_state(0)).names()
        again = load_library("port", tmp_path, capabilities=caps)
        assert again.names() == port_lib.names()
        for name in again.names():
            assert again.get(name).source == port_lib.get(name).source

    def test_evolved_history_survives_save_load(self, tmp_path, deck_scn, deck_lib, golden_deck_case):
        from mafig.decision import RuleBackend, repair_and_commit
        from mafig.perception import HeuristicBackend, aggregate, localize

        z = aggregate(golden_deck_case.emergency, golden_deck_case.state, deck_lib.specs(), deck_scn)
        affected = localize(z, HeuristicBackend())
        evolved, outcome = repair_and_commit(golden_deck_case, affected, RuleBackend("deck"), deck_lib, deck_scn)
        assert outcome.success
        save_library(evolved, tmp_path)
        caps = deck_scn.capabilities(deck_scn.base_state(0)).names()
        again = load_library("deck", tmp_path, capabilities=caps)
        assert len(again.history) == len(evolved.history)
        assert again.get("plan_route").version == 2
        assert replay_history(again, "plan_route") == evolved.get("plan_route").source


class TestTrialExecute:
    def test_unmodified_function_passes_baseline_suite(self, port_lib, port_scn):
        entry = port_lib.get("crane_ready")
        verdict = trial_execute(port_lib, entry, port_scn.probe_suite("crane_ready"))
        assert verdict.passed

    def test_route_through_blocked_cell_fails_with_named_assertion(self, deck_lib, deck_scn, golden_deck_case):
        # candidate that ignores the blockage: the pristine plan_route
        candidate = deck_lib.get("plan_route")
        probes = deck_scn.episode_probes("plan_route", golden_deck_case)
        verdict = trial_execute(deck_lib, candidate, probes)
        assert not verdict.passed
        failure = verdict.first_failure()
        assert "route-avoids-truth-blocked" in failure.detail

    def test_division_by_zero_candidate_fails(self, port_lib, port_scn):
        src = "fn crane_ready(b: record) -> bool {\n  let n = 1 / 0\n  return true\n}\n"
        candidate = make_function(src, port_lib.get("crane_ready").spec,
                                  port_scn.capabilities(port_scn.base_state(0)).names())
        verdict = trial_execute(port_lib, candidate, port_scn.probe_suite("crane_ready"))
        assert not verdict.passed
        assert "evaluation error" in verdict.first_failure().detail

    def test_empty_probe_suite_never_passes(self, port_lib):
        verdict = trial_execute(port_lib, port_lib.get("crane_ready"), [])
        assert not verdict.passed


def empty_lib():
    from mafig.library import FunctionLibrary
    return FunctionLibrary("port", {})


class TestCommit:
    def test_new_function_grows_entries(self):
        lib = empty_lib()
        fn = make_function(counter_source("f", 1), spec_for("f"))
        verdict = trial_execute(lib, fn, [passing_probe(1)])
        lib2 = commit(lib, fn, verdict)
        assert len(lib2) == len(lib) + 1
        assert lib2.get("f").version == 1

    def test_identical_recommit_is_a_noop(self):
        lib = empty_lib()
        fn = make_function(counter_source("f", 1), spec_for("f"))
        lib = commit(lib, fn, trial_execute(lib, fn, [passing_probe(1)]))
        again = commit(lib, fn, trial_execute(lib, fn, [passing_probe(1)]))
        assert again is lib

    def test_revision_bumps_version_and_history(self):
        lib = empty_lib()
        v1 = make_function(counter_source("f", 1), spec_for("f"))
        lib = commit(lib, v1, trial_execute(lib, v1, [passing_probe(1)]))
        v2 = make_function(counter_source("f", 2), spec_for("f"))
        lib2 = commit(lib, v2, trial_execute(lib, v2, [passing_probe(2)]))
        assert len(lib2) == len(lib)
        assert lib2.get("f").version == 2
        assert len(lib2.history) == len(lib.history) + 1

    def test_failing_verdict_rejected(self):
        lib = empty_lib()
        fn = make_function(counter_source("f", 1), spec_for("f"))
        bad = trial_execute(lib, fn, [passing_probe(99)])
        assert not bad.passed
        with pytest.raises(CommitRejected):
            commit(lib, fn, bad)

    def test_commit_does_not_mutate_input_library(self):
        lib = empty_lib()
        fn = make_function(counter_source("f", 1), spec_for("f"))
        commit(lib, fn, trial_execute(lib, fn, [passing_probe(1)]))
        assert len(lib) == 0


@given(st.lists(st.tuples(st.sampled_from(["f", "g", "h"]), st.integers(0, 5)), max_size=12))
@settings(max_examples=60, deadline=None)
def test_commit_laws_over_random_sequences(operations):
    """Entry count never decreases; versions are contiguous; history replay
    reproduces the current entry byte for byte; idempotence."""
    lib = empty_lib()
    for name, value in operations:
        prior_count = len(lib)
        fn = make_function(counter_source(name, value), spec_for(name))
        verdict = trial_execute(lib, fn, [passing_probe(value)])
        assert verdict.passed
        new_lib = commit(lib, fn, verdict)
        assert len(new_lib) >= prior_count
        if name in lib.entries and lib.get(name).source == fn.source:
            assert new_lib is lib
        else:
            expected_version = lib.get(name).version + 1 if name in lib.entries else 1
            assert new_lib.get(name).version == expected_version
        lib = new_lib
    for name in lib.names():
        assert replay_history(lib, name) == lib.get(name).source


def test_replay_history_requires_contiguous_versions():
    from mafig.library import FunctionLibrary, HistoryEvent
    lib = FunctionLibrary("port", {}, (HistoryEvent("f", 2, "src", 0.0, "edited"),))
    with pytest.raises(LibraryError):
        replay_history(lib, "f")


def test_make_function_rejects_name_mismatch():
    with pytest.raises(LibraryError):
        make_function(counter_source("g", 1), spec_for("f"))


class StubGenerationClient:
    """Model-built functions enter through the same validation gate."""

    def generate_function(self, context: str):
        source = "fn surge_buffer(n: int) -> int {\n  return max(n, 2)\n}\n"
        spec = spec_for("surge_buffer")
        return source, spec


def test_generated_function_ingests_through_validation_gate():
    lib = empty_lib()
    source, spec = StubGenerationClient().generate_function("berth pressure rising")
    candidate = make_function(source, spec)
    probe = ProbeCase(
        "floor", CapabilityTable(), (1,), "int",
        (("at-least-two", lambda out: out == 2),),
    )
    verdict = trial_execute(lib, candidate, [probe])
    assert verdict.passed
    lib2 = commit(lib, candidate, verdict)
    assert "surge_buffer" in lib2.entries
    # an untrusted candidate that fails its trial never lands
    bad_source = "fn surge_buffer(n: int) -> int {\n  return n - 100\n}\n"
    bad = make_function(bad_source, spec)
    bad_verdict = trial_execute(lib2, bad, [probe])
    assert not bad_verdict.passed
    with pytest.raises(CommitRejected):
        commit(lib2, bad, bad_verdict)
