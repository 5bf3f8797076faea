import json
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from mafig.errors import PerceptionError
from mafig.perception import (
    AffectedSet,
    HeuristicBackend,
    RemoteBackend,
    aggregate,
    build_localization_dataset,
    localization_loss,
    localize,
)
from mafig.datasets import localization_cases
from mafig.scenarios import LOCALIZATION_COUNTS
from mafig.scenarios.base import Emergency


class FixedBackend:
    def __init__(self, scores):
        self._scores = scores

    def score(self, z):
        return dict(self._scores)


class TestAggregate:
    def test_deterministic(self, deck_scn, deck_lib, golden_deck_case):
        case = golden_deck_case
        a = aggregate(case.emergency, case.state, deck_lib.specs(), deck_scn)
        b = aggregate(case.emergency, case.state, deck_lib.specs(), deck_scn)
        assert a == b

    def test_golden_case_fact_structure(self, deck_scn, deck_lib, golden_deck_case):
        z = aggregate(golden_deck_case.emergency, golden_deck_case.state, deck_lib.specs(), deck_scn)
        vehicle_events = sum(
            len(f.get("vehicles", [])) + (1 if f["kind"] == "vehicle_reposition" else 0)
            for f in z.facts if f["kind"].startswith("vehicle")
        )
        blocked = [f for f in z.facts if f["kind"] == "deck_blockage"]
        assert vehicle_events == 3
        assert len(blocked) == 1

    def test_digest_bounded(self, deck_scn, deck_lib, golden_deck_case):
        z = aggregate(golden_deck_case.emergency, golden_deck_case.state, deck_lib.specs(), deck_scn)
        assert len(z.state_digest) <= 4096

    def test_empty_emergency_rejected(self, deck_scn, deck_lib):
        empty = Emergency("e", "deck", "vehicle_failure", "", ())
        with pytest.raises(PerceptionError):
            aggregate(empty, deck_scn.base_state(0), deck_lib.specs(), deck_scn)

    def test_scenario_mismatch_rejected(self, deck_scn, port_scn, deck_lib):
        emergency = Emergency("e", "port", "vessel_delay", "late",
                              ({"kind": "vessel_delay", "vessel": 1, "arrival": 9},))
        with pytest.raises(PerceptionError):
            aggregate(emergency, deck_scn.base_state(0), deck_lib.specs(), deck_scn)


class TestLocalize:
    def z(self, deck_scn, deck_lib, case):
        return aggregate(case.emergency, case.state, deck_lib.specs(), deck_scn)

    def test_threshold_definition(self, deck_scn, deck_lib, golden_deck_case):
        z = self.z(deck_scn, deck_lib, golden_deck_case)
        names = [s.name for s in z.specs]
        scores = {n: 0.3 for n in names}
        scores[names[0]] = 0.9
        result = localize(z, FixedBackend(scores), 0.5)
        assert result.members == {names[0]}

    def test_extreme_tau_empties_the_set(self, deck_scn, deck_lib, golden_deck_case):
        z = self.z(deck_scn, deck_lib, golden_deck_case)
        scores = {s.name: 0.999999 for s in z.specs}
        result = localize(z, FixedBackend(scores), 0.999999)
        assert result.members == frozenset()

    def test_threshold_monotonicity(self, deck_scn, deck_lib, golden_deck_case):
        z = self.z(deck_scn, deck_lib, golden_deck_case)
        backend = HeuristicBackend()
        lo = localize(z, backend, 0.2)
        hi = localize(z, backend, 0.8)
        assert hi.members <= lo.members

    def test_golden_case_members_equal_labels(self, deck_scn, deck_lib, golden_deck_case):
        z = self.z(deck_scn, deck_lib, golden_deck_case)
        result = localize(z, HeuristicBackend(), 0.5)
        assert result.members == golden_deck_case.affected_labels
        assert result.members == {"available_vehicles", "vehicle_position", "plan_route"}

    def test_recall_on_generated_cases(self, scenarios, libs):
        from mafig.scenarios import generate_cases
        for name in scenarios:
            scn, lib = scenarios[name], libs[name]
            cases = generate_cases(scn, 5, len(scn.categories) * 3, lib)
            backend = HeuristicBackend()
            for case in cases:
                z = aggregate(case.emergency, case.state, lib.specs(), scn)
                members = localize(z, backend, 0.5).members
                assert members >= case.affected_labels

    def test_invalid_tau_rejected(self, deck_scn, deck_lib, golden_deck_case):
        z = self.z(deck_scn, deck_lib, golden_deck_case)
        for tau in (0.0, 1.0, -1, 2):
            with pytest.raises(PerceptionError):
                localize(z, HeuristicBackend(), tau)

    def test_backend_missing_scores_rejected(self, deck_scn, deck_lib, golden_deck_case):
        z = self.z(deck_scn, deck_lib, golden_deck_case)
        with pytest.raises(PerceptionError):
            localize(z, FixedBackend({"only_one": 0.4}), 0.5)

    def test_members_invariant_enforced(self):
        with pytest.raises(PerceptionError):
            AffectedSet({"f": 0.9}, 0.5, frozenset())

    def test_remote_backend_parses_json_scores(self, deck_scn, deck_lib, golden_deck_case):
        from mafig.remote import ClientConfig

        z = self.z(deck_scn, deck_lib, golden_deck_case)
        names = [s.name for s in z.specs]
        reply = json.dumps({n: 0.1 for n in names})
        backend = RemoteBackend(ClientConfig(endpoint="stub"), complete=lambda p, c: reply)
        scores = backend.score(z)
        assert set(scores) == set(names)

    def test_remote_backend_malformed_reply_is_typed_error(self, deck_scn, deck_lib, golden_deck_case):
        from mafig.remote import ClientConfig

        z = self.z(deck_scn, deck_lib, golden_deck_case)
        backend = RemoteBackend(ClientConfig(endpoint="stub"), complete=lambda p, c: "not json")
        with pytest.raises(PerceptionError):
            backend.score(z)
        backend = RemoteBackend(ClientConfig(endpoint="stub"), complete=lambda p, c: "{}")
        with pytest.raises(PerceptionError):
            backend.score(z)

    def test_remote_timeout_is_a_typed_error_never_an_empty_set(self, deck_scn, deck_lib, golden_deck_case):
        from mafig.errors import RemoteTimeout
        from mafig.remote import ClientConfig

        def timing_out(prompt, cfg):
            raise RemoteTimeout("request timed out after 60s")

        z = self.z(deck_scn, deck_lib, golden_deck_case)
        backend = RemoteBackend(ClientConfig(endpoint="stub"), complete=timing_out)
        with pytest.raises(RemoteTimeout):
            localize(z, backend, 0.5)


class TestLocalizationLoss:
    def test_hand_checked_example(self):
        scores = {"f1": 0.8, "f2": 0.4, "f3": 0.5}
        labels = {"f1": 1, "f2": 0, "f3": 1}
        expected = -(math.log(0.8) + math.log(0.5))
        assert localization_loss(scores, labels) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.916290731874155, abs=1e-9)

    def test_all_negative_labels_give_zero(self):
        assert localization_loss({"a": 0.3, "b": 0.9}, {"a": 0, "b": 0}) == 0.0

    def test_perfect_scores_give_zero(self):
        assert localization_loss({"a": 1.0, "b": 1.0}, {"a": 1, "b": 1}) == 0.0

    def test_zero_iff_all_positives_are_one(self):
        assert localization_loss({"a": 1.0, "b": 0.2}, {"a": 1, "b": 0}) == 0.0
        assert localization_loss({"a": 0.999, "b": 0.2}, {"a": 1, "b": 0}) > 0.0

    def test_zero_scored_positive_is_infinite_loss_error(self):
        with pytest.raises(PerceptionError):
            localization_loss({"a": 0.0}, {"a": 1})

    def test_unscored_label_rejected(self):
        with pytest.raises(PerceptionError):
            localization_loss({"a": 0.5}, {"b": 1})

    def test_full_binary_variant_adds_negative_terms(self):
        scores = {"a": 0.8, "b": 0.4}
        labels = {"a": 1, "b": 0}
        plain = localization_loss(scores, labels)
        full = localization_loss(scores, labels, full_binary=True)
        assert full == pytest.approx(plain - math.log(0.6), abs=1e-12)

    def test_matches_independent_recomputation_on_random_fixtures(self):
        rng = random.Random(13)
        for _ in range(120):
            names = [f"fn{i}" for i in range(rng.randint(1, 10))]
            scores = {n: rng.uniform(0.01, 1.0) for n in names}
            labels = {n: rng.randint(0, 1) for n in names}
            expected = -sum(math.log(scores[n]) for n in names if labels[n] == 1)
            assert localization_loss(scores, labels) == pytest.approx(expected, abs=1e-12)

    @given(st.dictionaries(st.sampled_from(["a", "b", "c", "d"]),
                           st.floats(min_value=0.01, max_value=1.0), min_size=1))
    @settings(max_examples=80, deadline=None)
    def test_nonnegative(self, scores):
        labels = {name: 1 for name in scores}
        assert localization_loss(scores, labels) >= 0


class TestLocalizationDataset:
    @pytest.mark.parametrize("name", ["port", "warehouse", "deck"])
    def test_fixture_counts(self, name, tmp_path, scenarios, libs):
        cases = localization_cases(name, libs[name])
        records = build_localization_dataset(cases, libs[name].specs(), scenarios[name], tmp_path / "loc.jsonl")
        assert len(records) == LOCALIZATION_COUNTS[name]
        lines = (tmp_path / "loc.jsonl").read_text().splitlines()
        assert len(lines) == LOCALIZATION_COUNTS[name]
        rec = json.loads(lines[0])
        assert set(rec) == {"case_id", "scenario", "input_text", "labels"}
        assert set(rec["labels"]) == set(libs[name].names())
        assert set(rec["labels"].values()) <= {0, 1}

    def test_unknown_label_rejected(self, tmp_path, port_scn, port_lib):
        from mafig.scenarios.base import EmergencyCase
        emergency = Emergency("e", "port", "vessel_delay", "late",
                              ({"kind": "vessel_delay", "vessel": 1, "arrival": 50},))
        case = EmergencyCase(port_scn.base_state(0), emergency, True, frozenset({"ghost_fn"}), 0)
        with pytest.raises(PerceptionError):
            build_localization_dataset([case], port_lib.specs(), port_scn, tmp_path / "x.jsonl")
