import collections

import pytest

from mafig.dsl import Coord
from mafig.errors import ScenarioError
from mafig.scenarios import (
    CASE_COUNTS,
    Rect,
    category_counts,
    generate_cases,
    get_scenario,
    read_cases,
    write_cases,
)
from mafig.scenarios.base import Emergency

TAXONOMY_WIDTH = {"port": 5, "warehouse": 8, "deck": 15}


@pytest.fixture(scope="module")
def small_cases(scenarios, libs):
    return {
        name: generate_cases(scenarios[name], 7, len(scenarios[name].categories) * 4, libs[name])
        for name in scenarios
    }


class TestTaxonomy:
    @pytest.mark.parametrize("name", ["port", "warehouse", "deck"])
    def test_category_width(self, name, scenarios):
        assert len(scenarios[name].categories) == TAXONOMY_WIDTH[name]

    def test_unknown_scenario_rejected(self):
        with pytest.raises(ScenarioError):
            get_scenario("orbital")

    @pytest.mark.parametrize("name,total", CASE_COUNTS.items())
    def test_category_counts_distribute_exactly(self, name, total, scenarios):
        counts = category_counts(scenarios[name], total)
        assert sum(counts.values()) == total
        assert set(counts) == set(scenarios[name].categories)
        assert max(counts.values()) - min(counts.values()) <= 1


class TestGeneration:
    def test_deterministic_given_seed(self, scenarios, libs):
        scn, lib = scenarios["port"], libs["port"]
        a = generate_cases(scn, 3, 20, lib)
        b = generate_cases(scn, 3, 20, lib)
        import json
        from mafig.scenarios.base import case_to_json
        assert [case_to_json(scn, c) for c in a] == [case_to_json(scn, c) for c in b]
        c = generate_cases(scn, 4, 20, lib)
        assert [x.emergency.facts for x in a] != [x.emergency.facts for x in c]

    def test_histogram_matches_request(self, scenarios, libs):
        scn = scenarios["warehouse"]
        requested = {cat: 3 for cat in scn.categories}
        cases = generate_cases(scn, 1, requested, libs["warehouse"])
        hist = collections.Counter(c.emergency.category for c in cases)
        assert dict(hist) == requested

    def test_bad_request_rejected(self, scenarios, libs):
        with pytest.raises(ScenarioError):
            generate_cases(scenarios["port"], 1, {"not-a-category": 3}, libs["port"])
        with pytest.raises(ScenarioError):
            generate_cases(scenarios["port"], 1, {"vessel_delay": 0}, libs["port"])
        with pytest.raises(ScenarioError):
            generate_cases(scenarios["port"], 1, 2, libs["port"])  # below category count

    def test_impactful_iff_baseline_fails(self, scenarios, libs, small_cases):
        for name, cases in small_cases.items():
            scn, lib = scenarios[name], libs[name]
            plans = {}
            for case in cases:
                truth = scn.apply_emergency(case.state, case.emergency)
                key = id(case.state)
                if key not in plans:
                    plans[key] = scn.plan(case.state, lib)
                verdict = scn.check_feasible(truth, plans[key])
                assert case.impactful == (not verdict.ok)

    def test_labels_empty_iff_non_impactful(self, small_cases):
        for cases in small_cases.values():
            for case in cases:
                if not case.impactful:
                    assert case.affected_labels == frozenset()
                else:
                    assert case.affected_labels

    def test_labels_name_library_functions(self, libs, small_cases):
        for name, cases in small_cases.items():
            names = set(libs[name].names())
            for case in cases:
                assert case.affected_labels <= names

    def test_both_kinds_of_cases_appear(self, small_cases):
        for name, cases in small_cases.items():
            kinds = {c.impactful for c in cases}
            assert kinds == {True, False}, name

    def test_narrative_regenerates_from_facts(self, scenarios, small_cases):
        for name, cases in small_cases.items():
            scn = scenarios[name]
            for case in cases:
                assert scn.narrative_for(case.emergency.facts) == case.emergency.narrative

    def test_case_file_round_trip(self, tmp_path, scenarios, small_cases):
        scn = scenarios["deck"]
        cases = small_cases["deck"]
        path = tmp_path / "cases.jsonl"
        write_cases(scn, cases, path)
        again = read_cases(scn, path)
        assert len(again) == len(cases)
        for x, y in zip(cases, again):
            assert x.case_id == y.case_id
            assert x.impactful == y.impactful
            assert x.affected_labels == y.affected_labels
            assert x.state == y.state


class TestApplyEmergency:
    def test_deck_reposition_example(self, deck_scn):
        state = deck_scn.base_state(0)
        emergency = Emergency("e", "deck", "vehicle_reposition", "move",
                              ({"kind": "vehicle_reposition", "vehicle": 2, "cell": [0, 1]},))
        truth = deck_scn.apply_emergency(state, emergency)
        assert truth.vehicle(2).cell == Coord(0, 1)
        # pure: input untouched
        assert state.vehicle(2).cell != Coord(0, 1)

    def test_deck_blockage_cells(self, deck_scn):
        state = deck_scn.base_state(0)
        emergency = Emergency("e", "deck", "deck_blockage", "boom",
                              ({"kind": "deck_blockage", "lo": [8, 5], "hi": [9, 6]},))
        truth = deck_scn.apply_emergency(state, emergency)
        blocked = truth.blocked_cells()
        for cell in (Coord(8, 5), Coord(8, 6), Coord(9, 5), Coord(9, 6)):
            assert cell in blocked
            assert cell not in state.blocked_cells()

    def test_dangling_reference_is_an_error(self, deck_scn):
        state = deck_scn.base_state(0)
        emergency = Emergency("e", "deck", "vehicle_failure", "broken",
                              ({"kind": "vehicle_failure", "vehicles": [99]},))
        with pytest.raises(ScenarioError):
            deck_scn.apply_emergency(state, emergency)

    def test_only_named_entities_change(self, port_scn):
        state = port_scn.base_state(0)
        emergency = Emergency("e", "port", "vessel_delay", "late",
                              ({"kind": "vessel_delay", "vessel": 3, "arrival": 50},))
        truth = port_scn.apply_emergency(state, emergency)
        assert truth.vessel(3).arrival == 50
        for vessel in state.vessels:
            if vessel.id != 3:
                assert truth.vessel(vessel.id) == vessel
        assert truth.berths == state.berths
        assert truth.cranes == state.cranes


class TestFeasibilityOracle:
    def test_baseline_plan_passes(self, scenarios, libs):
        for name in scenarios:
            scn, lib = scenarios[name], libs[name]
            for variant in range(scn.variant_count()):
                state = scn.base_state(variant)
                assert scn.check_feasible(state, scn.plan(state, lib)).ok

    def test_assignment_to_failed_vehicle_fails(self, deck_scn, deck_lib):
        state = deck_scn.base_state(0)
        plan = deck_scn.plan(state, deck_lib)
        emergency = Emergency("e", "deck", "vehicle_failure", "broken",
                              ({"kind": "vehicle_failure", "vehicles": [2]},))
        truth = deck_scn.apply_emergency(state, emergency)
        verdict = deck_scn.check_feasible(truth, plan)
        assert not verdict.ok
        assert "unavailable-vehicle" in verdict.reason

    def test_route_crossing_blast_area_fails(self, deck_scn, deck_lib):
        state = deck_scn.base_state(0)
        plan = deck_scn.plan(state, deck_lib)
        # find a rect actually crossed by a planned route
        routes = [slot["route"] for slot in plan["assignments"].values()]
        cell = Coord(*routes[0][len(routes[0]) // 2])
        emergency = Emergency("e", "deck", "deck_blockage", "boom",
                              ({"kind": "deck_blockage", "lo": [cell.x, cell.y], "hi": [cell.x, cell.y]},))
        truth = deck_scn.apply_emergency(state, emergency)
        verdict = deck_scn.check_feasible(truth, plan)
        assert not verdict.ok
        assert "blocked-cell" in verdict.reason

    def test_oracle_is_monotone_in_blocked_cells(self, deck_scn, deck_lib):
        # adding blocked cells never turns a failing route into a passing one
        state = deck_scn.base_state(0)
        plan = deck_scn.plan(state, deck_lib)
        routes = [slot["route"] for slot in plan["assignments"].values()]
        cell = Coord(*routes[0][len(routes[0]) // 2])
        first = Emergency("e", "deck", "deck_blockage", "boom",
                          ({"kind": "deck_blockage", "lo": [cell.x, cell.y], "hi": [cell.x, cell.y]},))
        truth1 = deck_scn.apply_emergency(state, first)
        assert not deck_scn.check_feasible(truth1, plan).ok
        other = Coord(*routes[-1][len(routes[-1]) // 2])
        second = Emergency("e2", "deck", "deck_blockage", "boom",
                           ({"kind": "deck_blockage", "lo": [other.x, other.y], "hi": [other.x, other.y]},))
        truth2 = deck_scn.apply_emergency(truth1, second)
        assert not deck_scn.check_feasible(truth2, plan).ok

    def test_route_avoiding_blocked_cells_passes(self, warehouse_scn, warehouse_lib):
        state = warehouse_scn.base_state(0)
        plan = warehouse_scn.plan(state, warehouse_lib)
        assert warehouse_scn.check_feasible(state, plan).ok


class TestRect:
    def test_cells_and_contains(self):
        rect = Rect(Coord(1, 1), Coord(2, 2))
        assert len(rect.cells()) == 4
        assert rect.contains(Coord(2, 1))
        assert not rect.contains(Coord(3, 1))

    def test_degenerate_rejected(self):
        with pytest.raises(ScenarioError):
            Rect(Coord(2, 2), Coord(1, 1))
