import pytest

from mafig.scenarios import get_scenario, load_fixture_library


@pytest.fixture(scope="session")
def port_scn():
    return get_scenario("port")


@pytest.fixture(scope="session")
def warehouse_scn():
    return get_scenario("warehouse")


@pytest.fixture(scope="session")
def deck_scn():
    return get_scenario("deck")


@pytest.fixture(scope="session")
def port_lib(port_scn):
    return load_fixture_library(port_scn, validate_probes=False)


@pytest.fixture(scope="session")
def warehouse_lib(warehouse_scn):
    return load_fixture_library(warehouse_scn, validate_probes=False)


@pytest.fixture(scope="session")
def deck_lib(deck_scn):
    return load_fixture_library(deck_scn, validate_probes=False)


@pytest.fixture(scope="session")
def libs(port_lib, warehouse_lib, deck_lib):
    return {"port": port_lib, "warehouse": warehouse_lib, "deck": deck_lib}


@pytest.fixture(scope="session")
def scenarios(port_scn, warehouse_scn, deck_scn):
    return {"port": port_scn, "warehouse": warehouse_scn, "deck": deck_scn}


def golden_emergency_facts():
    return (
        {"kind": "vehicle_reposition", "vehicle": 2, "cell": [0, 1]},
        {"kind": "vehicle_failure", "vehicles": [5, 3]},
        {"kind": "deck_blockage", "lo": [8, 5], "hi": [9, 6]},
    )


@pytest.fixture()
def golden_deck_case(deck_scn, deck_lib):
    from mafig.scenarios.base import Emergency, EmergencyCase

    facts = golden_emergency_facts()
    emergency = Emergency(
        id="deck-golden-fig",
        scenario="deck",
        category="compound_emergency",
        narrative=deck_scn.narrative_for(facts),
        facts=facts,
    )
    state = deck_scn.base_state(0)
    labels = deck_scn.rule_labels(deck_lib, facts)
    return EmergencyCase(state, emergency, True, labels, seed=0)
