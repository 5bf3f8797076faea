"""Scenario registry and fixture-library loading."""

from __future__ import annotations

from pathlib import Path

from ..errors import ScenarioError
from ..library import FunctionLibrary, load_library
from .base import (
    CASE_COUNTS,
    LIBRARY_SIZES,
    LOCALIZATION_COUNTS,
    EmergencyCase,
    FeasibilityVerdict,
    Rect,
    Scenario,
    category_counts,
    generate_cases,
    read_cases,
    write_cases,
)
from .deck import DeckScenario
from .port import PortScenario
from .warehouse import WarehouseScenario

FIXTURES_DIR = Path(__file__).resolve().parent.parent / "fixtures"

_SCENARIOS = {
    "port": PortScenario,
    "warehouse": WarehouseScenario,
    "deck": DeckScenario,
}


def get_scenario(name: str) -> Scenario:
    try:
        return _SCENARIOS[name]()
    except KeyError:
        raise ScenarioError(f"unknown scenario {name!r}; expected one of {sorted(_SCENARIOS)}") from None


def scenario_names() -> list[str]:
    return sorted(_SCENARIOS)


def load_fixture_library(scenario: Scenario | str, path: str | Path | None = None, validate_probes: bool = True) -> FunctionLibrary:
    """Load the packaged library for a scenario (or one from `path`)."""
    scn = get_scenario(scenario) if isinstance(scenario, str) else scenario
    root = Path(path) if path is not None else FIXTURES_DIR / "library" / scn.name
    caps = scn.capabilities(scn.base_state(0)).names()
    return load_library(
        scn.name,
        root,
        capabilities=caps,
        schema_fields=scn.schema_fields,
        decision_fields=scn.decision_fields,
        probe_suite=scn.probe_suite if validate_probes else None,
    )


__all__ = [
    "CASE_COUNTS",
    "FIXTURES_DIR",
    "LIBRARY_SIZES",
    "LOCALIZATION_COUNTS",
    "EmergencyCase",
    "FeasibilityVerdict",
    "Rect",
    "Scenario",
    "category_counts",
    "generate_cases",
    "get_scenario",
    "load_fixture_library",
    "read_cases",
    "scenario_names",
    "write_cases",
]
