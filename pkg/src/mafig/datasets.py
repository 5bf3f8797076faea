"""Fixture dataset builders: localization and distillation streams.

Dataset sizes mirror the benchmark fixtures: 30/50/100 localization
records and 80/170/120 distillation records for port/warehouse/deck.
Distillation pairs come from running the rule backend over a dedicated
seeded case stream and collecting (context, original, revised) triples,
one per repaired function, truncated at the target count.
"""

from __future__ import annotations

import json
from pathlib import Path

from .decision import RuleBackend, repair_and_commit
from .errors import MafigError
from .library import FunctionLibrary
from .perception import (
    HeuristicBackend,
    aggregate,
    build_localization_dataset,
    localize,
)
from .scenarios import (
    EmergencyCase,
    LOCALIZATION_COUNTS,
    Scenario,
    generate_cases,
    get_scenario,
    load_fixture_library,
)
from .sfl import DEFAULT_LAMBDA_EDIT, DISTILL_COUNTS, DistillPair, build_distill_dataset

LOCALIZATION_SEED = 101
DISTILL_SEED = 202

#: Case-stream sizes that comfortably cover the distillation targets.
_DISTILL_STREAM = {"port": 160, "warehouse": 280, "deck": 200}


def localization_cases(scenario: str | Scenario, lib: FunctionLibrary | None = None) -> list[EmergencyCase]:
    scn = get_scenario(scenario) if isinstance(scenario, str) else scenario
    lib = lib if lib is not None else load_fixture_library(scn, validate_probes=False)
    return generate_cases(scn, LOCALIZATION_SEED, LOCALIZATION_COUNTS[scn.name], lib)


def build_localization_fixture(scenario: str | Scenario, out_path: str | Path) -> list[dict]:
    scn = get_scenario(scenario) if isinstance(scenario, str) else scenario
    lib = load_fixture_library(scn, validate_probes=False)
    cases = localization_cases(scn, lib)
    return build_localization_dataset(cases, lib.specs(), scn, out_path)


def render_context(case: EmergencyCase, scenario: Scenario) -> str:
    return (
        f"scenario: {scenario.name}\n"
        f"emergency: {case.emergency.narrative}\n"
        f"facts: {json.dumps([dict(f) for f in case.emergency.facts], sort_keys=True)}"
    )


def distill_pairs(
    scenario: str | Scenario,
    count: int | None = None,
    lib: FunctionLibrary | None = None,
) -> list[DistillPair]:
    """Teacher pairs from rule repairs over a dedicated seeded stream.

    Every repair runs against the pristine fixture library so each pair is
    an independent (context, f, f*) example.
    """
    scn = get_scenario(scenario) if isinstance(scenario, str) else scenario
    lib = lib if lib is not None else load_fixture_library(scn, validate_probes=False)
    target = count if count is not None else DISTILL_COUNTS[scn.name]
    stream = generate_cases(scn, DISTILL_SEED, _DISTILL_STREAM[scn.name], lib)
    backend = RuleBackend(scn.name)
    heuristic = HeuristicBackend()
    pairs: list[DistillPair] = []
    for case in stream:
        if len(pairs) >= target:
            break
        if not case.impactful:
            continue
        z = aggregate(case.emergency, case.state, lib.specs(), scn)
        affected = localize(z, heuristic)
        if not affected.members:
            continue
        evolved, outcome = repair_and_commit(case, affected, backend, lib, scn)
        if outcome.already_handled:
            continue
        context = render_context(case, scn)
        for name in sorted(affected.members):
            if len(pairs) >= target:
                break
            original = lib.get(name).source
            revised = evolved.get(name).source
            if original == revised:
                continue
            pairs.append(DistillPair(
                case_id=case.case_id,
                scenario=scn.name,
                category=case.emergency.category,
                function=name,
                context=context,
                original=original,
                revised=revised,
            ))
    if len(pairs) < target:
        raise MafigError(
            f"distill stream for {scn.name} yielded {len(pairs)} pairs, need {target}"
        )
    return pairs


def build_distill_fixture(
    scenario: str | Scenario,
    out_path: str | Path,
    lambda_edit: float = DEFAULT_LAMBDA_EDIT,
) -> list:
    scn = get_scenario(scenario) if isinstance(scenario, str) else scenario
    return build_distill_dataset(distill_pairs(scn), out_path, lambda_edit)


def golden_cases(scenario: str | Scenario, lib: FunctionLibrary | None = None) -> list[EmergencyCase]:
    """The audited golden subset: handwritten facts with pinned labels."""
    from .scenarios import FIXTURES_DIR
    from .scenarios.base import Emergency

    scn = get_scenario(scenario) if isinstance(scenario, str) else scenario
    lib = lib if lib is not None else load_fixture_library(scn, validate_probes=False)
    path = FIXTURES_DIR / "golden" / f"{scn.name}.json"
    entries = json.loads(path.read_text(encoding="utf-8"))
    cases = []
    for entry in entries:
        facts = tuple(entry["facts"])
        emergency = Emergency(
            id=entry["id"],
            scenario=scn.name,
            category=entry["category"],
            narrative=scn.narrative_for(facts),
            facts=facts,
        )
        state = scn.base_state(entry.get("variant", 0))
        expected = frozenset(entry["expected_labels"])
        derived = scn.rule_labels(lib, facts)
        if expected != derived:
            raise MafigError(
                f"golden case {entry['id']}: audited labels {sorted(expected)} "
                f"disagree with the dependency rule {sorted(derived)}"
            )
        cases.append(EmergencyCase(state, emergency, True, expected, seed=0))
    return cases
