"""Shared scenario machinery: emergencies, cases, generation, oracles.

Each scenario owns a state schema, an emergency taxonomy, seeded fact
samplers with narrative templates, a planner that drives the library
through the interpreter, and a feasibility oracle. The oracle defines
success; it inspects decisions directly and never reuses the router that
produced them.

Category names are artifact-authored: the source taxonomy figures are
images, so the lists here are this repo's own labels.
"""

from __future__ import annotations

import json
import random
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from ..dsl import CapabilityTable, Coord
from ..errors import ScenarioError
from ..library import FunctionLibrary, ProbeCase

CASE_SCHEMA_VERSION = 1

#: Paper-scale test-set sizes and taxonomy widths per scenario.
CASE_COUNTS = {"port": 199, "warehouse": 398, "deck": 642}
LOCALIZATION_COUNTS = {"port": 30, "warehouse": 50, "deck": 100}
LIBRARY_SIZES = {"port": 8, "warehouse": 15, "deck": 25}


@dataclass(frozen=True)
class Rect:
    lo: Coord
    hi: Coord

    def __post_init__(self) -> None:
        if self.lo.x > self.hi.x or self.lo.y > self.hi.y:
            raise ScenarioError(f"degenerate rect {self.lo}..{self.hi}")

    def cells(self) -> list[Coord]:
        return [Coord(x, y) for x in range(self.lo.x, self.hi.x + 1) for y in range(self.lo.y, self.hi.y + 1)]

    def contains(self, c: Coord) -> bool:
        return self.lo.x <= c.x <= self.hi.x and self.lo.y <= c.y <= self.hi.y

    def to_json(self) -> dict:
        return {"lo": [self.lo.x, self.lo.y], "hi": [self.hi.x, self.hi.y]}

    @classmethod
    def from_json(cls, data: Mapping) -> "Rect":
        return cls(Coord(*data["lo"]), Coord(*data["hi"]))


@dataclass(frozen=True)
class Emergency:
    id: str
    scenario: str
    category: str
    narrative: str
    facts: tuple[Mapping[str, Any], ...]
    timestamp: int = 0

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "scenario": self.scenario,
            "category": self.category,
            "narrative": self.narrative,
            "facts": [dict(f) for f in self.facts],
            "timestamp": self.timestamp,
        }


@dataclass(frozen=True)
class FeasibilityVerdict:
    ok: bool
    reason: str = ""

    def __bool__(self) -> bool:  # pragma: no cover
        return self.ok


@dataclass(frozen=True)
class EmergencyCase:
    state: Any
    emergency: Emergency
    impactful: bool
    affected_labels: frozenset[str]
    seed: int

    def __post_init__(self) -> None:
        if not self.impactful and self.affected_labels:
            raise ScenarioError("non-impactful case must have empty labels")

    @property
    def case_id(self) -> str:
        return self.emergency.id


class Scenario(ABC):
    """One scheduling world: schema, taxonomy, planner, oracle, probes."""

    name: str
    categories: tuple[str, ...]
    schema_fields: frozenset[str]
    decision_fields: frozenset[str]

    # --- state and environment ---

    def variant_count(self) -> int:
        """Number of deterministic base-state variants (task layouts)."""
        return 1

    @abstractmethod
    def base_state(self, variant: int = 0) -> Any: ...

    @abstractmethod
    def state_to_json(self, state: Any) -> dict: ...

    @abstractmethod
    def state_from_json(self, data: Mapping) -> Any: ...

    @abstractmethod
    def capabilities(self, state: Any) -> CapabilityTable: ...

    @abstractmethod
    def apply_emergency(self, state: Any, emergency: Emergency) -> Any: ...

    # --- planning and checking ---

    @abstractmethod
    def plan(self, state: Any, lib: FunctionLibrary) -> dict: ...

    @abstractmethod
    def check_feasible(self, state: Any, decision: dict) -> FeasibilityVerdict: ...

    # --- emergencies ---

    @abstractmethod
    def sample_facts(self, category: str, rng: random.Random, state: Any, impactful_intent: bool) -> tuple[dict, ...]: ...

    @abstractmethod
    def fact_fields(self, fact: Mapping) -> frozenset[str]: ...

    @abstractmethod
    def fact_tags(self, fact: Mapping) -> frozenset[str]: ...

    @abstractmethod
    def narrative_for(self, facts: Sequence[Mapping]) -> str: ...

    # --- probes ---

    @abstractmethod
    def probe_suite(self, function: str) -> tuple[ProbeCase, ...]: ...

    @abstractmethod
    def episode_probes(self, function: str, case: EmergencyCase) -> tuple[ProbeCase, ...]: ...

    # --- derived helpers ---

    def affected_fields(self, facts: Iterable[Mapping]) -> frozenset[str]:
        out: set[str] = set()
        for fact in facts:
            out |= self.fact_fields(fact)
        return frozenset(out)

    def tags(self, facts: Iterable[Mapping]) -> frozenset[str]:
        out: set[str] = set()
        for fact in facts:
            out |= self.fact_tags(fact)
        return frozenset(out)

    def rule_labels(self, lib: FunctionLibrary, facts: Iterable[Mapping]) -> frozenset[str]:
        """Dependency rule: functions whose declared reads/writes touch the
        fields affected by the facts."""
        fields = self.affected_fields(facts)
        hit = set()
        for spec in lib.specs():
            if spec.reads & fields or spec.writes & fields:
                hit.add(spec.name)
        return frozenset(hit)


def straddle_pair(rect: Rect, forbidden: frozenset[Coord], width: int, height: int):
    """Endpoints on opposite sides of a rect, so a naive shortest route
    crosses it; repair checks re-walk the returned path cell by cell."""
    mid_y = (rect.lo.y + rect.hi.y) // 2
    start = Coord(rect.lo.x - 1, mid_y)
    goal = Coord(rect.hi.x + 1, mid_y)
    for c in (start, goal):
        if not (0 <= c.x < width and 0 <= c.y < height) or c in forbidden:
            return None, None
    return start, goal


def category_counts(scenario: Scenario, total: int) -> dict[str, int]:
    """Distribute a total across categories as evenly as possible; the
    remainder goes to the earliest categories, so histograms are exact and
    deterministic."""
    n = len(scenario.categories)
    if total < n:
        raise ScenarioError(f"total {total} cannot cover {n} categories")
    base, extra = divmod(total, n)
    return {cat: base + (1 if i < extra else 0) for i, cat in enumerate(scenario.categories)}


def generate_cases(
    scenario: Scenario,
    seed: int,
    counts: int | Mapping[str, int],
    lib: FunctionLibrary,
) -> list[EmergencyCase]:
    """Seeded case generation with exhaustive category coverage.

    The impactful flag is verified, not assumed: the pre-repair plan is
    checked against the post-emergency truth, and labels come from the
    dependency rule only when the case is genuinely impactful.
    """
    if isinstance(counts, int):
        requested = category_counts(scenario, counts)
    else:
        requested = dict(counts)
        unknown = set(requested) - set(scenario.categories)
        if unknown:
            raise ScenarioError(f"unknown categories {sorted(unknown)}")
        if any(v < 1 for v in requested.values()):
            raise ScenarioError("count per category must be >= 1")
    cases: list[EmergencyCase] = []
    baseline_plans: dict[int, dict] = {}
    for cat_index, category in enumerate(scenario.categories):
        want = requested.get(category, 0)
        rng = random.Random(f"{seed}/{scenario.name}/{category}")
        for i in range(want):
            impact_intent = i % 5 != 4
            variant = rng.randrange(scenario.variant_count())
            state = scenario.base_state(variant)
            facts = scenario.sample_facts(category, rng, state, impact_intent)
            emergency = Emergency(
                id=f"{scenario.name}-{cat_index:02d}-{i:04d}",
                scenario=scenario.name,
                category=category,
                narrative=scenario.narrative_for(facts),
                facts=facts,
                timestamp=i,
            )
            truth = scenario.apply_emergency(state, emergency)
            if variant not in baseline_plans:
                baseline_plans[variant] = scenario.plan(state, lib)
            verdict = scenario.check_feasible(truth, baseline_plans[variant])
            impactful = not verdict.ok
            labels = scenario.rule_labels(lib, facts) if impactful else frozenset()
            cases.append(EmergencyCase(state, emergency, impactful, labels, seed))
    return cases


def case_to_json(scenario: Scenario, case: EmergencyCase) -> dict:
    return {
        "schema_version": CASE_SCHEMA_VERSION,
        "scenario": scenario.name,
        "case_id": case.case_id,
        "seed": case.seed,
        "impactful": case.impactful,
        "affected_labels": sorted(case.affected_labels),
        "emergency": case.emergency.to_json(),
        "state": scenario.state_to_json(case.state),
    }


def case_from_json(scenario: Scenario, data: Mapping) -> EmergencyCase:
    if data.get("schema_version") != CASE_SCHEMA_VERSION:
        raise ScenarioError(f"unsupported case schema {data.get('schema_version')!r}")
    emg = data["emergency"]
    emergency = Emergency(
        id=emg["id"],
        scenario=emg["scenario"],
        category=emg["category"],
        narrative=emg["narrative"],
        facts=tuple(emg["facts"]),
        timestamp=emg.get("timestamp", 0),
    )
    return EmergencyCase(
        state=scenario.state_from_json(data["state"]),
        emergency=emergency,
        impactful=data["impactful"],
        affected_labels=frozenset(data["affected_labels"]),
        seed=data["seed"],
    )


def write_cases(scenario: Scenario, cases: Sequence[EmergencyCase], path: str | Path) -> None:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for case in cases:
            fh.write(json.dumps(case_to_json(scenario, case), sort_keys=True) + "\n")


def read_cases(scenario: Scenario, path: str | Path) -> list[EmergencyCase]:
    cases = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            cases.append(case_from_json(scenario, json.loads(line)))
    return cases
