"""Perception stage: aggregate context, score functions, threshold.

The heuristic backend is the deterministic reference: score =
logistic(alpha * keyword-overlap + beta * dependency-hit) with alpha=1.0
and beta=2.0. With the default threshold of 0.5 and the strict `>` rule,
a function is selected exactly when any signal fires. A remote backend
speaks to a text-generation service and must return a JSON object of
name->score; malformed replies surface as typed errors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence

from .errors import PerceptionError
from .library import FunctionSpec
from .scenarios.base import EmergencyCase, Scenario

DEFAULT_TAU = 0.5
ALPHA = 1.0  # keyword-overlap weight
BETA = 2.0  # dependency-hit weight
DIGEST_LIMIT = 4096


@dataclass(frozen=True)
class PerceptionInput:
    scenario: str
    narrative: str
    facts: tuple[Mapping, ...]
    state_digest: str
    specs: tuple[FunctionSpec, ...]
    tags: frozenset[str]
    affected_fields: frozenset[str]


@dataclass(frozen=True)
class AffectedSet:
    scores: Mapping[str, float]
    tau: float
    members: frozenset[str]

    def __post_init__(self) -> None:
        expect = frozenset(n for n, p in self.scores.items() if p > self.tau)
        if expect != self.members:
            raise PerceptionError("members must be exactly the names scoring above tau")


class PerceptionBackend(Protocol):
    """Scores every library function for one aggregated input."""

    def score(self, z: PerceptionInput) -> dict[str, float]: ...


def aggregate(emergency, state, specs: Sequence[FunctionSpec], scenario: Scenario) -> PerceptionInput:
    """Fuse the emergency, the state digest and the function specs into
    one deterministic input whose digest stays below 4096 characters."""
    if emergency.scenario != scenario.name:
        raise PerceptionError(
            f"emergency belongs to {emergency.scenario!r}, scenario is {scenario.name!r}"
        )
    if not emergency.narrative.strip() and not emergency.facts:
        raise PerceptionError("empty emergency: no narrative and no facts")
    digest = _digest(scenario, state)
    return PerceptionInput(
        scenario=scenario.name,
        narrative=emergency.narrative,
        facts=tuple(emergency.facts),
        state_digest=digest,
        specs=tuple(specs),
        tags=scenario.tags(emergency.facts),
        affected_fields=scenario.affected_fields(emergency.facts),
    )


def _digest(scenario: Scenario, state) -> str:
    text = json.dumps(scenario.state_to_json(state), sort_keys=True, separators=(",", ":"))
    if len(text) > DIGEST_LIMIT:
        text = text[: DIGEST_LIMIT - 13] + f"...+{len(text) - DIGEST_LIMIT + 13:07d}"
    return text


class HeuristicBackend:
    """Deterministic reference scorer over fact tags and declared reads/writes."""

    def __init__(self, alpha: float = ALPHA, beta: float = BETA):
        self.alpha = alpha
        self.beta = beta

    def score(self, z: PerceptionInput) -> dict[str, float]:
        scores: dict[str, float] = {}
        n_tags = max(len(z.tags), 1)
        for spec in z.specs:
            overlap = len(z.tags & spec.keywords) / n_tags
            dep = 1.0 if (spec.reads | spec.writes) & z.affected_fields else 0.0
            scores[spec.name] = _logistic(self.alpha * overlap + self.beta * dep)
        return scores


def _logistic(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


class RemoteBackend:
    """Scores via a remote text-generation endpoint."""

    def __init__(self, client_config, complete=None):
        from . import remote

        self.config = client_config
        self._complete = complete or remote.complete

    def score(self, z: PerceptionInput) -> dict[str, float]:
        prompt = render_remote_prompt(z)
        reply = self._complete(prompt, self.config)
        try:
            data = json.loads(reply)
        except json.JSONDecodeError as exc:
            raise PerceptionError(f"remote scorer returned non-JSON output: {reply[:200]!r}") from exc
        if not isinstance(data, dict):
            raise PerceptionError("remote scorer must return a JSON object of name->score")
        names = {spec.name for spec in z.specs}
        missing = names - set(data)
        if missing:
            raise PerceptionError(f"remote scorer omitted functions: {sorted(missing)}")
        try:
            return {name: float(data[name]) for name in names}
        except (TypeError, ValueError) as exc:
            raise PerceptionError("remote scores must be numbers") from exc


def render_remote_prompt(z: PerceptionInput) -> str:
    spec_lines = "\n".join(
        f"- {s.name}: {s.summary} reads={sorted(s.reads)} writes={sorted(s.writes)} keywords={sorted(s.keywords)}"
        for s in z.specs
    )
    return (
        "You audit a scheduling system after an emergency. Score each library "
        "function with the probability (0..1) that the emergency requires "
        "editing it. Reply with a single JSON object mapping every function "
        "name to its score.\n"
        f"Scenario: {z.scenario}\n"
        f"Emergency: {z.narrative}\n"
        f"Facts: {json.dumps([dict(f) for f in z.facts], sort_keys=True)}\n"
        f"State: {z.state_digest}\n"
        f"Functions:\n{spec_lines}\n"
    )


def localize(z: PerceptionInput, backend: PerceptionBackend, tau: float = DEFAULT_TAU) -> AffectedSet:
    """Threshold backend scores into the affected set (strict `>`)."""
    if not 0 < tau < 1:
        raise PerceptionError(f"tau must be in (0, 1), got {tau}")
    if not z.specs:
        raise PerceptionError("cannot localize over an empty library")
    scores = backend.score(z)
    missing = {s.name for s in z.specs} - set(scores)
    if missing:
        raise PerceptionError(f"backend did not score: {sorted(missing)}")
    members = frozenset(name for name, p in scores.items() if p > tau)
    return AffectedSet(dict(sorted(scores.items())), tau, members)


def localization_loss(
    scores: Mapping[str, float],
    labels: Mapping[str, int],
    full_binary: bool = False,
) -> float:
    """Cross-entropy over affected labels: -sum_f y(f) * ln p(f).

    The default penalizes positive labels only; full_binary adds the
    -(1-y) * ln(1-p) term for negatives.
    """
    total = 0.0
    for name, y in labels.items():
        if name not in scores:
            raise PerceptionError(f"label for unscored function {name!r}")
        if y not in (0, 1):
            raise PerceptionError(f"label for {name!r} must be 0 or 1")
        p = scores[name]
        if y == 1:
            if p <= 0:
                raise PerceptionError(f"positive-labeled {name!r} has zero score: infinite loss")
            total -= math.log(p)
        elif full_binary:
            if p >= 1:
                raise PerceptionError(f"negative-labeled {name!r} has score 1: infinite loss")
            total -= math.log(1.0 - p)
    return total


def build_localization_dataset(
    cases: Sequence[EmergencyCase],
    specs: Sequence[FunctionSpec],
    scenario: Scenario,
    out_path: str | Path,
) -> list[dict]:
    """One JSONL record per case: rendered input plus the binary label
    vector over every library function."""
    names = [s.name for s in specs]
    records = []
    for case in cases:
        unknown = case.affected_labels - set(names)
        if unknown:
            raise PerceptionError(f"case {case.case_id} labels unknown functions {sorted(unknown)}")
        z = aggregate(case.emergency, case.state, specs, scenario)
        records.append({
            "case_id": case.case_id,
            "scenario": scenario.name,
            "input_text": render_remote_prompt(z),
            "labels": {name: int(name in case.affected_labels) for name in names},
        })
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return records
