"""Decision stage: propose revised functions, validate, commit.

The rule backend applies the smallest data-driven rewrite that
neutralizes the emergency facts: every template names a target function,
an anchor `let` binding holding a list literal, and how to build payload
elements from the facts. Union-merge into the anchor makes repairs
idempotent. A remote backend asks a text-generation service for the full
revised function; its output is untrusted until it parses and passes
trial execution.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Protocol, Sequence

from .dsl import FunctionAst, parse, pretty_print
from .dsl.nodes import CoordLit, Let, ListLit, Literal, RecordLit, Unary
from .errors import DecisionError, LibraryError, NoApplicableTemplate, ParseError
from .library import (
    AtomicFunction,
    FunctionLibrary,
    commit,
    make_function,
    trial_execute,
)
from .perception import AffectedSet, PerceptionInput, aggregate
from .scenarios.base import EmergencyCase, FeasibilityVerdict, Scenario

TEMPLATES_DIR = Path(__file__).resolve().parent / "fixtures" / "templates"

RULE_RETRIES = 0
REMOTE_RETRIES = 2


@dataclass(frozen=True)
class RepairRequest:
    input: PerceptionInput
    target: AtomicFunction | None  # None means a new-function slot
    new_name: str = ""
    constraints: str = "Edit only this function; all other library entries must stay untouched."
    capabilities: frozenset[str] = frozenset()
    feedback: str = ""

    def __post_init__(self) -> None:
        if self.target is None and not self.new_name:
            raise DecisionError("a new-function request needs a name")


@dataclass(frozen=True)
class RepairProposal:
    revised_source: str
    rationale: str
    backend: str

    def __post_init__(self) -> None:
        if not self.revised_source.strip():
            raise DecisionError("proposal carries no source")


class DecisionBackend(Protocol):
    name: str

    def propose(self, req: RepairRequest) -> RepairProposal: ...

    def retries(self) -> int: ...


@dataclass(frozen=True)
class Template:
    fact_kind: str
    function: str
    anchor: str
    payload: Mapping


def load_templates(scenario: str, path: str | Path | None = None) -> tuple[Template, ...]:
    src = Path(path) if path is not None else TEMPLATES_DIR / f"{scenario}.jsonl"
    rows = []
    for line in src.read_text(encoding="utf-8").splitlines():
        if line.strip():
            data = json.loads(line)
            rows.append(Template(data["fact"], data["function"], data["anchor"], data["payload"]))
    return tuple(rows)


def _value_expr(value):
    if value is True or value is False:
        return Literal(value)
    if isinstance(value, int):
        return Literal(value) if value >= 0 else Unary("-", Literal(-value))
    if isinstance(value, str):
        return Literal(value)
    if isinstance(value, (list, tuple)):
        if len(value) == 2 and all(isinstance(c, int) and c is not True and c is not False for c in value):
            return CoordLit(_value_expr(value[0]), _value_expr(value[1]))
        raise DecisionError(f"cannot express payload value {value!r}")
    if isinstance(value, Mapping):
        return RecordLit(tuple((k, _value_expr(v)) for k, v in value.items()))
    raise DecisionError(f"cannot express payload value {value!r}")


def _payload_elements(payload: Mapping, fact: Mapping) -> list:
    kind = payload["kind"]
    if kind == "ids":
        return [_value_expr(v) for v in fact[payload["path"]]]
    if kind == "cells":
        return [_value_expr(list(c)) for c in fact[payload["path"]]]
    if kind == "rect":
        return [_value_expr({"lo": fact["lo"], "hi": fact["hi"]})]
    if kind == "record":
        rec = {dsl_field: fact[path] for dsl_field, path in payload["fields"].items()}
        return [_value_expr(rec)]
    if kind == "record_each":
        out = []
        for item in fact[payload["list_path"]]:
            rec = {}
            for dsl_field, path in payload["fields"].items():
                rec[dsl_field] = item if path == "$item" else fact[path]
            out.append(_value_expr(rec))
        return out
    if kind == "records":
        out = []
        for item in fact[payload["list_path"]]:
            rec = {dsl_field: item[path] for dsl_field, path in payload["fields"].items()}
            out.append(_value_expr(rec))
        return out
    raise DecisionError(f"unknown payload kind {kind!r}")


def _extend_anchor(ast: FunctionAst, anchor: str, elements: Sequence) -> FunctionAst:
    """Union-merge elements into the anchor's list literal."""
    body = list(ast.body)
    for i, stmt in enumerate(body):
        if isinstance(stmt, Let) and stmt.name == anchor:
            if not isinstance(stmt.expr, ListLit):
                raise DecisionError(f"anchor {anchor!r} is not a list literal")
            items = list(stmt.expr.items)
            for element in elements:
                if element not in items:
                    items.append(element)
            body[i] = Let(anchor, ListLit(tuple(items)))
            return replace(ast, body=tuple(body))
    raise DecisionError(f"anchor {anchor!r} not found in {ast.name!r}")


class RuleBackend:
    """Deterministic template rewrites keyed by (fact kind, function)."""

    name = "rules"

    def __init__(self, scenario: str, templates: Sequence[Template] | None = None):
        self.templates = tuple(templates) if templates is not None else load_templates(scenario)

    def retries(self) -> int:
        return RULE_RETRIES

    def propose(self, req: RepairRequest) -> RepairProposal:
        if req.target is None:
            raise NoApplicableTemplate("rule backend does not synthesize new functions")
        ast = req.target.ast
        applied = []
        for fact in req.input.facts:
            for template in self.templates:
                if template.fact_kind == fact["kind"] and template.function == req.target.name:
                    elements = _payload_elements(template.payload, fact)
                    ast = _extend_anchor(ast, template.anchor, elements)
                    applied.append(f"{template.fact_kind}->{template.anchor}")
        if not applied:
            raise NoApplicableTemplate(
                f"no template matches {req.target.name!r} for facts "
                f"{sorted({f['kind'] for f in req.input.facts})}"
            )
        return RepairProposal(
            revised_source=pretty_print(ast),
            rationale="applied " + ", ".join(applied),
            backend=self.name,
        )


_CODE_FENCE = re.compile(r"```(?:\w+)?\n(.*?)```", re.DOTALL)


class RemoteDecisionBackend:
    """Full-function regeneration through a remote completion service."""

    name = "remote"

    def __init__(self, client_config, complete=None):
        from . import remote

        self.config = client_config
        self._complete = complete or remote.complete

    def retries(self) -> int:
        return REMOTE_RETRIES

    def propose(self, req: RepairRequest) -> RepairProposal:
        reply = self._complete(render_repair_prompt(req), self.config)
        matches = _CODE_FENCE.findall(reply)
        source = (matches[0] if matches else reply).strip() + "\n"
        try:
            parse(source, req.capabilities)
        except ParseError as exc:
            raise DecisionError(f"remote proposal does not parse: {exc}") from exc
        return RepairProposal(source, "remote regeneration", self.name)


def render_repair_prompt(req: RepairRequest) -> str:
    z = req.input
    target_part = (
        f"Current function:\n{req.target.source}" if req.target is not None
        else f"Write a new function named {req.new_name!r}."
    )
    feedback = f"\nPrevious attempt failed validation: {req.feedback}\n" if req.feedback else ""
    return (
        "Revise one scheduling function so the plan stays executable under "
        "the emergency below. Return the complete function body in a fenced "
        "code block. "
        f"{req.constraints}\n"
        f"Scenario: {z.scenario}\n"
        f"Emergency: {z.narrative}\n"
        f"Facts: {json.dumps([dict(f) for f in z.facts], sort_keys=True)}\n"
        f"State: {z.state_digest}\n"
        f"{target_part}\n"
        f"{feedback}"
    )


@dataclass(frozen=True)
class ProposalOutcome:
    function: str
    attempts: int
    passed: bool
    detail: str = ""
    committed: bool = False


@dataclass(frozen=True)
class EpisodeOutcome:
    success: bool
    proposals: tuple[ProposalOutcome, ...]
    feasibility: FeasibilityVerdict
    already_handled: bool = False

    @property
    def proposal_count(self) -> int:
        return len(self.proposals)


def propose(req: RepairRequest, backend: DecisionBackend) -> RepairProposal:
    return backend.propose(req)


def repair_and_commit(
    case: EmergencyCase,
    affected: AffectedSet,
    backend: DecisionBackend,
    lib: FunctionLibrary,
    scenario: Scenario,
    base_lib: FunctionLibrary | None = None,
) -> tuple[FunctionLibrary, EpisodeOutcome]:
    """Run propose -> trial-execute -> commit for each affected function.

    `lib` is the evolving run library: when it already handles the case
    (an earlier episode committed the needed revisions), the episode
    short-circuits to success with zero proposals. Otherwise each repair
    is proposed from the pristine `base_lib` snapshot, so the revision
    reflects exactly this emergency's facts; benchmark instances are
    independent, and stale edits from contradictory earlier instances
    must not leak into this episode's schedule. Commits still accumulate
    into the run library (entries and history are monotone across a run).

    A failing proposal never mutates any library; success additionally
    requires the post-repair schedule (pristine base plus this episode's
    accepted revisions) to pass the feasibility oracle on the
    post-emergency truth.
    """
    if not affected.members:
        raise DecisionError("repair requested with an empty affected set")
    base = base_lib if base_lib is not None else lib
    view = case.state
    truth = scenario.apply_emergency(view, case.emergency)
    if scenario.check_feasible(truth, scenario.plan(view, lib)).ok:
        return lib, EpisodeOutcome(True, (), FeasibilityVerdict(True), already_handled=True)
    caps = scenario.capabilities(view).names()
    z = aggregate(case.emergency, view, base.specs(), scenario)
    outcomes: list[ProposalOutcome] = []
    accepted: dict[str, AtomicFunction] = {}
    for name in sorted(affected.members):
        target = base.get(name)
        req = RepairRequest(input=z, target=target, capabilities=caps)
        attempts = 0
        passed = False
        detail = ""
        for attempt in range(backend.retries() + 1):
            attempts += 1
            try:
                proposal = backend.propose(req)
            except NoApplicableTemplate as exc:
                detail = str(exc)
                break
            except DecisionError as exc:
                detail = str(exc)
                req = replace(req, feedback=detail)
                continue
            try:
                candidate = make_function(proposal.revised_source, target.spec, caps)
            except ParseError as exc:
                detail = f"proposal does not parse: {exc}"
                req = replace(req, feedback=detail)
                continue
            except LibraryError as exc:
                detail = f"proposal rejected: {exc}"
                req = replace(req, feedback=detail)
                continue
            if candidate.name != target.name:
                detail = f"proposal renamed {target.name!r} to {candidate.name!r}"
                req = replace(req, feedback=detail)
                continue
            verdict = trial_execute(lib, candidate, scenario.episode_probes(name, case))
            if verdict.passed:
                lib = commit(lib, candidate, verdict)
                accepted[name] = candidate
                passed = True
                detail = proposal.rationale
                break
            failure = verdict.first_failure()
            detail = f"trial execution failed: {failure.probe}: {failure.detail}" if failure else "trial failed"
            req = replace(req, feedback=detail)
        outcomes.append(ProposalOutcome(name, attempts, passed, detail, committed=passed))
    episode_lib = FunctionLibrary(base.scenario, dict(base.entries) | accepted, base.history)
    feasibility = scenario.check_feasible(truth, scenario.plan(view, episode_lib))
    success = all(o.passed for o in outcomes) and feasibility.ok
    return lib, EpisodeOutcome(success, tuple(outcomes), feasibility)
