"""The atomic-function library: registry, trial execution, gated commit.

On disk a library is `library/<scenario>/<name>.afn` (UTF-8, LF) plus
`specs.jsonl` with one spec record per function; history persists as
JSONL. Commit never mutates in place: it returns a new snapshot, so
readers always observe a consistent library and episodes can run against
frozen snapshots concurrently.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from .dsl import CapabilityTable, FunctionAst, SourceText, evaluate, kind_of, parse, pretty_print
from .dsl.interp import Value
from .errors import CommitRejected, LibraryError, MafigError

SPECS_FILE = "specs.jsonl"
HISTORY_FILE = "history.jsonl"


@dataclass(frozen=True)
class FunctionSpec:
    """Searchable metadata: what the function reads/writes and its keywords."""

    name: str
    summary: str
    reads: frozenset[str]
    writes: frozenset[str]
    keywords: frozenset[str]
    scenario: str

    def __post_init__(self) -> None:
        if not self.keywords:
            raise LibraryError(f"spec for {self.name!r} has no keywords")

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "summary": self.summary,
            "reads": sorted(self.reads),
            "writes": sorted(self.writes),
            "keywords": sorted(self.keywords),
            "scenario": self.scenario,
        }

    @classmethod
    def from_json(cls, data: dict) -> "FunctionSpec":
        return cls(
            name=data["name"],
            summary=data["summary"],
            reads=frozenset(data["reads"]),
            writes=frozenset(data["writes"]),
            keywords=frozenset(data["keywords"]),
            scenario=data["scenario"],
        )


@dataclass(frozen=True)
class AtomicFunction:
    name: str
    version: int
    source: str  # canonical text, equal to pretty_print(ast)
    ast: FunctionAst
    spec: FunctionSpec

    def __post_init__(self) -> None:
        if self.version < 1:
            raise LibraryError("versions start at 1")
        if self.ast.name != self.name:
            raise LibraryError(f"declared name {self.ast.name!r} != entry name {self.name!r}")
        if self.spec.name != self.name:
            raise LibraryError(f"spec {self.spec.name!r} attached to entry {self.name!r}")
        if self.source != pretty_print(self.ast):
            raise LibraryError(f"source of {self.name!r} is not canonical")


def make_function(source: str | SourceText, spec: FunctionSpec, capabilities=None, version: int = 1) -> AtomicFunction:
    """Parse + canonicalize a source into a library entry."""
    ast = parse(source, capabilities)
    return AtomicFunction(ast.name, version, pretty_print(ast), ast, spec)


@dataclass(frozen=True)
class HistoryEvent:
    name: str
    version: int
    source: str
    timestamp: float
    provenance: str  # library | generated | edited

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "source": self.source,
            "timestamp": self.timestamp,
            "provenance": self.provenance,
        }


@dataclass(frozen=True)
class ProbeCase:
    """One trial-execution probe: a state-bound capability table, arguments,
    the expected result kind, and named feasibility assertions.

    invariant=False marks probes that pin the pristine library's literal
    defaults; they gate loading but are excluded when validating repairs,
    which legitimately change those defaults."""

    label: str
    caps: CapabilityTable
    args: tuple[Value, ...]
    expect_kind: str
    checks: tuple[tuple[str, Callable[[Value], bool]], ...] = ()
    invariant: bool = True


@dataclass(frozen=True)
class ProbeOutcome:
    probe: str
    ok: bool
    detail: str = ""


@dataclass(frozen=True)
class VerdictReport:
    function: str
    passed: bool
    outcomes: tuple[ProbeOutcome, ...]

    def first_failure(self) -> ProbeOutcome | None:
        return next((o for o in self.outcomes if not o.ok), None)


@dataclass(frozen=True)
class FunctionLibrary:
    scenario: str
    entries: dict[str, AtomicFunction]
    history: tuple[HistoryEvent, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, name: str) -> AtomicFunction:
        try:
            return self.entries[name]
        except KeyError:
            raise LibraryError(f"no function named {name!r} in {self.scenario} library") from None

    def names(self) -> list[str]:
        return sorted(self.entries)

    def specs(self) -> list[FunctionSpec]:
        return [self.entries[n].spec for n in self.names()]


class GenerationClient(Protocol):
    """Contract for a model-backed library builder: given aggregated
    context, produce function source plus its spec record. Output is
    untrusted until it parses and passes trial execution."""

    def generate_function(self, context: str) -> tuple[str, FunctionSpec]: ...


def load_library(
    scenario: str,
    path: str | Path,
    capabilities: frozenset[str] | None = None,
    schema_fields: frozenset[str] | None = None,
    decision_fields: frozenset[str] | None = None,
    probe_suite: Callable[[str], Sequence[ProbeCase]] | None = None,
) -> FunctionLibrary:
    """Load `<path>/<name>.afn` + specs.jsonl into a validated library.

    Every source must parse, every spec must reference real state/decision
    fields, and (when a probe suite is supplied) every entry must pass its
    own probes.
    """
    root = Path(path)
    specs_path = root / SPECS_FILE
    if not specs_path.exists():
        raise LibraryError(f"missing {SPECS_FILE} under {root}")
    specs: dict[str, FunctionSpec] = {}
    for line in specs_path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        spec = FunctionSpec.from_json(json.loads(line))
        if spec.name in specs:
            raise LibraryError(f"duplicate spec for {spec.name!r}")
        if spec.scenario != scenario:
            raise LibraryError(f"spec {spec.name!r} belongs to scenario {spec.scenario!r}")
        if schema_fields is not None:
            unknown = spec.reads - schema_fields
            if unknown:
                raise LibraryError(f"spec {spec.name!r} reads unknown fields {sorted(unknown)}")
        if decision_fields is not None:
            unknown = spec.writes - decision_fields
            if unknown:
                raise LibraryError(f"spec {spec.name!r} writes unknown fields {sorted(unknown)}")
        specs[spec.name] = spec
    sources = sorted(root.glob("*.afn"))
    if not sources:
        raise LibraryError(f"no .afn sources under {root}")
    entries: dict[str, AtomicFunction] = {}
    history: list[HistoryEvent] = []
    for src_path in sources:
        name = src_path.stem
        if name not in specs:
            raise LibraryError(f"{src_path.name} has no spec record")
        if name in entries:
            raise LibraryError(f"duplicate function {name!r}")
        text = src_path.read_text(encoding="utf-8")
        entry = make_function(SourceText(text, "library"), specs[name], capabilities)
        if entry.name != name:
            raise LibraryError(f"{src_path.name} declares {entry.name!r}")
        entries[name] = entry
        history.append(HistoryEvent(name, 1, entry.source, 0.0, "library"))
    missing = set(specs) - set(entries)
    if missing:
        raise LibraryError(f"specs without sources: {sorted(missing)}")
    history_path = root / HISTORY_FILE
    if history_path.exists():
        restored = [
            HistoryEvent(**json.loads(line))
            for line in history_path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        # a persisted log is authoritative when it ends at the loaded sources
        latest: dict[str, HistoryEvent] = {}
        for event in restored:
            if event.name not in latest or event.version > latest[event.name].version:
                latest[event.name] = event
        if set(latest) == set(entries) and all(
            latest[name].source == entries[name].source for name in entries
        ):
            entries = {
                name: replace(entry, version=latest[name].version)
                for name, entry in entries.items()
            }
            history = restored
    lib = FunctionLibrary(scenario, entries, tuple(history))
    if probe_suite is not None:
        for name in lib.names():
            verdict = trial_execute(lib, lib.entries[name], probe_suite(name))
            if not verdict.passed:
                failure = verdict.first_failure()
                raise LibraryError(f"library entry {name!r} fails its probe suite: {failure}")
    return lib


def trial_execute(
    lib: FunctionLibrary,
    candidate: AtomicFunction,
    probes: Iterable[ProbeCase],
    step_budget: int = 100_000,
) -> VerdictReport:
    """Run the candidate against every probe. Failures are verdicts, never
    exceptions: a pass requires error-free evaluation, a type-correct
    result, and every feasibility assertion to hold on every probe."""
    outcomes: list[ProbeOutcome] = []
    for probe in probes:
        try:
            result = evaluate(candidate.ast, list(probe.args), probe.caps, step_budget)
        except MafigError as exc:
            outcomes.append(ProbeOutcome(probe.label, False, f"evaluation error: {exc}"))
            continue
        kind = kind_of(result)
        if probe.expect_kind and kind != probe.expect_kind and not (probe.expect_kind == "real" and kind == "int"):
            outcomes.append(ProbeOutcome(probe.label, False, f"expected {probe.expect_kind}, got {kind}"))
            continue
        violated = ""
        for check_name, check in probe.checks:
            try:
                ok = bool(check(result))
            except Exception as exc:  # assertion helpers must not crash the trial
                ok = False
                violated = f"{check_name} (raised {exc})"
            if not ok:
                violated = violated or check_name
                break
        if violated:
            outcomes.append(ProbeOutcome(probe.label, False, f"violated assertion: {violated}"))
        else:
            outcomes.append(ProbeOutcome(probe.label, True))
    passed = bool(outcomes) and all(o.ok for o in outcomes)
    return VerdictReport(candidate.name, passed, tuple(outcomes))


def commit(lib: FunctionLibrary, candidate: AtomicFunction, verdict: VerdictReport) -> FunctionLibrary:
    """Add or replace an entry after a passing trial.

    Union semantics: committing a byte-identical source is a no-op; a
    revised body bumps the version by exactly one and appends history.
    Entry count never decreases (there is no delete).
    """
    if not verdict.passed or verdict.function != candidate.name:
        raise CommitRejected(f"refusing to commit {candidate.name!r} without a passing verdict")
    current = lib.entries.get(candidate.name)
    if current is not None and current.source == candidate.source:
        return lib
    version = 1 if current is None else current.version + 1
    entry = replace(candidate, version=version)
    entries = dict(lib.entries)
    entries[entry.name] = entry
    event = HistoryEvent(entry.name, version, entry.source, time.time(), "edited" if current else "generated")
    return FunctionLibrary(lib.scenario, entries, lib.history + (event,))


def replay_history(lib: FunctionLibrary, name: str) -> str:
    """Reconstruct the current source of a function from its history alone."""
    versions = [e for e in lib.history if e.name == name]
    if not versions:
        raise LibraryError(f"no history for {name!r}")
    versions.sort(key=lambda e: e.version)
    expected = list(range(1, len(versions) + 1))
    if [e.version for e in versions] != expected:
        raise LibraryError(f"history for {name!r} is not contiguous")
    return versions[-1].source


def save_library(lib: FunctionLibrary, path: str | Path) -> None:
    """Persist sources, specs and history under the on-disk layout."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for name in lib.names():
        entry = lib.entries[name]
        (root / f"{name}.afn").write_text(entry.source, encoding="utf-8", newline="\n")
    with (root / SPECS_FILE).open("w", encoding="utf-8") as fh:
        for spec in lib.specs():
            fh.write(json.dumps(spec.to_json(), sort_keys=True) + "\n")
    with (root / HISTORY_FILE).open("w", encoding="utf-8") as fh:
        for event in lib.history:
            fh.write(json.dumps(event.to_json(), sort_keys=True) + "\n")
