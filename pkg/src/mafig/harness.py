"""Episode orchestration and evaluation reports.

One episode: perceive -> (decide + validate + commit) -> score against
the feasibility oracle. Perception and decision phases are timed
separately around the agent calls only. Deterministic backends default to
a logical clock (a fixed charge per agent invocation) so identical runs
produce byte-identical records and summaries; wall-clock timing is used
for remote backends or on request.

Non-impactful episodes (empty affected set) count as successes when the
standing plan really does survive the emergency: the correct action is no
action, and the oracle still gets the final word.
"""

from __future__ import annotations

import concurrent.futures
import json
import time
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Sequence

from .decision import (
    DecisionBackend,
    RemoteDecisionBackend,
    RuleBackend,
    repair_and_commit,
)
from .errors import MafigError
from .library import FunctionLibrary
from .perception import (
    DEFAULT_TAU,
    HeuristicBackend,
    PerceptionBackend,
    RemoteBackend,
    aggregate,
    localize,
)
from .scenarios import CASE_COUNTS, EmergencyCase, Scenario, generate_cases, get_scenario, load_fixture_library, read_cases
from .sfl import DEFAULT_LAMBDA_EDIT

PERCEPTION_QUANTUM_S = 0.001
DECISION_QUANTUM_S = 0.002


@dataclass
class RunConfig:
    scenario: str
    perception: str = "heuristic"  # heuristic | remote
    decision: str = "rules"  # rules | remote
    tau: float = DEFAULT_TAU
    lambda_edit: float = DEFAULT_LAMBDA_EDIT
    seed: int = 1
    count: int | None = None  # None -> the scenario's full test-set size
    case_file: str | None = None
    parallelism: int = 1
    out_dir: str = "out"
    clock: str = ""  # logical | wall; empty -> logical iff both backends deterministic

    def __post_init__(self) -> None:
        if not 0 < self.tau < 1:
            raise MafigError(f"tau must be in (0, 1), got {self.tau}")
        if self.parallelism < 1:
            raise MafigError("parallelism must be >= 1")
        if self.clock not in ("", "logical", "wall"):
            raise MafigError(f"unknown clock mode {self.clock!r}")

    def method(self) -> str:
        return f"{self.perception}+{self.decision}"

    def effective_clock(self) -> str:
        if self.clock:
            return self.clock
        deterministic = self.perception == "heuristic" and self.decision == "rules"
        return "logical" if deterministic else "wall"


@dataclass(frozen=True)
class EpisodeRecord:
    case_id: str
    category: str
    impact_verdict: bool
    affected: tuple[str, ...]
    proposals: tuple[dict, ...]
    perception_time: float
    decision_time: float
    total_time: float
    success: bool
    detail: str = ""

    def to_json(self) -> dict:
        return asdict(self) | {"affected": list(self.affected), "proposals": [dict(p) for p in self.proposals]}


@dataclass
class RunSummary:
    scenario: str
    method: str
    n: int
    successes: int
    total_time: float
    perception_time: float
    decision_time: float
    per_category: dict[str, dict[str, int]]
    clock: str
    frozen_library: bool = False

    @property
    def success_rate(self) -> float:
        return self.successes / self.n if self.n else 0.0

    @property
    def avg_time(self) -> float:
        return self.total_time / self.n if self.n else 0.0

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario,
            "method": self.method,
            "n": self.n,
            "successes": self.successes,
            "total_time": self.total_time,
            "perception_time": self.perception_time,
            "decision_time": self.decision_time,
            "avg_time": self.avg_time,
            "success_rate": self.success_rate,
            "per_category": self.per_category,
            "clock": self.clock,
            "frozen_library": self.frozen_library,
        }


def make_backends(config: RunConfig) -> tuple[PerceptionBackend, DecisionBackend]:
    from .remote import ClientConfig

    if config.perception == "heuristic":
        pb: PerceptionBackend = HeuristicBackend()
    elif config.perception == "remote":
        pb = RemoteBackend(ClientConfig.from_env())
    else:
        raise MafigError(f"unknown perception backend {config.perception!r}")
    if config.decision == "rules":
        db: DecisionBackend = RuleBackend(config.scenario)
    elif config.decision == "remote":
        db = RemoteDecisionBackend(ClientConfig.from_env())
    else:
        raise MafigError(f"unknown decision backend {config.decision!r}")
    return pb, db


def run_episode(
    case: EmergencyCase,
    config: RunConfig,
    lib: FunctionLibrary,
    scenario: Scenario | None = None,
    backends: tuple[PerceptionBackend, DecisionBackend] | None = None,
    base_lib: FunctionLibrary | None = None,
) -> tuple[EpisodeRecord, FunctionLibrary]:
    """Handle one emergency case; returns the record and the (possibly
    evolved) library. `lib` evolves across a run; `base_lib` is the
    pristine snapshot repairs are proposed from (defaults to `lib`)."""
    scn = scenario or get_scenario(config.scenario)
    pb, db = backends or make_backends(config)
    base = base_lib if base_lib is not None else lib
    logical = config.effective_clock() == "logical"

    t0 = time.perf_counter()
    z = aggregate(case.emergency, case.state, lib.specs(), scn)
    affected = localize(z, pb, config.tau)
    perception_time = PERCEPTION_QUANTUM_S if logical else time.perf_counter() - t0

    proposals: tuple[dict, ...] = ()
    detail = ""
    if not affected.members:
        # no action taken (decision stage skipped); the oracle still judges
        decision_time = 0.0
        truth = scn.apply_emergency(case.state, case.emergency)
        success = scn.check_feasible(truth, scn.plan(case.state, lib)).ok
        if not success and base is not lib:
            success = scn.check_feasible(truth, scn.plan(case.state, base)).ok
        detail = "classified non-impactful" if success else "missed impact: plan infeasible"
    else:
        t1 = time.perf_counter()
        lib, outcome = repair_and_commit(case, affected, db, lib, scn, base)
        attempts = sum(p.attempts for p in outcome.proposals)
        decision_time = (
            DECISION_QUANTUM_S * attempts + PERCEPTION_QUANTUM_S if logical else time.perf_counter() - t1
        )
        success = outcome.success
        proposals = tuple(
            {"function": p.function, "passed": p.passed, "attempts": p.attempts, "detail": p.detail}
            for p in outcome.proposals
        )
        if outcome.already_handled:
            detail = "library already handles this case"
        elif not outcome.feasibility.ok:
            detail = f"post-repair plan infeasible: {outcome.feasibility.reason}"
    total_time = (
        perception_time + decision_time if logical else time.perf_counter() - t0
    )
    record = EpisodeRecord(
        case_id=case.case_id,
        category=case.emergency.category,
        impact_verdict=bool(affected.members),
        affected=tuple(sorted(affected.members)),
        proposals=proposals,
        perception_time=round(perception_time, 6),
        decision_time=round(decision_time, 6),
        total_time=round(total_time, 6),
        success=success,
        detail=detail,
    )
    return record, lib


def load_or_generate_cases(config: RunConfig, lib: FunctionLibrary, scenario: Scenario) -> list[EmergencyCase]:
    if config.case_file:
        return read_cases(scenario, config.case_file)
    count = config.count if config.count is not None else CASE_COUNTS[scenario.name]
    return generate_cases(scenario, config.seed, count, lib)


def run_suite(
    cases: Sequence[EmergencyCase],
    config: RunConfig,
    lib: FunctionLibrary | None = None,
) -> tuple[RunSummary, list[EpisodeRecord], FunctionLibrary]:
    """Run every case. Sequential by default so the library evolves along
    the run; parallel mode works against a frozen snapshot and merges
    records by case id."""
    if not cases:
        raise MafigError("run_suite needs at least one case")
    scn = get_scenario(config.scenario)
    lib = lib if lib is not None else load_fixture_library(scn, validate_probes=False)
    base_lib = lib
    backends = make_backends(config)
    records: list[EpisodeRecord] = []
    if config.parallelism == 1:
        for case in cases:
            record, lib = run_episode(case, config, lib, scn, backends, base_lib)
            records.append(record)
    else:
        def one(case: EmergencyCase) -> EpisodeRecord:
            record, _ = run_episode(case, config, lib, scn, backends, base_lib)
            return record

        with concurrent.futures.ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            records = sorted(pool.map(one, cases), key=lambda r: r.case_id)
    per_category: dict[str, dict[str, int]] = {}
    for record in records:
        bucket = per_category.setdefault(record.category, {"n": 0, "successes": 0})
        bucket["n"] += 1
        bucket["successes"] += int(record.success)
    summary = RunSummary(
        scenario=scn.name,
        method=config.method(),
        n=len(records),
        successes=sum(r.success for r in records),
        total_time=round(sum(r.total_time for r in records), 6),
        perception_time=round(sum(r.perception_time for r in records), 6),
        decision_time=round(sum(r.decision_time for r in records), 6),
        per_category={k: dict(v) for k, v in sorted(per_category.items())},
        clock=config.effective_clock(),
        frozen_library=config.parallelism > 1,
    )
    return summary, records, lib


def round2(value: float) -> str:
    """Round half-up to two decimals (documented report contract)."""
    return str(Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def render_csv(summary: RunSummary, detail: bool = False) -> str:
    header = ["Task", "Method", "Total Time (s)", "Avg Time (s)", "Success Rate"]
    row = [
        summary.scenario,
        summary.method,
        round2(summary.total_time),
        round2(summary.avg_time),
        f"{round2(summary.success_rate * 100)}%",
    ]
    if detail:
        header[2:2] = ["Perception Time (s)", "Decision Time (s)"]
        row[2:2] = [round2(summary.perception_time), round2(summary.decision_time)]
    return ",".join(header) + "\n" + ",".join(row) + "\n"


def render_table(summary: RunSummary, detail: bool = False) -> str:
    csv_text = render_csv(summary, detail)
    head_line, row_line = csv_text.strip().split("\n")
    head = head_line.split(",")
    row = row_line.split(",")
    widths = [max(len(h), len(r)) for h, r in zip(head, row)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(head, widths)).rstrip(),
        "  ".join("-" * w for w in widths),
        "  ".join(r.ljust(w) for r, w in zip(row, widths)).rstrip(),
        "",
        "Per category:",
    ]
    for category, bucket in summary.per_category.items():
        rate = bucket["successes"] / bucket["n"] * 100 if bucket["n"] else 0.0
        lines.append(f"  {category}: {bucket['successes']}/{bucket['n']} ({round2(rate)}%)")
    return "\n".join(lines) + "\n"


def report(
    summary: RunSummary,
    records: Sequence[EpisodeRecord],
    out_dir: str | Path,
    detail: bool = False,
) -> dict[str, Path]:
    """Write episodes.jsonl, summary.csv and summary.txt."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "episodes": out / "episodes.jsonl",
        "csv": out / "summary.csv",
        "txt": out / "summary.txt",
        "json": out / "summary.json",
    }
    with paths["episodes"].open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")
    paths["csv"].write_text(render_csv(summary, detail), encoding="utf-8")
    paths["txt"].write_text(render_table(summary, detail), encoding="utf-8")
    paths["json"].write_text(json.dumps(summary.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return paths
