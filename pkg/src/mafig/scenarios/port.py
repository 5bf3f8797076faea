"""Port scheduling: berth allocation with crane readiness and service windows.

Five emergency categories: vessel delays, berth closures, crane failures,
berth length restrictions, and handling slowdowns.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from ..dsl import CapabilityTable
from ..errors import ScenarioError
from ..library import FunctionLibrary, ProbeCase
from .base import Emergency, EmergencyCase, FeasibilityVerdict, Scenario

HORIZON = 96  # hours


@dataclass(frozen=True)
class Berth:
    id: int
    length: int
    open_start: int
    open_end: int


@dataclass(frozen=True)
class Vessel:
    id: int
    arrival: int
    length: int
    handling: int


@dataclass(frozen=True)
class Crane:
    id: int
    berth: int
    available: bool


@dataclass(frozen=True)
class PortState:
    berths: tuple[Berth, ...]
    vessels: tuple[Vessel, ...]
    cranes: tuple[Crane, ...]

    def berth(self, bid: int) -> Berth:
        for b in self.berths:
            if b.id == bid:
                return b
        raise ScenarioError(f"no berth {bid}")

    def vessel(self, vid: int) -> Vessel:
        for v in self.vessels:
            if v.id == vid:
                return v
        raise ScenarioError(f"no vessel {vid}")


def _berth_record(b: Berth) -> dict:
    return {"id": b.id, "length": b.length, "open_start": b.open_start, "open_end": b.open_end}


def _vessel_record(v: Vessel) -> dict:
    return {"id": v.id, "arrival": v.arrival, "length": v.length, "handling": v.handling}


def _crane_record(c: Crane) -> dict:
    return {"id": c.id, "berth": c.berth, "available": c.available}


_BERTHS = (
    Berth(1, 150, 0, HORIZON),
    Berth(2, 200, 0, HORIZON),
    Berth(3, 250, 0, HORIZON),
    Berth(4, 300, 0, HORIZON),
)

_CRANES = (
    Crane(1, 1, True),
    Crane(2, 2, True),
    Crane(3, 3, True),
    Crane(4, 4, True),
    Crane(5, 1, True),
    Crane(6, 2, True),
)

# Vessel layouts per variant. Lengths stay <= 230 so the two long berths
# can cover for each other under closures and restrictions.
_VESSEL_VARIANTS = (
    (
        Vessel(1, 0, 110, 6), Vessel(2, 2, 190, 8), Vessel(3, 4, 140, 5),
        Vessel(4, 6, 220, 9), Vessel(5, 8, 90, 4), Vessel(6, 10, 170, 7),
        Vessel(7, 12, 205, 8), Vessel(8, 16, 120, 5), Vessel(9, 20, 230, 9),
        Vessel(10, 24, 100, 4),
    ),
    (
        Vessel(1, 0, 95, 5), Vessel(2, 1, 210, 9), Vessel(3, 3, 130, 6),
        Vessel(4, 5, 180, 7), Vessel(5, 9, 225, 8), Vessel(6, 11, 105, 4),
        Vessel(7, 14, 160, 6), Vessel(8, 18, 200, 8), Vessel(9, 22, 115, 5),
        Vessel(10, 26, 145, 6),
    ),
    (
        Vessel(1, 0, 140, 7), Vessel(2, 2, 100, 4), Vessel(3, 5, 215, 9),
        Vessel(4, 7, 125, 5), Vessel(5, 10, 185, 8), Vessel(6, 13, 95, 4),
        Vessel(7, 15, 230, 9), Vessel(8, 19, 150, 6), Vessel(9, 23, 175, 7),
        Vessel(10, 27, 110, 5),
    ),
)

_CATEGORIES = (
    "vessel_delay",
    "berth_closure",
    "crane_failure",
    "berth_restriction",
    "handling_slowdown",
)

_FACT_FIELDS = {
    "vessel_delay": frozenset({"vessels.arrival"}),
    "berth_closure": frozenset({"berths.open"}),
    "crane_failure": frozenset({"cranes.available"}),
    "berth_restriction": frozenset({"berths.length"}),
    "handling_slowdown": frozenset({"vessels.handling"}),
}

_FACT_TAGS = {
    "vessel_delay": frozenset({"vessel-delay"}),
    "berth_closure": frozenset({"berth-closure"}),
    "crane_failure": frozenset({"crane-failure"}),
    "berth_restriction": frozenset({"berth-restriction"}),
    "handling_slowdown": frozenset({"handling-slowdown"}),
}


class PortScenario(Scenario):
    name = "port"
    categories = _CATEGORIES
    schema_fields = frozenset({
        "berths.id", "berths.length", "berths.open",
        "vessels.id", "vessels.arrival", "vessels.length", "vessels.handling",
        "cranes.id", "cranes.berth", "cranes.available",
        "schedule.assignments",
    })
    decision_fields = frozenset({"assignments"})

    def variant_count(self) -> int:
        return len(_VESSEL_VARIANTS)

    def base_state(self, variant: int = 0) -> PortState:
        return PortState(_BERTHS, _VESSEL_VARIANTS[variant % len(_VESSEL_VARIANTS)], _CRANES)

    def state_to_json(self, state: PortState) -> dict:
        return {
            "berths": [list(vars(b).values()) for b in state.berths],
            "vessels": [list(vars(v).values()) for v in state.vessels],
            "cranes": [list(vars(c).values()) for c in state.cranes],
        }

    def state_from_json(self, data: Mapping) -> PortState:
        return PortState(
            tuple(Berth(*row) for row in data["berths"]),
            tuple(Vessel(*row) for row in data["vessels"]),
            tuple(Crane(*row) for row in data["cranes"]),
        )

    def capabilities(self, state: PortState) -> CapabilityTable:
        return CapabilityTable({
            "berths": lambda: [_berth_record(b) for b in state.berths],
            "vessels": lambda: [_vessel_record(v) for v in state.vessels],
            "cranes": lambda: [_crane_record(c) for c in state.cranes],
        })

    # --- emergencies ---

    def apply_emergency(self, state: PortState, emergency: Emergency) -> PortState:
        berths = {b.id: b for b in state.berths}
        vessels = {v.id: v for v in state.vessels}
        cranes = {c.id: c for c in state.cranes}
        for fact in emergency.facts:
            kind = fact["kind"]
            if kind == "vessel_delay":
                vid = fact["vessel"]
                if vid not in vessels:
                    raise ScenarioError(f"delay references unknown vessel {vid}")
                vessels[vid] = replace(vessels[vid], arrival=fact["arrival"])
            elif kind == "berth_closure":
                for bid in fact["berths"]:
                    if bid not in berths:
                        raise ScenarioError(f"closure references unknown berth {bid}")
                    berths[bid] = replace(berths[bid], open_start=0, open_end=0)
            elif kind == "crane_failure":
                for cid in fact["cranes"]:
                    if cid not in cranes:
                        raise ScenarioError(f"failure references unknown crane {cid}")
                    cranes[cid] = replace(cranes[cid], available=False)
            elif kind == "berth_restriction":
                bid = fact["berth"]
                if bid not in berths:
                    raise ScenarioError(f"restriction references unknown berth {bid}")
                berths[bid] = replace(berths[bid], length=fact["max_length"])
            elif kind == "handling_slowdown":
                pct = fact["pct"]
                for vid in fact["vessels"]:
                    if vid not in vessels:
                        raise ScenarioError(f"slowdown references unknown vessel {vid}")
                    vessels[vid] = replace(vessels[vid], handling=vessels[vid].handling * pct // 100)
            else:
                raise ScenarioError(f"unknown port fact kind {kind!r}")
        return PortState(
            tuple(berths[b.id] for b in state.berths),
            tuple(vessels[v.id] for v in state.vessels),
            tuple(cranes[c.id] for c in state.cranes),
        )

    def fact_fields(self, fact: Mapping) -> frozenset[str]:
        return _FACT_FIELDS[fact["kind"]]

    def fact_tags(self, fact: Mapping) -> frozenset[str]:
        return _FACT_TAGS[fact["kind"]]

    def narrative_for(self, facts: Sequence[Mapping]) -> str:
        parts = []
        for fact in facts:
            kind = fact["kind"]
            if kind == "vessel_delay":
                parts.append(f"Vessel {fact['vessel']} is delayed and now arrives at hour {fact['arrival']}.")
            elif kind == "berth_closure":
                ids = ", ".join(str(b) for b in fact["berths"])
                parts.append(f"Berth {ids} is closed for the rest of the day due to maintenance.")
            elif kind == "crane_failure":
                ids = ", ".join(str(c) for c in fact["cranes"])
                parts.append(f"Quay crane {ids} is out of service after a mechanical failure.")
            elif kind == "berth_restriction":
                parts.append(
                    f"Berth {fact['berth']} can only accept vessels up to {fact['max_length']} meters until further notice."
                )
            elif kind == "handling_slowdown":
                ids = ", ".join(str(v) for v in fact["vessels"])
                parts.append(f"Storm conditions slow handling of vessel {ids} to {fact['pct']} percent of plan.")
            else:
                raise ScenarioError(f"unknown port fact kind {kind!r}")
        return " ".join(parts)

    def sample_facts(self, category, rng, state, impactful_intent):
        vessels = state.vessels
        if category == "vessel_delay":
            v = rng.choice(vessels)
            bump = rng.randint(40, 60) if impactful_intent else 1
            return ({"kind": "vessel_delay", "vessel": v.id, "arrival": v.arrival + bump},)
        if category == "berth_closure":
            bid = rng.choice([b.id for b in state.berths])
            return ({"kind": "berth_closure", "berths": [bid]},)
        if category == "crane_failure":
            if impactful_intent:
                # kill every crane at one berth
                bid = rng.choice([b.id for b in state.berths])
                ids = [c.id for c in state.cranes if c.berth == bid]
            else:
                # one crane at a double-crane berth keeps the berth ready
                doubles = [b for b in (1, 2) if sum(c.berth == b for c in state.cranes) > 1]
                bid = rng.choice(doubles)
                ids = [next(c.id for c in state.cranes if c.berth == bid)]
            return ({"kind": "crane_failure", "cranes": ids},)
        if category == "berth_restriction":
            b = rng.choice(state.berths)
            if impactful_intent:
                limit = rng.choice((80, 90, 100))
            else:
                limit = b.length - rng.randint(1, 5)
            return ({"kind": "berth_restriction", "berth": b.id, "max_length": limit},)
        if category == "handling_slowdown":
            count = 2 if impactful_intent else 1
            targets = rng.sample([v.id for v in vessels], count)
            pct = rng.choice((175, 200, 250)) if impactful_intent else 110
            return ({"kind": "handling_slowdown", "vessels": sorted(targets), "pct": pct},)
        raise ScenarioError(f"unknown port category {category!r}")

    # --- planning ---

    def plan(self, state: PortState, lib: FunctionLibrary) -> dict:
        from ..dsl import evaluate

        caps = self.capabilities(state)
        order = evaluate(lib.get("queue_order").ast, [[_vessel_record(v) for v in state.vessels]], caps)
        busy: dict[int, list[dict]] = {b.id: [] for b in state.berths}
        assignments: dict[int, dict] = {}
        for rec in order:
            v = {"id": rec["id"], "arrival": rec["arrival"], "length": rec["length"], "handling": rec["handling"]}
            arrival = evaluate(lib.get("vessel_arrival").ast, [v], caps)
            duration = evaluate(lib.get("handling_duration").ast, [v], caps)
            candidates = evaluate(lib.get("eligible_berths").ast, [v], caps)
            options = []
            for b in candidates:
                if not evaluate(lib.get("crane_ready").ast, [b], caps):
                    continue
                window = evaluate(lib.get("berth_open_window").ast, [b], caps)
                start = evaluate(
                    lib.get("earliest_start").ast,
                    [arrival, duration, window, busy[b["id"]]],
                    caps,
                )
                if start >= 0:
                    options.append({"berth": b["id"], "start": start})
            pick = evaluate(lib.get("pick_berth").ast, [options], caps)
            if pick["berth"] >= 0:
                assignments[v["id"]] = {"berth": pick["berth"], "start": pick["start"]}
                busy[pick["berth"]].append({"start": pick["start"], "end": pick["start"] + duration})
        return {"assignments": assignments}

    # --- feasibility oracle (independent of the planner) ---

    def check_feasible(self, state: PortState, decision: dict) -> FeasibilityVerdict:
        assignments = decision.get("assignments", {})
        berth_ids = {b.id for b in state.berths}
        intervals: dict[int, list[tuple[int, int, int]]] = {bid: [] for bid in berth_ids}
        for vessel in state.vessels:
            slot = assignments.get(vessel.id) or assignments.get(str(vessel.id))
            if slot is None:
                return FeasibilityVerdict(False, f"unassigned-vessel:{vessel.id}")
            bid, start = slot["berth"], slot["start"]
            if bid not in berth_ids:
                return FeasibilityVerdict(False, f"unknown-berth:{bid}")
            berth = state.berth(bid)
            if vessel.length > berth.length:
                return FeasibilityVerdict(False, f"length-limit:vessel {vessel.id} at berth {bid}")
            if start < vessel.arrival:
                return FeasibilityVerdict(False, f"early-start:vessel {vessel.id}")
            end = start + vessel.handling
            if start < berth.open_start or end > berth.open_end:
                return FeasibilityVerdict(False, f"outside-window:vessel {vessel.id} at berth {bid}")
            if not any(c.berth == bid and c.available for c in state.cranes):
                return FeasibilityVerdict(False, f"no-crane:berth {bid}")
            intervals[bid].append((start, end, vessel.id))
        for bid, ivs in intervals.items():
            ivs.sort()
            for (s1, e1, v1), (s2, e2, v2) in zip(ivs, ivs[1:]):
                if s2 < e1:
                    return FeasibilityVerdict(False, f"berth-overlap:vessels {v1},{v2} at berth {bid}")
        return FeasibilityVerdict(True)

    # --- probes ---

    def probe_suite(self, function: str) -> tuple[ProbeCase, ...]:
        base = self.base_state(0)
        shaken = self.apply_emergency(base, _CANONICAL_EMERGENCY)
        return _library_probes(self, function, base, shaken)

    def episode_probes(self, function: str, case: EmergencyCase) -> tuple[ProbeCase, ...]:
        view = case.state
        truth = self.apply_emergency(view, case.emergency)
        probes = [p for p in self.probe_suite(function) if p.invariant]
        caps = self.capabilities(view)
        if function in ("vessel_arrival", "queue_order"):
            for fact in case.emergency.facts:
                if fact["kind"] != "vessel_delay":
                    continue
                vid = fact["vessel"]
                true_arrival = truth.vessel(vid).arrival
                if function == "vessel_arrival":
                    probes.append(ProbeCase(
                        f"case-delay-{vid}", caps, ( _vessel_record(view.vessel(vid)),), "int",
                        (("arrival-reflects-delay", lambda r, t=true_arrival: r == t),),
                    ))
                else:
                    probes.append(ProbeCase(
                        f"case-order-{vid}", caps, ([_vessel_record(v) for v in view.vessels],), "list",
                        (("eta-reflects-delay", _eta_check(vid, true_arrival)),),
                    ))
        if function == "handling_duration":
            for fact in case.emergency.facts:
                if fact["kind"] != "handling_slowdown":
                    continue
                for vid in fact["vessels"]:
                    true_handling = truth.vessel(vid).handling
                    probes.append(ProbeCase(
                        f"case-slow-{vid}", caps, (_vessel_record(view.vessel(vid)),), "int",
                        (("duration-reflects-slowdown", lambda r, t=true_handling: r == t),),
                    ))
        if function == "berth_open_window":
            for fact in case.emergency.facts:
                if fact["kind"] != "berth_closure":
                    continue
                for bid in fact["berths"]:
                    probes.append(ProbeCase(
                        f"case-closed-{bid}", caps, (_berth_record(view.berth(bid)),), "record",
                        (("window-empty-when-closed", lambda r: r["start"] >= r["end"]),),
                    ))
        if function == "crane_ready":
            for berth in view.berths:
                truly_ready = any(c.berth == berth.id and c.available for c in truth.cranes)
                probes.append(ProbeCase(
                    f"case-crane-{berth.id}", caps, (_berth_record(berth),), "bool",
                    (("crane-flag-matches-truth", lambda r, t=truly_ready: r == t),),
                ))
        if function == "eligible_berths":
            for fact in case.emergency.facts:
                if fact["kind"] != "berth_restriction":
                    continue
                bid, limit = fact["berth"], fact["max_length"]
                probe_vessel = {"id": 0, "arrival": 0, "length": limit + 1, "handling": 1}
                probes.append(ProbeCase(
                    f"case-limit-{bid}", caps, (probe_vessel,), "list",
                    (("restricted-berth-excluded", lambda r, b=bid: all(rec["id"] != b for rec in r)),),
                ))
        return tuple(probes)


def _eta_check(vid: int, true_arrival: int):
    def check(result) -> bool:
        for rec in result:
            if rec["id"] == vid:
                return rec["eta"] == true_arrival
        return False
    return check


_CANONICAL_EMERGENCY = Emergency(
    id="port-probe",
    scenario="port",
    category="crane_failure",
    narrative="Quay crane 3 is out of service after a mechanical failure.",
    facts=({"kind": "crane_failure", "cranes": [3]},),
)


def _library_probes(scn: PortScenario, function: str, base: PortState, shaken: PortState) -> tuple[ProbeCase, ...]:
    probes: list[ProbeCase] = []
    for label, state in (("base", base), ("post-emergency", shaken)):
        caps = scn.capabilities(state)
        vessel_big = max(state.vessels, key=lambda v: v.length)
        if function == "queue_order":
            records = [_vessel_record(v) for v in state.vessels]
            ids = sorted(v.id for v in state.vessels)
            probes.append(ProbeCase(
                f"{label}-order", caps, (records,), "list",
                (("permutation-of-input", lambda r, want=ids: sorted(rec["id"] for rec in r) == want),
                 ("eta-nondecreasing", lambda r: all(a["eta"] <= b["eta"] for a, b in zip(r, r[1:])))),
            ))
        elif function == "vessel_arrival":
            v = state.vessels[0]
            probes.append(ProbeCase(
                f"{label}-arrival", caps, (_vessel_record(v),), "int",
                (("nonnegative", lambda r: r >= 0),),
            ))
        elif function == "handling_duration":
            v = state.vessels[0]
            probes.append(ProbeCase(
                f"{label}-handling", caps, (_vessel_record(v),), "int",
                (("positive", lambda r: r > 0),),
            ))
        elif function == "eligible_berths":
            probes.append(ProbeCase(
                f"{label}-eligible", caps, (_vessel_record(vessel_big),), "list",
                (("fits-length", lambda r, need=vessel_big.length: all(rec["length"] >= need for rec in r)),),
            ))
        elif function == "berth_open_window":
            b = state.berths[0]
            probes.append(ProbeCase(
                f"{label}-window", caps, (_berth_record(b),), "record",
                (("has-bounds", lambda r: "start" in r and "end" in r),),
            ))
        elif function == "crane_ready":
            b = state.berths[0]
            probes.append(ProbeCase(f"{label}-crane", caps, (_berth_record(b),), "bool"))
        elif function == "earliest_start":
            probes.append(ProbeCase(
                f"{label}-slot", caps,
                (5, 3, {"start": 0, "end": HORIZON}, [{"start": 4, "end": 9}]), "int",
                (("skips-busy-interval", lambda r: r == 9),),
            ))
        elif function == "pick_berth":
            probes.append(ProbeCase(
                f"{label}-pick", caps,
                ([{"berth": 2, "start": 5}, {"berth": 1, "start": 5}, {"berth": 3, "start": 2}],), "record",
                (("earliest-then-lowest", lambda r: r["berth"] == 3 and r["start"] == 2),),
            ))
        else:
            raise ScenarioError(f"no probes for port function {function!r}")
    # edge probes
    caps = scn.capabilities(base)
    if function == "queue_order":
        probes.append(ProbeCase("edge-empty", caps, ([],), "list", (("empty", lambda r: r == ()),)))
    elif function == "earliest_start":
        probes.append(ProbeCase(
            "edge-no-room", caps, (0, 10, {"start": 0, "end": 5}, []), "int",
            (("reports-no-slot", lambda r: r == -1),),
        ))
    elif function == "pick_berth":
        probes.append(ProbeCase(
            "edge-empty", caps, ([],), "record",
            (("sentinel", lambda r: r["berth"] == -1),),
        ))
    elif function == "eligible_berths":
        giant = {"id": 0, "arrival": 0, "length": 10_000, "handling": 1}
        probes.append(ProbeCase("edge-giant", caps, (giant,), "list", (("none-fit", lambda r: r == ()),)))
    elif function == "vessel_arrival":
        ghost = {"id": 999, "arrival": 7, "length": 50, "handling": 2}
        probes.append(ProbeCase(
            "edge-unknown-vessel", caps, (ghost,), "int",
            (("falls-back-to-record", lambda r: r == 7),),
        ))
    elif function == "handling_duration":
        ghost = {"id": 999, "arrival": 0, "length": 50, "handling": 3}
        probes.append(ProbeCase(
            "edge-unknown-vessel", caps, (ghost,), "int",
            (("falls-back-to-record", lambda r: r == 3),),
        ))
    elif function == "berth_open_window":
        ghost = {"id": 99, "length": 100, "open_start": 5, "open_end": 50}
        probes.append(ProbeCase(
            "edge-unknown-berth", caps, (ghost,), "record",
            (("passes-through", lambda r: r["start"] == 5 and r["end"] == 50),),
        ))
    elif function == "crane_ready":
        ghost = {"id": 99, "length": 100, "open_start": 0, "open_end": 10}
        probes.append(ProbeCase(
            "edge-unknown-berth", caps, (ghost,), "bool",
            (("no-cranes-there", lambda r: r is False),),
        ))
    return tuple(probes)
