"""Deck scheduling: support-vehicle dispatch on a carrier deck grid.

The most constrained of the three worlds: 15 emergency categories over
vehicle availability, positions, certifications, crew, speed, fuel,
blocked regions, corridors, surface damage, elevators, task changes and
compound events that mix several disruptions at once.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from ..dsl import CapabilityTable, Coord
from ..errors import ScenarioError
from ..library import FunctionLibrary, ProbeCase
from .base import Emergency, EmergencyCase, FeasibilityVerdict, Rect, Scenario, straddle_pair
from .routing import astar

GRID_W = 12
GRID_H = 12
DEFAULT_FUEL = 60
KINDS = ("hydraulic", "maintenance", "oxygen")


@dataclass(frozen=True)
class Vehicle:
    id: int
    kind: str
    cell: Coord
    available: bool
    crew: bool = True
    certified: bool = True
    speed: int = 1
    fuel: int = DEFAULT_FUEL


@dataclass(frozen=True)
class SupportTask:
    id: int
    cell: Coord
    kind: str
    priority: int
    window: int
    deadline: int


@dataclass(frozen=True)
class Elevator:
    cell: Coord
    operational: bool


@dataclass(frozen=True)
class DeckState:
    vehicles: tuple[Vehicle, ...]
    tasks: tuple[SupportTask, ...]
    blocked: tuple[Rect, ...]
    corridors: tuple[Rect, ...] = ()
    hazards: tuple[Rect, ...] = ()
    elevators: tuple[Elevator, ...] = ()

    def vehicle(self, vid: int) -> Vehicle:
        for v in self.vehicles:
            if v.id == vid:
                return v
        raise ScenarioError(f"no vehicle {vid}")

    def task(self, tid: int) -> SupportTask:
        for t in self.tasks:
            if t.id == tid:
                return t
        raise ScenarioError(f"no task {tid}")

    def blocked_cells(self) -> frozenset[Coord]:
        cells: set[Coord] = set()
        for rect in self.blocked:
            cells.update(rect.cells())
        return frozenset(cells)

    def no_go_cells(self) -> frozenset[Coord]:
        cells: set[Coord] = set(self.blocked_cells())
        for rect in self.corridors + self.hazards:
            cells.update(rect.cells())
        cells.update(e.cell for e in self.elevators if not e.operational)
        return frozenset(cells)


def _vehicle_record(v: Vehicle) -> dict:
    return {
        "id": v.id, "kind": v.kind, "cell": v.cell, "available": v.available,
        "crew": v.crew, "certified": v.certified, "speed": v.speed, "fuel": v.fuel,
    }


def _task_record(t: SupportTask) -> dict:
    return {
        "id": t.id, "cell": t.cell, "kind": t.kind, "priority": t.priority,
        "window": t.window, "deadline": t.deadline,
    }


def _rect_record(z: Rect) -> dict:
    return {"lo": z.lo, "hi": z.hi}


def _elevator_record(e: Elevator) -> dict:
    return {"cell": e.cell, "operational": e.operational}


_VEHICLES = (
    Vehicle(1, "hydraulic", Coord(1, 1), True),
    Vehicle(2, "hydraulic", Coord(2, 3), True),
    Vehicle(3, "oxygen", Coord(5, 0), True),
    Vehicle(4, "maintenance", Coord(1, 8), True),
    Vehicle(5, "maintenance", Coord(3, 10), True),
    Vehicle(6, "oxygen", Coord(6, 2), True),
    Vehicle(7, "hydraulic", Coord(0, 5), True),
    Vehicle(8, "maintenance", Coord(0, 9), True),
)

_BLOCKED = (Rect(Coord(4, 8), Coord(5, 9)), Rect(Coord(10, 0), Coord(11, 1)))

_ELEVATORS = (Elevator(Coord(5, 5), True), Elevator(Coord(6, 6), True))

_TASK_VARIANTS = (
    (
        SupportTask(1, Coord(9, 3), "hydraulic", 5, 0, 40),
        SupportTask(2, Coord(8, 7), "maintenance", 4, 0, 40),
        SupportTask(3, Coord(10, 9), "oxygen", 3, 0, 40),
        SupportTask(4, Coord(7, 10), "hydraulic", 2, 0, 40),
        SupportTask(5, Coord(11, 5), "maintenance", 2, 0, 40),
        SupportTask(6, Coord(9, 11), "oxygen", 1, 0, 40),
    ),
    (
        SupportTask(1, Coord(10, 4), "maintenance", 5, 0, 40),
        SupportTask(2, Coord(7, 2), "hydraulic", 4, 0, 40),
        SupportTask(3, Coord(9, 8), "oxygen", 4, 0, 40),
        SupportTask(4, Coord(11, 10), "hydraulic", 3, 0, 40),
        SupportTask(5, Coord(6, 9), "maintenance", 2, 0, 40),
        SupportTask(6, Coord(8, 0), "oxygen", 1, 0, 40),
    ),
    (
        SupportTask(1, Coord(8, 5), "oxygen", 5, 0, 40),
        SupportTask(2, Coord(10, 2), "hydraulic", 5, 0, 40),
        SupportTask(3, Coord(7, 8), "maintenance", 4, 0, 40),
        SupportTask(4, Coord(9, 10), "hydraulic", 2, 0, 40),
        SupportTask(5, Coord(11, 7), "oxygen", 2, 0, 40),
        SupportTask(6, Coord(6, 11), "maintenance", 1, 0, 40),
    ),
)

_CATEGORIES = (
    "vehicle_failure",
    "vehicle_reposition",
    "deck_blockage",
    "aircraft_relocation",
    "task_surge",
    "priority_change",
    "kind_grounding",
    "corridor_restriction",
    "slow_zone",
    "fuel_low",
    "elevator_outage",
    "crew_shortage",
    "equipment_fault",
    "weather_hold",
    "compound_emergency",
)

_FACT_FIELDS = {
    "vehicle_failure": frozenset({"vehicles.available"}),
    "vehicle_reposition": frozenset({"vehicles.cell"}),
    "deck_blockage": frozenset({"deck.blocked"}),
    "aircraft_relocation": frozenset({"tasks.cell"}),
    "task_surge": frozenset({"tasks.roster"}),
    "priority_change": frozenset({"tasks.priority"}),
    "kind_grounding": frozenset({"vehicles.kind"}),
    "corridor_restriction": frozenset({"deck.corridors"}),
    "slow_zone": frozenset({"deck.surface"}),
    "fuel_low": frozenset({"vehicles.fuel"}),
    "elevator_outage": frozenset({"deck.elevators"}),
    "crew_shortage": frozenset({"vehicles.crew"}),
    "equipment_fault": frozenset({"vehicles.speed"}),
    "weather_hold": frozenset({"tasks.window"}),
}

_FACT_TAGS = {kind: frozenset({kind.replace("_", "-")}) for kind in _FACT_FIELDS}

_KIND_LABEL = {"hydraulic": "Hydraulic vehicle", "maintenance": "Maintenance vehicle", "oxygen": "Oxygen supply vehicle"}


class DeckScenario(Scenario):
    name = "deck"
    categories = _CATEGORIES
    schema_fields = frozenset({
        "grid.width", "grid.height",
        "deck.blocked", "deck.corridors", "deck.surface", "deck.elevators", "deck.staging",
        "vehicles.id", "vehicles.kind", "vehicles.cell", "vehicles.available",
        "vehicles.crew", "vehicles.speed", "vehicles.fuel",
        "tasks.roster", "tasks.id", "tasks.cell", "tasks.kind", "tasks.priority",
        "tasks.window", "tasks.deadline",
        "routes", "schedule.assignments",
    })
    decision_fields = frozenset({"assignments", "routes", "start"})

    def variant_count(self) -> int:
        return len(_TASK_VARIANTS)

    def base_state(self, variant: int = 0) -> DeckState:
        return DeckState(
            _VEHICLES,
            _TASK_VARIANTS[variant % len(_TASK_VARIANTS)],
            _BLOCKED,
            elevators=_ELEVATORS,
        )

    def state_to_json(self, state: DeckState) -> dict:
        return {
            "vehicles": [
                [v.id, v.kind, [v.cell.x, v.cell.y], v.available, v.crew, v.certified, v.speed, v.fuel]
                for v in state.vehicles
            ],
            "tasks": [
                [t.id, [t.cell.x, t.cell.y], t.kind, t.priority, t.window, t.deadline]
                for t in state.tasks
            ],
            "blocked": [r.to_json() for r in state.blocked],
            "corridors": [r.to_json() for r in state.corridors],
            "hazards": [r.to_json() for r in state.hazards],
            "elevators": [[([e.cell.x, e.cell.y]), e.operational] for e in state.elevators],
        }

    def state_from_json(self, data: Mapping) -> DeckState:
        return DeckState(
            tuple(Vehicle(v[0], v[1], Coord(*v[2]), v[3], v[4], v[5], v[6], v[7]) for v in data["vehicles"]),
            tuple(SupportTask(t[0], Coord(*t[1]), t[2], t[3], t[4], t[5]) for t in data["tasks"]),
            tuple(Rect.from_json(r) for r in data["blocked"]),
            tuple(Rect.from_json(r) for r in data["corridors"]),
            tuple(Rect.from_json(r) for r in data["hazards"]),
            tuple(Elevator(Coord(*e[0]), e[1]) for e in data["elevators"]),
        )

    def capabilities(self, state: DeckState) -> CapabilityTable:
        blocked = state.blocked_cells()

        def route_between(start: Coord, goal: Coord, avoid: tuple) -> tuple[Coord, ...]:
            barred = set(blocked)
            for rect in avoid:
                barred.update(Rect(rect["lo"], rect["hi"]).cells())
            return astar(GRID_W, GRID_H, barred, start, goal)

        return CapabilityTable({
            "vehicles": lambda: [_vehicle_record(v) for v in state.vehicles],
            "support_tasks": lambda: [_task_record(t) for t in state.tasks],
            "corridor_rects": lambda: [_rect_record(z) for z in state.corridors],
            "surface_rects": lambda: [_rect_record(z) for z in state.hazards],
            "elevator_list": lambda: [_elevator_record(e) for e in state.elevators],
            "route_between": route_between,
            "grid_width": lambda: GRID_W,
            "grid_height": lambda: GRID_H,
        })

    # --- emergencies ---

    def apply_emergency(self, state: DeckState, emergency: Emergency) -> DeckState:
        vehicles = {v.id: v for v in state.vehicles}
        tasks = {t.id: t for t in state.tasks}
        order = [t.id for t in state.tasks]
        blocked = list(state.blocked)
        corridors = list(state.corridors)
        hazards = list(state.hazards)
        elevators = list(state.elevators)
        for fact in emergency.facts:
            kind = fact["kind"]
            if kind == "vehicle_failure":
                for vid in fact["vehicles"]:
                    if vid not in vehicles:
                        raise ScenarioError(f"failure references unknown vehicle {vid}")
                    vehicles[vid] = replace(vehicles[vid], available=False)
            elif kind == "vehicle_reposition":
                vid = fact["vehicle"]
                if vid not in vehicles:
                    raise ScenarioError(f"reposition references unknown vehicle {vid}")
                vehicles[vid] = replace(vehicles[vid], cell=Coord(*fact["cell"]))
            elif kind == "deck_blockage":
                blocked.append(Rect(Coord(*fact["lo"]), Coord(*fact["hi"])))
            elif kind == "aircraft_relocation":
                tid = fact["task"]
                if tid not in tasks:
                    raise ScenarioError(f"relocation references unknown task {tid}")
                tasks[tid] = replace(tasks[tid], cell=Coord(*fact["cell"]))
            elif kind == "task_surge":
                for rec in fact["tasks"]:
                    if rec["id"] in tasks:
                        raise ScenarioError(f"surge task {rec['id']} already exists")
                    tasks[rec["id"]] = SupportTask(
                        rec["id"], Coord(*rec["cell"]), rec["task_kind"],
                        rec["priority"], rec["window"], rec["deadline"],
                    )
                    order.append(rec["id"])
            elif kind == "priority_change":
                tid = fact["task"]
                if tid not in tasks:
                    raise ScenarioError(f"priority fact references unknown task {tid}")
                tasks[tid] = replace(tasks[tid], priority=fact["priority"])
            elif kind == "kind_grounding":
                for vid in fact["vehicles"]:
                    if vid not in vehicles:
                        raise ScenarioError(f"grounding references unknown vehicle {vid}")
                    vehicles[vid] = replace(vehicles[vid], certified=False)
            elif kind == "corridor_restriction":
                corridors.append(Rect(Coord(*fact["lo"]), Coord(*fact["hi"])))
            elif kind == "slow_zone":
                hazards.append(Rect(Coord(*fact["lo"]), Coord(*fact["hi"])))
            elif kind == "fuel_low":
                vid = fact["vehicle"]
                if vid not in vehicles:
                    raise ScenarioError(f"fuel fact references unknown vehicle {vid}")
                vehicles[vid] = replace(vehicles[vid], fuel=fact["limit"])
            elif kind == "elevator_outage":
                cells = {Coord(*c) for c in fact["cells"]}
                known = {e.cell for e in elevators}
                missing = cells - known
                if missing:
                    raise ScenarioError(f"outage references unknown elevator cells {sorted(missing)}")
                elevators = [
                    Elevator(e.cell, e.operational and e.cell not in cells) for e in elevators
                ]
            elif kind == "crew_shortage":
                for vid in fact["vehicles"]:
                    if vid not in vehicles:
                        raise ScenarioError(f"crew fact references unknown vehicle {vid}")
                    vehicles[vid] = replace(vehicles[vid], crew=False)
            elif kind == "equipment_fault":
                vid = fact["vehicle"]
                if vid not in vehicles:
                    raise ScenarioError(f"fault references unknown vehicle {vid}")
                vehicles[vid] = replace(vehicles[vid], speed=fact["factor"])
            elif kind == "weather_hold":
                tid = fact["task"]
                if tid not in tasks:
                    raise ScenarioError(f"hold references unknown task {tid}")
                tasks[tid] = replace(tasks[tid], window=fact["start"])
            else:
                raise ScenarioError(f"unknown deck fact kind {kind!r}")
        return DeckState(
            tuple(vehicles[v.id] for v in state.vehicles),
            tuple(tasks[tid] for tid in order),
            tuple(blocked),
            tuple(corridors),
            tuple(hazards),
            tuple(elevators),
        )

    def fact_fields(self, fact: Mapping) -> frozenset[str]:
        return _FACT_FIELDS[fact["kind"]]

    def fact_tags(self, fact: Mapping) -> frozenset[str]:
        return _FACT_TAGS[fact["kind"]]

    def narrative_for(self, facts: Sequence[Mapping]) -> str:
        parts = []
        for fact in facts:
            kind = fact["kind"]
            if kind == "vehicle_failure":
                names = " and ".join(f"No. {v}" for v in fact["vehicles"])
                parts.append(f"Support vehicle {names} become unavailable due to failures.")
            elif kind == "vehicle_reposition":
                x, y = fact["cell"]
                parts.append(f"Support vehicle No. {fact['vehicle']} is adjusted to ({x}, {y}).")
            elif kind == "deck_blockage":
                parts.append(
                    f"An explosion occurs in the grid region spanning ({fact['lo'][0]}, {fact['lo'][1]}) "
                    f"to ({fact['hi'][0]}, {fact['hi'][1]})."
                )
            elif kind == "aircraft_relocation":
                x, y = fact["cell"]
                parts.append(f"The aircraft for support task {fact['task']} is respotted to ({x}, {y}).")
            elif kind == "task_surge":
                descs = ", ".join(
                    f"task {t['id']} ({t['task_kind']}, priority {t['priority']}) at ({t['cell'][0]}, {t['cell'][1]})"
                    for t in fact["tasks"]
                )
                parts.append(f"New support demands arrive: {descs}.")
            elif kind == "priority_change":
                parts.append(f"Support task {fact['task']} is re-prioritized to level {fact['priority']}.")
            elif kind == "kind_grounding":
                names = ", ".join(f"No. {v}" for v in fact["vehicles"])
                parts.append(f"Certification review grounds vehicle {names} pending inspection.")
            elif kind == "corridor_restriction":
                parts.append(
                    f"Flight operations close the corridor from ({fact['lo'][0]}, {fact['lo'][1]}) "
                    f"to ({fact['hi'][0]}, {fact['hi'][1]}) to deck traffic."
                )
            elif kind == "slow_zone":
                parts.append(
                    f"Surface damage from ({fact['lo'][0]}, {fact['lo'][1]}) to "
                    f"({fact['hi'][0]}, {fact['hi'][1]}) must be kept clear."
                )
            elif kind == "fuel_low":
                parts.append(
                    f"Vehicle No. {fact['vehicle']} is low on fuel and limited to {fact['limit']} cells of travel."
                )
            elif kind == "elevator_outage":
                cells = ", ".join(f"({c[0]}, {c[1]})" for c in fact["cells"])
                parts.append(f"Deck elevator at {cells} is lowered and cannot be crossed.")
            elif kind == "crew_shortage":
                names = ", ".join(f"No. {v}" for v in fact["vehicles"])
                parts.append(f"Crew shortage leaves vehicle {names} unmanned this cycle.")
            elif kind == "equipment_fault":
                parts.append(
                    f"Vehicle No. {fact['vehicle']} develops a drive fault and moves {fact['factor']}x slower."
                )
            elif kind == "weather_hold":
                parts.append(f"Weather hold delays support task {fact['task']} until time {fact['start']}.")
            else:
                raise ScenarioError(f"unknown deck fact kind {kind!r}")
        return " ".join(parts)

    def _open_cells(self, state: DeckState) -> list[Coord]:
        barred = state.no_go_cells()
        keep_out = {v.cell for v in state.vehicles} | {t.cell for t in state.tasks}
        keep_out |= {e.cell for e in state.elevators}
        return [
            Coord(x, y)
            for x in range(GRID_W)
            for y in range(GRID_H)
            if Coord(x, y) not in barred and Coord(x, y) not in keep_out
        ]

    def _rect_is_safe(self, state: DeckState, rect: Rect) -> bool:
        barred = set(state.no_go_cells()) | set(rect.cells())
        for v in state.vehicles:
            if v.cell in barred:
                return False
            for t in state.tasks:
                if t.cell in barred or not astar(GRID_W, GRID_H, barred, v.cell, t.cell):
                    return False
        return True

    def _sample_safe_rect(self, rng: random.Random, state: DeckState, kind: str, wide: bool) -> tuple[dict, ...]:
        for _ in range(60):
            cells = self._open_cells(state)
            anchor = rng.choice(cells)
            w = rng.choice((0, 1)) if wide else 0
            h = rng.choice((0, 1)) if wide else 1
            rect = Rect(anchor, Coord(min(anchor.x + w, GRID_W - 1), min(anchor.y + h, GRID_H - 1)))
            if self._rect_is_safe(state, rect):
                return ({"kind": kind, "lo": [rect.lo.x, rect.lo.y], "hi": [rect.hi.x, rect.hi.y]},)
        raise ScenarioError(f"could not sample a safe rect for {kind}")

    def sample_facts(self, category, rng: random.Random, state: DeckState, impactful_intent: bool):
        vehicles = state.vehicles
        tasks = state.tasks
        if category == "vehicle_failure":
            by_kind: dict[str, list[Vehicle]] = {}
            for v in vehicles:
                by_kind.setdefault(v.kind, []).append(v)
            if impactful_intent:
                picks = []
                for kind in rng.sample(KINDS, rng.choice((1, 2))):
                    group = by_kind[kind]
                    picks.append(rng.choice(group[:-1]).id)  # keep one spare per kind
                ids = sorted(set(picks))
            else:
                ids = [by_kind["maintenance"][-1].id]
            return ({"kind": "vehicle_failure", "vehicles": ids},)
        if category == "vehicle_reposition":
            v = rng.choice(vehicles)
            cell = rng.choice(self._open_cells(state))
            return ({"kind": "vehicle_reposition", "vehicle": v.id, "cell": [cell.x, cell.y]},)
        if category == "deck_blockage":
            return self._sample_safe_rect(rng, state, "deck_blockage", wide=impactful_intent)
        if category == "aircraft_relocation":
            t = rng.choice(tasks[:4] if impactful_intent else tasks[4:])
            cell = rng.choice(self._open_cells(state))
            return ({"kind": "aircraft_relocation", "task": t.id, "cell": [cell.x, cell.y]},)
        if category == "task_surge":
            cell = rng.choice(self._open_cells(state))
            kind = rng.choice(KINDS)
            prio = 9 if impactful_intent else 0
            new = [{
                "id": 100, "cell": [cell.x, cell.y], "task_kind": kind,
                "priority": prio, "window": 0, "deadline": 40,
            }]
            return ({"kind": "task_surge", "tasks": new},)
        if category == "priority_change":
            if impactful_intent:
                t = max(tasks, key=lambda t: (t.priority, -t.id))
                return ({"kind": "priority_change", "task": tasks[-1].id, "priority": t.priority + 2},)
            t = max(tasks, key=lambda t: (t.priority, -t.id))
            return ({"kind": "priority_change", "task": t.id, "priority": t.priority + 1},)
        if category == "kind_grounding":
            kind = rng.choice(KINDS)
            group = [v for v in vehicles if v.kind == kind]
            # one vehicle at a time keeps every kind coverable by spares
            ids = [rng.choice(group[:-1]).id] if impactful_intent else [group[-1].id]
            return ({"kind": "kind_grounding", "vehicles": ids},)
        if category == "corridor_restriction":
            return self._sample_safe_rect(rng, state, "corridor_restriction", wide=impactful_intent)
        if category == "slow_zone":
            return self._sample_safe_rect(rng, state, "slow_zone", wide=impactful_intent)
        if category == "fuel_low":
            v = rng.choice(vehicles)
            limit = rng.randint(2, 5) if impactful_intent else DEFAULT_FUEL - 1
            return ({"kind": "fuel_low", "vehicle": v.id, "limit": limit},)
        if category == "elevator_outage":
            if impactful_intent:
                cells = [[e.cell.x, e.cell.y] for e in rng.sample(state.elevators, rng.choice((1, 2)))]
            else:
                cells = [[state.elevators[-1].cell.x, state.elevators[-1].cell.y]]
            return ({"kind": "elevator_outage", "cells": cells},)
        if category == "crew_shortage":
            by_kind: dict[str, list[Vehicle]] = {}
            for v in vehicles:
                by_kind.setdefault(v.kind, []).append(v)
            if impactful_intent:
                kind = rng.choice(KINDS)
                ids = [rng.choice(by_kind[kind][:-1]).id]
            else:
                ids = [by_kind["hydraulic"][-1].id]
            return ({"kind": "crew_shortage", "vehicles": sorted(ids)},)
        if category == "equipment_fault":
            v = rng.choice(vehicles)
            factor = rng.choice((3, 4)) if impactful_intent else 2
            return ({"kind": "equipment_fault", "vehicle": v.id, "factor": factor},)
        if category == "weather_hold":
            # hold must leave room for the longest plausible detour route
            t = rng.choice(tasks[:4])
            start = rng.randint(8, 12) if impactful_intent else 1
            return ({"kind": "weather_hold", "task": t.id, "start": start},)
        if category == "compound_emergency":
            facts: list[dict] = []
            facts.extend(self.sample_facts("vehicle_failure", rng, state, impactful_intent))
            facts.extend(self.sample_facts("vehicle_reposition", rng, state, impactful_intent))
            facts.extend(self.sample_facts("deck_blockage", rng, state, impactful_intent))
            return tuple(facts)
        raise ScenarioError(f"unknown deck category {category!r}")

    # --- planning ---

    def plan(self, state: DeckState, lib: FunctionLibrary) -> dict:
        from ..dsl import evaluate

        caps = self.capabilities(state)
        ev = lambda name, args: evaluate(lib.get(name).ast, args, caps)
        roster = ev("task_roster", [[_task_record(t) for t in state.tasks]])
        eligible = [t for t in roster if ev("task_eligible", [t])]
        eff = []
        for t in eligible:
            eff.append({
                "id": t["id"],
                "cell": ev("task_cell", [t]),
                "kind": ev("kind_for_task", [t]),
                "priority": ev("task_priority", [t]),
                "window": ev("launch_window", [t]),
                "deadline": t["deadline"],
            })
        order = ev("task_order", [eff])
        cap_count = ev("dispatch_limit", [len(order)])
        avoid = list(ev("corridor_zones", [[_rect_record(z) for z in state.corridors]]))
        avoid += list(ev("hazard_cells", [[_rect_record(z) for z in state.hazards]]))
        for cell in ev("elevator_cells", [[_elevator_record(e) for e in state.elevators]]):
            avoid.append({"lo": cell, "hi": cell})
        vehicles_av = ev("available_vehicles", [[_vehicle_record(v) for v in state.vehicles]])
        crewed = [v for v in vehicles_av if ev("crew_available", [v])]
        assignments: dict[int, dict] = {}
        used: set[int] = set()
        count = 0
        for t in order:
            if count >= cap_count:
                break
            cands = ev("vehicles_of_kind", [[v for v in crewed if v["id"] not in used], t["kind"]])
            remaining = [{"id": v["id"], "cell": ev("vehicle_position", [v])} for v in cands]
            detail = {v["id"]: v for v in cands}
            while remaining:
                vid = ev("select_vehicle", [t["cell"], remaining])
                if vid < 0:
                    break
                start_cell = next(r["cell"] for r in remaining if r["id"] == vid)
                route = ev("plan_route", [start_cell, t["cell"], avoid])
                if route:
                    steps = ev("route_length", [route])
                    speed = ev("vehicle_speed", [detail[vid]])
                    budget = ev("route_budget", [detail[vid]])
                    start = t["window"]
                    if steps <= budget and ev("deadline_ok", [steps, speed, start, t["deadline"]]):
                        assignments[t["id"]] = {
                            "vehicle": vid,
                            "route": [[c.x, c.y] for c in route],
                            "start": start,
                        }
                        used.add(vid)
                        count += 1
                        break
                remaining = [r for r in remaining if r["id"] != vid]
        return {"assignments": assignments}

    # --- feasibility oracle (independent of the planner) ---

    def dispatch_capacity(self) -> int:
        return 4

    def top_tasks(self, state: DeckState) -> list[SupportTask]:
        ordered = sorted(state.tasks, key=lambda t: (-t.priority, t.id))
        return ordered[: self.dispatch_capacity()]

    def check_feasible(self, state: DeckState, decision: dict) -> FeasibilityVerdict:
        assignments = decision.get("assignments", {})
        forbidden = state.no_go_cells()
        seen: set[int] = set()
        must_serve = self.top_tasks(state)
        for task in must_serve:
            if task.id not in assignments and str(task.id) not in assignments:
                return FeasibilityVerdict(False, f"priority-task-unserved:{task.id}")
        for tid, slot in assignments.items():
            tid = int(tid)
            try:
                task = state.task(tid)
            except ScenarioError:
                return FeasibilityVerdict(False, f"unknown-task:{tid}")
            vid = slot["vehicle"]
            try:
                vehicle = state.vehicle(vid)
            except ScenarioError:
                return FeasibilityVerdict(False, f"unknown-vehicle:{vid}")
            if vid in seen:
                return FeasibilityVerdict(False, f"vehicle-reuse:{vid}")
            seen.add(vid)
            if not vehicle.available:
                return FeasibilityVerdict(False, f"unavailable-vehicle:{vid} on task {tid}")
            if not vehicle.crew:
                return FeasibilityVerdict(False, f"unmanned-vehicle:{vid} on task {tid}")
            if not vehicle.certified:
                return FeasibilityVerdict(False, f"grounded-vehicle:{vid} on task {tid}")
            if vehicle.kind != task.kind:
                return FeasibilityVerdict(False, f"kind-mismatch:vehicle {vid} on task {tid}")
            route = [Coord(*c) for c in slot["route"]]
            if not route:
                return FeasibilityVerdict(False, f"empty-route:task {tid}")
            if route[0] != vehicle.cell:
                return FeasibilityVerdict(False, f"route-start-mismatch:task {tid}")
            if route[-1] != task.cell:
                return FeasibilityVerdict(False, f"route-end-mismatch:task {tid}")
            for a, b in zip(route, route[1:]):
                if abs(a.x - b.x) + abs(a.y - b.y) != 1:
                    return FeasibilityVerdict(False, f"route-discontinuous:task {tid}")
            for cell in route:
                if not (0 <= cell.x < GRID_W and 0 <= cell.y < GRID_H):
                    return FeasibilityVerdict(False, f"off-grid:task {tid}")
                if cell in forbidden:
                    return FeasibilityVerdict(False, f"blocked-cell:{(cell.x, cell.y)} on task {tid}")
            steps = len(route) - 1
            if steps > vehicle.fuel:
                return FeasibilityVerdict(False, f"fuel-exceeded:vehicle {vid} on task {tid}")
            start = slot["start"]
            if start < task.window:
                return FeasibilityVerdict(False, f"early-start:task {tid}")
            if start + steps * vehicle.speed > task.deadline:
                return FeasibilityVerdict(False, f"deadline-missed:task {tid}")
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
        truth_available = {v.id for v in truth.vehicles if v.available}
        truth_certified = {v.id for v in truth.vehicles if v.certified}
        truth_forbidden = truth.no_go_cells()
        vehicle_recs = [_vehicle_record(v) for v in view.vehicles]
        for fact in case.emergency.facts:
            kind = fact["kind"]
            if kind == "vehicle_failure" and function == "available_vehicles":
                probes.append(ProbeCase(
                    "case-failure", caps, (vehicle_recs,), "list",
                    (("excludes-failed-vehicles",
                      lambda out, ok=truth_available: all(v["id"] in ok for v in out)),),
                ))
            elif kind == "vehicle_reposition" and function == "vehicle_position":
                vid = fact["vehicle"]
                want = truth.vehicle(vid).cell
                probes.append(ProbeCase(
                    f"case-moved-{vid}", caps, (_vehicle_record(view.vehicle(vid)),), "coord",
                    (("position-reflects-move", lambda out, w=want: out == w),),
                ))
            elif kind in ("deck_blockage", "slow_zone", "corridor_restriction") and function in (
                "plan_route", "hazard_cells", "corridor_zones",
            ):
                rect = Rect(Coord(*fact["lo"]), Coord(*fact["hi"]))
                if function == "plan_route" and kind == "deck_blockage":
                    start, goal = straddle_pair(rect, truth_forbidden, GRID_W, GRID_H)
                    if start is not None:
                        probes.append(ProbeCase(
                            "case-blockage", caps, (start, goal, []), "list",
                            (("route-avoids-truth-blocked",
                              lambda out, bad=frozenset(rect.cells()): len(out) > 0 and all(c not in bad for c in out)),),
                        ))
                elif function == "hazard_cells" and kind == "slow_zone":
                    probes.append(ProbeCase(
                        "case-hazard", caps, ([_rect_record(z) for z in view.hazards],), "list",
                        (("covers-new-hazard", _rect_cover_check(rect)),),
                    ))
                elif function == "corridor_zones" and kind == "corridor_restriction":
                    probes.append(ProbeCase(
                        "case-corridor", caps, ([_rect_record(z) for z in view.corridors],), "list",
                        (("covers-new-corridor", _rect_cover_check(rect)),),
                    ))
            elif kind == "aircraft_relocation" and function == "task_cell":
                tid = fact["task"]
                want = truth.task(tid).cell
                probes.append(ProbeCase(
                    f"case-respot-{tid}", caps, (_task_record(view.task(tid)),), "coord",
                    (("cell-reflects-respot", lambda out, w=want: out == w),),
                ))
            elif kind == "task_surge" and function == "task_roster":
                want = {t.id for t in truth.tasks}
                probes.append(ProbeCase(
                    "case-surge", caps, ([_task_record(t) for t in view.tasks],), "list",
                    (("covers-all-tasks", lambda out, w=want: {t["id"] for t in out} >= w),),
                ))
            elif kind == "priority_change" and function == "task_priority":
                tid = fact["task"]
                want = truth.task(tid).priority
                probes.append(ProbeCase(
                    f"case-prio-{tid}", caps, (_task_record(view.task(tid)),), "int",
                    (("priority-reflects-change", lambda out, w=want: out == w),),
                ))
            elif kind == "kind_grounding" and function == "vehicles_of_kind":
                target_kind = view.vehicle(fact["vehicles"][0]).kind
                probes.append(ProbeCase(
                    "case-grounding", caps, (vehicle_recs, target_kind), "list",
                    (("excludes-grounded",
                      lambda out, ok=truth_certified: all(v["id"] in ok for v in out)),),
                ))
            elif kind == "fuel_low" and function == "route_budget":
                vid = fact["vehicle"]
                want = truth.vehicle(vid).fuel
                probes.append(ProbeCase(
                    f"case-fuel-{vid}", caps, (_vehicle_record(view.vehicle(vid)),), "int",
                    (("budget-reflects-fuel", lambda out, w=want: out == w),),
                ))
            elif kind == "elevator_outage" and function == "elevator_cells":
                down = {Coord(*c) for c in fact["cells"]}
                probes.append(ProbeCase(
                    "case-elevator", caps, ([_elevator_record(e) for e in view.elevators],), "list",
                    (("lists-lowered-cells", lambda out, w=down: w <= set(out)),),
                ))
            elif kind == "crew_shortage" and function == "crew_available":
                for vid in fact["vehicles"]:
                    probes.append(ProbeCase(
                        f"case-crew-{vid}", caps, (_vehicle_record(view.vehicle(vid)),), "bool",
                        (("unmanned-not-available", lambda out: out is False),),
                    ))
            elif kind == "equipment_fault" and function == "vehicle_speed":
                vid = fact["vehicle"]
                want = truth.vehicle(vid).speed
                probes.append(ProbeCase(
                    f"case-fault-{vid}", caps, (_vehicle_record(view.vehicle(vid)),), "int",
                    (("speed-reflects-fault", lambda out, w=want: out == w),),
                ))
            elif kind == "weather_hold" and function == "launch_window":
                tid = fact["task"]
                want = truth.task(tid).window
                probes.append(ProbeCase(
                    f"case-hold-{tid}", caps, (_task_record(view.task(tid)),), "int",
                    (("window-reflects-hold", lambda out, w=want: out == w),),
                ))
        if function == "plan_route":
            # every repaired route function must dodge the full truth no-go set
            start = view.vehicles[0].cell
            goal = truth.tasks[0].cell
            if start not in truth_forbidden and goal not in truth_forbidden:
                probes.append(ProbeCase(
                    "case-no-go", caps, (start, goal, []), "list",
                    (("route-avoids-no-go",
                      lambda out, bad=truth_forbidden & truth.blocked_cells(): all(c not in bad for c in out)),),
                ))
        return tuple(probes)


def _rect_cover_check(rect: Rect):
    def check(out) -> bool:
        covered: set[Coord] = set()
        for z in out:
            covered.update(Rect(z["lo"], z["hi"]).cells())
        return all(c in covered for c in rect.cells())
    return check




_CANONICAL_EMERGENCY = Emergency(
    id="deck-probe",
    scenario="deck",
    category="compound_emergency",
    narrative=(
        "Support vehicle No. 5 become unavailable due to failures. "
        "An explosion occurs in the grid region spanning (8, 5) to (9, 6)."
    ),
    facts=(
        {"kind": "vehicle_failure", "vehicles": [5]},
        {"kind": "deck_blockage", "lo": [8, 5], "hi": [9, 6]},
    ),
)


def _library_probes(scn: DeckScenario, function: str, base: DeckState, shaken: DeckState) -> tuple[ProbeCase, ...]:
    probes: list[ProbeCase] = []
    for label, state in (("base", base), ("post-emergency", shaken)):
        caps = scn.capabilities(state)
        vehicle_recs = [_vehicle_record(v) for v in state.vehicles]
        task_recs = [_task_record(t) for t in state.tasks]
        if function == "task_roster":
            probes.append(ProbeCase(
                f"{label}-roster", caps, (task_recs,), "list",
                (("keeps-input-tasks", lambda out, n=len(task_recs): len(out) >= n),),
            ))
        elif function == "task_priority":
            t = state.tasks[0]
            probes.append(ProbeCase(
                f"{label}-prio", caps, (_task_record(t),), "int",
                (("nonnegative", lambda out: out >= 0),),
            ))
            probes.append(ProbeCase(
                f"{label}-prio-pristine", caps, (_task_record(t),), "int",
                (("matches-record", lambda out, w=t.priority: out == w),),
                invariant=False,
            ))
        elif function == "task_order":
            probes.append(ProbeCase(
                f"{label}-order", caps, (task_recs,), "list",
                (("priority-descending", lambda out: all(a["priority"] >= b["priority"] for a, b in zip(out, out[1:]))),
                 ("stable-id-ties", lambda out: all(
                     a["id"] < b["id"] for a, b in zip(out, out[1:]) if a["priority"] == b["priority"]))),
            ))
        elif function == "task_cell":
            t = state.tasks[0]
            probes.append(ProbeCase(
                f"{label}-cell", caps, (_task_record(t),), "coord",
                (("in-grid", lambda out: 0 <= out.x < GRID_W and 0 <= out.y < GRID_H),),
            ))
            probes.append(ProbeCase(
                f"{label}-cell-pristine", caps, (_task_record(t),), "coord",
                (("matches-record", lambda out, w=t.cell: out == w),),
                invariant=False,
            ))
        elif function == "task_eligible":
            probes.append(ProbeCase(f"{label}-eligible", caps, (task_recs[0],), "bool"))
        elif function == "available_vehicles":
            ok = {v.id for v in state.vehicles if v.available}
            probes.append(ProbeCase(
                f"{label}-avail", caps, (vehicle_recs,), "list",
                (("only-available", lambda out, ids=ok: all(v["id"] in ids for v in out)),),
            ))
        elif function == "vehicle_position":
            v = state.vehicles[0]
            probes.append(ProbeCase(
                f"{label}-pos", caps, (_vehicle_record(v),), "coord",
                (("in-grid", lambda out: 0 <= out.x < GRID_W and 0 <= out.y < GRID_H),),
            ))
            probes.append(ProbeCase(
                f"{label}-pos-pristine", caps, (_vehicle_record(v),), "coord",
                (("matches-record", lambda out, w=v.cell: out == w),),
                invariant=False,
            ))
        elif function == "vehicles_of_kind":
            probes.append(ProbeCase(
                f"{label}-kind", caps, (vehicle_recs, "hydraulic"), "list",
                (("kind-filter", lambda out: all(v["kind"] == "hydraulic" for v in out)),),
            ))
        elif function == "crew_available":
            probes.append(ProbeCase(f"{label}-crew", caps, (vehicle_recs[0],), "bool"))
        elif function == "vehicle_speed":
            v = state.vehicles[0]
            probes.append(ProbeCase(
                f"{label}-speed", caps, (_vehicle_record(v),), "int",
                (("positive", lambda out: out >= 1),),
            ))
        elif function == "route_budget":
            v = state.vehicles[0]
            probes.append(ProbeCase(
                f"{label}-budget", caps, (_vehicle_record(v),), "int",
                (("positive", lambda out: out > 0),),
            ))
        elif function == "plan_route":
            start = state.vehicles[0].cell
            goal = state.tasks[0].cell
            blocked = state.blocked_cells()
            probes.append(ProbeCase(
                f"{label}-route", caps, (start, goal, []), "list",
                (("avoids-structures", lambda out, bad=blocked: all(c not in bad for c in out)),),
            ))
            probes.append(ProbeCase(
                f"{label}-route-pristine", caps, (start, goal, []), "list",
                (("reaches-goal", lambda out, g=goal: len(out) > 0 and out[-1] == g),),
                invariant=False,
            ))
        elif function == "corridor_zones":
            recs = [_rect_record(z) for z in state.corridors]
            probes.append(ProbeCase(
                f"{label}-corridors", caps, (recs,), "list",
                (("keeps-state-zones", lambda out, n=len(recs): len(out) >= n),),
            ))
        elif function == "hazard_cells":
            recs = [_rect_record(z) for z in state.hazards]
            probes.append(ProbeCase(
                f"{label}-hazards", caps, (recs,), "list",
                (("keeps-state-hazards", lambda out, n=len(recs): len(out) >= n),),
            ))
        elif function == "elevator_cells":
            recs = [_elevator_record(e) for e in state.elevators]
            down = {e.cell for e in state.elevators if not e.operational}
            probes.append(ProbeCase(
                f"{label}-elevators", caps, (recs,), "list",
                (("lists-lowered-cells", lambda out, w=down: w <= set(out)),),
            ))
        elif function == "launch_window":
            t = state.tasks[0]
            probes.append(ProbeCase(
                f"{label}-window", caps, (_task_record(t),), "int",
                (("nonnegative", lambda out: out >= 0),),
            ))
            probes.append(ProbeCase(
                f"{label}-window-pristine", caps, (_task_record(t),), "int",
                (("matches-record", lambda out, w=t.window: out == w),),
                invariant=False,
            ))
        elif function == "select_vehicle":
            cands = [{"id": v.id, "cell": v.cell} for v in state.vehicles[:3]]
            probes.append(ProbeCase(
                f"{label}-select", caps, (state.tasks[0].cell, cands), "int",
                (("picks-a-candidate", lambda out, ids={c["id"] for c in cands}: out in ids),),
            ))
        elif function == "service_time":
            probes.append(ProbeCase(
                f"{label}-service", caps, (task_recs[0],), "int",
                (("positive", lambda out: out > 0),),
            ))
        elif function == "deadline_ok":
            probes.append(ProbeCase(
                f"{label}-deadline", caps, (10, 1, 0, 40), "bool",
                (("within", lambda out: out is True),),
            ))
        elif function == "route_length":
            route = (Coord(0, 0), Coord(0, 1), Coord(1, 1))
            probes.append(ProbeCase(
                f"{label}-length", caps, (route,), "int",
                (("step-count", lambda out: out == 2),),
            ))
        elif function == "dispatch_limit":
            probes.append(ProbeCase(
                f"{label}-limit", caps, (6,), "int",
                (("caps-at-four", lambda out: out == 4),),
            ))
        elif function == "staging_cell":
            probes.append(ProbeCase(
                f"{label}-staging", caps, ("hydraulic",), "coord",
                (("in-grid", lambda out: 0 <= out.x < GRID_W and 0 <= out.y < GRID_H),),
            ))
        elif function == "kind_for_task":
            t = state.tasks[0]
            probes.append(ProbeCase(
                f"{label}-need", caps, (_task_record(t),), "text",
                (("matches-record", lambda out, w=t.kind: out == w),),
            ))
        elif function == "safety_margin":
            probes.append(ProbeCase(
                f"{label}-margin", caps, (GRID_W,), "int",
                (("nonnegative", lambda out: out >= 0),),
            ))
        elif function == "tie_break":
            probes.append(ProbeCase(
                f"{label}-tie", caps, ((3, 1, 2),), "int",
                (("lowest", lambda out: out == 1),),
            ))
        else:
            raise ScenarioError(f"no probes for deck function {function!r}")
    caps = scn.capabilities(base)
    if function in ("task_order", "available_vehicles"):
        probes.append(ProbeCase("edge-empty", caps, ([],), "list", (("empty-in-empty-out", lambda out: out == ()),)))
    elif function in ("task_roster", "corridor_zones", "hazard_cells", "elevator_cells"):
        # pristine extras are empty; repairs legitimately add entries
        probes.append(ProbeCase(
            "edge-empty", caps, ([],), "list",
            (("empty-in-empty-out", lambda out: out == ()),), invariant=False,
        ))
    elif function == "vehicles_of_kind":
        probes.append(ProbeCase(
            "edge-unknown-kind", caps, ([_vehicle_record(v) for v in base.vehicles], "fuel-truck"), "list",
            (("no-matches", lambda out: out == ()),),
        ))
    elif function == "select_vehicle":
        probes.append(ProbeCase("edge-no-cands", caps, (Coord(0, 0), []), "int", (("sentinel", lambda out: out == -1),)))
    elif function == "plan_route":
        probes.append(ProbeCase(
            "edge-goal-blocked", caps, (Coord(0, 0), Coord(4, 8), []), "list",
            (("no-route-into-structure", lambda out: out == ()),),
        ))
    elif function == "deadline_ok":
        probes.append(ProbeCase(
            "edge-too-slow", caps, (30, 3, 0, 40), "bool",
            (("missed", lambda out: out is False),),
        ))
    elif function == "route_length":
        probes.append(ProbeCase("edge-empty-route", caps, ((),), "int", (("zero", lambda out: out == 0),)))
    elif function == "tie_break":
        probes.append(ProbeCase("edge-empty", caps, ((),), "int", (("sentinel", lambda out: out == -1),)))
    elif function == "vehicle_position":
        ghost = _vehicle_record(Vehicle(999, "hydraulic", Coord(7, 7), True))
        probes.append(ProbeCase(
            "edge-unknown-vehicle", caps, (ghost,), "coord",
            (("falls-back-to-record", lambda out: out == Coord(7, 7)),),
        ))
    elif function == "route_budget":
        ghost = _vehicle_record(Vehicle(999, "oxygen", Coord(0, 0), True, fuel=17))
        probes.append(ProbeCase(
            "edge-unknown-vehicle", caps, (ghost,), "int",
            (("falls-back-to-fuel", lambda out: out == 17),),
        ))
    elif function == "vehicle_speed":
        ghost = _vehicle_record(Vehicle(999, "oxygen", Coord(0, 0), True, speed=2))
        probes.append(ProbeCase(
            "edge-unknown-vehicle", caps, (ghost,), "int",
            (("falls-back-to-speed", lambda out: out == 2),),
        ))
    elif function in ("task_eligible", "crew_available"):
        rec = _task_record(base.tasks[0]) if function == "task_eligible" else _vehicle_record(base.vehicles[0])
        probes.append(ProbeCase(
            "edge-default-true", caps, (rec,), "bool",
            (("true-by-default", lambda out: out is True),), invariant=False,
        ))
    elif function == "launch_window":
        ghost = _task_record(SupportTask(999, Coord(0, 0), "oxygen", 1, 9, 40))
        probes.append(ProbeCase(
            "edge-unknown-task", caps, (ghost,), "int",
            (("falls-back-to-record", lambda out: out == 9),),
        ))
    elif function == "task_priority":
        ghost = _task_record(SupportTask(999, Coord(0, 0), "oxygen", 6, 0, 40))
        probes.append(ProbeCase(
            "edge-unknown-task", caps, (ghost,), "int",
            (("falls-back-to-record", lambda out: out == 6),),
        ))
    elif function == "task_cell":
        ghost = _task_record(SupportTask(999, Coord(4, 2), "oxygen", 1, 0, 40))
        probes.append(ProbeCase(
            "edge-unknown-task", caps, (ghost,), "coord",
            (("falls-back-to-record", lambda out: out == Coord(4, 2)),),
        ))
    elif function == "staging_cell":
        probes.append(ProbeCase(
            "edge-other-kind", caps, ("maintenance",), "coord",
            (("in-grid", lambda out: 0 <= out.x < GRID_W and 0 <= out.y < GRID_H),),
        ))
    elif function == "service_time":
        ghost = _task_record(SupportTask(999, Coord(0, 0), "oxygen", 1, 0, 40))
        probes.append(ProbeCase("edge-oxygen", caps, (ghost,), "int", (("table-value", lambda out: out == 2),)))
    elif function == "dispatch_limit":
        probes.append(ProbeCase("edge-small", caps, (2,), "int", (("min-of-cap", lambda out: out == 2),)))
    elif function == "safety_margin":
        probes.append(ProbeCase("edge-narrow", caps, (6,), "int", (("widened", lambda out: out == 1),)))
    elif function == "kind_for_task":
        ghost = _task_record(SupportTask(999, Coord(0, 0), "maintenance", 1, 0, 40))
        probes.append(ProbeCase("edge-kind", caps, (ghost,), "text", (("passthrough", lambda out: out == "maintenance"),)))
    return tuple(probes)
