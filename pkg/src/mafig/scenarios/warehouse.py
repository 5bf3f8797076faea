"""Warehouse scheduling: robot dispatch, storage slots, grid routing.

Eight emergency categories: robot failures, robot repositions, aisle
blockages, slot outages, order surges, pickup relocations, low batteries,
and zone restrictions.
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

GRID_W = 20
GRID_H = 20
DEFAULT_BATTERY = 200


@dataclass(frozen=True)
class Robot:
    id: int
    cell: Coord
    available: bool
    battery: int = DEFAULT_BATTERY


@dataclass(frozen=True)
class Slot:
    id: int
    cell: Coord
    free: bool


@dataclass(frozen=True)
class Task:
    id: int
    pickup: Coord
    drop: int  # preferred slot id


@dataclass(frozen=True)
class WarehouseState:
    robots: tuple[Robot, ...]
    slots: tuple[Slot, ...]
    tasks: tuple[Task, ...]
    racks: tuple[Rect, ...]
    zones: tuple[Rect, ...] = ()

    def robot(self, rid: int) -> Robot:
        for r in self.robots:
            if r.id == rid:
                return r
        raise ScenarioError(f"no robot {rid}")

    def slot(self, sid: int) -> Slot:
        for s in self.slots:
            if s.id == sid:
                return s
        raise ScenarioError(f"no slot {sid}")

    def task(self, tid: int) -> Task:
        for t in self.tasks:
            if t.id == tid:
                return t
        raise ScenarioError(f"no task {tid}")

    def blocked_cells(self) -> frozenset[Coord]:
        cells: set[Coord] = set()
        for rect in self.racks:
            cells.update(rect.cells())
        return frozenset(cells)

    def zone_cells(self) -> frozenset[Coord]:
        cells: set[Coord] = set()
        for rect in self.zones:
            cells.update(rect.cells())
        return frozenset(cells)


def _robot_record(r: Robot) -> dict:
    return {"id": r.id, "cell": r.cell, "available": r.available, "battery": r.battery}


def _slot_record(s: Slot) -> dict:
    return {"id": s.id, "cell": s.cell, "free": s.free}


def _task_record(t: Task) -> dict:
    return {"id": t.id, "pickup": t.pickup, "drop": t.drop}


def _rect_record(z: Rect) -> dict:
    return {"lo": z.lo, "hi": z.hi}


# Racks run vertically with two-cell aisles; rows 0-1 and 17-19 stay open.
_RACKS = tuple(Rect(Coord(x, 2), Coord(x, 15)) for x in (2, 5, 8, 11, 14, 17))

_ROBOTS = tuple(Robot(i + 1, Coord(1 + 2 * i, 0), True) for i in range(8))

_SLOTS = tuple(
    Slot(i + 1, Coord(x, 18), True)
    for i, x in enumerate((1, 3, 4, 6, 7, 9, 10, 12, 13, 15, 16, 18))
)

_TASK_VARIANTS = (
    (
        Task(1, Coord(3, 5), 2), Task(2, Coord(6, 9), 5), Task(3, Coord(9, 4), 7),
        Task(4, Coord(12, 11), 9), Task(5, Coord(15, 7), 11),
    ),
    (
        Task(1, Coord(4, 12), 1), Task(2, Coord(7, 6), 4), Task(3, Coord(10, 13), 6),
        Task(4, Coord(13, 3), 8), Task(5, Coord(16, 10), 12),
    ),
    (
        Task(1, Coord(1, 7), 3), Task(2, Coord(6, 14), 5), Task(3, Coord(12, 5), 8),
        Task(4, Coord(18, 9), 10), Task(5, Coord(9, 10), 11),
    ),
)

_CATEGORIES = (
    "robot_failure",
    "robot_reposition",
    "aisle_blockage",
    "slot_outage",
    "task_surge",
    "pickup_relocation",
    "battery_low",
    "zone_restriction",
)

_FACT_FIELDS = {
    "robot_failure": frozenset({"robots.available"}),
    "robot_reposition": frozenset({"robots.cell"}),
    "aisle_blockage": frozenset({"grid.blocked"}),
    "slot_outage": frozenset({"slots.free"}),
    "task_surge": frozenset({"tasks.roster"}),
    "pickup_relocation": frozenset({"tasks.pickup"}),
    "battery_low": frozenset({"robots.battery"}),
    "zone_restriction": frozenset({"zones"}),
}

_FACT_TAGS = {kind: frozenset({kind.replace("_", "-")}) for kind in _FACT_FIELDS}


class WarehouseScenario(Scenario):
    name = "warehouse"
    categories = _CATEGORIES
    schema_fields = frozenset({
        "grid.width", "grid.height", "grid.blocked", "zones",
        "robots.id", "robots.cell", "robots.available", "robots.battery",
        "slots.id", "slots.cell", "slots.free",
        "tasks.roster", "tasks.id", "tasks.pickup", "tasks.drop",
        "routes",
    })
    decision_fields = frozenset({"assignments", "routes"})

    def variant_count(self) -> int:
        return len(_TASK_VARIANTS)

    def base_state(self, variant: int = 0) -> WarehouseState:
        return WarehouseState(_ROBOTS, _SLOTS, _TASK_VARIANTS[variant % len(_TASK_VARIANTS)], _RACKS)

    def state_to_json(self, state: WarehouseState) -> dict:
        return {
            "robots": [[r.id, [r.cell.x, r.cell.y], r.available, r.battery] for r in state.robots],
            "slots": [[s.id, [s.cell.x, s.cell.y], s.free] for s in state.slots],
            "tasks": [[t.id, [t.pickup.x, t.pickup.y], t.drop] for t in state.tasks],
            "racks": [r.to_json() for r in state.racks],
            "zones": [z.to_json() for z in state.zones],
        }

    def state_from_json(self, data: Mapping) -> WarehouseState:
        return WarehouseState(
            tuple(Robot(r[0], Coord(*r[1]), r[2], r[3]) for r in data["robots"]),
            tuple(Slot(s[0], Coord(*s[1]), s[2]) for s in data["slots"]),
            tuple(Task(t[0], Coord(*t[1]), t[2]) for t in data["tasks"]),
            tuple(Rect.from_json(r) for r in data["racks"]),
            tuple(Rect.from_json(z) for z in data["zones"]),
        )

    def capabilities(self, state: WarehouseState) -> CapabilityTable:
        blocked = state.blocked_cells()

        def route_between(start: Coord, goal: Coord, avoid: tuple) -> tuple[Coord, ...]:
            barred = set(blocked)
            for rect in avoid:
                barred.update(Rect(rect["lo"], rect["hi"]).cells())
            return astar(GRID_W, GRID_H, barred, start, goal)

        return CapabilityTable({
            "robots": lambda: [_robot_record(r) for r in state.robots],
            "slots": lambda: [_slot_record(s) for s in state.slots],
            "tasks": lambda: [_task_record(t) for t in state.tasks],
            "zone_rects": lambda: [_rect_record(z) for z in state.zones],
            "route_between": route_between,
            "grid_width": lambda: GRID_W,
            "grid_height": lambda: GRID_H,
        })

    # --- emergencies ---

    def apply_emergency(self, state: WarehouseState, emergency: Emergency) -> WarehouseState:
        robots = {r.id: r for r in state.robots}
        slots = {s.id: s for s in state.slots}
        tasks = {t.id: t for t in state.tasks}
        racks = list(state.racks)
        zones = list(state.zones)
        task_order = [t.id for t in state.tasks]
        for fact in emergency.facts:
            kind = fact["kind"]
            if kind == "robot_failure":
                for rid in fact["robots"]:
                    if rid not in robots:
                        raise ScenarioError(f"failure references unknown robot {rid}")
                    robots[rid] = replace(robots[rid], available=False)
            elif kind == "robot_reposition":
                rid = fact["robot"]
                if rid not in robots:
                    raise ScenarioError(f"reposition references unknown robot {rid}")
                robots[rid] = replace(robots[rid], cell=Coord(*fact["cell"]))
            elif kind == "aisle_blockage":
                racks.append(Rect(Coord(*fact["lo"]), Coord(*fact["hi"])))
            elif kind == "slot_outage":
                for sid in fact["slots"]:
                    if sid not in slots:
                        raise ScenarioError(f"outage references unknown slot {sid}")
                    slots[sid] = replace(slots[sid], free=False)
            elif kind == "task_surge":
                for rec in fact["tasks"]:
                    if rec["id"] in tasks:
                        raise ScenarioError(f"surge task {rec['id']} already exists")
                    tasks[rec["id"]] = Task(rec["id"], Coord(*rec["pickup"]), rec["drop"])
                    task_order.append(rec["id"])
            elif kind == "pickup_relocation":
                tid = fact["task"]
                if tid not in tasks:
                    raise ScenarioError(f"relocation references unknown task {tid}")
                tasks[tid] = replace(tasks[tid], pickup=Coord(*fact["cell"]))
            elif kind == "battery_low":
                rid = fact["robot"]
                if rid not in robots:
                    raise ScenarioError(f"battery fact references unknown robot {rid}")
                robots[rid] = replace(robots[rid], battery=fact["limit"])
            elif kind == "zone_restriction":
                zones.append(Rect(Coord(*fact["lo"]), Coord(*fact["hi"])))
            else:
                raise ScenarioError(f"unknown warehouse fact kind {kind!r}")
        return WarehouseState(
            tuple(robots[r.id] for r in state.robots),
            tuple(slots[s.id] for s in state.slots),
            tuple(tasks[tid] for tid in task_order),
            tuple(racks),
            tuple(zones),
        )

    def fact_fields(self, fact: Mapping) -> frozenset[str]:
        return _FACT_FIELDS[fact["kind"]]

    def fact_tags(self, fact: Mapping) -> frozenset[str]:
        return _FACT_TAGS[fact["kind"]]

    def narrative_for(self, facts: Sequence[Mapping]) -> str:
        parts = []
        for fact in facts:
            kind = fact["kind"]
            if kind == "robot_failure":
                ids = " and ".join(f"robot {r}" for r in fact["robots"])
                parts.append(f"{ids.capitalize()} reports a drive failure and is out of service.")
            elif kind == "robot_reposition":
                x, y = fact["cell"]
                parts.append(f"Robot {fact['robot']} was manually moved to cell ({x}, {y}).")
            elif kind == "aisle_blockage":
                parts.append(
                    f"A pallet spill blocks the aisle from ({fact['lo'][0]}, {fact['lo'][1]}) "
                    f"to ({fact['hi'][0]}, {fact['hi'][1]})."
                )
            elif kind == "slot_outage":
                ids = ", ".join(str(s) for s in fact["slots"])
                parts.append(f"Storage slot {ids} is unusable pending rack inspection.")
            elif kind == "task_surge":
                descs = ", ".join(
                    f"task {t['id']} picking at ({t['pickup'][0]}, {t['pickup'][1]}) for slot {t['drop']}"
                    for t in fact["tasks"]
                )
                parts.append(f"Rush orders arrive: {descs}.")
            elif kind == "pickup_relocation":
                x, y = fact["cell"]
                parts.append(f"The pickup for task {fact['task']} moved to cell ({x}, {y}).")
            elif kind == "battery_low":
                parts.append(
                    f"Robot {fact['robot']} reports low battery and can travel at most {fact['limit']} more cells."
                )
            elif kind == "zone_restriction":
                parts.append(
                    f"Safety roping closes the zone from ({fact['lo'][0]}, {fact['lo'][1]}) "
                    f"to ({fact['hi'][0]}, {fact['hi'][1]}) to robot traffic."
                )
            else:
                raise ScenarioError(f"unknown warehouse fact kind {kind!r}")
        return " ".join(parts)

    def _open_cells(self, state: WarehouseState) -> list[Coord]:
        blocked = state.blocked_cells() | state.zone_cells()
        keep_out = {r.cell for r in state.robots} | {s.cell for s in state.slots} | {t.pickup for t in state.tasks}
        return [
            Coord(x, y)
            for x in range(GRID_W)
            for y in range(2, 16)
            if Coord(x, y) not in blocked and Coord(x, y) not in keep_out
        ]

    def _rect_is_safe(self, state: WarehouseState, rect: Rect) -> bool:
        """A candidate blockage/zone must leave all pickups and slots
        reachable from every robot."""
        barred = set(state.blocked_cells()) | set(state.zone_cells()) | set(rect.cells())
        goals = [t.pickup for t in state.tasks] + [s.cell for s in state.slots if s.free]
        for robot in state.robots:
            if robot.cell in barred:
                return False
            for goal in goals:
                if goal in barred or not astar(GRID_W, GRID_H, barred, robot.cell, goal):
                    return False
        return True

    def sample_facts(self, category, rng: random.Random, state: WarehouseState, impactful_intent: bool):
        if category == "robot_failure":
            if impactful_intent:
                ids = sorted(rng.sample([r.id for r in state.robots[:5]], rng.choice((1, 2))))
            else:
                ids = [state.robots[-1].id]
            return ({"kind": "robot_failure", "robots": ids},)
        if category == "robot_reposition":
            robot = rng.choice(state.robots[:5] if impactful_intent else state.robots[5:])
            cell = rng.choice(self._open_cells(state))
            return ({"kind": "robot_reposition", "robot": robot.id, "cell": [cell.x, cell.y]},)
        if category == "aisle_blockage":
            for _ in range(40):
                rect = self._sample_rect(rng, state, wide=impactful_intent)
                if rect is not None and self._rect_is_safe(state, rect):
                    return ({"kind": "aisle_blockage", "lo": [rect.lo.x, rect.lo.y], "hi": [rect.hi.x, rect.hi.y]},)
            raise ScenarioError("could not sample a safe blockage rect")
        if category == "slot_outage":
            if impactful_intent:
                ids = sorted({state.task(t.id).drop for t in state.tasks[: rng.choice((1, 2))]})
            else:
                used = {t.drop for t in state.tasks}
                spare = [s.id for s in state.slots if s.id not in used]
                ids = [rng.choice(spare)]
            return ({"kind": "slot_outage", "slots": ids},)
        if category == "task_surge":
            count = rng.choice((1, 2)) if impactful_intent else 1
            cells = rng.sample(self._open_cells(state), count)
            used = {t.drop for t in state.tasks}
            spare = [s.id for s in state.slots if s.id not in used]
            new = [
                {"id": 100 + i, "pickup": [c.x, c.y], "drop": spare[i % len(spare)]}
                for i, c in enumerate(cells)
            ]
            return ({"kind": "task_surge", "tasks": new},)
        if category == "pickup_relocation":
            task = rng.choice(state.tasks)
            cell = rng.choice(self._open_cells(state))
            return ({"kind": "pickup_relocation", "task": task.id, "cell": [cell.x, cell.y]},)
        if category == "battery_low":
            robot = rng.choice(state.robots[:5])
            limit = rng.randint(4, 10) if impactful_intent else DEFAULT_BATTERY - 1
            return ({"kind": "battery_low", "robot": robot.id, "limit": limit},)
        if category == "zone_restriction":
            for _ in range(40):
                rect = self._sample_rect(rng, state, wide=impactful_intent)
                if rect is not None and self._rect_is_safe(state, rect):
                    return ({"kind": "zone_restriction", "lo": [rect.lo.x, rect.lo.y], "hi": [rect.hi.x, rect.hi.y]},)
            raise ScenarioError("could not sample a safe zone rect")
        raise ScenarioError(f"unknown warehouse category {category!r}")

    def _sample_rect(self, rng: random.Random, state: WarehouseState, wide: bool) -> Rect | None:
        cells = self._open_cells(state)
        if not cells:
            return None
        anchor = rng.choice(cells)
        w = rng.choice((0, 1)) if wide else 0
        h = rng.choice((1, 2)) if wide else 1
        hi = Coord(min(anchor.x + w, GRID_W - 1), min(anchor.y + h, GRID_H - 1))
        return Rect(anchor, hi)

    # --- planning ---

    def plan(self, state: WarehouseState, lib: FunctionLibrary) -> dict:
        from ..dsl import evaluate

        caps = self.capabilities(state)
        ev = lambda name, args: evaluate(lib.get(name).ast, args, caps)
        roster = ev("task_roster", [[_task_record(t) for t in state.tasks]])
        eligible = [t for t in roster if ev("task_eligible", [t])]
        order = ev("task_order", [list(eligible)])
        free = list(ev("free_slots", [[_slot_record(s) for s in state.slots]]))
        zones = ev("restricted_zones", [[_rect_record(z) for z in state.zones]])
        robots_av = [r for r in ev("available_robots", [[_robot_record(r) for r in state.robots]])
                     if ev("robot_ready", [r])]
        slot_cells = {s.id: s.cell for s in state.slots}
        used_robots: set[int] = set()
        used_slots: set[int] = set()
        assignments: dict[int, dict] = {}
        for t in order:
            pickup = ev("pickup_cell", [t])
            free_now = [s for s in free if s["id"] not in used_slots]
            probe_task = {"id": t["id"], "pickup": pickup, "drop": t["drop"]}
            drop_id = ev("choose_drop", [probe_task, free_now])
            if drop_id < 0 or drop_id not in slot_cells:
                continue
            drop_cell = slot_cells[drop_id]
            remaining = [
                {"id": r["id"], "cell": ev("robot_position", [r])}
                for r in robots_av
                if r["id"] not in used_robots
            ]
            budget_by_id = {r["id"]: ev("route_budget", [r]) for r in robots_av}
            while remaining:
                rid = ev("select_robot", [pickup, remaining])
                if rid < 0:
                    break
                start_cell = next(r["cell"] for r in remaining if r["id"] == rid)
                leg1 = ev("plan_route", [start_cell, pickup, zones])
                leg2 = ev("plan_route", [pickup, drop_cell, zones])
                if leg1 and leg2:
                    route = tuple(leg1) + tuple(leg2)[1:]
                    steps = ev("estimated_time", [route])
                    if steps <= budget_by_id[rid]:
                        assignments[t["id"]] = {
                            "robot": rid,
                            "route": [[c.x, c.y] for c in route],
                            "drop": drop_id,
                        }
                        used_robots.add(rid)
                        used_slots.add(drop_id)
                        break
                remaining = [r for r in remaining if r["id"] != rid]
        return {"assignments": assignments}

    # --- feasibility oracle (independent of the planner) ---

    def check_feasible(self, state: WarehouseState, decision: dict) -> FeasibilityVerdict:
        assignments = decision.get("assignments", {})
        forbidden = state.blocked_cells() | state.zone_cells()
        seen_robots: set[int] = set()
        seen_slots: set[int] = set()
        for task in state.tasks:
            slot = assignments.get(task.id) or assignments.get(str(task.id))
            if slot is None:
                return FeasibilityVerdict(False, f"unassigned-task:{task.id}")
            rid, drop = slot["robot"], slot["drop"]
            try:
                robot = state.robot(rid)
            except ScenarioError:
                return FeasibilityVerdict(False, f"unknown-robot:{rid}")
            if not robot.available:
                return FeasibilityVerdict(False, f"unavailable-robot:{rid} on task {task.id}")
            if rid in seen_robots:
                return FeasibilityVerdict(False, f"robot-reuse:{rid}")
            seen_robots.add(rid)
            try:
                drop_slot = state.slot(drop)
            except ScenarioError:
                return FeasibilityVerdict(False, f"unknown-slot:{drop}")
            if not drop_slot.free:
                return FeasibilityVerdict(False, f"slot-not-free:{drop} on task {task.id}")
            if drop in seen_slots:
                return FeasibilityVerdict(False, f"slot-reuse:{drop}")
            seen_slots.add(drop)
            route = [Coord(*c) for c in slot["route"]]
            if not route:
                return FeasibilityVerdict(False, f"empty-route:task {task.id}")
            if route[0] != robot.cell:
                return FeasibilityVerdict(False, f"route-start-mismatch:task {task.id}")
            if route[-1] != drop_slot.cell:
                return FeasibilityVerdict(False, f"route-end-mismatch:task {task.id}")
            if task.pickup not in route:
                return FeasibilityVerdict(False, f"route-misses-pickup:task {task.id}")
            for a, b in zip(route, route[1:]):
                if abs(a.x - b.x) + abs(a.y - b.y) != 1:
                    return FeasibilityVerdict(False, f"route-discontinuous:task {task.id}")
            for cell in route:
                if not (0 <= cell.x < GRID_W and 0 <= cell.y < GRID_H):
                    return FeasibilityVerdict(False, f"off-grid:task {task.id}")
                if cell in forbidden:
                    return FeasibilityVerdict(False, f"blocked-cell:{(cell.x, cell.y)} on task {task.id}")
            if len(route) - 1 > robot.battery:
                return FeasibilityVerdict(False, f"battery-exceeded:robot {rid} on task {task.id}")
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
        truth_available = {r.id for r in truth.robots if r.available}
        truth_forbidden = truth.blocked_cells() | truth.zone_cells()
        for fact in case.emergency.facts:
            kind = fact["kind"]
            if kind == "robot_failure" and function == "available_robots":
                probes.append(ProbeCase(
                    "case-failure", caps, ([_robot_record(r) for r in view.robots],), "list",
                    (("excludes-failed-robots",
                      lambda out, ok=truth_available: all(r["id"] in ok for r in out)),),
                ))
            elif kind == "robot_failure" and function == "robot_ready":
                for rid in fact["robots"]:
                    probes.append(ProbeCase(
                        f"case-ready-{rid}", caps, (_robot_record(view.robot(rid)),), "bool",
                        (("failed-robot-not-ready", lambda out: out is False),),
                    ))
            elif kind == "robot_reposition" and function == "robot_position":
                rid = fact["robot"]
                want = truth.robot(rid).cell
                probes.append(ProbeCase(
                    f"case-moved-{rid}", caps, (_robot_record(view.robot(rid)),), "coord",
                    (("position-reflects-move", lambda out, w=want: out == w),),
                ))
            elif kind in ("aisle_blockage",) and function == "plan_route":
                rect = Rect(Coord(*fact["lo"]), Coord(*fact["hi"]))
                start, goal = straddle_pair(rect, truth_forbidden, GRID_W, GRID_H)
                if start is not None:
                    probes.append(ProbeCase(
                        "case-blockage", caps, (start, goal, []), "list",
                        (("route-avoids-truth-blocked",
                          lambda out, bad=frozenset(rect.cells()): len(out) > 0 and all(c not in bad for c in out)),),
                    ))
            elif kind == "slot_outage" and function == "free_slots":
                truth_free = {s.id for s in truth.slots if s.free}
                probes.append(ProbeCase(
                    "case-outage", caps, ([_slot_record(s) for s in view.slots],), "list",
                    (("excludes-out-slots", lambda out, ok=truth_free: all(s["id"] in ok for s in out)),),
                ))
            elif kind == "task_surge" and function == "task_roster":
                want = {t.id for t in truth.tasks}
                probes.append(ProbeCase(
                    "case-surge", caps, ([_task_record(t) for t in view.tasks],), "list",
                    (("covers-all-tasks", lambda out, w=want: {t["id"] for t in out} >= w),),
                ))
            elif kind == "pickup_relocation" and function == "pickup_cell":
                tid = fact["task"]
                want = truth.task(tid).pickup
                probes.append(ProbeCase(
                    f"case-pickup-{tid}", caps, (_task_record(view.task(tid)),), "coord",
                    (("pickup-reflects-move", lambda out, w=want: out == w),),
                ))
            elif kind == "battery_low" and function == "route_budget":
                rid = fact["robot"]
                want = truth.robot(rid).battery
                probes.append(ProbeCase(
                    f"case-battery-{rid}", caps, (_robot_record(view.robot(rid)),), "int",
                    (("budget-reflects-limit", lambda out, w=want: out == w),),
                ))
            elif kind == "zone_restriction" and function in ("restricted_zones", "zone_allowed"):
                rect = Rect(Coord(*fact["lo"]), Coord(*fact["hi"]))
                if function == "restricted_zones":
                    probes.append(ProbeCase(
                        "case-zone", caps, ([_rect_record(z) for z in view.zones],), "list",
                        (("covers-new-zone", _zone_cover_check(rect)),),
                    ))
                else:
                    probes.append(ProbeCase(
                        "case-zone-cell", caps, (rect.lo, [_rect_record(z) for z in view.zones]), "bool",
                        (("cell-inside-zone-denied", lambda out: out is False),),
                    ))
        return tuple(probes)


def _zone_cover_check(rect: Rect):
    def check(out) -> bool:
        covered: set[Coord] = set()
        for z in out:
            covered.update(Rect(z["lo"], z["hi"]).cells())
        return all(c in covered for c in rect.cells())
    return check


_CANONICAL_EMERGENCY = Emergency(
    id="warehouse-probe",
    scenario="warehouse",
    category="robot_failure",
    narrative="Robot 2 reports a drive failure and is out of service.",
    facts=({"kind": "robot_failure", "robots": [2]},),
)


def _library_probes(scn: WarehouseScenario, function: str, base: WarehouseState, shaken: WarehouseState) -> tuple[ProbeCase, ...]:
    probes: list[ProbeCase] = []
    for label, state in (("base", base), ("post-emergency", shaken)):
        caps = scn.capabilities(state)
        robot_recs = [_robot_record(r) for r in state.robots]
        slot_recs = [_slot_record(s) for s in state.slots]
        task_recs = [_task_record(t) for t in state.tasks]
        zone_recs = [_rect_record(z) for z in state.zones]
        if function == "task_roster":
            probes.append(ProbeCase(
                f"{label}-roster", caps, (task_recs,), "list",
                (("keeps-input-tasks", lambda out, n=len(task_recs): len(out) >= n),),
            ))
        elif function == "task_order":
            probes.append(ProbeCase(
                f"{label}-order", caps, (task_recs,), "list",
                (("sorted-by-id", lambda out: [t["id"] for t in out] == sorted(t["id"] for t in out)),),
            ))
        elif function == "task_eligible":
            probes.append(ProbeCase(f"{label}-eligible", caps, (task_recs[0],), "bool"))
        elif function == "pickup_cell":
            t = state.tasks[0]
            probes.append(ProbeCase(
                f"{label}-pickup", caps, (_task_record(t),), "coord",
                (("in-grid", lambda out: 0 <= out.x < GRID_W and 0 <= out.y < GRID_H),),
            ))
        elif function == "choose_drop":
            t = _task_record(state.tasks[0])
            free = [s for s in slot_recs if s["free"]]
            probes.append(ProbeCase(
                f"{label}-drop", caps, (t, free), "int",
                (("picks-a-free-slot", lambda out, ids={s["id"] for s in free}: out in ids),),
            ))
        elif function == "free_slots":
            probes.append(ProbeCase(
                f"{label}-free", caps, (slot_recs,), "list",
                (("only-free", lambda out: all(s["free"] for s in out)),),
            ))
        elif function == "available_robots":
            ok = {r["id"] for r in robot_recs if r["available"]}
            probes.append(ProbeCase(
                f"{label}-avail", caps, (robot_recs,), "list",
                (("only-available", lambda out, ids=ok: all(r["id"] in ids for r in out)),),
            ))
        elif function == "robot_ready":
            probes.append(ProbeCase(f"{label}-ready", caps, (robot_recs[0],), "bool"))
        elif function == "robot_position":
            r = state.robots[0]
            probes.append(ProbeCase(
                f"{label}-pos", caps, (_robot_record(r),), "coord",
                (("in-grid", lambda out: 0 <= out.x < GRID_W and 0 <= out.y < GRID_H),),
            ))
            probes.append(ProbeCase(
                f"{label}-pos-pristine", caps, (_robot_record(r),), "coord",
                (("matches-record", lambda out, w=r.cell: out == w),),
                invariant=False,
            ))
        elif function == "plan_route":
            start = state.robots[0].cell
            goal = state.tasks[0].pickup
            blocked = state.blocked_cells()
            probes.append(ProbeCase(
                f"{label}-route", caps, (start, goal, zone_recs), "list",
                (("avoids-racks", lambda out, bad=blocked: all(c not in bad for c in out)),),
            ))
            probes.append(ProbeCase(
                f"{label}-route-pristine", caps, (start, goal, zone_recs), "list",
                (("reaches-goal", lambda out, g=goal: len(out) > 0 and out[-1] == g),),
                invariant=False,
            ))
        elif function == "restricted_zones":
            probes.append(ProbeCase(
                f"{label}-zones", caps, (zone_recs,), "list",
                (("keeps-state-zones", lambda out, n=len(zone_recs): len(out) >= n),),
            ))
        elif function == "zone_allowed":
            probes.append(ProbeCase(
                f"{label}-zone-ok", caps, (Coord(0, 0), zone_recs), "bool",
            ))
        elif function == "route_budget":
            r = state.robots[0]
            probes.append(ProbeCase(
                f"{label}-budget", caps, (_robot_record(r),), "int",
                (("positive", lambda out: out > 0),),
            ))
        elif function == "select_robot":
            cands = [{"id": r.id, "cell": r.cell} for r in state.robots[:3]]
            probes.append(ProbeCase(
                f"{label}-select", caps, (state.tasks[0].pickup, cands), "int",
                (("picks-a-candidate", lambda out, ids={c["id"] for c in cands}: out in ids),),
            ))
        elif function == "estimated_time":
            route = (Coord(0, 0), Coord(0, 1), Coord(1, 1))
            probes.append(ProbeCase(
                f"{label}-time", caps, (route,), "int",
                (("step-count", lambda out: out == 2),),
            ))
        else:
            raise ScenarioError(f"no probes for warehouse function {function!r}")
    caps = scn.capabilities(base)
    if function in ("task_order", "available_robots", "free_slots"):
        probes.append(ProbeCase("edge-empty", caps, ([],), "list", (("empty-in-empty-out", lambda out: out == ()),)))
    elif function in ("task_roster", "restricted_zones"):
        # pristine extras are empty; repairs legitimately add entries
        probes.append(ProbeCase(
            "edge-empty", caps, ([],), "list",
            (("empty-in-empty-out", lambda out: out == ()),), invariant=False,
        ))
    elif function == "choose_drop":
        t = _task_record(base.tasks[0])
        probes.append(ProbeCase("edge-no-slots", caps, (t, []), "int", (("sentinel", lambda out: out == -1),)))
    elif function == "select_robot":
        probes.append(ProbeCase("edge-no-cands", caps, (Coord(0, 0), []), "int", (("sentinel", lambda out: out == -1),)))
    elif function == "estimated_time":
        probes.append(ProbeCase("edge-empty-route", caps, ((),), "int", (("zero", lambda out: out == 0),)))
    elif function == "plan_route":
        probes.append(ProbeCase(
            "edge-same-cell", caps, (Coord(0, 0), Coord(0, 0), []), "list",
            (("single-cell", lambda out: len(out) == 1),),
        ))
    elif function == "zone_allowed":
        zone = [{"lo": Coord(3, 3), "hi": Coord(4, 4)}]
        probes.append(ProbeCase(
            "edge-inside", caps, (Coord(3, 4), zone), "bool",
            (("denied-inside", lambda out: out is False),),
        ))
    elif function == "robot_position":
        ghost = {"id": 999, "cell": Coord(2, 2), "available": True, "battery": 10}
        probes.append(ProbeCase(
            "edge-unknown-robot", caps, (ghost,), "coord",
            (("falls-back-to-record", lambda out: out == Coord(2, 2)),),
        ))
    elif function == "pickup_cell":
        ghost = {"id": 999, "pickup": Coord(9, 9), "drop": 1}
        probes.append(ProbeCase(
            "edge-unknown-task", caps, (ghost,), "coord",
            (("falls-back-to-record", lambda out: out == Coord(9, 9)),),
        ))
    elif function in ("task_eligible", "robot_ready"):
        rec = _task_record(base.tasks[0]) if function == "task_eligible" else _robot_record(base.robots[0])
        probes.append(ProbeCase(
            "edge-default-true", caps, (rec,), "bool",
            (("true-by-default", lambda out: out is True),), invariant=False,
        ))
    elif function == "route_budget":
        ghost = {"id": 999, "cell": Coord(0, 0), "available": True, "battery": 37}
        probes.append(ProbeCase(
            "edge-unknown-robot", caps, (ghost,), "int",
            (("falls-back-to-battery", lambda out: out == 37),),
        ))
    return tuple(probes)
