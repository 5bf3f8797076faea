"""Deterministic grid routing used by scenario capabilities.

This is the production-side router that capabilities expose to the DSL.
The feasibility oracle never calls it: oracles re-check returned routes
cell by cell, so the two sides stay independent.
"""

from __future__ import annotations

import heapq

from ..dsl import Coord


def astar(
    width: int,
    height: int,
    blocked: frozenset[Coord] | set[Coord],
    start: Coord,
    goal: Coord,
) -> tuple[Coord, ...]:
    """Shortest 4-neighbor path from start to goal, both inclusive.

    Deterministic tie-breaking (f, h, x, y). Returns an empty tuple when no
    path exists or an endpoint is blocked/off-grid.
    """
    if not (_in_grid(start, width, height) and _in_grid(goal, width, height)):
        return ()
    if start in blocked or goal in blocked:
        return ()
    if start == goal:
        return (start,)
    open_heap: list[tuple[int, int, int, int]] = []
    heapq.heappush(open_heap, (_dist(start, goal), _dist(start, goal), start.x, start.y))
    g_score = {start: 0}
    came_from: dict[Coord, Coord] = {}
    closed: set[Coord] = set()
    while open_heap:
        _, _, x, y = heapq.heappop(open_heap)
        current = Coord(x, y)
        if current in closed:
            continue
        closed.add(current)
        if current == goal:
            path = [current]
            while current in came_from:
                current = came_from[current]
                path.append(current)
            path.reverse()
            return tuple(path)
        for dx, dy in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            nxt = Coord(x + dx, y + dy)
            if not _in_grid(nxt, width, height) or nxt in blocked or nxt in closed:
                continue
            tentative = g_score[current] + 1
            if tentative < g_score.get(nxt, 1 << 30):
                g_score[nxt] = tentative
                came_from[nxt] = current
                h = _dist(nxt, goal)
                heapq.heappush(open_heap, (tentative + h, h, nxt.x, nxt.y))
    return ()


def _in_grid(c: Coord, width: int, height: int) -> bool:
    return 0 <= c.x < width and 0 <= c.y < height


def _dist(a: Coord, b: Coord) -> int:
    return abs(a.x - b.x) + abs(a.y - b.y)
