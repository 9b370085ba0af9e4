from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..mdp import TabularMDP

# row 0 is the northern edge
MOVES = {0: (-1, 0), 1: (1, 0), 2: (0, -1), 3: (0, 1)}
ACTION_NAMES = ("N", "S", "W", "E")


def _four_rooms() -> tuple[str, ...]:
    size = 11
    grid = [["."] * size for _ in range(size)]
    for r in range(size):
        if r not in (2, 8):
            grid[r][5] = "#"
    for c in range(5):
        if c != 2:
            grid[5][c] = "#"
    for c in range(6, size):
        if c != 8:
            grid[6][c] = "#"
    return tuple("".join(row) for row in grid)


@dataclass(frozen=True)
class GridWorldSpec:
    layout: tuple[str, ...] = _four_rooms()
    start: tuple[int, int] = (10, 0)
    goal: tuple[int, int] = (0, 10)
    intended_prob: float = 0.8

    @property
    def free_cells(self) -> list[tuple[int, int]]:
        return [
            (r, c)
            for r, row in enumerate(self.layout)
            for c, ch in enumerate(row)
            if ch != "#"
        ]


def _target(spec: GridWorldSpec, cell: tuple[int, int], action: int) -> tuple[int, int]:
    dr, dc = MOVES[action]
    r, c = cell[0] + dr, cell[1] + dc
    if 0 <= r < len(spec.layout) and 0 <= c < len(spec.layout[0]) and spec.layout[r][c] != "#":
        return r, c
    return cell


def reachable_cells(spec: GridWorldSpec, source: tuple[int, int]) -> set[tuple[int, int]]:
    seen = {source}
    frontier = deque([source])
    while frontier:
        cell = frontier.popleft()
        for a in MOVES:
            nxt = _target(spec, cell, a)
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return seen


def build_grid_world(spec: GridWorldSpec | None = None) -> TabularMDP:
    """Slippery four-room grid: the intended move happens with prob 0.8, each
    of the other three directions with 0.2/3. Moves into walls or the border
    leave the agent in place. The goal is absorbing with reward 0; every other
    cell costs -1."""
    spec = spec or GridWorldSpec()
    cells = spec.free_cells
    index = {cell: i for i, cell in enumerate(cells)}
    S = len(cells)
    slip = (1.0 - spec.intended_prob) / 3.0
    P = np.zeros((S, 4, S))
    R = np.full((S, 4), -1.0)
    goal = index[spec.goal]
    for cell, s in index.items():
        if s == goal:
            P[s, :, s] = 1.0
            R[s, :] = 0.0
            continue
        for a in MOVES:
            for d in MOVES:
                P[s, a, index[_target(spec, cell, d)]] += spec.intended_prob if d == a else slip
    return TabularMDP(P, R, (4,) * S, start_state=index[spec.start], name="grid-world")


def render(spec: GridWorldSpec | None = None) -> str:
    spec = spec or GridWorldSpec()
    rows = [list(row) for row in spec.layout]
    rows[spec.start[0]][spec.start[1]] = "S"
    rows[spec.goal[0]][spec.goal[1]] = "G"
    return "\n".join("".join(row) for row in rows)
