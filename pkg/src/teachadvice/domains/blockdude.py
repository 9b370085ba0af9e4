from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple

import numpy as np

from ..mdp import TabularMDP

LEFT, RIGHT, UP, PICK_PLACE = 0, 1, 2, 3
ACTION_NAMES = ("left", "right", "up", "pick/place")
GOAL_STATE = 0


class DudeState(NamedTuple):
    x: int
    y: int
    facing: int  # -1 left, +1 right
    carrying: bool
    blocks: tuple[tuple[int, int], ...]  # resting blocks, sorted


@dataclass(frozen=True)
class BlockDudeSpec:
    width: int
    height: int
    walls: frozenset[tuple[int, int]]
    blocks: tuple[tuple[int, int], ...]
    agent: tuple[int, int]
    facing: int
    goal: tuple[int, int]
    state_cap: int = 100_000

    @classmethod
    def from_map(cls, rows: list[str], facing: str = "right", **kw) -> "BlockDudeSpec":
        height, width = len(rows), len(rows[0])
        walls, blocks = set(), []
        agent = goal = None
        for i, row in enumerate(rows):
            if len(row) != width:
                raise ValueError("ragged Block Dude map")
            y = height - 1 - i
            for x, ch in enumerate(row):
                if ch == "#":
                    walls.add((x, y))
                elif ch == "B":
                    blocks.append((x, y))
                elif ch == "A":
                    agent = (x, y)
                elif ch == "G":
                    goal = (x, y)
        if agent is None or goal is None:
            raise ValueError("map needs an agent 'A' and a goal 'G'")
        return cls(width, height, frozenset(walls), tuple(sorted(blocks)), agent, 1 if facing == "right" else -1, goal, **kw)

    @classmethod
    def level1(cls) -> "BlockDudeSpec":
        text = resources.files(__package__).joinpath("fixtures/block_dude_level1.json").read_text()
        doc = json.loads(text)
        return cls.from_map(doc["map"], doc.get("facing", "right"))


class _Board:
    def __init__(self, spec: BlockDudeSpec, blocks: tuple[tuple[int, int], ...]):
        self.spec = spec
        self.blocks = set(blocks)

    def solid(self, x: int, y: int) -> bool:
        if y < 0 or x < 0 or x >= self.spec.width or y >= self.spec.height:
            return True
        return (x, y) in self.spec.walls or (x, y) in self.blocks

    def rest_height(self, x: int, y: int) -> int:
        while not self.solid(x, y - 1):
            y -= 1
        return y


def transition(spec: BlockDudeSpec, st: DudeState, action: int) -> DudeState:
    """Deterministic successor. Gravity applies to the agent after every move
    and to a block once it is put down; the carried block rides one cell above
    the agent and must have room wherever the agent goes."""
    board = _Board(spec, st.blocks)
    x, y, facing, carrying, blocks = st
    if action in (LEFT, RIGHT):
        facing = -1 if action == LEFT else 1
        nx = x + facing
        if not board.solid(nx, y) and not (carrying and board.solid(nx, y + 1)):
            x = nx
            y = board.rest_height(x, y)
        return DudeState(x, y, facing, carrying, blocks)
    nx = x + facing
    if action == UP:
        head_room = not board.solid(x, y + 1) if not carrying else not board.solid(x, y + 2)
        can_climb = board.solid(nx, y) and not board.solid(nx, y + 1) and head_room
        if carrying:
            can_climb = can_climb and not board.solid(nx, y + 2)
        if can_climb:
            x, y = nx, y + 1
        return DudeState(x, y, facing, carrying, blocks)
    if action == PICK_PLACE:
        if not carrying:
            if (nx, y) in board.blocks and not board.solid(nx, y + 1) and not board.solid(x, y + 1):
                rest = tuple(sorted(b for b in blocks if b != (nx, y)))
                return DudeState(x, y, facing, True, rest)
            return st
        if not board.solid(nx, y + 1):
            drop = (nx, board.rest_height(nx, y + 1))
            return DudeState(x, y, facing, False, tuple(sorted(blocks + (drop,))))
        return st
    raise ValueError(f"unknown Block Dude action {action}")


def initial_state(spec: BlockDudeSpec) -> DudeState:
    board = _Board(spec, spec.blocks)
    x, y = spec.agent
    return DudeState(x, board.rest_height(x, y), spec.facing, False, spec.blocks)


def enumerate_states(spec: BlockDudeSpec) -> tuple[list[DudeState], dict[DudeState, int]]:
    """BFS from the start. Every configuration with the agent on the exit is
    merged into the single absorbing state 0."""
    start = initial_state(spec)
    order: list[DudeState] = [start]
    index = {start: 1}
    frontier = deque([start])
    while frontier:
        st = frontier.popleft()
        for a in range(4):
            nxt = transition(spec, st, a)
            if (nxt.x, nxt.y) == spec.goal or nxt in index:
                continue
            index[nxt] = len(order) + 1
            order.append(nxt)
            if len(order) > spec.state_cap:
                raise RuntimeError(f"Block Dude BFS exceeded {spec.state_cap} states")
            frontier.append(nxt)
    return order, index


def build_block_dude(spec: BlockDudeSpec | None = None) -> TabularMDP:
    spec = spec or BlockDudeSpec.level1()
    order, index = enumerate_states(spec)
    S = len(order) + 1
    P = np.zeros((S, 4, S))
    R = np.full((S, 4), -1.0)
    P[GOAL_STATE, :, GOAL_STATE] = 1.0
    R[GOAL_STATE, :] = 1.0
    for st in order:
        s = index[st]
        for a in range(4):
            nxt = transition(spec, st, a)
            P[s, a, GOAL_STATE if (nxt.x, nxt.y) == spec.goal else index[nxt]] = 1.0
    return TabularMDP(P, R, (4,) * S, start_state=1, name="block-dude")


def render(spec: BlockDudeSpec, st: DudeState) -> str:
    rows = []
    for y in range(spec.height - 1, -1, -1):
        row = []
        for x in range(spec.width):
            if (x, y) == (st.x, st.y):
                ch = "<" if st.facing < 0 else ">"
            elif st.carrying and (x, y) == (st.x, st.y + 1):
                ch = "b"
            elif (x, y) in st.blocks:
                ch = "B"
            elif (x, y) in spec.walls:
                ch = "#"
            elif (x, y) == spec.goal:
                ch = "G"
            else:
                ch = "."
            row.append(ch)
        rows.append("".join(row))
    return "\n".join(rows)
