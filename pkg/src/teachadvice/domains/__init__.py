"""Benchmark MDPs: combination lock, four-room grid world, Block Dude."""

from .blockdude import BlockDudeSpec, build_block_dude
from .gridworld import GridWorldSpec, build_grid_world
from .lock import build_combination_lock

DOMAINS = ("combination-lock", "grid-world", "block-dude")


def build_domain(name: str, lock_n: int = 5):
    if name == "combination-lock":
        return build_combination_lock(lock_n)
    if name == "grid-world":
        return build_grid_world()
    if name == "block-dude":
        return build_block_dude()
    raise ValueError(f"unknown domain {name!r}; expected one of {DOMAINS}")


__all__ = [
    "DOMAINS",
    "BlockDudeSpec",
    "GridWorldSpec",
    "build_block_dude",
    "build_combination_lock",
    "build_domain",
    "build_grid_world",
]
