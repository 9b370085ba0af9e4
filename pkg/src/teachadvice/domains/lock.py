from __future__ import annotations

import numpy as np

from ..mdp import TabularMDP

ACTION_A = 0  # advance
ACTION_B = 1  # reset
STAY_PROB = 0.9


def build_combination_lock(n: int) -> TabularMDP:
    """Lock with states 0..n: action a advances, b resets to 0, both cost -1.
    State n has the single action a, paying +1 and staying with prob 0.9."""
    if n < 1:
        raise ValueError("combination lock needs n >= 1")
    S = n + 1
    P = np.zeros((S, 2, S))
    R = np.full((S, 2), -1.0)
    for s in range(n):
        P[s, ACTION_A, s + 1] = 1.0
        P[s, ACTION_B, 0] = 1.0
    P[n, ACTION_A, n] = STAY_PROB
    P[n, ACTION_A, 0] = 1.0 - STAY_PROB
    R[n, ACTION_A] = 1.0
    counts = (2,) * n + (1,)
    return TabularMDP(P, R, counts, start_state=0, name=f"combination-lock-{n}")
