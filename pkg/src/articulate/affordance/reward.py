"""Binary interaction reward."""
from __future__ import annotations

from ..scene import DEG

THETA = 5.0 * DEG


def reward_J(o_0: float, o_N: float, o_star: float, theta: float = THETA) -> int:
    """1 iff the interaction reduced the distance to o* by more than theta."""
    return int(abs(o_0 - o_star) - abs(o_N - o_star) > theta)
