"""Where the ``l`` real slices of a scan sit inside the padded length ``t``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BadLength

ROUTINGS = ("first_l", "aligned")


@dataclass(frozen=True)
class RoutingPlan:
    t: int
    selected: tuple[int, ...]

    def __post_init__(self):
        sel = tuple(int(p) for p in self.selected)
        if not sel:
            raise BadLength("a routing plan selects at least one position")
        if sel[0] < 0 or sel[-1] >= self.t or any(b <= a for a, b in zip(sel, sel[1:])):
            raise BadLength(f"plan positions must strictly increase within [0, {self.t - 1}]")
        object.__setattr__(self, "selected", sel)

    @property
    def l(self) -> int:  # noqa: E743
        return len(self.selected)

    def keep_mask(self) -> np.ndarray:
        keep = np.zeros(self.t, dtype=bool)
        keep[list(self.selected)] = True
        return keep


def _check(t: int, l: int) -> None:  # noqa: E741
    if t < 1 or not 1 <= l <= t:
        raise BadLength(f"need 1 <= l <= t, got l={l}, t={t}")


def plan_first_l(t: int, l: int) -> RoutingPlan:  # noqa: E741
    _check(t, l)
    return RoutingPlan(t, tuple(range(l)))


def plan_aligned(t: int, l: int) -> RoutingPlan:  # noqa: E741
    """Spread ``l`` positions evenly over [0, t-1], rounding half up.

    Collisions after rounding (impossible for l <= t, kept as a guard) are
    pushed to the next free slot.
    """
    _check(t, l)
    if l == 1:
        return RoutingPlan(t, (0,))
    span = t - 1
    pos = []
    for i in range(l):
        p = (2 * i * span + (l - 1)) // (2 * (l - 1))
        if pos and p <= pos[-1]:
            p = pos[-1] + 1
        pos.append(p)
    return RoutingPlan(t, tuple(pos))


def make_plan(routing: str, t: int, l: int) -> RoutingPlan:  # noqa: E741
    if routing == "first_l":
        return plan_first_l(t, l)
    if routing == "aligned":
        return plan_aligned(t, l)
    raise ValueError(f"unknown routing {routing!r}; expected one of {ROUTINGS}")
