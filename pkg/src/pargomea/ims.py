"""Interleaved multi-start scheme (IMS).

Population ``i`` (0-based) has ``n_base * 2**i`` members and performs one
generation for every ``c`` generations of population ``i - 1``.  Smaller
populations keep running after larger ones appear.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol


class Population(Protocol):
    def generation(self) -> None: ...


@dataclass(frozen=True)
class ImsSettings:
    n_base: int = 16
    c: int = 4
    max_populations: int | None = None

    def __post_init__(self):
        if self.n_base < 1:
            raise ValueError("ims n_base must be positive")
        if self.c < 1:
            raise ValueError("ims c must be positive")
        if self.max_populations is not None and self.max_populations < 1:
            raise ValueError("ims max_populations must be positive")

    def size(self, index: int) -> int:
        return self.n_base * 2**index


class ImsState:
    """Schedules generations over populations of doubling size.

    ``factory(index, size)`` creates population ``index`` the first time the
    schedule reaches it.
    """

    def __init__(self, settings: ImsSettings, factory: Callable[[int, int], Population]):
        self.settings = settings
        self._factory = factory
        self.populations: list[Population] = []
        self.generations: list[int] = []

    @property
    def sizes(self) -> list[int]:
        return [self.settings.size(i) for i in range(len(self.populations))]

    def _may_create(self, index: int) -> bool:
        cap = self.settings.max_populations
        return cap is None or index < cap

    def _advance(self, index: int) -> None:
        while True:
            created = index == len(self.populations)
            if created:
                self.populations.append(self._factory(index, self.settings.size(index)))
                self.generations.append(0)
            self.populations[index].generation()
            self.generations[index] += 1
            # at most one new population per step, so c=1 cannot recurse forever
            if created:
                return
            nxt = index + 1
            due = self.generations[index] >= self.settings.c * (self._gen(nxt) + 1)
            if not (due and (nxt < len(self.populations) or self._may_create(nxt))):
                return
            index = nxt

    def _gen(self, index: int) -> int:
        return self.generations[index] if index < len(self.generations) else 0


def ims_step(state: ImsState) -> ImsState:
    """One generation of the smallest population plus any that fall due."""
    state._advance(0)
    return state
