"""Pieces shared by the serial and parallel engines."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from pargomea.graybox import EvaluatedSolution, GrayBoxProblem
from pargomea.ims import ImsSettings, ImsState, ims_step
from pargomea.linkage import Fos, learn_tree_upgma, univariate_fos

MODEL_KINDS = ("learned-lt", "flt", "bflt", "univariate")


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "flt"
    bound: int | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.kind == "bflt" and (self.bound is None or self.bound < 1):
            raise ValueError("bflt needs a positive bound")

    @property
    def fixed(self) -> bool:
        return self.kind != "learned-lt"

    @classmethod
    def parse(cls, text: str) -> ModelSpec:
        """``flt``, ``learned-lt``, ``univariate`` or ``bflt:<bound>``."""
        if text.startswith("bflt"):
            _, _, b = text.partition(":")
            if not b:
                raise ValueError("bflt needs a bound, e.g. bflt:10")
            return cls("bflt", int(b))
        return cls(text)


def fixed_model(problem: GrayBoxProblem, spec: ModelSpec) -> Fos:
    """Linkage model learned once from problem structure."""
    if spec.kind == "univariate" or problem.num_variables < 2:
        return univariate_fos(problem.num_variables)
    if spec.kind == "learned-lt":
        raise ValueError("a learned linkage tree depends on the population")
    bound = spec.bound if spec.kind == "bflt" else None
    return learn_tree_upgma(problem.similarity_matrix(), bound)


@dataclass
class Termination:
    max_evaluations: float | None = None
    max_seconds: float | None = None
    target_fitness: float | None = None
    max_generations: int | None = None

    def __post_init__(self):
        for name in ("max_evaluations", "max_seconds", "max_generations"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class TraceRecord:
    seconds: float
    evaluations: float
    generation: int
    population: int
    fitness: float


class Stop(Exception):
    """Raised inside a generation once a termination criterion holds."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class Elitist:
    """Best solution seen so far, shared by every population of a run."""

    def __init__(self):
        self.solution: EvaluatedSolution | None = None

    @property
    def fitness(self) -> float:
        return -math.inf if self.solution is None else self.solution.fitness

    @property
    def genotype(self) -> np.ndarray | None:
        return None if self.solution is None else self.solution.genotype

    def offer(self, genotype: np.ndarray, fitness: float, cache: np.ndarray | None = None) -> bool:
        if fitness > self.fitness:
            self.solution = EvaluatedSolution(
                genotype.copy(), float(fitness), None if cache is None else cache.copy()
            )
            return True
        return False


class RunContext:
    """Evaluation accounting, termination checks and trace recording.

    Evaluations are counted in the gray-box convention: every subfunction
    call adds ``1 / q``, so a full evaluation costs exactly one.
    """

    def __init__(
        self,
        problem: GrayBoxProblem,
        termination: Termination | None = None,
        on_record: Callable[[TraceRecord], None] | None = None,
        heartbeat: float = 0.0,
    ):
        self.problem = problem
        self.termination = termination or Termination()
        self.elitist = Elitist()
        self.subfunction_calls = 0
        self.generations = 0
        self.trace: list[TraceRecord] = []
        self._on_record = on_record
        self._heartbeat = heartbeat
        self._start = time.perf_counter()
        self._last_record = self._start
        self._q = max(1, problem.num_subfunctions)

    @property
    def evaluations(self) -> float:
        return self.subfunction_calls / self._q

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self._start

    def count(self, calls: int) -> None:
        self.subfunction_calls += int(calls)

    def offer(self, genotype, fitness, cache=None, generation: int = 0, population: int = 0) -> bool:
        if self.elitist.offer(genotype, fitness, cache):
            self._record(generation, population)
            return True
        return False

    def _record(self, generation: int, population: int) -> None:
        now = time.perf_counter()
        rec = TraceRecord(now - self._start, self.evaluations, generation, population, self.elitist.fitness)
        self._last_record = now
        self.trace.append(rec)
        if self._on_record is not None:
            self._on_record(rec)

    def heartbeat(self, generation: int, population: int) -> None:
        if self._heartbeat > 0 and self.elitist.solution is not None:
            if time.perf_counter() - self._last_record >= self._heartbeat:
                self._record(generation, population)

    def target_reached(self) -> bool:
        t = self.termination.target_fitness
        return t is not None and self.elitist.fitness >= t

    def check(self) -> None:
        """Raise :class:`Stop` if any termination criterion is met."""
        t = self.termination
        if self.target_reached():
            raise Stop("target")
        if t.max_evaluations is not None and self.evaluations >= t.max_evaluations:
            raise Stop("evaluations")
        if t.max_seconds is not None and self.elapsed >= t.max_seconds:
            raise Stop("seconds")
        if t.max_generations is not None and self.generations >= t.max_generations:
            raise Stop("generations")


@dataclass
class RunResult:
    best: EvaluatedSolution
    evaluations: float
    generations: int
    seconds: float
    reason: str
    trace: list[TraceRecord] = field(default_factory=list)
    target_reached: bool = False
    counters: dict = field(default_factory=dict)


def make_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def fork_rng(seed, index: int) -> np.random.Generator:
    """Independent substream ``index`` of the stream rooted at ``seed``."""
    root = np.random.SeedSequence(seed)
    return np.random.default_rng(np.random.SeedSequence(root.entropy, spawn_key=(index,)))


def stagnation_threshold(n: int) -> int:
    return 1 + int(math.floor(math.log10(n)))


def dependent_subfunctions(problem: GrayBoxProblem, fos: Fos) -> list[np.ndarray]:
    """Per linkage set, the sorted subfunctions reading any of its variables."""
    return [problem.affected_subfunctions(s) for s in fos.sets]


@dataclass
class GomeaConfig:
    """Run settings shared by both engines.

    ``population_size=None`` selects the interleaved multi-start scheme.
    """

    population_size: int | None = None
    model: ModelSpec = field(default_factory=ModelSpec)
    seed: int | None = None
    termination: Termination = field(default_factory=Termination)
    ims: ImsSettings = field(default_factory=ImsSettings)
    forced_improvement: bool = True
    gom_order: str = "random"  # serial only: "random" or "groups"
    workers: int = 1  # parallel only
    donor_pool: str = "offspring"  # parallel only: "offspring" or "population"
    heartbeat: float = 0.0
    on_record: Callable[[TraceRecord], None] | None = None

    def validate(self) -> None:
        if self.population_size is not None and self.population_size < 1:
            raise ValueError("population_size must be positive")
        t = self.termination
        if all(v is None for v in (t.max_evaluations, t.max_seconds, t.target_fitness, t.max_generations)):
            raise ValueError("at least one termination criterion is required")
        if self.gom_order not in ("random", "groups"):
            raise ValueError("gom_order must be 'random' or 'groups'")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.donor_pool not in ("offspring", "population"):
            raise ValueError("donor_pool must be 'offspring' or 'population'")
        if self.heartbeat < 0:
            raise ValueError("heartbeat must be >= 0")


def drive(ctx: RunContext, config: GomeaConfig, factory: Callable[[int, int], object]) -> RunResult:
    """Run generations until a termination criterion fires.

    ``factory(index, size)`` builds population ``index``; with a fixed
    population size only index 0 is ever built.
    """
    reason = "unknown"
    try:
        ctx.check()
        if config.population_size is not None:
            pop = factory(0, config.population_size)
            while True:
                ctx.check()
                pop.generation()
        else:
            state = ImsState(config.ims, factory)
            while True:
                ctx.check()
                ims_step(state)
    except Stop as stop:
        reason = stop.reason
    if ctx.elitist.solution is None:
        raise RuntimeError("run ended before any solution was evaluated")
    return RunResult(
        best=ctx.elitist.solution.copy(),
        evaluations=ctx.evaluations,
        generations=ctx.generations,
        seconds=ctx.elapsed,
        reason=reason,
        trace=list(ctx.trace),
        target_reached=ctx.target_reached(),
    )
