"""Serial GOMEA with gene-pool optimal mixing and forced improvement."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from pargomea.engine import (
    GomeaConfig,
    RunContext,
    RunResult,
    dependent_subfunctions,
    drive,
    fixed_model,
    fork_rng,
    stagnation_threshold,
)
from pargomea.graybox import (
    GENE_DTYPE,
    EvaluatedSolution,
    GrayBoxProblem,
    build_vig,
    commit,
    delta_sign,
    evaluate_modification,
)
from pargomea.linkage import Fos, learn_tree_upgma, mi_similarity, univariate_fos
from pargomea.scheduling import color_linkage


def select_donor(
    population: np.ndarray, parent: np.ndarray, linkage_set: Sequence[int], rng: np.random.Generator
) -> int | None:
    """First member of a random permutation whose genes on the set differ from ``parent``.

    ``population`` is an ``(n, l)`` genotype array; returns a row index or
    ``None`` when every member agrees with the parent on the set.
    """
    idx = list(linkage_set)
    differs = np.any(population[:, idx] != parent[idx], axis=1)
    perm = rng.permutation(len(population))
    hits = np.flatnonzero(differs[perm])
    return None if len(hits) == 0 else int(perm[hits[0]])


def gom_step(
    problem: GrayBoxProblem,
    o: EvaluatedSolution,
    donor: np.ndarray,
    linkage_set: Sequence[int],
    elitist: np.ndarray | None,
    affected: np.ndarray | None = None,
    ctx: RunContext | None = None,
) -> bool:
    """Copy the donor's genes on ``linkage_set`` into ``o`` if that does not hurt.

    Accepts strict improvements, and equal fitness when ``o`` is not a copy of
    the elitist.  ``o`` is modified in place only when the step is accepted.
    """
    idx = np.asarray(linkage_set, dtype=np.int64)
    new = donor[idx]
    if np.array_equal(new, o.genotype[idx]):
        raise ValueError("donor equals the parent on this linkage set")
    mod = evaluate_modification(problem, o, idx, new, affected)
    if ctx is not None:
        ctx.count(len(mod.affected))
    sign = delta_sign(mod.delta, o.fitness, problem.integral)
    accept = sign > 0 or (sign == 0 and (elitist is None or not np.array_equal(o.genotype, elitist)))
    if accept:
        commit(o, mod)
    return accept


def forced_improvement(
    problem: GrayBoxProblem,
    o: EvaluatedSolution,
    elitist: EvaluatedSolution,
    fos: Fos,
    rng: np.random.Generator,
    dependents: list[np.ndarray] | None = None,
    ctx: RunContext | None = None,
) -> bool:
    """Mix the elitist into ``o`` set by set until the fitness strictly improves.

    Without any improvement ``o`` becomes a copy of the elitist.  Returns
    whether an improving step was found.
    """
    start = o.fitness
    for j in rng.permutation(len(fos)):
        s = fos.sets[j]
        if np.array_equal(o.genotype[list(s)], elitist.genotype[list(s)]):
            continue
        dep = None if dependents is None else dependents[j]
        gom_step(problem, o, elitist.genotype, s, elitist.genotype, dep, ctx)
        if delta_sign(o.fitness - start, start, problem.integral) > 0:
            return True
    o.genotype[:] = elitist.genotype
    o.fitness = elitist.fitness
    o.subfunction_values = elitist.subfunction_values.copy()
    return False


def random_population(problem: GrayBoxProblem, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, problem.alphabet_size, size=(n, problem.num_variables)).astype(GENE_DTYPE)


class SerialPopulation:
    """One population of serial GOMEA; call :meth:`generation` repeatedly."""

    def __init__(
        self,
        problem: GrayBoxProblem,
        size: int,
        ctx: RunContext,
        rng: np.random.Generator,
        config: GomeaConfig,
        fos: Fos | None = None,
        index: int = 0,
    ):
        self.problem = problem
        self.ctx = ctx
        self.rng = rng
        self.config = config
        self.index = index
        self.generation_count = 0
        self.learned = not config.model.fixed
        self._vig = build_vig(problem) if config.gom_order == "groups" else None
        self._set_model(fos if fos is not None else univariate_fos(problem.num_variables))

        q = problem.num_subfunctions
        genotypes = random_population(problem, size, rng)
        every = np.arange(q)
        self.solutions: list[EvaluatedSolution] = []
        for g in genotypes:
            cache = problem.evaluate_on(every, g)
            ctx.count(q)
            self.solutions.append(EvaluatedSolution(g, float(cache.sum()), cache))
        self.stagnation = np.zeros(size, dtype=np.int64)
        self.threshold = stagnation_threshold(size)
        for sol in self.solutions:
            ctx.offer(sol.genotype, sol.fitness, sol.subfunction_values, 0, index)

    def _set_model(self, fos: Fos) -> None:
        self.fos = fos
        self.dependents = dependent_subfunctions(self.problem, fos)
        self.groups = color_linkage(fos, self._vig) if self._vig is not None else None

    def genotypes(self) -> np.ndarray:
        return np.stack([s.genotype for s in self.solutions])

    def _fos_order(self) -> np.ndarray:
        if self.groups is None:
            return self.rng.permutation(len(self.fos))
        order = self.rng.permutation(len(self.groups))
        return np.concatenate([np.asarray(self.groups[g], dtype=np.int64) for g in order])

    def generation(self) -> None:
        problem, ctx = self.problem, self.ctx
        pool = self.genotypes()
        if self.learned and problem.num_variables > 1:
            self._set_model(learn_tree_upgma(mi_similarity(pool)))
        gen = self.generation_count + 1
        offspring = []
        for s, parent in enumerate(self.solutions):
            o = parent.copy()
            any_accepted = False
            for j in self._fos_order():
                linkage_set = self.fos.sets[j]
                d = select_donor(pool, o.genotype, linkage_set, self.rng)
                if d is None:
                    continue
                if gom_step(problem, o, pool[d], linkage_set, ctx.elitist.genotype, self.dependents[j], ctx):
                    any_accepted = True
                    ctx.offer(o.genotype, o.fitness, o.subfunction_values, gen, self.index)
            if self.config.forced_improvement and (not any_accepted or self.stagnation[s] > self.threshold):
                forced_improvement(problem, o, ctx.elitist.solution, self.fos, self.rng, self.dependents, ctx)
                ctx.offer(o.genotype, o.fitness, o.subfunction_values, gen, self.index)
            if delta_sign(o.fitness - parent.fitness, parent.fitness, problem.integral) > 0:
                self.stagnation[s] = 0
            else:
                self.stagnation[s] += 1
            offspring.append(o)
            ctx.check()
        self.solutions = offspring
        self.generation_count = gen
        ctx.generations += 1
        ctx.heartbeat(gen, self.index)


def run_serial(problem: GrayBoxProblem, config: GomeaConfig) -> RunResult:
    config.validate()
    ctx = RunContext(problem, config.termination, config.on_record, config.heartbeat)
    fos = fixed_model(problem, config.model) if config.model.fixed else None

    def factory(index: int, size: int) -> SerialPopulation:
        return SerialPopulation(problem, size, ctx, fork_rng(config.seed, index), config, fos, index)

    return drive(ctx, config, factory)
