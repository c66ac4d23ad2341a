"""Parallel GOMEA: batched gene-pool optimal mixing over color groups.

All linkage sets of one color group are mixed into every solution at once.
Each generation walks the groups in random order and runs four phases per
group:

1. pick a donor for every (solution, set) pair and insert its genes into a
   working copy ``O'`` of the offspring ``O``;
2. evaluate the dependent subfunctions of every step on ``O'`` and sum
   them per step with a keyed reduction;
3. decide acceptance for the whole batch from a group-start snapshot;
4. commit accepted steps to ``O`` and roll rejected ones back in ``O'``.

Randomness is drawn sequentially before the data-parallel work, and every
reduction uses a fixed pairwise tree, so results do not depend on the
number of workers.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from pargomea.engine import (
    GomeaConfig,
    RunContext,
    RunResult,
    drive,
    fixed_model,
    fork_rng,
)
from pargomea.graybox import FITNESS_RTOL, GrayBoxProblem, build_vig
from pargomea.linkage import Fos
from pargomea.scheduling import ColorGroups, color_linkage
from pargomea.serial import random_population

ACCEPT, REJECT, SKIPPED = 1, 0, -1

# Upper bound on the elements of temporary arrays built per chunk.
_CHUNK_ELEMENTS = 1 << 22


class WorkerPool:
    """Runs range-partitioned work on a fixed number of threads."""

    def __init__(self, workers: int = 1):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.workers = workers
        self._executor = ThreadPoolExecutor(workers) if workers > 1 else None

    def map_ranges(self, fn: Callable[[int, int], object], total: int, min_chunk: int = 256) -> list:
        """Call ``fn(start, stop)`` on contiguous pieces of ``range(total)``, results in order."""
        if total <= 0:
            return []
        pieces = max(1, min(self.workers, -(-total // min_chunk)))
        bounds = np.linspace(0, total, pieces + 1).astype(np.int64)
        spans = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        if self._executor is None or len(spans) == 1:
            return [fn(a, b) for a, b in spans]
        futures = [self._executor.submit(fn, a, b) for a, b in spans]
        return [f.result() for f in futures]

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


_SERIAL_POOL = WorkerPool(1)


@dataclass
class PopulationState:
    genotypes: np.ndarray  # (n, l)
    fitness: np.ndarray  # (n,)
    cache: np.ndarray  # (n, q) per-subfunction values

    def copy(self) -> PopulationState:
        return PopulationState(self.genotypes.copy(), self.fitness.copy(), self.cache.copy())

    def __len__(self) -> int:
        return len(self.fitness)


@dataclass(frozen=True)
class GroupPlan:
    """Flattened index data for one color group.

    ``set_vars[var_offsets[j]:var_offsets[j+1]]`` are the variables of the
    group's ``j``-th set; ``dep_subfunctions``/``dep_labels`` are the
    dependent subfunction list and the set position each entry belongs to.
    """

    sets: tuple[int, ...]
    set_vars: np.ndarray
    var_labels: np.ndarray
    var_offsets: np.ndarray
    dep_subfunctions: np.ndarray
    dep_labels: np.ndarray

    @property
    def width(self) -> int:
        return len(self.sets)


def plan_group(problem: GrayBoxProblem, fos: Fos, group: Sequence[int]) -> GroupPlan:
    vars_, vlab, deps, dlab = [], [], [], []
    offsets = [0]
    for j, f in enumerate(group):
        s = np.asarray(fos.sets[f], dtype=np.int64)
        vars_.append(s)
        vlab.append(np.full(len(s), j, dtype=np.int64))
        offsets.append(offsets[-1] + len(s))
        d = problem.affected_subfunctions(s)
        deps.append(d)
        dlab.append(np.full(len(d), j, dtype=np.int64))
    cat = lambda xs: np.concatenate(xs) if xs else np.empty(0, dtype=np.int64)  # noqa: E731
    return GroupPlan(
        tuple(int(f) for f in group),
        cat(vars_),
        cat(vlab),
        np.asarray(offsets, dtype=np.int64),
        cat(deps).astype(np.int64),
        cat(dlab),
    )


@dataclass
class KeyedContributions:
    """Per dependent-subfunction entries of one batch, keyed by (solution, set)."""

    keys: np.ndarray
    rows: np.ndarray
    subfunctions: np.ndarray
    labels: np.ndarray
    old_values: np.ndarray
    new_values: np.ndarray
    stride: int


@dataclass
class DeltaMatrix:
    """Fitness change per (solution, set) step; ``present`` is False for skipped steps."""

    values: np.ndarray
    present: np.ndarray
    contributions: KeyedContributions | None = None


def _pairwise_segment_sums(values: np.ndarray, starts: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Sum each segment with a fixed binary tree determined by its length alone."""
    v = values.astype(np.float64, copy=True)
    seg = np.repeat(np.arange(len(starts)), lengths)
    pos = np.arange(len(v)) - np.repeat(starts, lengths)
    seglen = lengths[seg]
    stride = 1
    longest = int(lengths.max()) if len(lengths) else 0
    while stride < longest:
        take = np.flatnonzero((pos % (2 * stride) == 0) & (pos + stride < seglen))
        v[take] += v[take + stride]
        stride *= 2
    return v[starts]


def reduce_by_key(keys: np.ndarray, values: np.ndarray, pool: WorkerPool | None = None):
    """Sum ``values`` per distinct key; returns ``(unique_keys, sums)`` sorted by key.

    Within a key the summation order follows the original entry order.
    """
    keys = np.asarray(keys)
    values = np.asarray(values, dtype=np.float64)
    if len(keys) == 0:
        return keys[:0], values[:0]
    order = np.argsort(keys, kind="stable")
    k = keys[order]
    v = values[order]
    starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
    lengths = np.diff(np.r_[starts, len(k)])
    pool = pool or _SERIAL_POOL

    def part(a: int, b: int) -> np.ndarray:
        lo, hi = starts[a], starts[b - 1] + lengths[b - 1]
        return _pairwise_segment_sums(v[lo:hi], starts[a:b] - lo, lengths[a:b])

    sums = np.concatenate(pool.map_ranges(part, len(starts)))
    return k[starts], sums


def determine_and_insert_donor_genes(
    plan: GroupPlan,
    offspring: np.ndarray,
    pool_genotypes: np.ndarray,
    working: np.ndarray,
    rng: np.random.Generator,
    workers: WorkerPool | None = None,
) -> np.ndarray:
    """Choose donors for every (solution, set) pair and write their genes into ``working``.

    A donor must differ from the parent on the set.  Candidates are scanned in
    a uniformly random order per pair, realized as random sort keys that are
    all drawn before any parallel work.  Returns an ``(n, |group|)`` array of
    donor rows with ``-1`` for pairs without a valid donor.
    """
    workers = workers or _SERIAL_POOL
    n, width, n_pool = len(offspring), plan.width, len(pool_genotypes)
    donors = np.full((n, width), -1, dtype=np.int64)
    gv = plan.set_vars
    pool_vars = pool_genotypes[:, gv]
    per_row = max(1, n_pool * max(len(gv), width))
    batch = max(1, _CHUNK_ELEMENTS // per_row)
    for start in range(0, n, batch):
        stop = min(n, start + batch)
        # drawn sequentially, before the parallel phase
        keys = rng.random((stop - start, width, n_pool))

        def choose(a: int, b: int, start=start, keys=keys) -> None:
            diff = offspring[start + a:start + b, None, gv] != pool_vars[None, :, :]
            valid = np.logical_or.reduceat(diff, plan.var_offsets[:-1], axis=2).transpose(0, 2, 1)
            best = np.argmin(np.where(valid, keys[a:b], np.inf), axis=2)
            donors[start + a:start + b] = np.where(valid.any(axis=2), best, -1)

        workers.map_ranges(choose, stop - start, min_chunk=1)

    src = donors[:, plan.var_labels]
    has = src >= 0
    rows = np.where(has, src, 0)
    working[:, gv] = np.where(has, pool_genotypes[rows, gv[None, :]], offspring[:, gv])
    return donors


def parallel_partial_evaluations(
    problem: GrayBoxProblem,
    plan: GroupPlan,
    offspring: PopulationState,
    working: np.ndarray,
    donors: np.ndarray,
    workers: WorkerPool | None = None,
) -> DeltaMatrix:
    """Fitness change of every inserted step, via keyed reduction.

    Dependent subfunctions are listed per set; each entry's key is
    ``label + solution * stride``.  New values come from ``working``; old
    values are read from the offspring's subfunction cache.
    """
    workers = workers or _SERIAL_POOL
    n, width = donors.shape
    present = donors >= 0
    values = np.full((n, width), np.nan)
    values[present] = 0.0

    n_dep = len(plan.dep_subfunctions)
    stride = max(n_dep, width)
    rows = np.repeat(np.arange(n, dtype=np.int64), n_dep)
    labels = np.tile(plan.dep_labels, n)
    subs = np.tile(plan.dep_subfunctions, n)
    keep = present[rows, labels]
    rows, labels, subs = rows[keep], labels[keep], subs[keep]
    keys = labels + rows * stride

    if len(keys) == 0:
        return DeltaMatrix(values, present, None)

    def evaluate(a: int, b: int) -> np.ndarray:
        return problem.evaluate_rows(subs[a:b], working, rows[a:b])

    new = np.concatenate(workers.map_ranges(evaluate, len(keys), min_chunk=4096))
    old = offspring.cache[rows, subs]

    k_new, s_new = reduce_by_key(keys, new, workers)
    k_old, s_old = reduce_by_key(keys, old, workers)
    assert np.array_equal(k_new, k_old)
    values[k_new // stride, k_new % stride] = s_new - s_old
    contrib = KeyedContributions(keys, rows, subs, labels, old, new, stride)
    return DeltaMatrix(values, present, contrib)


def determine_improvements(
    delta: DeltaMatrix, offspring: PopulationState, elitist: np.ndarray | None, exact: bool = True
) -> np.ndarray:
    """Ternary acceptance matrix: improvements, and neutral steps of non-elitist parents."""
    d = delta.values
    if exact:
        pos, zero = d > 0, d == 0
    else:
        tol = FITNESS_RTOL * np.maximum(1.0, np.abs(offspring.fitness))[:, None]
        pos, zero = d > tol, np.abs(d) <= tol
    if elitist is None:
        not_elitist = np.ones(len(offspring), dtype=bool)
    else:
        not_elitist = np.any(offspring.genotypes != elitist, axis=1)
    accept = pos | (zero & not_elitist[:, None])
    out = np.where(accept, ACCEPT, REJECT).astype(np.int8)
    out[~delta.present] = SKIPPED
    return out


def apply_acceptance(
    plan: GroupPlan,
    offspring: PopulationState,
    working: np.ndarray,
    acceptance: np.ndarray,
    delta: DeltaMatrix,
) -> None:
    """Commit accepted steps into ``offspring`` and restore rejected ones in ``working``.

    Afterwards ``working`` equals ``offspring.genotypes`` again.
    """
    gv = plan.set_vars
    take = (acceptance == ACCEPT)[:, plan.var_labels]
    offspring.genotypes[:, gv] = np.where(take, working[:, gv], offspring.genotypes[:, gv])
    working[:, gv] = offspring.genotypes[:, gv]
    accepted = acceptance == ACCEPT
    offspring.fitness += np.where(accepted, np.nan_to_num(delta.values), 0.0).sum(axis=1)
    c = delta.contributions
    if c is not None:
        hit = accepted[c.rows, c.labels]
        offspring.cache[c.rows[hit], c.subfunctions[hit]] = c.new_values[hit]


@dataclass
class GroupCounter:
    width: int
    batches: int = 0
    steps: int = 0
    subfunction_evaluations: int = 0
    seconds: float = 0.0


def evaluate_population(
    problem: GrayBoxProblem, genotypes: np.ndarray, workers: WorkerPool | None = None
) -> PopulationState:
    workers = workers or _SERIAL_POOL
    n, q = len(genotypes), problem.num_subfunctions
    rows = np.repeat(np.arange(n, dtype=np.int64), q)
    subs = np.tile(np.arange(q, dtype=np.int64), n)

    def evaluate(a: int, b: int) -> np.ndarray:
        return problem.evaluate_rows(subs[a:b], genotypes, rows[a:b])

    parts = workers.map_ranges(evaluate, n * q, min_chunk=4096)
    cache = np.concatenate(parts).reshape(n, q) if parts else np.zeros((n, q))
    return PopulationState(genotypes, cache.sum(axis=1), cache)


class ParallelPopulation:
    """One population of parallel GOMEA over a fixed, pre-colored linkage model."""

    def __init__(
        self,
        problem: GrayBoxProblem,
        size: int,
        ctx: RunContext,
        rng: np.random.Generator,
        config: GomeaConfig,
        plans: list[GroupPlan],
        workers: WorkerPool,
        index: int = 0,
    ):
        self.problem = problem
        self.ctx = ctx
        self.rng = rng
        self.config = config
        self.plans = plans
        self.workers = workers
        self.index = index
        self.generation_count = 0
        self.counters = [GroupCounter(p.width) for p in plans]
        self.state = evaluate_population(problem, random_population(problem, size, rng), workers)
        ctx.count(size * problem.num_subfunctions)
        self._offer_best(0)

    def _offer_best(self, gen: int) -> None:
        s = int(np.argmax(self.state.fitness))
        self.ctx.offer(self.state.genotypes[s], self.state.fitness[s], self.state.cache[s], gen, self.index)

    def generation(self) -> None:
        ctx, state = self.ctx, self.state
        gen = self.generation_count + 1
        snapshot = state.genotypes.copy() if self.config.donor_pool == "population" else None
        working = state.genotypes.copy()
        for g in self.rng.permutation(len(self.plans)):
            t0 = time.perf_counter()
            plan = self.plans[g]
            elitist = ctx.elitist.genotype.copy()
            pool = state.genotypes if snapshot is None else snapshot
            donors = determine_and_insert_donor_genes(plan, state.genotypes, pool, working, self.rng, self.workers)
            delta = parallel_partial_evaluations(self.problem, plan, state, working, donors, self.workers)
            evaluated = 0 if delta.contributions is None else len(delta.contributions.keys)
            ctx.count(evaluated)
            acceptance = determine_improvements(delta, state, elitist, self.problem.integral)
            apply_acceptance(plan, state, working, acceptance, delta)
            self._offer_best(gen)
            c = self.counters[g]
            c.batches += 1
            c.steps += int(delta.present.sum())
            c.subfunction_evaluations += evaluated
            c.seconds += time.perf_counter() - t0
            ctx.check()
        self.generation_count = gen
        ctx.generations += 1
        ctx.heartbeat(gen, self.index)


@dataclass
class ParallelSetup:
    fos: Fos
    groups: ColorGroups
    plans: list[GroupPlan] = field(default_factory=list)


def prepare(problem: GrayBoxProblem, config: GomeaConfig) -> ParallelSetup:
    """Learn the fixed linkage model once and color it into groups."""
    if not config.model.fixed:
        raise ValueError("the parallel engine requires a fixed linkage model (flt, bflt or univariate)")
    fos = fixed_model(problem, config.model)
    groups = color_linkage(fos, build_vig(problem))
    return ParallelSetup(fos, groups, [plan_group(problem, fos, g) for g in groups])


def run_parallel(problem: GrayBoxProblem, config: GomeaConfig, setup: ParallelSetup | None = None) -> RunResult:
    """Parallel GOMEA; forced improvement is not part of this engine."""
    config.validate()
    setup = setup or prepare(problem, config)
    ctx = RunContext(problem, config.termination, config.on_record, config.heartbeat)
    populations: list[ParallelPopulation] = []
    with WorkerPool(config.workers) as workers:

        def factory(index: int, size: int) -> ParallelPopulation:
            pop = ParallelPopulation(problem, size, ctx, fork_rng(config.seed, index), config, setup.plans, workers, index)
            populations.append(pop)
            return pop

        result = drive(ctx, config, factory)
    result.counters = {
        "groups": len(setup.groups),
        "per_group": [
            [c for c in (p.counters[g] for p in populations)] for g in range(len(setup.plans))
        ],
    }
    return result
