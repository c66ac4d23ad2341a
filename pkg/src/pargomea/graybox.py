"""Additively decomposable fitness functions with partial evaluation.

A gray-box problem is a sum of ``q`` subfunctions, each reading a small
subset of the ``l`` variables.  Knowing that structure lets an optimizer
re-evaluate only the subfunctions touched by a modification.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

GENE_DTYPE = np.int8

# Relative tolerance for fitness comparisons on non-integral problems.
FITNESS_RTOL = 1e-9


class GrayBoxProblem:
    """Fitness ``f(x) = sum_i f_i(x[I_i])`` with known input sets ``I_i``.

    Subclasses either override :meth:`evaluate_subfunction` or pass an
    ``evaluator(i, values)`` callable.  Vectorized subclasses should also
    override :meth:`evaluate_rows`, which the engines call in bulk.

    Instances are treated as immutable once constructed.
    """

    def __init__(
        self,
        num_variables: int,
        subfunction_inputs: Sequence[Sequence[int]],
        evaluator: Callable[[int, np.ndarray], float] | None = None,
        *,
        alphabet_size: int = 2,
        integral: bool = False,
    ):
        if num_variables < 1:
            raise ValueError("num_variables must be positive")
        inputs = []
        for i, idx in enumerate(subfunction_inputs):
            s = tuple(sorted(set(int(u) for u in idx)))
            if not s:
                raise ValueError(f"subfunction {i} has no inputs")
            if s[0] < 0 or s[-1] >= num_variables:
                raise ValueError(f"subfunction {i} reads a variable outside [0, {num_variables})")
            inputs.append(s)
        self.num_variables = int(num_variables)
        self.subfunction_inputs: tuple[tuple[int, ...], ...] = tuple(inputs)
        self.alphabet_size = int(alphabet_size)
        # integral problems compare fitness exactly
        self.integral = bool(integral)
        self._evaluator = evaluator

        buckets: list[list[int]] = [[] for _ in range(num_variables)]
        for i, idx in enumerate(self.subfunction_inputs):
            for u in idx:
                buckets[u].append(i)
        self.variable_to_subfunctions: tuple[np.ndarray, ...] = tuple(
            np.asarray(b, dtype=np.int64) for b in buckets
        )

    @property
    def num_subfunctions(self) -> int:
        return len(self.subfunction_inputs)

    def evaluate_subfunction(self, index: int, values: np.ndarray) -> float:
        """Value of subfunction ``index`` given the values of its inputs."""
        if self._evaluator is None:
            raise NotImplementedError("no subfunction evaluator supplied")
        return float(self._evaluator(index, values))

    def evaluate_rows(self, sub_ids: np.ndarray, genotypes: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Evaluate ``f_{sub_ids[k]}`` on ``genotypes[rows[k]]`` for every k."""
        out = np.empty(len(sub_ids), dtype=np.float64)
        for k, (i, r) in enumerate(zip(sub_ids, rows)):
            idx = self.subfunction_inputs[i]
            out[k] = self.evaluate_subfunction(int(i), genotypes[r, list(idx)])
        return out

    def evaluate_on(self, sub_ids: np.ndarray, genotype: np.ndarray) -> np.ndarray:
        sub_ids = np.asarray(sub_ids, dtype=np.int64)
        return self.evaluate_rows(sub_ids, genotype[None, :], np.zeros(len(sub_ids), dtype=np.int64))

    def affected_subfunctions(self, indices: Sequence[int] | np.ndarray) -> np.ndarray:
        """Sorted, deduplicated subfunctions reading any of ``indices``."""
        parts = [self.variable_to_subfunctions[int(u)] for u in indices]
        if not parts:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(parts))

    def similarity_matrix(self) -> np.ndarray:
        """Domain-knowledge similarity used to build a fixed linkage tree.

        The default marks every pair of variables sharing a subfunction with 1.
        """
        s = np.zeros((self.num_variables, self.num_variables))
        vig = build_vig(self)
        for u, nbrs in enumerate(vig.adjacency):
            s[u, list(nbrs)] = 1.0
        return s


@dataclass
class EvaluatedSolution:
    """A genotype with its fitness and per-subfunction value cache."""

    genotype: np.ndarray
    fitness: float
    subfunction_values: np.ndarray | None = None

    def copy(self) -> EvaluatedSolution:
        cache = None if self.subfunction_values is None else self.subfunction_values.copy()
        return EvaluatedSolution(self.genotype.copy(), self.fitness, cache)


@dataclass(frozen=True)
class Vig:
    """Variable interaction graph: one vertex per variable."""

    num_vertices: int
    adjacency: tuple[tuple[int, ...], ...]

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u, nbrs in enumerate(self.adjacency) for v in nbrs if u < v]

    @property
    def max_degree(self) -> int:
        return max((len(a) for a in self.adjacency), default=0)


@dataclass
class Modification:
    """Outcome of evaluating a tentative change, not yet committed."""

    indices: np.ndarray
    values: np.ndarray
    affected: np.ndarray
    new_subfunction_values: np.ndarray
    delta: float = field(default=0.0)


def as_genotype(problem: GrayBoxProblem, values) -> np.ndarray:
    g = np.asarray(values)
    if g.ndim != 1 or len(g) != problem.num_variables:
        raise ValueError(f"genotype must have length {problem.num_variables}, got shape {g.shape}")
    if g.size and (g.min() < 0 or g.max() >= problem.alphabet_size):
        raise ValueError(f"genotype values must lie in [0, {problem.alphabet_size})")
    return g.astype(GENE_DTYPE, copy=True)


def full_evaluate(problem: GrayBoxProblem, genotype) -> EvaluatedSolution:
    g = as_genotype(problem, genotype)
    cache = problem.evaluate_on(np.arange(problem.num_subfunctions), g)
    return EvaluatedSolution(g, float(cache.sum()), cache)


def evaluate_modification(
    problem: GrayBoxProblem,
    base: EvaluatedSolution,
    modified_indices,
    new_values,
    affected: np.ndarray | None = None,
) -> Modification:
    """Evaluate replacing ``base.genotype[modified_indices]`` by ``new_values``.

    Only subfunctions reading a modified variable are evaluated; their old
    values come from the cache.  ``affected`` may be supplied when the caller
    has precomputed the dependent subfunctions of the index set.
    """
    if base.subfunction_values is None:
        raise RuntimeError("partial evaluation requires a populated subfunction cache")
    idx = np.asarray(modified_indices, dtype=np.int64).reshape(-1)
    vals = np.asarray(new_values).reshape(-1)
    if len(idx) != len(vals):
        raise ValueError("modified_indices and new_values differ in length")
    if len(idx) and (idx.min() < 0 or idx.max() >= problem.num_variables):
        raise ValueError("modified index out of range")
    if affected is None:
        affected = problem.affected_subfunctions(idx)
    trial = base.genotype.copy()
    trial[idx] = vals
    new = problem.evaluate_on(affected, trial)
    delta = float(np.sum(new - base.subfunction_values[affected]))
    return Modification(idx, vals.astype(GENE_DTYPE), affected, new, delta)


def partial_evaluate(problem: GrayBoxProblem, base: EvaluatedSolution, modified_indices, new_values) -> float:
    """Fitness change caused by the modification; ``base`` is left untouched."""
    return evaluate_modification(problem, base, modified_indices, new_values).delta


def apply_partial(base: EvaluatedSolution, modification: Modification) -> EvaluatedSolution:
    """Return a new solution with ``modification`` committed."""
    out = base.copy()
    commit(out, modification)
    return out


def commit(solution: EvaluatedSolution, modification: Modification) -> None:
    """In-place variant of :func:`apply_partial`."""
    solution.genotype[modification.indices] = modification.values
    solution.subfunction_values[modification.affected] = modification.new_subfunction_values
    solution.fitness = solution.fitness + modification.delta


def build_vig(problem: GrayBoxProblem) -> Vig:
    nbrs: list[set[int]] = [set() for _ in range(problem.num_variables)]
    for idx in problem.subfunction_inputs:
        for a in idx:
            for b in idx:
                if a != b:
                    nbrs[a].add(b)
    return Vig(problem.num_variables, tuple(tuple(sorted(s)) for s in nbrs))


def delta_sign(delta: float, reference: float, exact: bool) -> int:
    """Sign of a fitness change, treating tiny float noise as zero unless ``exact``."""
    if exact:
        return (delta > 0) - (delta < 0)
    tol = FITNESS_RTOL * max(1.0, abs(reference))
    if delta > tol:
        return 1
    if delta < -tol:
        return -1
    return 0


def check_solution(problem: GrayBoxProblem, solution: EvaluatedSolution) -> bool:
    """True when stored fitness and cache agree with a full re-evaluation."""
    ref = full_evaluate(problem, solution.genotype)
    if problem.integral:
        ok = ref.fitness == solution.fitness
        if solution.subfunction_values is not None:
            ok = ok and np.array_equal(ref.subfunction_values, solution.subfunction_values)
        return bool(ok)
    ok = abs(ref.fitness - solution.fitness) <= FITNESS_RTOL * max(1.0, abs(ref.fitness))
    if solution.subfunction_values is not None:
        ok = ok and np.allclose(ref.subfunction_values, solution.subfunction_values, rtol=FITNESS_RTOL)
    return bool(ok)
