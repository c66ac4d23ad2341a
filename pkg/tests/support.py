"""Helpers shared by the parallel-engine and acceptance tests."""

import numpy as np

from pargomea.engine import ModelSpec, fixed_model
from pargomea.graybox import EvaluatedSolution, commit, evaluate_modification, full_evaluate
from pargomea.maxcut import as_graybox, generate_torus
from pargomea.parallel import (
    ACCEPT,
    apply_acceptance,
    determine_and_insert_donor_genes,
    determine_improvements,
    evaluate_population,
    parallel_partial_evaluations,
    plan_group,
)
from pargomea.graybox import build_vig
from pargomea.scheduling import color_linkage


def torus_setup(side, bound=10, weights="unit", seed=None):
    problem = as_graybox(generate_torus(side, side, weights, seed))
    fos = fixed_model(problem, ModelSpec("bflt", bound))
    groups = color_linkage(fos, build_vig(problem))
    return problem, fos, groups


def run_batch(problem, fos, group, genotypes, rng, elitist=None):
    """One batched GOM phase; returns everything needed to cross-check it."""
    state = evaluate_population(problem, genotypes.copy())
    before = state.copy()
    plan = plan_group(problem, fos, group)
    working = state.genotypes.copy()
    donors = determine_and_insert_donor_genes(plan, state.genotypes, state.genotypes.copy(), working, rng)
    inserted = working.copy()
    delta = parallel_partial_evaluations(problem, plan, state, working, donors)
    acceptance = determine_improvements(delta, state, elitist, problem.integral)
    apply_acceptance(plan, state, working, acceptance, delta)
    return dict(before=before, after=state, plan=plan, donors=donors, inserted=inserted,
                delta=delta, acceptance=acceptance, working=working)


def serial_step_deltas(problem, fos, batch):
    """Each (solution, set) step evaluated alone from the batch-start solution."""
    before, plan, inserted = batch["before"], batch["plan"], batch["inserted"]
    out = np.full(batch["donors"].shape, np.nan)
    for s in range(len(before)):
        base = EvaluatedSolution(before.genotypes[s].copy(), float(before.fitness[s]), before.cache[s].copy())
        for j, f in enumerate(plan.sets):
            if batch["donors"][s, j] < 0:
                continue
            idx = list(fos.sets[f])
            out[s, j] = evaluate_modification(problem, base, idx, inserted[s, idx]).delta
    return out


def apply_in_order(problem, fos, batch, s, order):
    """Apply solution ``s``'s accepted steps one at a time in ``order``."""
    before, plan, inserted = batch["before"], batch["plan"], batch["inserted"]
    sol = full_evaluate(problem, before.genotypes[s])
    for j in order:
        if batch["acceptance"][s, j] != ACCEPT:
            continue
        idx = list(fos.sets[plan.sets[j]])
        commit(sol, evaluate_modification(problem, sol, idx, inserted[s, idx]))
    return sol


# one line per acceptance criterion, printed in the pytest terminal summary
ACCEPTANCE_LINES: list[str] = []
