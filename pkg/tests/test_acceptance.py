"""Acceptance criteria, one test each.

Every test records a ``PASS``/``FAIL`` line (criterion, measured value,
tolerance, runtime) that is printed at the end of the pytest run.  Running
this file directly prints the same lines without pytest.
"""

import io
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from support import ACCEPTANCE_LINES, apply_in_order, run_batch, serial_step_deltas, torus_setup  # noqa: E402

from pargomea.cli import main as cli_main, read_trace  # noqa: E402
from pargomea.engine import GomeaConfig, ModelSpec, Termination  # noqa: E402
from pargomea.graybox import build_vig, full_evaluate, partial_evaluate  # noqa: E402
from pargomea.ims import ImsSettings, ImsState, ims_step  # noqa: E402
from pargomea.linkage import fos_from_sets  # noqa: E402
from pargomea.maxcut import (  # noqa: E402
    as_graybox,
    brute_force_optimum,
    dump_edge_list,
    example_graph,
    generate_complete,
    generate_random,
    generate_torus,
)
from pargomea.parallel import prepare, run_parallel  # noqa: E402
from pargomea.scheduling import build_lmig, group_stats, welsh_powell  # noqa: E402
from pargomea.serial import run_serial  # noqa: E402


def report(name, ok, detail, seconds, limit):
    ok = bool(ok) and seconds < limit
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}; runtime {seconds:.2f}s (limit {limit:g}s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_partial_evaluation_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches = 0
    cases = 0
    for inst_seed in range(50):
        n = int(rng.integers(5, 101))
        m = int(rng.integers(n, min(n * (n - 1) // 2, 4 * n) + 1))
        problem = as_graybox(generate_random(n, m, (-10, 10), seed=inst_seed))
        for _ in range(20):
            g = rng.integers(0, 2, n)
            k = int(rng.integers(1, min(8, n) + 1))
            idx = rng.choice(n, size=k, replace=False)
            new = rng.integers(0, 2, k)
            after = g.copy()
            after[idx] = new
            base = full_evaluate(problem, g)
            delta = partial_evaluate(problem, base, idx, new)
            mismatches += delta != full_evaluate(problem, after).fitness - base.fitness
            cases += 1
    report("partial-evaluation exactness", cases == 1000 and mismatches == 0,
           f"{cases - mismatches}/{cases} exact matches (need 1000/1000)", time.perf_counter() - t0, 5)


def test_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    matched, exceeded = 0, 0
    for i in range(50):
        n = int(rng.integers(8, 13))
        kind = i % 3
        if kind == 0:
            inst = generate_random(n, int(rng.integers(n, n * (n - 1) // 2 + 1)), (-5, 10), seed=i)
        elif kind == 1:
            inst = generate_complete(n, (-3, 6), seed=i)
        else:
            inst = generate_torus(3, int(rng.integers(3, 5)), (1, 9), seed=i)
        optimum = brute_force_optimum(inst)[0]
        cfg = GomeaConfig(model=ModelSpec("flt"), seed=i,
                          termination=Termination(max_evaluations=1e6, target_fitness=optimum))
        best = run_serial(as_graybox(inst), cfg).best.fitness
        matched += best == optimum
        exceeded += best > optimum
    report("oracle equivalence", matched >= 48 and exceeded == 0,
           f"{matched}/50 runs matched the brute-force optimum (need >= 48), {exceeded} exceeded it",
           time.perf_counter() - t0, 120)


# reference LMIG of the five-variable example, 1-based set labels
EXAMPLE_LMIG_EDGES = sorted((a - 1, b - 1) for a, b in [
    (1, 2), (1, 3), (2, 3), (3, 4), (3, 5), (4, 5), (1, 6), (3, 6), (1, 8), (2, 8), (2, 6),
    (3, 8), (6, 8), (4, 7), (5, 7), (4, 8), (5, 8), (4, 6), (7, 8), (3, 7), (6, 7), (5, 6),
])


def test_example_reproduction():
    t0 = time.perf_counter()
    fos = fos_from_sets(5, [(0,), (1,), (2,), (3,), (4,), (0, 2), (3, 4), (0, 1, 2)])
    lmig = build_lmig(fos, build_vig(as_graybox(example_graph())))
    groups = welsh_powell(lmig)
    clique = all(j in lmig.adjacency[i] for i in range(2, 8) for j in range(2, 8) if i != j)
    same = lmig.edges() == EXAMPLE_LMIG_EDGES
    report("example LMIG reproduction", same and len(groups) == 6 and clique,
           f"LMIG edges {'match' if same else 'differ from'} all {len(EXAMPLE_LMIG_EDGES)} reference edges; "
           f"{len(groups)} groups (need 6); 6-clique certificate {'holds' if clique else 'fails'}",
           time.perf_counter() - t0, 1)


def test_group_independence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(99)
    setups = {side: torus_setup(side, 10, weights=(-4, 6), seed=side) for side in (4, 5, 6, 8)}
    delta_ok = order_ok = 0
    for _ in range(500):
        side = int(rng.choice(list(setups)))
        problem, fos, groups = setups[side]
        group = groups[int(rng.integers(len(groups)))]
        n = 6
        g = rng.integers(0, 2, (n, side * side)).astype(np.int8)
        elitist = g[int(rng.integers(n))].copy()
        batch = run_batch(problem, fos, group, g, rng, elitist)
        ref = serial_step_deltas(problem, fos, batch)
        present = batch["delta"].present
        delta_ok += np.array_equal(np.isnan(ref), ~present) and np.array_equal(batch["delta"].values[present], ref[present])
        after = batch["after"]
        ok = True
        for s in range(n):
            for _ in range(20):
                sol = apply_in_order(problem, fos, batch, s, rng.permutation(batch["plan"].width))
                ok &= np.array_equal(sol.genotype, after.genotypes[s]) and sol.fitness == after.fitness[s]
        order_ok += ok
    report("group independence", delta_ok == 500 and order_ok == 500,
           f"{delta_ok}/500 batches with delta matrix equal to per-step serial deltas, "
           f"{order_ok}/500 with all 20 application orders identical (need 500/500)",
           time.perf_counter() - t0, 60)


def test_determinism_across_workers():
    t0 = time.perf_counter()
    problem = as_graybox(generate_torus(40, 40))
    base = GomeaConfig(population_size=16, model=ModelSpec("flt"), seed=3, termination=Termination(max_generations=50))
    setup = prepare(problem, base)
    traces, bests = [], []
    for workers in (1, 2, 8):
        cfg = GomeaConfig(population_size=16, model=ModelSpec("flt"), seed=3, workers=workers,
                          termination=Termination(max_generations=50))
        r = run_parallel(problem, cfg, setup)
        traces.append([(t.evaluations, t.generation, t.population, t.fitness) for t in r.trace])
        bests.append(r.best.genotype.tobytes())
    same = traces[0] == traces[1] == traces[2] and bests[0] == bests[1] == bests[2]
    report("determinism across workers", same,
           f"workers 1/2/8 traces {'bit-identical' if same else 'differ'} ({len(traces[0])} records, "
           f"final fitness {traces[0][-1][3]:g})", time.perf_counter() - t0, 120)


def test_structure_trend():
    t0 = time.perf_counter()
    n = 16
    complete = []
    for m in (6, 20, 50):
        p = as_graybox(generate_complete(m))
        st = group_stats(prepare(p, GomeaConfig(model=ModelSpec("flt"), termination=Termination(max_generations=1))).groups)
        complete.append((st.num_sets, st.num_groups))
    torus = []
    for side in (10, 20, 40):
        p = as_graybox(generate_torus(side, side))
        st = group_stats(prepare(p, GomeaConfig(model=ModelSpec("bflt", 10), termination=Termination(max_generations=1))).groups)
        torus.append((side * side, st.num_groups, n * st.mean_width))
    ks = [k for _, k, _ in torus]
    widths = [w for _, _, w in torus]
    complete_ok = all(k == m for m, k in complete)
    torus_ok = max(ks) <= 5 * 10 and max(ks) - min(ks) <= 2
    growth_ok = widths[0] < widths[1] < widths[2]
    detail = (
        "complete k=m: " + ", ".join(f"{k}/{m}" for m, k in complete)
        + "; torus BFLT-10 k for l=100/400/1600: " + "/".join(map(str, ks))
        + " (need <= 50, spread <= 2); batch width n*m/k: " + "/".join(f"{w:.0f}" for w in widths)
    )
    report("structure vs parallelism", complete_ok and torus_ok and growth_ok, detail, time.perf_counter() - t0, 60)


def test_ims_schedule():
    t0 = time.perf_counter()

    class Dummy:
        def __init__(self, size):
            self.size = size

        def generation(self):
            pass

    state = ImsState(ImsSettings(16, 4), lambda i, size: Dummy(size))
    relation = True
    for _ in range(100):
        ims_step(state)
        g = state.generations
        relation &= all(g[i - 1] >= 4 * g[i] for i in range(1, len(g)))
    sizes = [p.size for p in state.populations]
    doubling = sizes == [16 * 2**i for i in range(len(sizes))]
    report("IMS schedule", relation and doubling and len(sizes) >= 3,
           f"generations {state.generations}, sizes {sizes}", time.perf_counter() - t0, 1)


def test_cli_smoke():
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        inst_path = Path(tmp) / "g_synthetic.txt"
        trace_path = Path(tmp) / "trace.csv"
        inst_path.write_text(dump_edge_list(generate_random(800, 19176, seed=1)))
        out = io.StringIO()
        code = cli_main(["--seed", "1", "run", "--instance", str(inst_path), "--engine", "parallel",
                         "--max-seconds", "30", "--trace", str(trace_path)], out)
        records = read_trace(trace_path.open())
    fits = [r.fitness for r in records]
    monotone = fits == sorted(fits) and [r.seconds for r in records] == sorted(r.seconds for r in records)
    report("CLI smoke on 800-vertex instance", code == 0 and monotone and len(records) > 0,
           f"exit code {code}, {len(records)} trace rows, monotone={monotone}, final fitness {fits[-1]:g}",
           time.perf_counter() - t0, 45)


if __name__ == "__main__":
    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
            except AssertionError:
                failed += 1
    print("not targets: GPU wall-clock speed-ups and hour-scale benchmark convergence are hardware- and budget-bound")
    sys.exit(1 if failed else 0)
