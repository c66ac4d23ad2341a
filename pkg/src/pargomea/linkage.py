"""Family-of-subsets linkage models built by average-linkage (UPGMA) clustering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from pargomea.maxcut import MaxCutInstance


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    result: int | None  # FOS index of the merged set; None when it is the full set
    score: float


@dataclass(frozen=True)
class Fos:
    """Ordered linkage sets over variables ``0..num_variables-1``.

    ``children[i]`` holds the FOS indices of the two disjoint sets whose union
    is set ``i`` (tree models only; ``None`` for leaves and non-tree models).
    ``merges`` records the clustering history for replay checks.
    """

    num_variables: int
    sets: tuple[tuple[int, ...], ...]
    children: tuple[tuple[int, int] | None, ...] | None = None
    merges: tuple[Merge, ...] = ()

    def __len__(self) -> int:
        return len(self.sets)

    def __iter__(self):
        return iter(self.sets)

    def __getitem__(self, i: int) -> tuple[int, ...]:
        return self.sets[i]

    @property
    def max_set_size(self) -> int:
        return max(len(s) for s in self.sets)


def univariate_fos(num_variables: int) -> Fos:
    return Fos(num_variables, tuple((u,) for u in range(num_variables)), (None,) * num_variables)


def fos_from_sets(num_variables: int, sets: Sequence[Sequence[int]]) -> Fos:
    """Wrap explicit sets, recovering tree links where a set is a disjoint union of two others."""
    norm = tuple(tuple(sorted(set(int(u) for u in s))) for s in sets)
    lookup = {s: i for i, s in enumerate(norm)}
    children: list[tuple[int, int] | None] = []
    for s in norm:
        found = None
        if len(s) > 1:
            ss = set(s)
            for j, a in enumerate(norm):
                if len(a) < len(s) and ss.issuperset(a):
                    rest = tuple(sorted(ss.difference(a)))
                    k = lookup.get(rest)
                    if k is not None and j < k:
                        found = (j, k)
                        break
        children.append(found)
    tree = all(c is not None for c, s in zip(children, norm) if len(s) > 1)
    return Fos(num_variables, norm, tuple(children) if tree else None)


def mi_similarity(population) -> np.ndarray:
    """Pairwise empirical mutual information (natural log) of binary columns."""
    X = np.asarray(population)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("population must be a non-empty 2D array of genotypes")
    if X.size and (X.min() < 0 or X.max() > 1):
        raise ValueError("mutual information is defined here for binary genotypes only")
    n = X.shape[0]
    X1 = X.astype(np.float64)
    X0 = 1.0 - X1
    mi = np.zeros((X.shape[1], X.shape[1]))
    p1 = X1.mean(axis=0)
    marg = (1.0 - p1, p1)
    for a, Xa in ((0, X0), (1, X1)):
        for b, Xb in ((0, X0), (1, X1)):
            pab = (Xa.T @ Xb) / n
            denom = np.outer(marg[a], marg[b])
            with np.errstate(divide="ignore", invalid="ignore"):
                term = np.where(pab > 0, pab * np.log(pab / denom), 0.0)
            mi += term
    np.fill_diagonal(mi, 0.0)
    # clamp rounding noise; MI is non-negative
    np.maximum(mi, 0.0, out=mi)
    return (mi + mi.T) / 2


def weight_similarity(instance: MaxCutInstance) -> np.ndarray:
    n = instance.num_vertices
    s = np.zeros((n, n))
    u, v, w = instance.arrays
    s[u, v] = np.abs(w)
    s[v, u] = np.abs(w)
    return s


def learn_tree_upgma(similarity, size_bound: int | None = None) -> Fos:
    """Linkage tree by repeatedly merging the most similar pair of clusters.

    Cluster similarity is the mean similarity over all cross pairs.  Merges
    producing a set larger than ``size_bound`` are not allowed; learning stops
    once no allowed merge remains.  The set of all variables is never added.

    Ties go to the pair with the lexicographically smallest
    ``(min variable of one cluster, min variable of the other)``.
    """
    S = np.array(similarity, dtype=np.float64)
    ell = S.shape[0]
    if S.ndim != 2 or S.shape[1] != ell:
        raise ValueError("similarity must be a square matrix")
    if ell < 2:
        raise ValueError("need at least two variables to build a linkage tree")
    if size_bound is not None and size_bound < 1:
        raise ValueError("size_bound must be positive")
    bound = ell if size_bound is None else min(int(size_bound), ell)

    # Slot r holds the cluster whose smallest variable is r, so slot order is
    # the tie-break order.  sums[r, c] is the total cross-pair similarity.
    sums = S.copy()
    np.fill_diagonal(sums, 0.0)
    size = np.ones(ell, dtype=np.int64)
    active = np.ones(ell, dtype=bool)
    members: list[list[int]] = [[u] for u in range(ell)]
    node: list[int] = list(range(ell))  # FOS index of each slot's cluster

    sets: list[tuple[int, ...]] = [(u,) for u in range(ell)]
    children: list[tuple[int, int] | None] = [None] * ell
    merges: list[Merge] = []

    best_val = np.full(ell, -np.inf)
    best_col = np.full(ell, -1, dtype=np.int64)

    def row_scores(r: int) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            sc = sums[r] / (size[r] * size)
        sc[~active] = -np.inf
        sc[r] = -np.inf
        sc[size[r] + size > bound] = -np.inf
        return sc

    def refresh(r: int) -> None:
        sc = row_scores(r)
        c = int(np.argmax(sc))  # first maximal column = smallest slot
        best_val[r] = sc[c]
        best_col[r] = c if np.isfinite(sc[c]) else -1

    for r in range(ell):
        refresh(r)

    while True:
        live = np.where(active & (best_col >= 0), best_val, -np.inf)
        a = int(np.argmax(live))
        if not np.isfinite(live[a]):
            break
        b = int(best_col[a])
        score = float(live[a])
        a, b = min(a, b), max(a, b)

        members[a].extend(members[b])
        members[a].sort()
        merged_size = size[a] + size[b]
        if merged_size < ell:
            result = len(sets)
            sets.append(tuple(members[a]))
            children.append((node[a], node[b]))
        else:
            result = None
        merges.append(Merge(node[a], node[b], result, score))

        sums[a] += sums[b]
        sums[:, a] += sums[:, b]
        sums[a, a] = 0.0
        sums[b] = 0.0
        sums[:, b] = 0.0
        size[a] = merged_size
        size[b] = 0
        active[b] = False
        members[b] = []
        node[a] = result if result is not None else -1
        node[b] = -1
        if result is None:
            break

        best_col[~active] = -1
        best_val[~active] = -np.inf
        refresh(a)
        stale = active & ((best_col == a) | (best_col == b))
        stale[a] = False
        for r in np.flatnonzero(stale):
            refresh(r)
        # remaining rows only need to consider the merged cluster as a partner
        rest = active & ~stale
        rest[a] = False
        rest &= size + size[a] <= bound
        rows = np.flatnonzero(rest)
        sc = sums[rows, a] / (size[rows] * size[a])
        better = (sc > best_val[rows]) | ((sc == best_val[rows]) & (a < best_col[rows]))
        best_val[rows[better]] = sc[better]
        best_col[rows[better]] = a

    return Fos(ell, tuple(sets), tuple(children), tuple(merges))


def validate_fos(fos: Fos, num_variables: int, size_bound: int | None = None) -> list[str]:
    """List of violated FOS invariants; empty means the model is valid."""
    problems: list[str] = []
    covered = set()
    for i, s in enumerate(fos.sets):
        if not s:
            problems.append(f"set {i} is empty")
        if any(u < 0 or u >= num_variables for u in s):
            problems.append(f"set {i} has a variable outside [0, {num_variables})")
        if len(set(s)) != len(s):
            problems.append(f"set {i} repeats a variable")
        covered.update(s)
        if len(set(s)) == num_variables:
            problems.append(f"set {i} contains every variable")
        if size_bound is not None and len(s) > size_bound:
            problems.append(f"set {i} exceeds the size bound {size_bound}")
    missing = sorted(set(range(num_variables)) - covered)
    if missing:
        problems.append(f"incomplete: variables {missing} are in no set")
    if fos.children is not None:
        as_sets = [frozenset(s) for s in fos.sets]
        count = {}
        for fs in as_sets:
            count[fs] = count.get(fs, 0) + 1
        containing: dict[int, list[int]] = {}
        for j, s in enumerate(fos.sets):
            for u in s:
                containing.setdefault(u, []).append(j)
        for i, s in enumerate(fos.sets):
            if len(s) <= 1:
                continue
            target = as_sets[i]
            # one half of any split holds the smallest variable
            pairs = 0
            for j in containing.get(s[0], []):
                if len(fos.sets[j]) < len(s) and as_sets[j] <= target:
                    pairs += count.get(target - as_sets[j], 0)
            if pairs != 1:
                problems.append(f"set {i} is the disjoint union of {pairs} pairs, expected exactly 1")
    return problems


def format_fos(fos: Fos) -> str:
    return "".join(" ".join(str(u) for u in s) + "\n" for s in fos.sets)


def parse_fos(text: str, num_variables: int) -> Fos:
    sets = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            sets.append([int(t) for t in line.split()])
    return fos_from_sets(num_variables, sets)
