"""Grouping linkage sets into batches whose GOM steps cannot interfere.

Two linkage sets interfere when they share a variable or a VIG edge joins
them.  Coloring that interference graph (the LMIG) yields groups of sets
that can be mixed simultaneously.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from pargomea.graybox import GrayBoxProblem, Vig
from pargomea.linkage import Fos


@dataclass(frozen=True)
class Lmig:
    num_vertices: int
    adjacency: tuple[tuple[int, ...], ...]

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, nbrs in enumerate(self.adjacency) for j in nbrs if i < j]

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    @property
    def max_degree(self) -> int:
        return max((len(a) for a in self.adjacency), default=0)


@dataclass(frozen=True)
class ColorGroups:
    """``groups[c]`` lists the FOS indices colored ``c``, ascending."""

    groups: tuple[tuple[int, ...], ...]
    colors: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    def __getitem__(self, c: int) -> tuple[int, ...]:
        return self.groups[c]


@dataclass(frozen=True)
class GroupStats:
    num_groups: int
    sizes: tuple[int, ...]  # non-increasing
    mean_width: float
    num_sets: int

    def report(self) -> str:
        return (
            f"groups: {self.num_groups}\n"
            f"linkage sets: {self.num_sets}\n"
            f"group sizes: {' '.join(map(str, self.sizes))}\n"
            f"mean parallel width: {self.mean_width:.4f}\n"
        )


def _incidence(fos: Fos) -> sp.csr_matrix:
    rows = np.repeat(np.arange(len(fos)), [len(s) for s in fos.sets])
    cols = np.fromiter((u for s in fos.sets for u in s), dtype=np.int64, count=len(rows))
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(fos), fos.num_variables))


def build_lmig(fos: Fos, vig: Vig) -> Lmig:
    """Adjacent iff the sets intersect or a VIG edge connects them."""
    if fos.num_variables != vig.num_vertices:
        raise ValueError("FOS and VIG disagree on the number of variables")
    A = _incidence(fos)
    vr = np.repeat(np.arange(vig.num_vertices), [len(a) for a in vig.adjacency])
    vc = np.fromiter((v for a in vig.adjacency for v in a), dtype=np.int64, count=len(vr))
    closed = sp.csr_matrix((np.ones(len(vr)), (vr, vc)), shape=(vig.num_vertices,) * 2) + sp.identity(
        vig.num_vertices, format="csr"
    )
    L = (A @ closed @ A.T).tocsr()
    L.setdiag(0)
    L.eliminate_zeros()
    L.sort_indices()
    adjacency = tuple(tuple(int(j) for j in L.indices[L.indptr[i]:L.indptr[i + 1]]) for i in range(len(fos)))
    return Lmig(len(fos), adjacency)


def welsh_powell(graph: Lmig) -> ColorGroups:
    """Greedy coloring in non-increasing degree order (ties by index)."""
    order = sorted(range(graph.num_vertices), key=lambda i: (-graph.degree(i), i))
    colors = [-1] * graph.num_vertices
    for i in order:
        taken = {colors[j] for j in graph.adjacency[i] if colors[j] >= 0}
        c = 0
        while c in taken:
            c += 1
        colors[i] = c
    k = max(colors, default=-1) + 1
    groups: list[list[int]] = [[] for _ in range(k)]
    for i, c in enumerate(colors):
        groups[c].append(i)
    return ColorGroups(tuple(tuple(g) for g in groups), tuple(colors))


def color_linkage(
    fos: Fos, vig: Vig, colorer: Callable[[Lmig], ColorGroups] = welsh_powell
) -> ColorGroups:
    return colorer(build_lmig(fos, vig))


def group_stats(groups: ColorGroups) -> GroupStats:
    sizes = tuple(sorted((len(g) for g in groups), reverse=True))
    m = sum(sizes)
    return GroupStats(len(sizes), sizes, m / len(sizes) if sizes else 0.0, m)


def format_groups(groups: ColorGroups) -> str:
    return "".join(" ".join(str(i) for i in g) + "\n" for g in groups)


def is_proper_coloring(graph: Lmig, groups: ColorGroups) -> bool:
    return all(groups.colors[i] != groups.colors[j] for i, j in graph.edges())


def independence_violations(problem: GrayBoxProblem, fos: Fos, groups: ColorGroups) -> list[tuple[int, int, int]]:
    """Triples ``(subfunction, set_a, set_b)`` where one subfunction reads two
    sets of the same group, or the sets overlap (subfunction ``-1``)."""
    bad = []
    owner = {}
    for c, g in enumerate(groups):
        for i in g:
            for u in fos.sets[i]:
                if (c, u) in owner:
                    bad.append((-1, owner[(c, u)], i))
                owner[(c, u)] = i
    for f, idx in enumerate(problem.subfunction_inputs):
        seen: dict[int, int] = {}
        for u in idx:
            for c, g in enumerate(groups):
                i = owner.get((c, u))
                if i is None:
                    continue
                if c in seen and seen[c] != i:
                    bad.append((f, seen[c], i))
                seen.setdefault(c, i)
    return bad
