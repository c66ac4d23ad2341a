"""Weighted Max-Cut: instances, generators, edge-list I/O and an exact oracle."""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, TextIO

import numpy as np

from pargomea.graybox import GrayBoxProblem

BRUTE_FORCE_LIMIT = 26


class InstanceParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


@dataclass(frozen=True)
class MaxCutInstance:
    """Undirected weighted graph; edges are ``(u, v, w)`` with ``u < v``, sorted."""

    num_vertices: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.num_vertices < 1:
            raise ValueError("a Max-Cut instance needs at least one vertex")
        prev = None
        for u, v, w in self.edges:
            if not (0 <= u < v < self.num_vertices):
                raise ValueError(f"bad edge ({u}, {v}): need 0 <= u < v < {self.num_vertices}")
            if not np.isfinite(w):
                raise ValueError(f"edge ({u}, {v}) has non-finite weight")
            if prev is not None and (u, v) <= prev:
                raise ValueError("edges must be sorted by (u, v) without duplicates")
            prev = (u, v)

    @classmethod
    def from_edges(cls, num_vertices: int, edges: Iterable[tuple[int, int, float]]) -> MaxCutInstance:
        """Normalize orientation and order; duplicates raise."""
        norm = {}
        for u, v, w in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop on vertex {u}")
            key = (min(u, v), max(u, v))
            if key in norm:
                raise ValueError(f"duplicate edge {key}")
            norm[key] = _as_weight(w)
        return cls(num_vertices, tuple((u, v, w) for (u, v), w in sorted(norm.items())))

    @cached_property
    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self.edges:
            e = np.empty(0, dtype=np.int64)
            return e, e.copy(), np.empty(0)
        u, v, w = zip(*self.edges)
        return np.array(u, dtype=np.int64), np.array(v, dtype=np.int64), np.array(w, dtype=np.float64)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def integral(self) -> bool:
        return all(float(w).is_integer() for _, _, w in self.edges)

    def degrees(self) -> np.ndarray:
        u, v, _ = self.arrays
        return np.bincount(np.concatenate([u, v]), minlength=self.num_vertices)


def _as_weight(w) -> float | int:
    w = float(w)
    return int(w) if w.is_integer() else w


def cut_value(instance: MaxCutInstance, genotype) -> float:
    x = np.asarray(genotype)
    if x.ndim != 1 or len(x) != instance.num_vertices:
        raise ValueError(f"genotype must have length {instance.num_vertices}")
    u, v, w = instance.arrays
    return float(np.sum(w * (x[u] != x[v])))


class MaxCutProblem(GrayBoxProblem):
    """Gray-box view of Max-Cut: one subfunction ``w_uv * [x_u != x_v]`` per edge."""

    def __init__(self, instance: MaxCutInstance):
        super().__init__(
            instance.num_vertices,
            [(u, v) for u, v, _ in instance.edges],
            integral=instance.integral,
        )
        self.instance = instance
        self._u, self._v, self._w = instance.arrays

    def evaluate_subfunction(self, index: int, values: np.ndarray) -> float:
        return float(self._w[index]) if values[0] != values[1] else 0.0

    def evaluate_rows(self, sub_ids, genotypes, rows):
        sub_ids = np.asarray(sub_ids, dtype=np.int64)
        rows = np.asarray(rows, dtype=np.int64)
        a = genotypes[rows, self._u[sub_ids]]
        b = genotypes[rows, self._v[sub_ids]]
        return np.where(a != b, self._w[sub_ids], 0.0)

    def evaluate_on(self, sub_ids, genotype):
        sub_ids = np.asarray(sub_ids, dtype=np.int64)
        return np.where(genotype[self._u[sub_ids]] != genotype[self._v[sub_ids]], self._w[sub_ids], 0.0)

    def similarity_matrix(self) -> np.ndarray:
        from pargomea.linkage import weight_similarity

        return weight_similarity(self.instance)


def as_graybox(instance: MaxCutInstance) -> MaxCutProblem:
    return MaxCutProblem(instance)


def _weights(scheme, count: int, rng: np.random.Generator) -> list:
    if scheme == "unit":
        return [1] * count
    if isinstance(scheme, str) and scheme.startswith("uniform_int"):
        scheme = parse_weight_scheme(scheme)
    if isinstance(scheme, tuple) and len(scheme) == 2:
        lo, hi = int(scheme[0]), int(scheme[1])
        if lo > hi:
            raise ValueError("uniform_int needs lo <= hi")
        return [int(w) for w in rng.integers(lo, hi + 1, size=count)]
    raise ValueError(f"unknown weight scheme {scheme!r}")


def parse_weight_scheme(text: str):
    """``unit`` or ``uniform_int(lo,hi)`` (inclusive bounds)."""
    text = text.strip()
    if text == "unit":
        return "unit"
    if text.startswith("uniform_int(") and text.endswith(")"):
        lo, hi = text[len("uniform_int("):-1].split(",")
        return (int(lo), int(hi))
    raise ValueError(f"unknown weight scheme {text!r}")


def generate_complete(n: int, weights="unit", seed: int | None = None) -> MaxCutInstance:
    if n < 2:
        raise ValueError("a complete graph needs n >= 2")
    rng = np.random.default_rng(seed)
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    ws = _weights(weights, len(pairs), rng)
    return MaxCutInstance(n, tuple((u, v, w) for (u, v), w in zip(pairs, ws)))


def generate_torus(width: int, height: int, weights="unit", seed: int | None = None) -> MaxCutInstance:
    """2D grid with wrap-around; vertex ``r * width + c``, every degree 4."""
    if width < 3 or height < 3:
        raise ValueError("torus dimensions must be >= 3")
    rng = np.random.default_rng(seed)
    pairs = set()
    for r in range(height):
        for c in range(width):
            a = r * width + c
            for b in (r * width + (c + 1) % width, ((r + 1) % height) * width + c):
                pairs.add((min(a, b), max(a, b)))
    pairs = sorted(pairs)
    ws = _weights(weights, len(pairs), rng)
    return MaxCutInstance(width * height, tuple((u, v, w) for (u, v), w in zip(pairs, ws)))


def generate_random(n: int, num_edges: int, weights="unit", seed: int | None = None) -> MaxCutInstance:
    """Uniform random simple graph with exactly ``num_edges`` edges."""
    total = n * (n - 1) // 2
    if n < 2 or not 0 <= num_edges <= total:
        raise ValueError("need n >= 2 and 0 <= num_edges <= n(n-1)/2")
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(total, size=num_edges, replace=False))
    # invert the row-major index of the strict upper triangle
    iu, ju = np.triu_indices(n, k=1)
    ws = _weights(weights, num_edges, rng)
    return MaxCutInstance(n, tuple((int(iu[k]), int(ju[k]), w) for k, w in zip(chosen, ws)))


def load_edge_list(stream: TextIO | str) -> MaxCutInstance:
    """Parse ``"<n> <m>"`` then ``m`` lines ``"<u> <v> <w>"`` with 1-based vertices."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    header = None
    edges: dict[tuple[int, int], float | int] = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if header is None:
            if len(parts) != 2:
                raise InstanceParseError("header must be '<num_vertices> <num_edges>'", lineno)
            try:
                header = (int(parts[0]), int(parts[1]))
            except ValueError:
                raise InstanceParseError("header counts must be integers", lineno) from None
            if header[0] < 1 or header[1] < 0:
                raise InstanceParseError("header counts out of range", lineno)
            continue
        if len(parts) != 3:
            raise InstanceParseError("edge line must be '<u> <v> <w>'", lineno)
        try:
            u, v = int(parts[0]), int(parts[1])
            w = _as_weight(parts[2])
        except ValueError:
            raise InstanceParseError("malformed edge line", lineno) from None
        if not np.isfinite(w):
            raise InstanceParseError("non-finite weight", lineno)
        if not (1 <= u <= header[0] and 1 <= v <= header[0]):
            raise InstanceParseError(f"vertex out of range 1..{header[0]}", lineno)
        if u == v:
            raise InstanceParseError("self-loop", lineno)
        key = (min(u, v) - 1, max(u, v) - 1)
        if key in edges:
            raise InstanceParseError(f"duplicate edge {u} {v}", lineno)
        edges[key] = w
    if header is None:
        raise InstanceParseError("missing header")
    if len(edges) != header[1]:
        raise InstanceParseError(f"header declares {header[1]} edges, found {len(edges)}")
    return MaxCutInstance(header[0], tuple((u, v, w) for (u, v), w in sorted(edges.items())))


def dump_edge_list(instance: MaxCutInstance, stream: TextIO | None = None) -> str:
    """Canonical serialization, inverse of :func:`load_edge_list`."""
    lines = [f"{instance.num_vertices} {instance.num_edges}"]
    lines += [f"{u + 1} {v + 1} {w!r}" for u, v, w in instance.edges]
    text = "\n".join(lines) + "\n"
    if stream is not None:
        stream.write(text)
    return text


def brute_force_optimum(instance: MaxCutInstance) -> tuple[float, np.ndarray]:
    """Exact maximum cut by enumeration with vertex 0 fixed to side 0.

    Among optimal genotypes the lexicographically smallest is returned.  The
    enumeration splits the free vertices into a row block and a column block
    so that every block of cut values is a single matrix product.
    """
    n = instance.num_vertices
    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force refused: {n} vertices exceeds the limit of {BRUTE_FORCE_LIMIT}")
    if n == 1:
        return 0.0, np.zeros(1, dtype=np.int8)
    u, v, w = instance.arrays
    W = np.zeros((n, n))
    W[u, v] = w
    W = W + W.T
    total = float(w.sum())

    free = n - 1
    h = free // 2
    l = free - h
    # spins: x = 0 -> +1, x = 1 -> -1; vertex 0 is fixed at +1
    def spins(bits: int) -> np.ndarray:
        codes = np.arange(2**bits, dtype=np.int64)
        shifts = np.arange(bits - 1, -1, -1)
        return 1.0 - 2.0 * ((codes[:, None] >> shifts) & 1)

    rows_idx = np.arange(1, 1 + h)
    cols_idx = np.arange(1 + h, n)
    A = spins(h)  # (2^h, h)
    B = spins(l)  # (2^l, l)
    # x^T W x split into blocks; vertex 0 is folded into the linear terms
    w0a = W[0, rows_idx]
    w0b = W[0, cols_idx]
    Waa = W[np.ix_(rows_idx, rows_idx)]
    Wbb = W[np.ix_(cols_idx, cols_idx)]
    Wab = W[np.ix_(rows_idx, cols_idx)]
    row_term = 0.5 * np.einsum("ij,jk,ik->i", A, Waa, A) + A @ w0a
    col_term = 0.5 * np.einsum("ij,jk,ik->i", B, Wbb, B) + B @ w0b
    AW = A @ Wab  # (2^h, l)

    best_val = -np.inf
    best_code = (0, 0)
    block = max(1, (1 << 22) // max(1, B.shape[0]))
    for start in range(0, A.shape[0], block):
        stop = min(A.shape[0], start + block)
        # sum_{i<j} w_ij s_i s_j for every (row, col) assignment
        pair_sum = row_term[start:stop, None] + col_term[None, :] + AW[start:stop] @ B.T
        cut = 0.5 * (total - pair_sum)
        flat = int(np.argmax(cut))
        val = float(cut.flat[flat])
        if val > best_val:
            best_val = val
            best_code = (start + flat // cut.shape[1], flat % cut.shape[1])

    x = np.zeros(n, dtype=np.int8)
    x[rows_idx] = (A[best_code[0]] < 0).astype(np.int8)
    x[cols_idx] = (B[best_code[1]] < 0).astype(np.int8)
    # recompute exactly to avoid reporting matrix-product rounding
    return cut_value(instance, x), x


def example_graph() -> MaxCutInstance:
    """The 5-vertex example graph (0-based) with unit weights."""
    return MaxCutInstance.from_edges(5, [(0, 1, 1), (0, 2, 1), (1, 2, 1), (2, 3, 1), (2, 4, 1), (3, 4, 1)])
