"""Dependency-neighborhood structures over finite index sets.

An index i carries two nested neighborhoods: A_i, outside of which the
variable X_i is independent of the rest of the field, and B_i, outside of
which the whole block {X_j : j in A_i} is independent.  This module builds
those structures for lattice boxes (sup-metric balls) and for dependency
graphs, and computes the combinatorial quantities the normal-approximation
bounds consume: the overlap count kappa, the largest neighborhood size
kappa1, and the second-order neighborhoods N(A_i), N(B_i).

Neighborhoods are stored as CSR-style sorted integer arrays; an inverted
index (j -> {i : j in A_i}) is built lazily so second-order queries avoid
an O(|J|^2) scan.  Structures are immutable after construction and safe to
share across worker threads.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse

__all__ = [
    "DependenceStructure",
    "NeighborhoodStats",
    "build_graph_structure",
    "build_lattice_structure",
    "cycle_edges",
    "matching_edges",
    "n_of_a",
    "n_of_b",
    "neighborhood_stats",
    "path_edges",
    "read_edge_list",
]


@dataclass(frozen=True, eq=False)
class DependenceStructure:
    """Index set {0..size-1} with neighborhoods A_i subset B_i.

    ``a_indptr``/``a_indices`` hold the A neighborhoods in CSR layout (row i
    is sorted ascending), likewise the B arrays.  ``dims`` and ``m`` are set
    for lattice-built structures and record the box shape and dependence
    radius so coordinates can be recovered for reporting.
    """

    size: int
    a_indptr: np.ndarray
    a_indices: np.ndarray
    b_indptr: np.ndarray
    b_indices: np.ndarray
    dims: tuple[int, ...] | None = None
    m: int | None = None
    edges: tuple[tuple[int, int], ...] | None = field(default=None, repr=False)

    def a(self, i: int) -> np.ndarray:
        """Sorted A_i as an array view."""
        self._check_index(i)
        return self.a_indices[self.a_indptr[i]:self.a_indptr[i + 1]]

    def b(self, i: int) -> np.ndarray:
        """Sorted B_i as an array view."""
        self._check_index(i)
        return self.b_indices[self.b_indptr[i]:self.b_indptr[i + 1]]

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.size:
            raise ValueError(f"index {i} outside [0, {self.size})")

    @cached_property
    def a_matrix(self) -> sparse.csr_matrix:
        """0/1 CSR matrix with row i marking the members of A_i."""
        data = np.ones(len(self.a_indices), dtype=np.int32)
        return sparse.csr_matrix(
            (data, self.a_indices, self.a_indptr), shape=(self.size, self.size)
        )

    @cached_property
    def b_matrix(self) -> sparse.csr_matrix:
        data = np.ones(len(self.b_indices), dtype=np.int32)
        return sparse.csr_matrix(
            (data, self.b_indices, self.b_indptr), shape=(self.size, self.size)
        )

    @cached_property
    def a_inverted(self) -> sparse.csr_matrix:
        """Inverted index: row j lists {i : j in A_i}."""
        inv = self.a_matrix.T.tocsr()
        inv.sort_indices()
        return inv

    @cached_property
    def a_matrix_float(self) -> sparse.csr_matrix:
        """Float copy of ``a_matrix`` for neighborhood-sum products."""
        return self.a_matrix.astype(np.float64)


@dataclass(frozen=True, slots=True)
class NeighborhoodStats:
    """Derived overlap quantities of a structure."""

    kappa: int
    kappa1: int
    size_j: int

    def __post_init__(self) -> None:
        if not self.kappa >= self.kappa1 >= 1:
            raise ValueError("expected kappa >= kappa1 >= 1")


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def _lattice_csr(dims: tuple[int, ...], radius: int):
    """CSR arrays of sup-metric balls of the given radius, clipped to the box."""
    n = int(np.prod(dims))
    d = len(dims)
    strides = np.ones(d, dtype=np.int64)
    for k in range(d - 2, -1, -1):
        strides[k] = strides[k + 1] * dims[k + 1]

    coords = np.unravel_index(np.arange(n, dtype=np.int64), dims)
    offsets = np.array(
        list(itertools.product(range(-radius, radius + 1), repeat=d)), dtype=np.int64
    )
    # Lexicographic offset order makes the linearized neighbor indices ascend
    # within each row, so the CSR rows come out sorted.
    delta_lin = offsets @ strides

    valid = np.ones((n, len(offsets)), dtype=bool)
    for k in range(d):
        ck = coords[k][:, None]
        dk = offsets[None, :, k]
        valid &= (ck + dk >= 0) & (ck + dk < dims[k])
    neighbor = np.arange(n, dtype=np.int64)[:, None] + delta_lin[None, :]
    indices = neighbor[valid]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(valid.sum(axis=1), out=indptr[1:])
    return indptr, indices


def build_lattice_structure(dims, m: int) -> DependenceStructure:
    """Structure on the full box prod([0, dims_k)) with sup-metric balls.

    A_i is the radius-m ball around i and B_i the radius-2m ball, both
    clipped to the box.  m = 0 gives the independence structure.
    """
    dims = tuple(int(x) for x in dims)
    if len(dims) == 0:
        raise ValueError("dims must be a nonempty list of positive integers")
    if any(x <= 0 for x in dims):
        raise ValueError(f"dims must be positive, got {dims}")
    if m < 0:
        raise ValueError(f"m must be nonnegative, got {m}")

    a_indptr, a_indices = _lattice_csr(dims, m)
    if m == 0:
        b_indptr, b_indices = a_indptr, a_indices
    else:
        b_indptr, b_indices = _lattice_csr(dims, 2 * m)
    return DependenceStructure(
        size=int(np.prod(dims)),
        a_indptr=a_indptr,
        a_indices=a_indices,
        b_indptr=b_indptr,
        b_indices=b_indices,
        dims=dims,
        m=int(m),
    )


def build_graph_structure(edges, n_vertices: int) -> DependenceStructure:
    """Structure of a simple undirected dependency graph.

    A_i is the closed neighborhood {i} union neighbors(i); including i itself
    is required for X_i to be independent of {X_j : j not in A_i} and for
    sum_i E(X_i Y_i) to reproduce Var(S).  B_i is the union of A_j over
    j in A_i, i.e. the closed ball of radius 2.
    """
    if n_vertices <= 0:
        raise ValueError("n_vertices must be positive")
    seen: set[tuple[int, int]] = set()
    us, vs = [], []
    for e in edges:
        u, v = int(e[0]), int(e[1])
        if u == v:
            raise ValueError(f"self-loop at vertex {u}")
        if not (0 <= u < n_vertices and 0 <= v < n_vertices):
            raise ValueError(f"edge ({u}, {v}) outside [0, {n_vertices})")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise ValueError(f"duplicate edge ({u}, {v})")
        seen.add(key)
        us.append(u)
        vs.append(v)

    n = n_vertices
    u_arr = np.asarray(us, dtype=np.int64)
    v_arr = np.asarray(vs, dtype=np.int64)
    loop = np.arange(n, dtype=np.int64)
    rows = np.concatenate([u_arr, v_arr, loop])
    cols = np.concatenate([v_arr, u_arr, loop])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    a_indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=a_indptr[1:])
    a_indices = cols

    a_mat = sparse.csr_matrix(
        (np.ones(len(cols), dtype=np.int32), a_indices, a_indptr), shape=(n, n)
    )
    b_mat = (a_mat @ a_mat).tocsr()
    b_mat.sort_indices()
    return DependenceStructure(
        size=n,
        a_indptr=a_indptr,
        a_indices=a_indices.astype(np.int64),
        b_indptr=b_mat.indptr.astype(np.int64),
        b_indices=b_mat.indices.astype(np.int64),
        edges=tuple(zip(us, vs)),
    )


# ---------------------------------------------------------------------------
# Derived quantities
# ---------------------------------------------------------------------------

def _max_window(dims: tuple[int, ...], radius: int) -> int:
    """max_i |{j : |i-j|_sup <= radius}| on the clipped box (separable)."""
    total = 1
    for size in dims:
        best = 0
        for c in range(size):
            best = max(best, min(c + radius, size - 1) - max(c - radius, 0) + 1)
        total *= best
    return total


def _neighborhood_stats_scan(s: DependenceStructure) -> NeighborhoodStats:
    """Exact scan over the two cardinality families via sparse products."""
    a_mat, b_mat = s.a_matrix, s.b_matrix
    overlap = b_mat @ a_mat.T.tocsr()
    overlap_counts = np.diff(overlap.tocsr().indptr)
    in_b_counts = np.bincount(s.b_indices, minlength=s.size)
    kappa = int(max(overlap_counts.max(), in_b_counts.max()))
    kappa1 = int(np.diff(s.a_indptr).max())
    return NeighborhoodStats(kappa=kappa, kappa1=kappa1, size_j=s.size)


def neighborhood_stats(s: DependenceStructure) -> NeighborhoodStats:
    """kappa, kappa1 and |J| for a structure.

    kappa is the exact maximum of |{j : B_i meets A_j}| and |{j : i in B_j}|
    over i, the least admissible overlap constant (the bounds grow with
    kappa, so the exact maximum gives the tightest reportable value).
    Lattice-built structures use the separable closed form, which equals the
    scan because sup-metric windows factor per axis; everything else scans.
    """
    if s.dims is not None and s.m is not None:
        overlap = _max_window(s.dims, 3 * s.m)
        in_b = _max_window(s.dims, 2 * s.m)
        kappa1 = _max_window(s.dims, s.m)
        return NeighborhoodStats(
            kappa=int(max(overlap, in_b)), kappa1=int(kappa1), size_j=s.size
        )
    return _neighborhood_stats_scan(s)


def n_of_a(s: DependenceStructure, i: int) -> np.ndarray:
    """N(A_i) = {j : A_i and A_j intersect}, sorted."""
    members = s.a(i)
    inv = s.a_inverted
    parts = [inv.indices[inv.indptr[k]:inv.indptr[k + 1]] for k in members]
    return np.unique(np.concatenate(parts)) if parts else np.array([], dtype=np.int64)


def n_of_b(s: DependenceStructure, i: int) -> np.ndarray:
    """N(B_i) = {j : B_i and A_j intersect}, sorted."""
    members = s.b(i)
    inv = s.a_inverted
    parts = [inv.indices[inv.indptr[k]:inv.indptr[k + 1]] for k in members]
    return np.unique(np.concatenate(parts)) if parts else np.array([], dtype=np.int64)


def validate_structure(s: DependenceStructure) -> None:
    """Raise if the structure violates its invariants (test support)."""
    for i in range(s.size):
        a, b = s.a(i), s.b(i)
        if i not in a:
            raise AssertionError(f"{i} missing from its own A neighborhood")
        if not np.all(np.diff(a) > 0) or not np.all(np.diff(b) > 0):
            raise AssertionError(f"neighborhood of {i} not strictly sorted")
        if not np.isin(a, b).all():
            raise AssertionError(f"A_{i} not contained in B_{i}")
        if a.min() < 0 or a.max() >= s.size or b.min() < 0 or b.max() >= s.size:
            raise AssertionError(f"neighborhood of {i} leaves the index set")


# ---------------------------------------------------------------------------
# Edge-list plumbing
# ---------------------------------------------------------------------------

def read_edge_list(path) -> list[tuple[int, int]]:
    """Parse a whitespace-separated edge list, one "u v" pair per line.

    '#' starts a comment (full-line or trailing); blank lines are skipped.
    """
    edges: list[tuple[int, int]] = []
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'u v', got {raw!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: non-integer vertex in {raw!r}") from exc
    return edges


def cycle_edges(n: int) -> list[tuple[int, int]]:
    """Edges of the n-cycle (2-regular circulant); n >= 3."""
    if n < 3:
        raise ValueError("a cycle needs at least 3 vertices")
    return [(i, (i + 1) % n) for i in range(n)]


def path_edges(n: int) -> list[tuple[int, int]]:
    """Edges of the path on n vertices."""
    if n < 2:
        raise ValueError("a path needs at least 2 vertices")
    return [(i, i + 1) for i in range(n - 1)]


def matching_edges(n: int) -> list[tuple[int, int]]:
    """Perfect matching on n vertices (n even): degree-1 dependency graph."""
    if n < 2 or n % 2:
        raise ValueError("a perfect matching needs a positive even vertex count")
    return [(2 * i, 2 * i + 1) for i in range(n // 2)]
