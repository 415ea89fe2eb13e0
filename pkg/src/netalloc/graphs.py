"""Communication graphs, Laplacians, and information-exchange weight matrices.

Weight matrices used by the solver must satisfy three structural properties:

(a) the all-ones vector is both a left and a right null vector
    (``1ᵀW = 0`` and ``W1 = 0``), which is what keeps the primal iterates
    on the resource-constraint affine set;
(b) the zero eigenvalue is unique, i.e. ``W + Wᵀ + (1/N)11ᵀ`` is positive
    definite, so the iteration has no spurious fixed points;
(c) ``W`` has the sparsity pattern of the graph Laplacian, so every update
    can be computed from neighbor data only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    DisconnectedGraph,
    InvalidEdge,
    WeightPropertyError,
)

__all__ = [
    "Graph",
    "WeightMatrix",
    "ValidationReport",
    "SpectralSummary",
    "build_graph",
    "graph_from_json",
    "graph_to_json",
    "laplacian",
    "design_weights",
    "make_weight_matrix",
    "validate_weight_matrix",
    "spectral_summary",
]


@dataclass(frozen=True)
class Graph:
    """Connected undirected graph with 0-based node indices.

    Edges are stored as a lexicographically sorted tuple of ``(i, j)`` pairs
    with ``i < j``. Instances are immutable; build them with
    :func:`build_graph`.
    """

    node_count: int
    edges: tuple

    @property
    def edge_count(self):
        return len(self.edges)

    @property
    def neighbors(self):
        """Tuple of sorted neighbor tuples, one per node."""
        nbrs = [[] for _ in range(self.node_count)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return tuple(tuple(sorted(b)) for b in nbrs)

    def incident_edges(self, i):
        """Sorted list of edges touching node ``i`` (stacking order)."""
        return [e for e in self.edges if i in e]


def build_graph(node_count, edges):
    """Validate and build a :class:`Graph`.

    Parameters
    ----------
    node_count : int
        Number of nodes ``N`` (positive).
    edges : iterable of pairs
        Undirected edges as 0-based index pairs.

    Raises
    ------
    InvalidEdge
        On self-loops, duplicates, or out-of-range indices.
    DisconnectedGraph
        If the graph does not have a single connected component.
    """
    if node_count < 1:
        raise InvalidEdge(f"node_count must be positive, got {node_count}")
    canon = []
    seen = set()
    for e in edges:
        i, j = int(e[0]), int(e[1])
        if i == j:
            raise InvalidEdge(f"self-loop at node {i}")
        if not (0 <= i < node_count and 0 <= j < node_count):
            raise InvalidEdge(f"edge ({i}, {j}) out of range for N={node_count}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise InvalidEdge(f"duplicate edge {key}")
        seen.add(key)
        canon.append(key)
    canon.sort()
    g = Graph(node_count=node_count, edges=tuple(canon))
    _check_connected(g)
    return g


def _check_connected(g):
    if g.node_count == 1:
        return
    nbrs = g.neighbors
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in nbrs[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    if len(seen) != g.node_count:
        missing = sorted(set(range(g.node_count)) - seen)
        raise DisconnectedGraph(f"nodes unreachable from node 0: {missing}")


def graph_from_json(doc):
    """Build a graph from ``{"nodes": N, "edges": [[i, j], ...]}``.

    Node indices in the document are 1-based; ``doc`` may be a dict, a JSON
    string, or a path-like pointing at a JSON file.
    """
    if not isinstance(doc, dict):
        text = None
        s = str(doc)
        if s.lstrip().startswith("{"):
            text = s
        else:
            with open(doc, "r", encoding="utf-8") as fh:
                text = fh.read()
        doc = json.loads(text)
    edges = [(int(i) - 1, int(j) - 1) for i, j in doc["edges"]]
    return build_graph(int(doc["nodes"]), edges)


def graph_to_json(g):
    """Serialize a graph to the 1-based JSON document form."""
    return {"nodes": g.node_count, "edges": [[i + 1, j + 1] for i, j in g.edges]}


@dataclass(frozen=True)
class SpectralSummary:
    """Spectral constants of a weight matrix used by the certification rules."""

    lambda2: float
    lambda_max: float
    sigma_max: float

    def as_dict(self):
        return {
            "lambda2": self.lambda2,
            "lambda_max": self.lambda_max,
            "sigma_max": self.sigma_max,
        }


@dataclass(frozen=True)
class WeightMatrix:
    """Validated information-exchange weight matrix.

    ``entries`` is a read-only ``(N, N)`` array satisfying properties
    (a)-(c); ``spectral`` caches ``lambda2`` / ``lambda_max`` of the
    symmetrized matrix and the largest singular value.
    """

    entries: np.ndarray
    symmetric: bool
    spectral: SpectralSummary
    graph: Graph = field(repr=False)

    @property
    def node_count(self):
        return self.entries.shape[0]

    def row_items(self, i):
        """``(j, W_ij)`` pairs over the closed neighborhood, ascending ``j``.

        This is the exact term order used by the per-node update, shared by
        the centralized solver and the message-passing simulator.
        """
        js = sorted(set(self.graph.neighbors[i]) | {i})
        return [(j, float(self.entries[i, j])) for j in js]


@dataclass(frozen=True)
class ValidationReport:
    """Per-property result of checking a candidate weight matrix.

    Residuals are reported alongside the pass/fail verdicts; sparsity
    mismatches are 1-based ``(i, j)`` pairs as in all I/O.
    """

    null_vectors_ok: bool
    definite_ok: bool
    sparsity_ok: bool
    max_row_sum: float
    max_col_sum: float
    min_eig_definite: float
    sparsity_mismatches: tuple
    tol: float

    @property
    def all_ok(self):
        return self.null_vectors_ok and self.definite_ok and self.sparsity_ok

    def as_dict(self):
        return {
            "null_vectors_ok": self.null_vectors_ok,
            "definite_ok": self.definite_ok,
            "sparsity_ok": self.sparsity_ok,
            "max_row_sum": self.max_row_sum,
            "max_col_sum": self.max_col_sum,
            "min_eig_definite": self.min_eig_definite,
            "sparsity_mismatches": [list(p) for p in self.sparsity_mismatches],
            "tol": self.tol,
            "all_ok": self.all_ok,
        }


def validate_weight_matrix(w, g, tol=1e-10):
    """Check properties (a)-(c) of a candidate weight matrix.

    Parameters
    ----------
    w : (N, N) array_like
        Candidate matrix.
    g : Graph
        Graph whose Laplacian sparsity the matrix must follow.
    tol : float
        Tolerance, relative to the largest entry magnitude.

    Returns
    -------
    ValidationReport

    Raises
    ------
    DimensionMismatch
        If ``w`` is not ``N x N`` for the given graph.
    """
    w = np.asarray(w, dtype=float)
    N = g.node_count
    if w.shape != (N, N):
        raise DimensionMismatch(f"expected ({N}, {N}) matrix, got {w.shape}")
    scale = max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    abs_tol = tol * scale

    row = float(np.max(np.abs(w.sum(axis=1))))
    col = float(np.max(np.abs(w.sum(axis=0))))
    null_ok = row <= abs_tol and col <= abs_tol

    test = w + w.T + np.ones((N, N)) / N
    min_eig = float(np.linalg.eigvalsh(test)[0])
    definite_ok = min_eig > abs_tol

    edge_set = set(g.edges)
    mismatches = []
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            if abs(w[i, j]) > abs_tol and (min(i, j), max(i, j)) not in edge_set:
                mismatches.append((i + 1, j + 1))
    sparsity_ok = not mismatches

    return ValidationReport(
        null_vectors_ok=null_ok,
        definite_ok=definite_ok,
        sparsity_ok=sparsity_ok,
        max_row_sum=row,
        max_col_sum=col,
        min_eig_definite=min_eig,
        sparsity_mismatches=tuple(mismatches),
        tol=tol,
    )


def spectral_summary(w):
    """Spectral constants of a weight matrix.

    ``lambda2`` and ``lambda_max`` are the second-smallest and largest
    eigenvalues of the symmetrized matrix ``(W + Wᵀ)/2``; ``sigma_max`` is
    the largest singular value of ``W`` itself. Accepts a
    :class:`WeightMatrix` or a raw array.
    """
    m = w.entries if isinstance(w, WeightMatrix) else np.asarray(w, dtype=float)
    sym = 0.5 * (m + m.T)
    evals = np.linalg.eigvalsh(sym)
    lam2 = float(evals[1]) if len(evals) > 1 else float(evals[0])
    lam_max = float(evals[-1])
    sig_max = float(np.linalg.svd(m, compute_uv=False)[0])
    return SpectralSummary(lambda2=lam2, lambda_max=lam_max, sigma_max=sig_max)


def make_weight_matrix(entries, g, tol=1e-10):
    """Wrap raw entries into a :class:`WeightMatrix`, validating first.

    Raises
    ------
    WeightPropertyError
        If any of properties (a)-(c) fails; the report rides along.
    """
    entries = np.array(entries, dtype=float)
    report = validate_weight_matrix(entries, g, tol=tol)
    if not report.all_ok:
        raise WeightPropertyError("weight matrix fails validation", report)
    entries.setflags(write=False)
    symmetric = bool(np.allclose(entries, entries.T, rtol=0.0, atol=tol))
    return WeightMatrix(
        entries=entries,
        symmetric=symmetric,
        spectral=spectral_summary(entries),
        graph=g,
    )


def laplacian(g):
    """Graph Laplacian as a validated :class:`WeightMatrix`."""
    N = g.node_count
    m = np.zeros((N, N))
    for i, j in g.edges:
        m[i, j] = m[j, i] = -1.0
        m[i, i] += 1.0
        m[j, j] += 1.0
    return make_weight_matrix(m, g)


def design_weights(g, strategy="laplacian"):
    """Build a weight matrix for a connected graph.

    ``strategy`` is ``"laplacian"`` for the plain Laplacian ``L`` or
    ``"scaled_laplacian"`` for ``L / lambda_max(L)``, which normalizes the
    largest eigenvalue to one so the simple step-scale condition reads
    ``beta < 1``.
    """
    lap = laplacian(g)
    if strategy == "laplacian":
        return lap
    if strategy == "scaled_laplacian":
        scaled = lap.entries / lap.spectral.lambda_max
        return make_weight_matrix(scaled, g)
    raise ValueError(f"unknown weight strategy: {strategy!r}")
