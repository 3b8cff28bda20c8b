"""Metric graphs: immutable data model, validators, generators, serialization.

A metric graph is a finite combinatorial graph whose edges carry strictly
positive lengths.  Vertices are dense integers ``0..vertex_count-1``; there
are no vertex labels.  Loops are rejected at construction time; parallel
edges are allowed.  Graphs may be disconnected (some operations need that),
but connectivity is always reported by :func:`summarize`.
"""

from __future__ import annotations

import heapq
import json
import math
import operator
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadParameter,
    BadVertexIndex,
    LoopEdge,
    NonPositiveLength,
    NotATree,
    SplitOutOfRange,
)

__all__ = [
    "Edge",
    "MetricGraph",
    "GraphSummary",
    "build_graph",
    "summarize",
    "split_edge",
    "suppress_degree_two",
    "components",
    "canonical_tree_code",
    "canonical_topology_code",
    "make_extremal_star",
    "make_path",
    "make_equilateral_star",
    "make_star",
    "make_random_tree",
    "graph_to_json_dict",
    "graph_from_json_dict",
    "save_graph",
    "load_graph",
]

# Edge-length digits used in canonical tree codes. Twelve decimals exceed
# every solver tolerance in the package while absorbing float round-off
# from length arithmetic (e.g. t + (L - t)).
_CANON_DIGITS = 12


def _as_int(value, name: str) -> int:
    try:
        return operator.index(value)
    except TypeError:
        raise BadParameter(f"{name} must be an integer, got {value!r}") from None


@dataclass(frozen=True)
class Edge:
    """Undirected edge between vertices ``u`` and ``v`` of positive length."""

    u: int
    v: int
    length: float


@dataclass(frozen=True)
class MetricGraph:
    """Immutable metric graph; safe to share across threads."""

    vertex_count: int
    edges: tuple[Edge, ...]

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def total_length(self) -> float:
        return float(sum(e.length for e in self.edges))

    def lengths(self) -> np.ndarray:
        return np.array([e.length for e in self.edges], dtype=float)

    def degrees(self) -> list[int]:
        deg = [0] * self.vertex_count
        for e in self.edges:
            deg[e.u] += 1
            deg[e.v] += 1
        return deg

    def incidence(self) -> list[list[tuple[int, int]]]:
        """Per vertex: list of ``(edge_index, endpoint)`` with endpoint 0 at
        the ``u`` side (local coordinate 0) and 1 at the ``v`` side."""
        inc: list[list[tuple[int, int]]] = [[] for _ in range(self.vertex_count)]
        for i, e in enumerate(self.edges):
            inc[e.u].append((i, 0))
            inc[e.v].append((i, 1))
        return inc

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per vertex: list of ``(neighbor, edge_index)``."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.vertex_count)]
        for i, e in enumerate(self.edges):
            adj[e.u].append((e.v, i))
            adj[e.v].append((e.u, i))
        return adj

    def component_labels(self) -> list[int]:
        """Component index per vertex (isolated vertices count as components)."""
        label = [-1] * self.vertex_count
        adj = self.adjacency()
        comp = 0
        for start in range(self.vertex_count):
            if label[start] >= 0:
                continue
            stack = [start]
            label[start] = comp
            while stack:
                v = stack.pop()
                for w, _ in adj[v]:
                    if label[w] < 0:
                        label[w] = comp
                        stack.append(w)
            comp += 1
        return label

    @property
    def component_count(self) -> int:
        if self.vertex_count == 0:
            return 0
        return max(self.component_labels()) + 1

    @property
    def is_connected(self) -> bool:
        return self.component_count <= 1

    @property
    def is_tree(self) -> bool:
        # connected + V = E + 1 implies acyclic (loops are excluded anyway)
        return self.is_connected and self.vertex_count == self.edge_count + 1


@dataclass(frozen=True)
class GraphSummary:
    """Aggregate quantities of a metric graph.

    ``average_edge_length`` is total length divided by edge count;
    ``boundary_count`` is the number of vertices of degree one.
    """

    total_length: float
    edge_count: int
    average_edge_length: float
    boundary_count: int
    is_tree: bool
    component_count: int


def build_graph(vertex_count: int, edges: Iterable[tuple[int, int, float]]) -> MetricGraph:
    """Validate and build a metric graph from ``(u, v, length)`` triples.

    Raises:
        NonPositiveLength: length is not a positive finite number.
        LoopEdge: an edge has identical endpoints.
        BadVertexIndex: an endpoint is outside ``[0, vertex_count)``.
    """
    if vertex_count < 0:
        raise BadVertexIndex(f"vertex_count must be nonnegative, got {vertex_count}")
    checked = []
    for u, v, length in edges:
        u, v = int(u), int(v)
        length = float(length)
        if not (math.isfinite(length) and length > 0.0):
            raise NonPositiveLength(f"edge ({u},{v}) has length {length!r}")
        if u == v:
            raise LoopEdge(f"edge ({u},{v}) is a loop")
        for w in (u, v):
            if not 0 <= w < vertex_count:
                raise BadVertexIndex(f"vertex {w} outside [0, {vertex_count})")
        checked.append(Edge(u, v, length))
    return MetricGraph(vertex_count, tuple(checked))


def summarize(g: MetricGraph) -> GraphSummary:
    """Compute total length, edge count, average edge length, boundary size,
    tree flag and component count."""
    if g.edge_count == 0:
        raise BadParameter("summary is undefined for a graph with no edges")
    total = g.total_length
    deg = g.degrees()
    return GraphSummary(
        total_length=total,
        edge_count=g.edge_count,
        average_edge_length=total / g.edge_count,
        boundary_count=sum(1 for d in deg if d == 1),
        is_tree=g.is_tree,
        component_count=g.component_count,
    )


def split_edge(g: MetricGraph, edge_index: int, t: float) -> MetricGraph:
    """Split edge ``edge_index`` at distance ``t`` from its ``u`` endpoint.

    The edge is replaced by two edges sharing a new degree-2 vertex; the
    total length is unchanged and the edge count grows by one.
    """
    if not 0 <= edge_index < g.edge_count:
        raise BadVertexIndex(f"edge index {edge_index} out of range")
    e = g.edges[edge_index]
    if not 0.0 < t < e.length:
        raise SplitOutOfRange(f"split position {t} not in (0, {e.length})")
    w = g.vertex_count
    new_edges = (
        g.edges[:edge_index]
        + (Edge(e.u, w, t), Edge(w, e.v, e.length - t))
        + g.edges[edge_index + 1:]
    )
    return MetricGraph(g.vertex_count + 1, new_edges)


def suppress_degree_two(g: MetricGraph) -> MetricGraph:
    """Remove every degree-2 vertex by merging its two incident edges.

    Lengths add; the operation is idempotent and inverts :func:`split_edge`
    up to relabeling.  A degree-2 vertex whose two edges lead to the same
    neighbor (a 2-cycle) is left alone, since merging would create a loop.
    """
    edges = [(e.u, e.v, e.length) for e in g.edges]
    alive = [True] * g.vertex_count
    while True:
        deg: dict[int, list[int]] = {}
        for i, (u, v, _) in enumerate(edges):
            deg.setdefault(u, []).append(i)
            deg.setdefault(v, []).append(i)
        target = None
        for w in range(g.vertex_count):
            if alive[w] and len(deg.get(w, [])) == 2:
                i, j = deg[w]
                a = edges[i][0] if edges[i][1] == w else edges[i][1]
                b = edges[j][0] if edges[j][1] == w else edges[j][1]
                if a != b:
                    target = (w, i, j, a, b)
                    break
        if target is None:
            break
        w, i, j, a, b = target
        merged = (a, b, edges[i][2] + edges[j][2])
        edges = [e for idx, e in enumerate(edges) if idx not in (i, j)]
        edges.insert(min(i, j), merged)
        alive[w] = False
    # compact vertex numbering, preserving order
    remap = {}
    for v in range(g.vertex_count):
        if alive[v]:
            remap[v] = len(remap)
    return MetricGraph(
        len(remap),
        tuple(Edge(remap[u], remap[v], l) for u, v, l in edges),
    )


def components(g: MetricGraph) -> list[MetricGraph]:
    """Split into connected components, each with dense vertex numbering.

    Components are ordered by their smallest original vertex index.
    Isolated vertices yield single-vertex graphs with no edges.
    """
    labels = g.component_labels()
    n_comp = g.component_count
    out = []
    for c in range(n_comp):
        verts = [v for v in range(g.vertex_count) if labels[v] == c]
        remap = {v: i for i, v in enumerate(verts)}
        edges = tuple(
            Edge(remap[e.u], remap[e.v], e.length)
            for e in g.edges
            if labels[e.u] == c
        )
        out.append(MetricGraph(len(verts), edges))
    return out


# --- canonical codes for tree isomorphism ---

def _rooted_code(adj, root: int, parent_edge: int, fmt) -> str:
    def code(v: int, pedge: int) -> str:
        subs = sorted(fmt(ei) + code(w, ei) for w, ei in adj[v] if ei != pedge)
        return "(" + ",".join(subs) + ")"

    return code(root, parent_edge)


def canonical_tree_code(g: MetricGraph) -> str:
    """Canonical string of a metric tree, invariant under relabeling.

    Edge lengths enter rounded to 12 decimal digits, which is coarser than
    float noise and finer than any solver tolerance used here.
    """
    if not g.is_tree:
        raise NotATree("canonical codes are defined for trees only")
    adj = g.adjacency()
    lengths = [e.length for e in g.edges]

    def fmt(ei: int) -> str:
        return f"{lengths[ei]:.{_CANON_DIGITS}f}:"

    # min over all roots; trees here are small, so O(V^2) is fine
    return min(_rooted_code(adj, r, -1, fmt) for r in range(g.vertex_count))


def canonical_topology_code(vertex_count: int, edges: Sequence[tuple[int, int]]) -> str:
    """Canonical string of an unlabeled (combinatorial) tree."""
    g = build_graph(vertex_count, [(u, v, 1.0) for u, v in edges])
    if not g.is_tree:
        raise NotATree("canonical codes are defined for trees only")
    adj = g.adjacency()
    return min(_rooted_code(adj, r, -1, lambda ei: "") for r in range(vertex_count))


# --- generators ---

def make_extremal_star(k: int, total_length: float) -> MetricGraph:
    """3-star with arm lengths ``(2k-1, 1, 1) * L / (2k+1)``.

    These are the length ratios at which the k-th positive eigenvalue,
    normalized by squared average edge length, attains its maximum over
    trees (k >= 2).
    """
    k = _as_int(k, "k")
    if k < 2:
        raise BadParameter(f"k must be >= 2, got {k}")
    if not total_length > 0:
        raise BadParameter(f"total_length must be positive, got {total_length!r}")
    L = float(total_length)
    long_arm = (2 * k - 1) * L / (2 * k + 1)
    short_arm = L / (2 * k + 1)
    return make_star((long_arm, short_arm, short_arm))


def make_path(length: float) -> MetricGraph:
    """Single edge (interval) of the given length."""
    if not length > 0:
        raise BadParameter(f"length must be positive, got {length!r}")
    return build_graph(2, [(0, 1, float(length))])


def make_equilateral_star(edge_count: int, total_length: float) -> MetricGraph:
    """Star with ``edge_count`` arms of equal length summing to ``total_length``."""
    edge_count = _as_int(edge_count, "edge_count")
    if edge_count < 1:
        raise BadParameter(f"edge_count must be >= 1, got {edge_count}")
    if not total_length > 0:
        raise BadParameter(f"total_length must be positive, got {total_length!r}")
    arm = float(total_length) / edge_count
    return make_star([arm] * edge_count)


def make_star(lengths: Sequence[float]) -> MetricGraph:
    """Star with center vertex 0 and one leaf per arm length."""
    lengths = [float(l) for l in lengths]
    if len(lengths) < 1:
        raise BadParameter("a star needs at least one arm")
    return build_graph(
        len(lengths) + 1,
        [(0, i + 1, l) for i, l in enumerate(lengths)],
    )


def _prufer_decode(seq: Sequence[int], n: int) -> list[tuple[int, int]]:
    deg = [1] * n
    for x in seq:
        deg[x] += 1
    leaves = [i for i in range(n) if deg[i] == 1]
    heapq.heapify(leaves)
    edges = []
    for x in seq:
        leaf = heapq.heappop(leaves)
        edges.append((min(leaf, x), max(leaf, x)))
        deg[leaf] -= 1
        deg[x] -= 1
        if deg[x] == 1:
            heapq.heappush(leaves, x)
    u = heapq.heappop(leaves)
    v = heapq.heappop(leaves)
    edges.append((min(u, v), max(u, v)))
    return edges


def make_random_tree(
    edge_count: int,
    seed: int,
    min_length_fraction: float,
    total_length: float = 1.0,
    series_reduced: bool = False,
) -> MetricGraph:
    """Random labeled tree, deterministic per seed.

    The topology is uniform over Prufer sequences on ``edge_count + 1``
    vertices.  Lengths are a Dirichlet-uniform sample on the simplex
    ``{sum = total_length, l_i >= min_length_fraction * total_length}``.
    With ``series_reduced=True``, topologies are rejection-sampled until no
    vertex has degree two (requires ``edge_count >= 3``; the sampler stays
    deterministic because rejections consume the same seeded stream).
    """
    E = _as_int(edge_count, "edge_count")
    if E < 1:
        raise BadParameter(f"edge_count must be >= 1, got {E}")
    if not 0.0 < min_length_fraction <= 1.0 / E:
        raise BadParameter(
            f"min_length_fraction must be in (0, 1/{E}], got {min_length_fraction!r}"
        )
    if not total_length > 0:
        raise BadParameter(f"total_length must be positive, got {total_length!r}")
    if series_reduced and E < 3:
        raise BadParameter("series-reduced trees need at least 3 edges")
    n = E + 1
    rng = np.random.default_rng(seed)
    while True:
        if n == 2:
            pairs = [(0, 1)]
        else:
            seq = rng.integers(0, n, size=n - 2)
            pairs = _prufer_decode([int(x) for x in seq], n)
        if not series_reduced:
            break
        deg = [0] * n
        for u, v in pairs:
            deg[u] += 1
            deg[v] += 1
        if 2 not in deg:
            break
    floor = min_length_fraction
    weights = rng.dirichlet(np.ones(E))
    lengths = total_length * (floor + (1.0 - E * floor) * weights)
    return build_graph(n, [(u, v, l) for (u, v), l in zip(pairs, lengths)])


# --- serialization ---
# File format: {"vertex_count": N, "edges": [{"u": int, "v": int, "length": float}]}
# json round-trips Python floats exactly (shortest repr), so lengths survive
# save/load bit-for-bit.

def graph_to_json_dict(g: MetricGraph) -> dict:
    return {
        "vertex_count": g.vertex_count,
        "edges": [{"u": e.u, "v": e.v, "length": e.length} for e in g.edges],
    }


def graph_from_json_dict(obj: dict) -> MetricGraph:
    try:
        vertex_count = obj["vertex_count"]
        edges = [(e["u"], e["v"], e["length"]) for e in obj["edges"]]
    except (KeyError, TypeError) as exc:
        raise BadParameter(f"malformed graph object: {exc}") from exc
    return build_graph(vertex_count, edges)


def save_graph(g: MetricGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(graph_to_json_dict(g), fh, indent=1)
        fh.write("\n")


def load_graph(path) -> MetricGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return graph_from_json_dict(json.load(fh))
