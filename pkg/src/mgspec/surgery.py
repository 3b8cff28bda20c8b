"""Graph surgery: pendant removal/shortening, detaching, 3-star extraction.

Each operation returns a new graph; the eigenvalue-monotonicity contracts
(removing a pendant edge cannot lower any eigenvalue, the extracted 3-star
dominates the tree's eigenvalue at matching index, ...) are verified by the
test suite rather than enforced at runtime.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import (
    BadVertexIndex,
    DeltaOutOfRange,
    HypothesisViolated,
    NotAThreeStar,
    NotATree,
    NotPendant,
    TooFewEdges,
    WouldBeEmpty,
)
from .graphs import Edge, MetricGraph, make_star

__all__ = [
    "remove_pendant",
    "shorten_pendant",
    "shorten_to_equilateral",
    "detach_edge",
    "extract_three_star",
    "ThreeStarExtraction",
    "is_three_star",
]


def _check_edge_index(g: MetricGraph, edge_index: int) -> Edge:
    if not 0 <= edge_index < g.edge_count:
        raise BadVertexIndex(f"edge index {edge_index} out of range")
    return g.edges[edge_index]


def _pendant_end(g: MetricGraph, edge_index: int) -> int:
    """The degree-1 endpoint of a pendant edge (prefers v when both are)."""
    e = _check_edge_index(g, edge_index)
    deg = g.degrees()
    if deg[e.v] == 1:
        return e.v
    if deg[e.u] == 1:
        return e.u
    raise NotPendant(f"edge {edge_index} has no endpoint of degree one")


def remove_pendant(g: MetricGraph, edge_index: int) -> MetricGraph:
    """Remove a pendant edge together with its degree-1 endpoint.

    All eigenvalues can only go up: mu_{k+1}(g) <= mu_{k+1}(result).
    """
    loose = _pendant_end(g, edge_index)
    if g.edge_count == 1:
        raise WouldBeEmpty("removing the only edge leaves no metric graph")
    remap = {v: (v if v < loose else v - 1) for v in range(g.vertex_count) if v != loose}
    edges = tuple(
        Edge(remap[e.u], remap[e.v], e.length)
        for i, e in enumerate(g.edges)
        if i != edge_index
    )
    return MetricGraph(g.vertex_count - 1, edges)


def shorten_pendant(g: MetricGraph, edge_index: int, delta: float) -> MetricGraph:
    """Shorten a pendant edge by ``delta`` from its loose end; topology is
    unchanged.  Use :func:`remove_pendant` to take the whole edge away."""
    _pendant_end(g, edge_index)
    e = g.edges[edge_index]
    if not 0.0 < delta < e.length:
        raise DeltaOutOfRange(f"delta={delta} not in (0, {e.length})")
    edges = list(g.edges)
    edges[edge_index] = Edge(e.u, e.v, e.length - delta)
    return MetricGraph(g.vertex_count, tuple(edges))


def is_three_star(g: MetricGraph) -> bool:
    return (
        g.edge_count == 3
        and g.vertex_count == 4
        and g.is_connected
        and max(g.degrees()) == 3
    )


def shorten_to_equilateral(g: MetricGraph) -> tuple[MetricGraph, float]:
    """Shorten all arms of a 3-star to the shortest arm's length.

    Returns the equilateral comparison star and the length ratio
    alpha = L(star) / L(input) = 3 * min_arm / L(input).
    """
    if not is_three_star(g):
        raise NotAThreeStar("shorten_to_equilateral needs a 3-star")
    shortest = min(e.length for e in g.edges)
    alpha = 3.0 * shortest / g.total_length
    edges = tuple(Edge(e.u, e.v, shortest) for e in g.edges)
    return MetricGraph(g.vertex_count, edges), alpha


def detach_edge(g: MetricGraph, edge_index: int) -> MetricGraph:
    """Sever the edge at its higher-degree endpoint into a new degree-1
    vertex, possibly disconnecting the graph.

    When both endpoints already have degree one the operation is a no-op.
    Ties go to the ``u`` endpoint.
    """
    e = _check_edge_index(g, edge_index)
    deg = g.degrees()
    if deg[e.u] == 1 and deg[e.v] == 1:
        return g
    w = g.vertex_count
    edges = list(g.edges)
    if deg[e.u] >= deg[e.v]:
        edges[edge_index] = Edge(w, e.v, e.length)
    else:
        edges[edge_index] = Edge(e.u, w, e.length)
    return MetricGraph(g.vertex_count + 1, tuple(edges))


@dataclass(frozen=True)
class ThreeStarExtraction:
    """Report of a 3-star extraction.

    ``arm_lengths`` are the three arms of the extracted star (the two
    pieces of the trunk path on either side of the attachment vertex plus
    the attached branch path); the average-length guarantee is
    ``star_average >= graph_average``.
    """

    arm_lengths: tuple[float, float, float]
    star_total_length: float
    star_average_length: float
    graph_average_length: float
    trunk_edges: tuple[int, ...]
    branch_edges: tuple[int, ...]
    attachment_vertex: int


def _tree_path(adj, start: int, goal: int) -> list[tuple[int, int]]:
    """Vertex-to-vertex path in a tree as a list of (vertex, edge) steps;
    edge enters the listed vertex.  Empty when start == goal."""
    parent = {start: (None, None)}
    stack = [start]
    while stack:
        v = stack.pop()
        if v == goal:
            break
        for w, ei in adj[v]:
            if w not in parent:
                parent[w] = (v, ei)
                stack.append(w)
    steps = []
    v = goal
    while v != start:
        pv, ei = parent[v]
        steps.append((v, ei))
        v = pv
    steps.reverse()
    return steps


def _best_extension(adj, lengths, v: int, banned_edge: int) -> tuple[float, list[int]]:
    """Longest downward path from v avoiding ``banned_edge``; ties broken by
    the lexicographically smallest edge-index sequence."""
    best = (0.0, [])
    for w, ei in adj[v]:
        if ei == banned_edge:
            continue
        sub_len, sub_edges = _best_extension(adj, lengths, w, ei)
        cand = (lengths[ei] + sub_len, [ei] + sub_edges)
        if cand[0] > best[0] or (cand[0] == best[0] and best[1] and cand[1] < best[1]):
            best = cand
    return best


def extract_three_star(g: MetricGraph) -> tuple[MetricGraph, ThreeStarExtraction]:
    """Extract the dominating 3-star of a series-reduced tree.

    Construction: with edges ordered nonincreasingly by length, take a
    maximal path (between two degree-1 vertices) through the two longest
    edges, maximizing total length; attach to it the longest path through
    the longest edge outside it.  The union, read as a 3-star after fusing
    the degree-2 joints, has average edge length at least that of the whole
    tree and dominates every eigenvalue of the tree.

    Ties are broken deterministically: edge ordering by index, path choice
    by total length then lexicographic edge-index sequence.
    """
    if not g.is_tree:
        raise NotATree("extract_three_star needs a connected tree")
    if g.edge_count < 3:
        raise TooFewEdges("extract_three_star needs at least three edges")
    deg = g.degrees()
    if 2 in deg:
        raise HypothesisViolated(
            "extract_three_star needs a series-reduced tree; "
            "run suppress_degree_two first"
        )
    adj = g.adjacency()
    lengths = [e.length for e in g.edges]
    order = sorted(range(g.edge_count), key=lambda i: (-lengths[i], i))
    e1, e2, e3 = order[0], order[1], order[2]

    # core path: the longest endpoint-to-endpoint path across e1 and e2
    # containing both edges (the farthest pair always does)
    best_core = None
    for x in (g.edges[e1].u, g.edges[e1].v):
        for y in (g.edges[e2].u, g.edges[e2].v):
            if x == y:
                continue
            steps = _tree_path(adj, x, y)
            edge_set = {ei for _, ei in steps}
            if e1 not in edge_set or e2 not in edge_set:
                continue
            plen = sum(lengths[ei] for _, ei in steps)
            if best_core is None or plen > best_core[0]:
                best_core = (plen, x, y, [ei for _, ei in steps])
    assert best_core is not None
    _, x, y, core_edges = best_core

    # extend both ends to degree-1 vertices, maximizing added length
    _, ext_x = _best_extension(adj, lengths, x, core_edges[0])
    _, ext_y = _best_extension(adj, lengths, y, core_edges[-1])
    trunk = list(reversed(ext_x)) + core_edges + ext_y
    trunk_set = set(trunk)
    # trunk vertex sequence, walking from the far end of the x extension
    start = x
    for ei in ext_x:
        e = g.edges[ei]
        start = e.v if e.u == start else e.u
    seq = [start]
    v = start
    for ei in trunk:
        e = g.edges[ei]
        v = e.v if e.u == v else e.u
        seq.append(v)
    trunk_vertex_set = set(seq)

    # branch edge: longest outside the trunk (e3 itself when not swallowed)
    if e3 not in trunk_set:
        ehat = e3
    else:
        outside = [i for i in range(g.edge_count) if i not in trunk_set]
        ehat = min(outside, key=lambda i: (-lengths[i], i))

    # exactly one endpoint of ehat reaches the trunk without crossing ehat;
    # the connector ends at the first trunk vertex it meets
    branch = None
    for near, far in (
        (g.edges[ehat].u, g.edges[ehat].v),
        (g.edges[ehat].v, g.edges[ehat].u),
    ):
        if near in trunk_vertex_set:
            conn: list[int] = []
            attach = near
        else:
            steps = _tree_path(adj, near, seq[0])
            conn = []
            attach = None
            for w, ei in steps:
                if ei == ehat:
                    break
                conn.append(ei)
                if w in trunk_vertex_set:
                    attach = w
                    break
            if attach is None:
                continue
        _, ext = _best_extension(adj, lengths, far, ehat)
        branch = (list(reversed(conn)) + [ehat] + ext, attach)
        break
    assert branch is not None
    branch_edges, attach = branch

    # arm lengths: trunk split at the attachment vertex, plus the branch
    pos = seq.index(attach)
    arm1 = sum(lengths[ei] for ei in trunk[:pos])
    arm2 = sum(lengths[ei] for ei in trunk[pos:])
    arm3 = sum(lengths[ei] for ei in branch_edges)
    star = make_star((arm1, arm2, arm3))
    star_total = arm1 + arm2 + arm3
    report = ThreeStarExtraction(
        arm_lengths=(arm1, arm2, arm3),
        star_total_length=star_total,
        star_average_length=star_total / 3.0,
        graph_average_length=g.total_length / g.edge_count,
        trunk_edges=tuple(trunk),
        branch_edges=tuple(branch_edges),
        attachment_vertex=attach,
    )
    return star, report
