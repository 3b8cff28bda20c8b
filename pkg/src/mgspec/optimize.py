"""Shape optimization over trees with fixed edge count and total length.

With E and L fixed the average edge length A = L/E is fixed, so maximizing
mu_{k+1} * A^2 means maximizing mu_{k+1} over the simplex of edge lengths,
then comparing across the (finitely many) series-reduced tree topologies.

The per-topology maximization is derivative-free on purpose: mu_{k+1} is
only piecewise smooth in the lengths, and the maximizer itself sits at an
eigenvalue crossing (a double eigenvalue), where gradient methods chatter.
Nelder-Mead on a softmax parametrization of the length simplex handles the
crossing and needs no boundary logic; a small length floor keeps the
secular scan well conditioned far from the known maximizers.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy.optimize import minimize

from .bounds import sharp_bound
from .errors import BadParameter, ConvergenceFailure, MgspecError, SolverFailure
from .graphs import MetricGraph, build_graph, canonical_topology_code
from .secular import compute_spectrum_secular

__all__ = [
    "TreeTopology",
    "OptimizationResult",
    "GlobalSearchResult",
    "enumerate_topologies",
    "objective",
    "maximize_lengths",
    "global_search",
]

LENGTH_FLOOR_FRACTION = 1e-4
_SOLVER_TOL = 1e-10
_PENALTY = 1e6


@dataclass(frozen=True)
class TreeTopology:
    """Combinatorial series-reduced tree: vertex count, edge pairs, canonical code."""

    vertex_count: int
    edges: tuple[tuple[int, int], ...]
    code: str

    @classmethod
    def from_edges(cls, vertex_count: int, edges) -> "TreeTopology":
        pairs = tuple((int(u), int(v)) for u, v in edges)
        return cls(vertex_count, pairs, canonical_topology_code(vertex_count, pairs))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def with_lengths(self, lengths) -> MetricGraph:
        if len(lengths) != self.edge_count:
            raise BadParameter(
                f"need {self.edge_count} lengths, got {len(lengths)}"
            )
        return build_graph(
            self.vertex_count,
            [(u, v, l) for (u, v), l in zip(self.edges, lengths)],
        )


@dataclass(frozen=True)
class OptimizationResult:
    """Best edge lengths found on one topology for one eigenvalue index."""

    topology: TreeTopology
    k: int
    total_length: float
    best_lengths: tuple[float, ...]
    best_product: float
    iterations: int
    restarts_used: int
    converged: bool
    landscape_margin: float

    @property
    def gap_to_bound(self) -> float:
        return sharp_bound(self.k) - self.best_product

    def to_json_dict(self) -> dict:
        return {
            "code": self.topology.code,
            "edge_count": self.topology.edge_count,
            "k": self.k,
            "total_length": self.total_length,
            "best_lengths": list(self.best_lengths),
            "best_product": self.best_product,
            "gap_to_bound": self.gap_to_bound,
            "iterations": self.iterations,
            "restarts_used": self.restarts_used,
            "converged": self.converged,
            "landscape_margin": self.landscape_margin,
        }


@dataclass(frozen=True)
class GlobalSearchResult:
    """Per-topology optimization results plus the overall winner."""

    results: tuple[OptimizationResult, ...]
    winner_index: int

    @property
    def winner(self) -> OptimizationResult:
        return self.results[self.winner_index]

    def to_json_dict(self) -> dict:
        return {
            "winner": self.winner.to_json_dict(),
            "results": [r.to_json_dict() for r in self.results],
        }

    CSV_HEADER = "code,edge_count,k,best_lengths,best_product,gap_to_bound,converged"

    def to_csv_rows(self) -> list[str]:
        rows = []
        for r in self.results:
            lengths = ";".join(repr(l) for l in r.best_lengths)
            rows.append(
                f"{r.topology.code},{r.topology.edge_count},{r.k},"
                f"{lengths},{r.best_product!r},{r.gap_to_bound!r},"
                f"{'true' if r.converged else 'false'}"
            )
        return rows


def enumerate_topologies(edge_count: int) -> list[TreeTopology]:
    """All series-reduced trees with the given edge count, up to isomorphism.

    Backed by the nonisomorphic-tree generator of networkx (level-sequence
    enumeration) filtered to degree != 2, deduplicated by canonical code;
    the test suite cross-checks the count against an exhaustive Prufer-
    sequence enumeration.
    """
    if not 3 <= edge_count <= 8:
        raise BadParameter(f"edge_count must be in [3, 8], got {edge_count}")
    seen = {}
    for tree in nx.nonisomorphic_trees(edge_count + 1):
        if any(d == 2 for _, d in tree.degree()):
            continue
        topo = TreeTopology.from_edges(edge_count + 1, tree.edges())
        seen.setdefault(topo.code, topo)
    return [seen[c] for c in sorted(seen)]


def objective(
    topology: TreeTopology, lengths, k: int, solver_tol: float = _SOLVER_TOL
) -> float:
    """mu_{k+1}(graph) * (L/E)^2 for the given edge lengths.

    Raises SolverFailure when the value lands above the sharp bound beyond
    solver tolerance, which would mean the eigenvalue computation broke.
    """
    lengths = np.asarray(lengths, dtype=float)
    g = topology.with_lengths(lengths)
    spectrum = compute_spectrum_secular(g, k + 1, tol=solver_tol)
    mu = spectrum.value(k + 1)
    avg = float(np.sum(lengths)) / topology.edge_count
    product = mu * avg * avg
    bound = sharp_bound(k)
    if product > bound * (1.0 + 1e-8):
        raise SolverFailure(
            f"objective {product} exceeds the sharp bound {bound}; "
            "eigenvalue solver inconsistency"
        )
    return product


def _lengths_from_theta(theta, edge_count, total_length, floor_fraction):
    z = np.concatenate([theta, [0.0]])
    z = z - np.max(z)
    p = np.exp(z)
    p /= np.sum(p)
    return total_length * (floor_fraction + (1.0 - edge_count * floor_fraction) * p)


def _run_restart(payload):
    """Nelder-Mead from one start; module-level so it can run in a pool."""
    (vertex_count, edge_pairs, code, k, L, theta0, xatol, maxfev) = payload
    topo = TreeTopology(vertex_count, edge_pairs, code)
    E = topo.edge_count

    def neg(theta):
        lengths = _lengths_from_theta(theta, E, L, LENGTH_FLOOR_FRACTION)
        try:
            return -objective(topo, lengths, k)
        except MgspecError:
            return _PENALTY

    res = minimize(
        neg,
        np.asarray(theta0, dtype=float),
        method="Nelder-Mead",
        options={
            "xatol": xatol,
            "fatol": 1e-11,
            "maxfev": maxfev,
            "maxiter": maxfev,
        },
    )
    return -float(res.fun), tuple(res.x), int(res.nit), bool(res.success)


def maximize_lengths(
    topology: TreeTopology,
    k: int,
    total_length: float = 1.0,
    restarts: int = 8,
    seed: int = 0,
    jobs: int = 1,
    xatol: float = 1e-7,
    maxfev: int = 2000,
) -> OptimizationResult:
    """Maximize mu_{k+1} * A^2 over edge lengths on one topology.

    Deterministic per (seed, parameters): Dirichlet-random starting length
    vectors and the landscape probe directions come from one seeded stream
    drawn up front, so results do not depend on ``jobs``.  Convergence is
    the Nelder-Mead simplex collapsing below ``xatol`` in softmax space.
    ``landscape_margin`` is best_product minus the best objective over 2E
    random perturbations of norm 1e-3 * L around the optimum.
    """
    if restarts < 1:
        raise BadParameter(f"restarts must be >= 1, got {restarts}")
    if k < 1:
        raise BadParameter(f"k must be >= 1, got {k}")
    if not total_length > 0:
        raise BadParameter(f"total_length must be positive, got {total_length!r}")
    E = topology.edge_count
    L = float(total_length)
    rng = np.random.default_rng(seed)
    starts = rng.dirichlet(np.ones(E), size=restarts)
    probes = rng.standard_normal(size=(2 * E, E))
    thetas = np.log(starts[:, :-1] / starts[:, -1:])
    payloads = [
        (topology.vertex_count, topology.edges, topology.code, k, L,
         tuple(thetas[i]), xatol, maxfev)
        for i in range(restarts)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_restart, payloads))
    else:
        outcomes = [_run_restart(p) for p in payloads]

    best_i = max(range(restarts), key=lambda i: (outcomes[i][0], -i))
    best_product, best_theta, best_nit, best_ok = outcomes[best_i]
    if best_product <= -_PENALTY / 2:
        raise SolverFailure("every restart failed to evaluate the objective")
    best_lengths = _lengths_from_theta(np.asarray(best_theta), E, L, LENGTH_FLOOR_FRACTION)

    margin = math.inf
    floor = LENGTH_FLOOR_FRACTION * L
    for d in probes:
        d = d - np.mean(d)
        norm = np.linalg.norm(d)
        if norm == 0.0:
            continue
        pert = best_lengths + d * (1e-3 * L / norm)
        if np.min(pert) <= floor:
            continue
        try:
            val = objective(topology, pert, k)
        except MgspecError:
            continue
        margin = min(margin, best_product - val)
    if not math.isfinite(margin):
        margin = 0.0

    bound = sharp_bound(k)
    if best_product > bound + 1e-8 * bound:
        raise SolverFailure(
            f"best product {best_product} violates the sharp bound {bound}"
        )
    return OptimizationResult(
        topology=topology,
        k=k,
        total_length=L,
        best_lengths=tuple(float(l) for l in best_lengths),
        best_product=float(best_product),
        iterations=best_nit,
        restarts_used=restarts,
        converged=best_ok,
        landscape_margin=float(margin),
    )


def _star3_code() -> str:
    return canonical_topology_code(4, ((0, 1), (0, 2), (0, 3)))


def global_search(
    edges_min: int,
    edges_max: int,
    k: int,
    restarts: int = 8,
    seed: int = 0,
    jobs: int = 1,
) -> GlobalSearchResult:
    """Maximize over every series-reduced topology with E in [edges_min, edges_max].

    The winner is the topology with the largest best product.  For k >= 2
    the winner is verified to be the 3-star with arm lengths near
    (2k-1, 1, 1)/(2k+1); a different outcome raises ConvergenceFailure,
    since it can only arise from an unconverged restart set.
    """
    if not 3 <= edges_min <= edges_max <= 8:
        raise BadParameter(
            f"edge range must satisfy 3 <= min <= max <= 8, got {edges_min}..{edges_max}"
        )
    topologies = []
    for E in range(edges_min, edges_max + 1):
        topologies.extend(enumerate_topologies(E))
    seeds = np.random.SeedSequence(seed).spawn(len(topologies))
    results = []
    for topo, ss in zip(topologies, seeds):
        results.append(
            maximize_lengths(
                topo, k,
                total_length=1.0,
                restarts=restarts,
                seed=ss,
                jobs=jobs,
            )
        )
    winner_index = max(
        range(len(results)), key=lambda i: (results[i].best_product, -i)
    )
    out = GlobalSearchResult(tuple(results), winner_index)
    if k >= 2 and edges_min == 3:
        win = out.winner
        expected = sorted(
            [(2 * k - 1) / (2 * k + 1), 1.0 / (2 * k + 1), 1.0 / (2 * k + 1)],
            reverse=True,
        )
        got = sorted(win.best_lengths, reverse=True)
        if win.topology.code != _star3_code() or any(
            abs(a - b) > 1e-2 for a, b in zip(got, expected)
        ):
            raise ConvergenceFailure(
                "global search did not recover the 3-star maximizer; "
                "increase restarts"
            )
    return out
