"""Isoperimetric bounds as checkable predicates.

For a finite connected series-reduced tree with E >= 3 edges and average
edge length A = L/E, the (k+1)-st eigenvalue satisfies the sharp bound

    mu_{k+1} * A^2  <=  (2k+1)^2 pi^2 / 36,

with equality exactly for equilateral stars (k = 1) and for 3-stars with
arm lengths (2k-1, 1, 1) * L / (2k+1) (k >= 2).  A second, degree-based
bound reads mu_{k+1} <= (k - 1 + B/2)^2 pi^2 / L^2 where B is the number
of degree-1 vertices; on 3-stars the two coincide.  The interval, excluded
by the E >= 3 hypothesis, has mu_{k+1} A^2 = k^2 pi^2, strictly above the
tree bound.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import BadParameter, HypothesisViolated, NotATree
from .graphs import MetricGraph, summarize
from .spectra import Spectrum

__all__ = [
    "BoundReport",
    "sharp_bound",
    "check_bound",
    "bkkm_bound",
    "interval_product",
    "EQUALITY_RTOL",
]

# Relative tolerance for flagging equality in the sharp bound: an order
# above secular-solver precision, several below the gap between the
# maximizer and its nearest perturbed neighbors at desk scale.
EQUALITY_RTOL = 1e-8

_CSV_FIELDS = ("k", "mu_value", "a_squared", "product", "bound", "gap", "is_equality")


@dataclass(frozen=True)
class BoundReport:
    """Evaluation of the sharp tree bound on one graph at one index."""

    k: int
    mu_value: float
    a_squared: float
    product: float
    bound: float
    gap: float
    is_equality: bool

    def to_json_dict(self) -> dict:
        return {f: getattr(self, f) for f in _CSV_FIELDS}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @staticmethod
    def csv_header() -> str:
        return ",".join(_CSV_FIELDS)

    def to_csv_row(self) -> str:
        vals = [repr(getattr(self, f)) for f in _CSV_FIELDS[:-1]]
        vals.append("true" if self.is_equality else "false")
        return ",".join(vals)


def sharp_bound(k: int) -> float:
    """The sharp upper bound (2k+1)^2 pi^2 / 36 for mu_{k+1} * A^2 on trees."""
    if k < 1:
        raise BadParameter(f"k must be >= 1, got {k}")
    return (2 * k + 1) ** 2 * math.pi**2 / 36.0


def check_bound(
    g: MetricGraph, k: int, spectrum: Spectrum, equality_rtol: float = EQUALITY_RTOL
) -> BoundReport:
    """Evaluate mu_{k+1} * A^2 against the sharp bound.

    The graph must be a connected tree with at least three edges and no
    degree-2 vertices (the bound's hypothesis class; degree-2 vertices are
    rejected rather than silently suppressed since suppression changes the
    average edge length).

    Raises:
        HypothesisViolated: graph outside the hypothesis class.
        BadParameter: the spectrum holds fewer than k+1 eigenvalues.
    """
    bound = sharp_bound(k)
    if not g.is_tree:
        raise HypothesisViolated("bound applies to connected trees")
    if g.edge_count < 3:
        raise HypothesisViolated("bound applies to trees with at least 3 edges")
    if 2 in g.degrees():
        raise HypothesisViolated(
            "tree has a degree-2 vertex; suppress_degree_two first"
        )
    mu = spectrum.value(k + 1)
    summary = summarize(g)
    a_sq = summary.average_edge_length**2
    product = mu * a_sq
    gap = bound - product
    return BoundReport(
        k=k,
        mu_value=mu,
        a_squared=a_sq,
        product=product,
        bound=bound,
        gap=gap,
        is_equality=bool(abs(gap) <= equality_rtol * bound),
    )


def bkkm_bound(g: MetricGraph, k: int) -> float:
    """Degree-based bound (k - 1 + B/2)^2 pi^2 / L^2, B = #degree-1 vertices.

    Holds for every connected tree; coincides with the sharp average-length
    bound on 3-stars."""
    if k < 1:
        raise BadParameter(f"k must be >= 1, got {k}")
    if not g.is_tree:
        raise NotATree("degree-based bound applies to connected trees")
    boundary = sum(1 for d in g.degrees() if d == 1)
    L = g.total_length
    return (k - 1 + boundary / 2.0) ** 2 * math.pi**2 / (L * L)


def interval_product(k: int) -> float:
    """mu_{k+1} * A^2 = k^2 pi^2 for the interval (where A = L).

    Always strictly larger than the tree bound, which is why intervals are
    excluded from the maximization class."""
    if k < 1:
        raise BadParameter(f"k must be >= 1, got {k}")
    value = k * k * math.pi**2
    # 36 k^2 > (2k+1)^2 for k >= 1
    assert value > sharp_bound(k)
    return value
