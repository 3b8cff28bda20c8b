"""Finite-element discretization of the standard Laplacian on a metric graph.

Continuous piecewise-linear elements on each edge, with vertex values shared
across incident edges (that sharing is exactly membership in H^1 of the
graph; the Kirchhoff derivative conditions are natural and never appear
explicitly).  The module provides

* ``discretize``       -- sparse stiffness/mass pair,
* ``count_below``      -- guaranteed eigenvalue counts from matrix inertia,
* ``compute_spectrum_fem`` -- eigenvalues via bisection on the inertia
  count plus inverse iteration, Richardson-extrapolated over mesh levels.

Because the elements are conforming and the mass matrix is consistent, each
discrete eigenvalue bounds its continuous counterpart from above; that
one-sided error is what makes ``count_below`` usable as a cross-check
against the secular solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.linalg import lapack

from .errors import BadParameter, ConvergenceFailure, FactorizationBreakdown
from .graphs import MetricGraph
from .spectra import SpectralPoint, Spectrum

__all__ = ["DiscreteOperator", "discretize", "count_below", "compute_spectrum_fem"]

_MAX_DENSE_DOF = 6000


@dataclass(frozen=True)
class DiscreteOperator:
    """Stiffness/mass pair with the edge-local to global DOF map."""

    stiffness: sp.csr_array
    mass: sp.csr_array
    dof_map: tuple[np.ndarray, ...]
    mesh_size: float
    _dense: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dof_count(self) -> int:
        return self.stiffness.shape[0]

    def dense_pair(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense (K, M), cached; used by the inertia and iteration kernels."""
        if "K" not in self._dense:
            self._dense["K"] = self.stiffness.toarray()
            self._dense["M"] = self.mass.toarray()
        return self._dense["K"], self._dense["M"]


def discretize(g: MetricGraph, h_target: float) -> DiscreteOperator:
    """Mesh each edge with ``ceil(length/h_target)`` equal segments (min 2).

    Element matrices: stiffness (1/h)[[1,-1],[-1,1]], consistent mass
    (h/6)[[2,1],[1,2]].  Vertex DOFs come first (index = vertex), interior
    edge nodes follow.
    """
    if not h_target > 0:
        raise BadParameter(f"h_target must be positive, got {h_target!r}")
    n_dof = g.vertex_count
    dof_map = []
    rows, cols, kvals, mvals = [], [], [], []
    max_h = 0.0
    for e in g.edges:
        n_e = max(2, math.ceil(e.length / h_target))
        he = e.length / n_e
        max_h = max(max_h, he)
        interior = np.arange(n_dof, n_dof + n_e - 1)
        n_dof += n_e - 1
        nodes = np.concatenate(([e.u], interior, [e.v]))
        dof_map.append(nodes)
        a, b = nodes[:-1], nodes[1:]
        rows.extend((a, b, a, b))
        cols.extend((a, b, b, a))
        k_diag = np.full(n_e, 1.0 / he)
        m_diag = np.full(n_e, 2.0 * he / 6.0)
        kvals.extend((k_diag, k_diag, -k_diag, -k_diag))
        mvals.extend((m_diag, m_diag, m_diag / 2.0, m_diag / 2.0))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    shape = (n_dof, n_dof)
    K = sp.csr_array(sp.coo_array((np.concatenate(kvals), (rows, cols)), shape=shape))
    M = sp.csr_array(sp.coo_array((np.concatenate(mvals), (rows, cols)), shape=shape))
    return DiscreteOperator(K, M, tuple(dof_map), max_h)


def _sytrf_inertia(A: np.ndarray) -> int:
    """Negative-eigenvalue count from a Bunch-Kaufman factorization (dsytrf).

    The factored matrix carries the block-diagonal D on its (sub)diagonal;
    ipiv distinguishes 1x1 pivots (positive entries) from 2x2 blocks
    (negative pairs).  Raises FactorizationBreakdown on a singular pivot,
    which happens when the shift hits a discrete eigenvalue exactly.
    """
    ldu, ipiv, info = lapack.dsytrf(A, lower=1, overwrite_a=1)
    if info > 0:
        raise FactorizationBreakdown("exactly singular pivot")
    if info < 0:
        raise BadParameter(f"dsytrf illegal argument {-info}")
    n = ldu.shape[0]
    neg = 0
    i = 0
    while i < n:
        if ipiv[i] > 0:
            d = ldu[i, i]
            if d < 0.0:
                neg += 1
            elif d == 0.0:
                raise FactorizationBreakdown("zero pivot")
            i += 1
        else:
            a, b, c = ldu[i, i], ldu[i + 1, i], ldu[i + 1, i + 1]
            det = a * c - b * b
            if det < 0.0:
                neg += 1
            elif det > 0.0 and a + c < 0.0:
                neg += 2
            elif det == 0.0:
                raise FactorizationBreakdown("singular 2x2 pivot block")
            i += 2
    return neg


def count_below(op: DiscreteOperator, sigma: float) -> int:
    """Number of generalized eigenvalues of (K, M) strictly below ``sigma``.

    Sylvester inertia: the count equals the number of negative pivots of a
    symmetric indefinite factorization of K - sigma*M.  If sigma lands on a
    discrete eigenvalue the factorization pivots break down; the shift is
    then perturbed by 1e-12*(1+|sigma|) and the count retried.
    """
    n = op.dof_count
    if n > _MAX_DENSE_DOF:
        raise BadParameter(f"dense inertia limited to {_MAX_DENSE_DOF} DOF, got {n}")
    K, M = op.dense_pair()
    shift = 0.0
    for attempt in range(4):
        A = K - (sigma + shift) * M
        try:
            return _sytrf_inertia(A)
        except FactorizationBreakdown:
            shift += 1e-12 * (1.0 + abs(sigma))
    raise FactorizationBreakdown(
        f"inertia at sigma={sigma} failed after {attempt + 1} shifts"
    )


def _slice_spectrum(op, lo, hi, clo, chi, rel_width):
    """Recursive bisection on count_below: brackets [(lo, hi, mult)] such
    that each bracket of width <= rel_width*(1+hi) holds ``mult`` discrete
    eigenvalues."""
    out = []
    stack = [(lo, hi, clo, chi)]
    while stack:
        a, b, ca, cb = stack.pop()
        if cb == ca:
            continue
        if b - a <= rel_width * (1.0 + abs(b)):
            out.append((a, b, cb - ca))
            continue
        mid = 0.5 * (a + b)
        cm = count_below(op, mid)
        stack.append((a, mid, ca, cm))
        stack.append((mid, b, cm, cb))
    out.sort(key=lambda t: t[0])
    return out


def _inverse_iteration(K, M, lo, hi, max_iter=60):
    """Polish one bracketed eigenvalue (or cluster) to near machine precision.

    Fixed-shift inverse iteration with the shift slightly off-center so it
    cannot coincide with the eigenvalue; returns the Rayleigh quotient.
    ``K`` and ``M`` are dense.
    """
    sigma = lo + 0.382 * (hi - lo)
    A = K - sigma * M
    try:
        lu = sla.lu_factor(A)
    except sla.LinAlgError:
        return 0.5 * (lo + hi)
    n = K.shape[0]
    x = np.cos(np.arange(1, n + 1, dtype=float))  # deterministic, unstructured
    x /= math.sqrt(x @ (M @ x))
    rho_old = None
    for _ in range(max_iter):
        y = sla.lu_solve(lu, M @ x)
        norm = math.sqrt(abs(y @ (M @ y)))
        if not (norm > 0 and math.isfinite(norm)):
            return 0.5 * (lo + hi)
        x = y / norm
        rho = float(x @ (K @ x))
        if rho_old is not None and abs(rho - rho_old) <= 1e-15 * (1.0 + abs(rho)):
            break
        rho_old = rho
    return rho


def _level_eigenvalues(op, count, comp_count, total_length):
    """Smallest ``count`` nonzero eigenvalues at one mesh level (list with
    clusters repeated by bracket multiplicity)."""
    # constants are the exact kernel; any sigma below pi^2/L^2 separates them
    sigma_lo = 1e-9 * (math.pi / total_length) ** 2
    if count_below(op, sigma_lo) != comp_count:
        raise ConvergenceFailure(
            "discrete kernel dimension does not match component count"
        )
    sigma_hi = (math.pi * (count + comp_count + 2) / total_length) ** 2
    for _ in range(80):
        if count_below(op, sigma_hi) >= comp_count + count:
            break
        sigma_hi *= 2.0
    else:
        raise ConvergenceFailure("could not bracket the requested eigenvalues")
    brackets = _slice_spectrum(
        op, sigma_lo, sigma_hi, comp_count, count_below(op, sigma_hi), 1e-8
    )
    K, M = op.dense_pair()
    values = []
    for lo, hi, mult in brackets:
        if len(values) >= count:
            break
        rho = _inverse_iteration(K, M, lo, hi)
        values.extend([rho] * mult)
    return values[:count]


def _richardson_diagonal(values: np.ndarray) -> np.ndarray:
    """Last diagonal entry of the Richardson tableau for O(h^2) data at
    mesh sizes h, h/2, h/4, ...; vectorized over eigenvalue indices."""
    t = values.copy()
    for i in range(1, values.shape[0]):
        t = t[1:] + (t[1:] - t[:-1]) / (4.0 ** i - 1.0)
    return t[0]


def compute_spectrum_fem(
    g: MetricGraph, count: int, h: float | None = None, levels: int = 3
) -> Spectrum:
    """First ``count`` eigenvalues by mesh refinement and extrapolation.

    Each level halves the mesh; eigenvalues are located by bisection on
    ``count_below`` and polished by inverse iteration, then Richardson-
    extrapolated assuming an O(h^2) leading error.  Multiplicities are
    inferred by clustering within 10x the extrapolation error estimate.
    """
    if count < 1:
        raise BadParameter(f"count must be >= 1, got {count}")
    if levels < 2:
        raise BadParameter(f"levels must be >= 2, got {levels}")
    if g.edge_count == 0:
        return Spectrum((), method="fem")
    comp = g.component_count
    L = g.total_length
    if h is None:
        lmin = float(min(e.length for e in g.edges))
        h = min(lmin, L / (2.0 * (count + 2)))
    zero = SpectralPoint(0.0, min(comp, count), 0.0)
    need = count - zero.multiplicity
    if need <= 0:
        return Spectrum((zero,), method="fem", meta={"h": h, "levels": levels})

    per_level = []
    for m in range(levels):
        op = discretize(g, h / 2.0 ** m)
        if op.dof_count < need + comp + 2:
            op = discretize(g, L / (2.0 * (need + comp + 2)))
        per_level.append(_level_eigenvalues(op, need, comp, L))

    values = np.array(per_level)  # (levels, need)
    final = _richardson_diagonal(values)
    # error estimate: change relative to the tableau one level shallower
    prev_diag = _richardson_diagonal(values[:-1]) if levels >= 3 else values[-1]
    errs = np.abs(final - prev_diag) + 1e-14 * (1.0 + np.abs(final))

    points = [zero] if zero.multiplicity > 0 else []
    i = 0
    while i < need:
        j = i + 1
        tol = 10.0 * errs[i]
        while j < need and abs(final[j] - final[i]) <= max(
            10.0 * errs[j], tol, 1e-13 * (1.0 + abs(final[i]))
        ):
            j += 1
        cluster = final[i:j]
        points.append(
            SpectralPoint(float(np.mean(cluster)), j - i, float(np.max(errs[i:j])))
        )
        i = j
    return Spectrum(tuple(points), method="fem", meta={"h": h, "levels": levels})
