"""Exact-model eigenvalue computation via the secular (wave-matching) matrix.

On each edge of length l a Laplacian eigenfunction at energy mu = kappa^2 is
f_e(x) = a_e cos(kappa x) + b_e sin(kappa x).  Continuity of traces at every
vertex plus the Kirchhoff condition (vanishing sum of derivatives taken into
the edges) gives a real 2E x 2E linear system M(kappa) (a, b)^T = 0.
kappa^2 is an eigenvalue exactly when M(kappa) is rank-deficient, and its
multiplicity equals the nullity.

Eigenvalues are found by scanning the smallest singular value of the
row-normalized M(kappa) on a kappa grid, refining each dip by golden-section
minimization, and reading the multiplicity off the number of near-zero
singular values.  Smallest-singular-value minimization (instead of
determinant sign changes) is essential: double eigenvalues produce
determinant minima without sign change but are picked up robustly by
singular values.

Every computed spectrum is verified against an independent count: the FEM
inertia count of eigenvalues below a checkpoint placed in a spectral gap
must agree exactly, else the scan is escalated to a finer grid and finally
fails loudly with ``CountMismatch``.  The zero eigenvalue is handled
analytically (multiplicity one on a connected graph), never by scanning
near kappa = 0 where M degenerates.
"""

from __future__ import annotations

import math

import numpy as np

from . import fem
from .errors import (
    BadParameter,
    ConvergenceFailure,
    CountMismatch,
    NonPositiveKappa,
    NotConnected,
)
from .graphs import MetricGraph, components
from .spectra import SpectralPoint, Spectrum, spectrum_of_union

__all__ = [
    "SecularSystem",
    "assemble_secular_matrix",
    "secular_nullity",
    "compute_spectrum_secular",
    "compute_spectrum_secular_union",
]

# Detection threshold on the normalized smallest singular value.  Separates
# true rank deficiencies (refined dips reach ~1e-13) from near-misses at
# desk scale (E <= 10, first few dozen eigenvalues).
DETECTION_THRESHOLD = 1e-6

# Grid-level prefilter: only dips below this get refined.  Row-normalized
# entries are O(1), so sigma_min away from roots is O(0.1..1) while a dip
# sampled within half a grid step of a root stays well below this.
_PREFILTER = 0.25

# A root is "suspect" when the singular value just beyond its counted
# multiplicity is also small: a nearly-degenerate neighbor may be hiding in
# the same grid basin.  Suspects get a local zoom and an exact FEM-inertia
# arbitration of the cluster multiplicity.
_SUSPECT = 5e-3

_WINDOW = 256
_MAX_ESCALATIONS = 3


class SecularSystem:
    """Precomputed sparse structure of kappa -> M(kappa) for one graph.

    Row layout, per vertex: deg-1 pairwise-difference continuity rows over
    the incident edge traces, then one Kirchhoff row summing the derivatives
    oriented into the edges.  Column 2e holds a_e, column 2e+1 holds b_e.
    """

    def __init__(self, graph: MetricGraph):
        if graph.edge_count == 0:
            raise BadParameter("secular matrix needs at least one edge")
        if not graph.is_connected:
            raise NotConnected("secular matrix is defined for connected graphs")
        self.graph = graph
        self.size = 2 * graph.edge_count
        self._lengths = graph.lengths()

        # entry kinds: value = sign * {1, cos(kl_e), sin(kl_e), k, k sin, k cos}
        ent = {k: ([], [], [], []) for k in ("one", "cos", "sin", "kap", "ksin", "kcos")}

        def add(kind, row, col, edge, sign):
            r, c, e, s = ent[kind]
            r.append(row)
            c.append(col)
            e.append(edge)
            s.append(sign)

        def add_trace(row, edge, end, sign):
            if end == 0:
                add("one", row, 2 * edge, edge, sign)
            else:
                add("cos", row, 2 * edge, edge, sign)
                add("sin", row, 2 * edge + 1, edge, sign)

        def add_derivative(row, edge, end, sign):
            # derivative into the edge: f'(0) = k b;  -f'(l) = k(a sin - b cos)
            if end == 0:
                add("kap", row, 2 * edge + 1, edge, sign)
            else:
                add("ksin", row, 2 * edge, edge, sign)
                add("kcos", row, 2 * edge + 1, edge, -sign)

        row = 0
        for inc in graph.incidence():
            for (ei, pi), (ej, pj) in zip(inc, inc[1:]):
                add_trace(row, ei, pi, +1.0)
                add_trace(row, ej, pj, -1.0)
                row += 1
            for ei, pi in inc:
                add_derivative(row, ei, pi, +1.0)
            row += 1
        if row != self.size:
            raise BadParameter(
                f"row count {row} != 2E = {self.size}; graph has isolated vertices"
            )
        self._entries = {
            k: (
                np.asarray(r, dtype=np.intp),
                np.asarray(c, dtype=np.intp),
                np.asarray(e, dtype=np.intp),
                np.asarray(s, dtype=float),
            )
            for k, (r, c, e, s) in ent.items()
        }

    def matrices(self, kappas) -> np.ndarray:
        """Stack of raw (un-normalized) secular matrices, shape (n, 2E, 2E)."""
        ks = np.atleast_1d(np.asarray(kappas, dtype=float))
        if np.any(ks <= 0.0) or not np.all(np.isfinite(ks)):
            raise NonPositiveKappa("kappa values must be positive and finite")
        phase = ks[:, None] * self._lengths[None, :]
        C = np.cos(phase)
        S = np.sin(phase)
        M = np.zeros((ks.size, self.size, self.size))
        r, c, e, s = self._entries["one"]
        M[:, r, c] = s
        r, c, e, s = self._entries["cos"]
        M[:, r, c] = s * C[:, e]
        r, c, e, s = self._entries["sin"]
        M[:, r, c] = s * S[:, e]
        r, c, e, s = self._entries["kap"]
        M[:, r, c] = s * ks[:, None]
        r, c, e, s = self._entries["ksin"]
        M[:, r, c] = s * (ks[:, None] * S[:, e])
        r, c, e, s = self._entries["kcos"]
        M[:, r, c] = s * (ks[:, None] * C[:, e])
        return M

    def matrix(self, kappa: float) -> np.ndarray:
        return self.matrices([kappa])[0]

    def normalized_matrices(self, kappas) -> np.ndarray:
        """Row-normalized stack; removes the kappa scaling of Kirchhoff rows
        so the detection threshold is kappa-independent."""
        M = self.matrices(kappas)
        norms = np.sqrt(np.sum(M * M, axis=2))
        return M / norms[:, :, None]

    def sigma_min(self, kappas) -> np.ndarray:
        """Smallest singular value of the row-normalized matrix, per kappa."""
        sv = np.linalg.svd(self.normalized_matrices(kappas), compute_uv=False)
        return sv[:, -1]

    def singular_values(self, kappas) -> np.ndarray:
        """All singular values (descending) of the row-normalized stack."""
        return np.linalg.svd(self.normalized_matrices(kappas), compute_uv=False)


def assemble_secular_matrix(g: MetricGraph, kappa: float) -> np.ndarray:
    """The raw 2E x 2E wave-matching matrix M(kappa)."""
    return SecularSystem(g).matrix(kappa)


def secular_nullity(g: MetricGraph, kappa: float, tol: float = DETECTION_THRESHOLD) -> int:
    """Multiplicity estimate: singular values of row-normalized M below tol.

    Equals the eigenvalue multiplicity when kappa^2 is an eigenvalue (and 0
    when it is not)."""
    sv = SecularSystem(g).singular_values([kappa])[0]
    return int(np.sum(sv < tol))


def _refine_brackets(system: SecularSystem, lo, hi, w_target: float) -> np.ndarray:
    """Batched golden-section minimization of sigma_min over brackets,
    finished by a two-sided linear fit.

    Near a root sigma_min is a V: c|kappa - kappa*| plus curvature, so once
    the bracket width w is small the root is the intersection of the two
    side lines, kappa* = a + w f(a) / (f(a) + f(b)), with bias O(w^2).
    """
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a = np.asarray(lo, dtype=float).copy()
    b = np.asarray(hi, dtype=float).copy()
    width0 = float(np.max(b - a))
    iters = max(
        0, math.ceil(math.log(max(width0 / w_target, 1.0)) / -math.log(invphi))
    )
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = system.sigma_min(c)
    fd = system.sigma_min(d)
    for _ in range(iters):
        left = fc < fd
        old_c, old_d, old_fc, old_fd = c, d, fc, fd
        a = np.where(left, a, old_c)
        b = np.where(left, old_d, b)
        c = np.where(left, b - invphi * (b - a), old_d)
        d = np.where(left, old_c, a + invphi * (b - a))
        x_new = np.where(left, c, d)
        f_new = system.sigma_min(x_new)
        fc = np.where(left, f_new, old_fd)
        fd = np.where(left, old_fc, f_new)
    fends = system.sigma_min(np.concatenate([a, b]))
    fa, fb = fends[: a.size], fends[a.size:]
    denom = fa + fb
    mid = 0.5 * (a + b)
    with np.errstate(invalid="ignore", divide="ignore"):
        fitted = a + (b - a) * fa / denom
    return np.where(denom > 0.0, fitted, mid)


def _find_dips(system, ks, sigma, prefilter):
    """Interior local-minimum brackets of a sampled sigma_min curve."""
    inner = sigma[1:-1]
    is_min = (inner <= sigma[:-2]) & (inner <= sigma[2:]) & (inner < prefilter)
    return np.nonzero(is_min)[0] + 1


def _zoom_cluster(system, kappa_hat, delta, w_target):
    """Resolve a suspect basin into its distinct dips.

    Two local scans: one at the basin scale to split moderately separated
    pairs, one three decades finer for tight ones.  Splits below the fine
    resolution stay a single dip; their multiplicity comes from the nullity
    (sub-1e-6 separations) or from the FEM arbitration of the caller.
    Returns refined dip positions (sorted, deduplicated).
    """
    spans = (0.9 * delta, 3e-4 * max(1.0, kappa_hat))
    dips = np.array([kappa_hat])
    for span in spans:
        ks = np.linspace(max(kappa_hat - span, 1e-12), kappa_hat + span, 513)
        sigma = system.sigma_min(ks)
        js = _find_dips(system, ks, sigma, _PREFILTER)
        if js.size < 2:
            continue
        kstars = _refine_brackets(system, ks[js - 1], ks[js + 1], w_target)
        kstars = np.sort(kstars)
        keep = [kstars[0]]
        for k in kstars[1:]:
            if k - keep[-1] > 1e-11 * (1.0 + k):
                keep.append(k)
        if len(keep) >= 2:
            smin = system.sigma_min(np.asarray(keep))
            good = [k for k, s in zip(keep, smin) if s < DETECTION_THRESHOLD]
            if len(good) >= 2:
                return np.asarray(good)
    return dips


def _fem_count_between(g, mu_lo, mu_hi, lmin, edge_rel_gap):
    """Exact number of eigenvalues in (mu_lo, mu_hi) via FEM inertia.

    Both endpoint counts must be stable across a mesh halving; returns None
    when that cannot be reached (caller falls back to the global check).
    """
    kappa = math.sqrt(mu_hi)
    h = min(lmin, math.sqrt(1.5 * max(edge_rel_gap, 1e-7)) / kappa)
    prev = None
    for _ in range(8):
        op = fem.discretize(g, h)
        if op.dof_count > 3000:
            return None
        pair = (fem.count_below(op, mu_lo), fem.count_below(op, mu_hi))
        if pair == prev:
            return pair[1] - pair[0]
        prev = pair
        h /= 2.0
    return None


class _ScanState:
    """Accumulates verified roots during a scan."""

    def __init__(self, need):
        self.need = need
        self.roots: list[tuple[float, int]] = []
        self.cum = 0
        self.idx_complete = None
        self.blocked_until = -math.inf  # kappa consumed by an arbitration

    def add(self, kappa, mult):
        if mult < 1:
            return
        self.roots.append((float(kappa), int(mult)))
        self.cum += mult
        if self.idx_complete is None and self.cum >= self.need:
            self.idx_complete = len(self.roots) - 1

    @property
    def done(self):
        return self.idx_complete is not None and len(self.roots) >= self.idx_complete + 3


def _scan_roots(system, g, need, delta, w_target, kappa_hard, lmin):
    """Scan sigma_min on a kappa grid and return refined roots.

    Returns ``(roots, idx_complete)`` where roots is a list of
    ``(kappa, multiplicity)`` and ``idx_complete`` indexes the root at which
    the cumulative multiplicity first reaches ``need``; scanning continues
    for two further distinct roots so a verification checkpoint can be
    placed in a spectral gap.

    Clean roots take their multiplicity from the nullity.  Suspect basins
    (next singular value also small: a possibly unresolved near-degenerate
    cluster) are zoomed locally and their total multiplicity is settled by
    an exact FEM inertia count over the enclosing interval.
    """
    total_length = g.total_length
    kappa0 = 0.5 * math.pi / total_length
    # no positive eigenvalue lies below pi^2/L^2 (the interval minimizes the
    # spectral gap), so dips refined below this are shadows of mu = 0
    accept_min = 0.9 * math.pi / total_length
    state = _ScanState(need)
    pos = 1
    while True:
        idx = pos - 1 + np.arange(_WINDOW + 2)
        ks = kappa0 + delta * idx
        if ks[0] > kappa_hard:
            raise ConvergenceFailure(
                f"no {need} eigenvalues found below kappa={kappa_hard:.3g}"
            )
        sigma = system.sigma_min(ks)
        js = _find_dips(system, ks, sigma, _PREFILTER)
        if js.size:
            kstars = _refine_brackets(system, ks[js - 1], ks[js + 1], w_target)
            order = np.argsort(kstars)
            svals = system.singular_values(kstars[order])
            for kstar, sv in zip(kstars[order], svals):
                _classify_root(system, g, state, float(kstar), sv,
                               accept_min, delta, w_target, lmin)
                if state.done:
                    break
        if state.done:
            return state.roots, state.idx_complete
        pos += _WINDOW


def _classify_root(system, g, state, kstar, sv, accept_min, delta, w_target, lmin):
    if kstar < accept_min or kstar <= state.blocked_until:
        return
    if sv[-1] >= DETECTION_THRESHOLD:
        return
    if state.roots and abs(kstar - state.roots[-1][0]) <= 1e-11 * (1.0 + kstar):
        return
    mult = int(np.sum(sv < DETECTION_THRESHOLD))
    next_sv = sv[-(mult + 1)] if mult < sv.size else math.inf
    if next_sv >= _SUSPECT:
        state.add(kstar, mult)
        return

    # suspect: zoom, then settle the cluster count by FEM inertia
    dips = _zoom_cluster(system, kstar, delta, w_target)
    pad = 0.45 * delta
    lo = dips[0] - pad
    if state.roots:
        lo = max(lo, 0.5 * (state.roots[-1][0] + dips[0]))
    lo = max(lo, accept_min * 0.5)
    hi = dips[-1] + pad
    edge_rel_gap = 2.0 * pad / hi
    m_true = _fem_count_between(g, lo * lo, hi * hi, lmin, edge_rel_gap)
    state.blocked_until = hi
    if m_true is None:
        # arbitration failed; keep the nullity and let the global
        # verification escalate if it was wrong
        state.add(kstar, mult)
        return
    if m_true == 0:
        return  # spurious dip without a root
    if dips.size == 1:
        state.add(dips[0], m_true)
        return
    nullities = [
        int(np.sum(s < DETECTION_THRESHOLD))
        for s in system.singular_values(dips)
    ]
    if m_true == dips.size:
        for k in dips:
            state.add(k, 1)
    elif sum(nullities) == m_true:
        for k, m in zip(dips, nullities):
            state.add(k, m)
    else:
        # unresolvable sub-grid structure: one entry at the weighted center
        state.add(float(np.mean(dips)), m_true)


def _fem_count_matches(g, mu_check, expected, rel_gap, lmin) -> bool:
    """Confirm the secular count below ``mu_check`` by FEM inertia.

    FEM eigenvalues of conforming elements lie above the true ones, so any
    FEM count exceeding ``expected`` proves the scan missed a root; counts
    that agree on two successive mesh halvings confirm the scan.
    """
    kappa = math.sqrt(mu_check)
    h = min(lmin, math.sqrt(1.5 * max(rel_gap, 1e-6)) / kappa)
    prev = None
    for _ in range(8):
        op = fem.discretize(g, h)
        if op.dof_count > 3000:
            return False
        c = fem.count_below(op, mu_check)
        if c > expected:
            return False
        if c == expected and prev == expected:
            return True
        prev = c
        h /= 2.0
    return False


def compute_spectrum_secular(
    g: MetricGraph, count: int, tol: float = 1e-12
) -> Spectrum:
    """First ``count`` eigenvalues of a connected graph, with multiplicities.

    ``tol`` is the kappa tolerance of the dip refinement.  The returned
    spectrum may carry slightly more than ``count`` eigenvalues when the
    last distinct eigenvalue is multiple; the final entry always keeps its
    full multiplicity.

    Raises:
        NotConnected: input graph is disconnected.
        CountMismatch: FEM inertia disagrees with the scan even after grid
            escalation.
        ConvergenceFailure: scan window exhausted.
    """
    if count < 1:
        raise BadParameter(f"count must be >= 1, got {count}")
    if not tol > 0:
        raise BadParameter(f"tol must be positive, got {tol!r}")
    if g.edge_count == 0:
        # a graph with no edges carries no L^2 mass: empty spectrum
        return Spectrum((), method="secular")
    if not g.is_connected:
        raise NotConnected("compute_spectrum_secular requires a connected graph")

    L = g.total_length
    lmin = float(min(e.length for e in g.edges))
    zero = SpectralPoint(0.0, 1, 0.0)
    if count == 1:
        return Spectrum((zero,), method="secular")
    need = count - 1
    system = SecularSystem(g)
    # step fine enough for the dip structure (shortest-edge scale) but
    # floored at a fraction of the mean Weyl spacing pi/L, since the root
    # density is bounded by L/pi; misses are caught by the FEM cross-check
    # and trigger a rescan at a finer grid
    delta = min(max(lmin / 8.0, math.pi / (128.0 * L)), math.pi / (8.0 * L))
    w_target = min(1e-5, max(math.sqrt(tol) / 3.0, 1e-8))
    kappa_hard = 4.0 * math.pi * (need + g.vertex_count + g.edge_count + 8) / L

    last_check = None
    for escalation in range(_MAX_ESCALATIONS):
        roots, idx_complete = _scan_roots(
            system, g, need, delta, w_target, kappa_hard, lmin
        )
        # checkpoint in the wider of the two gaps beyond the requested count
        gap1 = roots[idx_complete + 1][0] - roots[idx_complete][0]
        gap2 = roots[idx_complete + 2][0] - roots[idx_complete + 1][0]
        left = idx_complete if gap1 >= gap2 else idx_complete + 1
        k_lo, k_hi = roots[left][0], roots[left + 1][0]
        kappa_check = 0.5 * (k_lo + k_hi)
        expected = 1 + sum(m for _, m in roots[: left + 1])
        rel_gap = (k_hi * k_hi - k_lo * k_lo) / (kappa_check * kappa_check)
        last_check = (kappa_check, expected)
        if _fem_count_matches(g, kappa_check**2, expected, rel_gap, lmin):
            kappa_err = max(w_target**2, tol)
            points = [zero]
            for kappa, mult in roots[: idx_complete + 1]:
                points.append(SpectralPoint(kappa * kappa, mult, 2.0 * kappa * kappa_err))
            meta = {
                "grid_step": delta,
                "escalations": escalation,
                "kappa_check": kappa_check,
                "verified_count": expected,
            }
            return Spectrum(tuple(points), method="secular", meta=meta)
        delta /= 4.0
    kappa_check, expected = last_check
    raise CountMismatch(
        f"secular scan found {expected} eigenvalues below mu={kappa_check**2:.9g} "
        f"but FEM inertia disagrees after {_MAX_ESCALATIONS} grid escalations"
    )


def compute_spectrum_secular_union(
    g: MetricGraph, count: int, tol: float = 1e-12
) -> Spectrum:
    """Secular spectrum of a possibly disconnected graph.

    Each connected component is solved separately and the spectra merged;
    components without edges contribute nothing.
    """
    parts = [c for c in components(g) if c.edge_count > 0]
    if not parts:
        return Spectrum((), method="secular")
    if len(parts) == 1 and g.edge_count == parts[0].edge_count:
        return compute_spectrum_secular(parts[0], count, tol)
    spectra = [compute_spectrum_secular(c, count, tol) for c in parts]
    merged = spectrum_of_union(spectra, tol=1e-9, method="secular")
    # drop trailing entries beyond the requested count, keeping the final
    # entry's full multiplicity
    points = []
    cum = 0
    for p in merged.points:
        points.append(p)
        cum += p.multiplicity
        if cum >= count:
            break
    return Spectrum(tuple(points), method="secular", meta=merged.meta)
