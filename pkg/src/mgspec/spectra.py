"""Spectra as ordered (eigenvalue, multiplicity) lists with error estimates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import BadParameter

__all__ = ["SpectralPoint", "Spectrum", "spectrum_of_union"]


@dataclass(frozen=True)
class SpectralPoint:
    """One distinct eigenvalue with its multiplicity and an error estimate."""

    mu: float
    multiplicity: int
    error: float = 0.0


@dataclass(frozen=True)
class Spectrum:
    """Nondecreasing eigenvalue list; distinct values strictly increase.

    ``method`` tags the producing solver ("secular", "fem", "union", ...).
    ``meta`` carries solver diagnostics (grid step, verification checkpoint);
    it is excluded from equality comparisons.
    """

    points: tuple[SpectralPoint, ...]
    method: str = ""
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        prev = None
        for p in self.points:
            if p.multiplicity < 1:
                raise BadParameter(f"multiplicity must be >= 1, got {p.multiplicity}")
            if prev is not None and not p.mu > prev:
                raise BadParameter(
                    f"distinct eigenvalues must strictly increase: {prev} then {p.mu}"
                )
            prev = p.mu

    def values(self, count: int | None = None) -> list[float]:
        """Eigenvalues repeated by multiplicity, optionally truncated."""
        out: list[float] = []
        for p in self.points:
            out.extend([p.mu] * p.multiplicity)
            if count is not None and len(out) >= count:
                return out[:count]
        return out

    def value(self, j: int) -> float:
        """The j-th eigenvalue, 1-based, counted with multiplicity."""
        if j < 1:
            raise BadParameter(f"eigenvalue index must be >= 1, got {j}")
        vals = self.values(j)
        if len(vals) < j:
            raise BadParameter(f"spectrum holds {len(vals)} eigenvalues, need {j}")
        return vals[j - 1]

    @property
    def total_multiplicity(self) -> int:
        return sum(p.multiplicity for p in self.points)

    def count_below(self, threshold: float) -> int:
        return sum(p.multiplicity for p in self.points if p.mu < threshold)

    def to_json_obj(self) -> list[dict]:
        return [{"mu": p.mu, "mult": p.multiplicity} for p in self.points]

    @classmethod
    def from_json_obj(cls, obj: Iterable[dict], method: str = "") -> "Spectrum":
        pts = tuple(SpectralPoint(float(d["mu"]), int(d["mult"])) for d in obj)
        return cls(pts, method=method)


def spectrum_of_union(
    spectra: Sequence[Spectrum], tol: float = 1e-9, method: str = "union"
) -> Spectrum:
    """Spectrum of a disjoint union: merged nondecreasing eigenvalue list.

    Values within ``tol * (1 + |mu|)`` of each other coalesce into one entry
    whose multiplicity is the sum; the merged value is the multiplicity-
    weighted mean and the error estimate covers the spread.
    """
    raw: list[SpectralPoint] = []
    for s in spectra:
        raw.extend(s.points)
    raw.sort(key=lambda p: p.mu)
    merged: list[SpectralPoint] = []
    for p in raw:
        if merged and abs(p.mu - merged[-1].mu) <= tol * (1.0 + abs(p.mu)):
            q = merged[-1]
            m = q.multiplicity + p.multiplicity
            mu = (q.mu * q.multiplicity + p.mu * p.multiplicity) / m
            err = max(q.error, p.error, abs(p.mu - q.mu))
            merged[-1] = SpectralPoint(mu, m, err)
        else:
            merged.append(p)
    return Spectrum(tuple(merged), method=method)
