"""Dyadic grids and sparse discretized measures.

A :class:`DyadicMeasure` at scale ``k`` assigns positive mass to finitely many
half-open cells ``2**-k * (c + [0, 1)**d)`` with ``c`` an integer vector.
Cells are stored as a lexicographically sorted ``(n, d)`` int64 array next to
a float64 mass array; both arrays are read-only once built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import EmptyMeasureError, InputError, ParameterError

__all__ = [
    "CellIndex",
    "DyadicMeasure",
    "DimEstimate",
    "discretize",
    "coarsen",
    "lq_norm",
    "lq_power_sum",
    "entropy",
    "component",
    "restrict_normalize",
    "dim_fit",
    "lq_dimension",
    "measure_dimension",
    "parse_q",
]

_COORD_LIMIT = 2**62


@dataclass(frozen=True, order=True)
class CellIndex:
    """Lattice coordinates of the cell ``2**-scale * (coords + [0,1)**d)``."""

    scale: int
    coords: tuple[int, ...]

    @property
    def d(self) -> int:
        return len(self.coords)

    def anchor(self) -> tuple[float, ...]:
        return tuple(math.ldexp(c, -self.scale) for c in self.coords)


def _sorted_unique(coords: np.ndarray, masses: np.ndarray):
    """Sort rows lexicographically and sum masses of repeated rows."""
    n = coords.shape[0]
    if n == 0:
        return coords, masses
    if coords.shape[1] == 1:
        order = np.argsort(coords[:, 0], kind="stable")
    else:
        order = np.lexsort(coords.T[::-1])
    coords = coords[order]
    masses = masses[order]
    if n > 1:
        new = np.empty(n, dtype=bool)
        new[0] = True
        np.any(coords[1:] != coords[:-1], axis=1, out=new[1:])
        if not new.all():
            starts = np.flatnonzero(new)
            masses = np.add.reduceat(masses, starts)
            coords = coords[starts]
    return coords, masses


@dataclass(frozen=True, eq=False)
class DyadicMeasure:
    """Sparse nonnegative measure on the lattice ``2**-k Z**d``.

    Use :meth:`from_arrays` rather than the raw constructor; it sorts,
    merges duplicate cells, drops zero masses and freezes the arrays.
    """

    d: int
    k: int
    coords: np.ndarray
    masses: np.ndarray
    total: float

    @classmethod
    def from_arrays(cls, coords, masses, k: int, d: int | None = None,
                    *, presorted: bool = False) -> "DyadicMeasure":
        coords = np.asarray(coords, dtype=np.int64)
        masses = np.asarray(masses, dtype=np.float64)
        if coords.ndim == 1:
            coords = coords.reshape(-1, 1) if d in (None, 1) else coords.reshape(-1, d)
        if d is None:
            d = coords.shape[1]
        if coords.shape != (masses.shape[0], d):
            raise InputError(f"coords shape {coords.shape} does not match {masses.shape[0]} masses in d={d}")
        if k < 0:
            raise ParameterError("scale k must be nonnegative")
        if not np.all(np.isfinite(masses)):
            raise InputError("masses must be finite")
        if np.any(masses < 0):
            raise InputError("masses must be nonnegative")
        keep = masses > 0
        if not keep.all():
            coords, masses = coords[keep], masses[keep]
        if not presorted:
            coords, masses = _sorted_unique(coords, masses)
        coords = np.ascontiguousarray(coords)
        masses = np.ascontiguousarray(masses)
        coords.flags.writeable = False
        masses.flags.writeable = False
        return cls(d=int(d), k=int(k), coords=coords, masses=masses,
                   total=float(masses.sum()))

    @classmethod
    def dirac(cls, cell: Sequence[int], k: int, mass: float = 1.0) -> "DyadicMeasure":
        cell = np.asarray(cell, dtype=np.int64).reshape(1, -1)
        return cls.from_arrays(cell, [mass], k, cell.shape[1])

    @property
    def nnz(self) -> int:
        return int(self.masses.shape[0])

    def anchors(self) -> np.ndarray:
        """Lattice points (lower-left cell corners) as floats."""
        return np.ldexp(self.coords.astype(np.float64), -self.k)

    def centers(self) -> np.ndarray:
        return np.ldexp(self.coords.astype(np.float64) + 0.5, -self.k)

    @property
    def cells(self) -> dict[CellIndex, float]:
        return {CellIndex(self.k, tuple(int(c) for c in row)): float(m)
                for row, m in zip(self.coords, self.masses)}

    def mass_at(self, coords: Sequence[int]) -> float:
        target = np.asarray(coords, dtype=np.int64)
        hit = np.flatnonzero(np.all(self.coords == target, axis=1))
        return float(self.masses[hit[0]]) if hit.size else 0.0

    def normalized(self) -> "DyadicMeasure":
        if self.total <= 0:
            raise EmptyMeasureError("cannot normalize a zero measure")
        return DyadicMeasure.from_arrays(self.coords, self.masses / self.total,
                                         self.k, self.d, presorted=True)

    def is_probability(self, tol: float = 1e-12) -> bool:
        return abs(self.total - 1.0) <= tol

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Inclusive lower and upper lattice coordinates of the support."""
        return self.coords.min(axis=0), self.coords.max(axis=0)

    def support_radius(self) -> float:
        """Radius of the smallest origin-centred ball containing all anchors."""
        if self.nnz == 0:
            return 0.0
        return float(np.sqrt((self.anchors() ** 2).sum(axis=1)).max())

    def scaled(self, factor: float) -> "DyadicMeasure":
        return DyadicMeasure.from_arrays(self.coords, self.masses * factor,
                                         self.k, self.d, presorted=True)

    def same_cells(self, other: "DyadicMeasure") -> bool:
        return (self.d == other.d and self.k == other.k
                and self.coords.shape == other.coords.shape
                and bool(np.array_equal(self.coords, other.coords)))


def discretize(points, weights, k: int) -> DyadicMeasure:
    """Scale-``k`` discretization of the atomic measure ``sum w_i delta_{x_i}``.

    Each weight is added to the half-open dyadic cell containing its point.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if pts.shape[0] != w.shape[0]:
        raise InputError("points and weights differ in length")
    if k < 0:
        raise ParameterError("scale k must be nonnegative")
    if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(w))):
        raise InputError("atoms must have finite coordinates and weights")
    if np.any(w < 0):
        raise InputError("weights must be nonnegative")
    scaled = np.floor(np.ldexp(pts, k))
    if scaled.size and np.abs(scaled).max() >= _COORD_LIMIT:
        raise InputError("atom coordinates overflow the lattice at this scale")
    return DyadicMeasure.from_arrays(scaled.astype(np.int64), w, k, pts.shape[1])


def coarsen(mu: DyadicMeasure, k: int) -> DyadicMeasure:
    """Exact discretization of ``mu`` at a coarser scale ``k <= mu.k``."""
    if k > mu.k or k < 0:
        raise ParameterError(f"cannot coarsen scale {mu.k} to {k}")
    if k == mu.k:
        return mu
    # arithmetic shift is floor division by 2**(mu.k - k), also for negatives
    return DyadicMeasure.from_arrays(mu.coords >> (mu.k - k), mu.masses, k, mu.d)


def parse_q(q) -> float:
    if isinstance(q, str):
        q = math.inf if q.strip().lower() in ("inf", "infinity", "oo") else float(q)
    q = float(q)
    if not q > 1:
        raise ParameterError("q must lie in (1, inf]")
    return q


def lq_power_sum(mu: DyadicMeasure, q) -> float:
    """``sum m**q`` for finite q, the maximal mass for ``q = inf``."""
    q = parse_q(q)
    if mu.nnz == 0:
        return 0.0
    if math.isinf(q):
        return float(mu.masses.max())
    if q == 2:
        return float(np.sum(mu.masses * mu.masses))
    return float(np.sum(mu.masses ** q))


def lq_norm(mu: DyadicMeasure, q) -> float:
    q = parse_q(q)
    s = lq_power_sum(mu, q)
    return s if math.isinf(q) else s ** (1.0 / q)


def entropy(mu: DyadicMeasure) -> float:
    """Normalized Shannon entropy ``-(1/k) sum m log2 m`` at the measure's scale."""
    if mu.k == 0:
        raise ParameterError("entropy at scale 0 is undefined")
    m = mu.masses
    return float(-np.sum(m * np.log2(m)) / mu.k)


def component(nu: DyadicMeasure, z, i: int) -> DyadicMeasure:
    """Component measure of ``nu`` on the scale-``i`` cell containing ``z``.

    The restriction is translated and scaled by ``2**i`` onto ``[0,1)**d`` and
    renormalized; the result lives at scale ``nu.k - i``.
    """
    if not 0 <= i <= nu.k:
        raise ParameterError(f"component scale {i} must lie in [0, {nu.k}]")
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.shape[0] != nu.d:
        raise InputError("point dimension does not match the measure")
    target = np.floor(np.ldexp(z, i)).astype(np.int64)
    return component_at_cell(nu, target, i)


def component_at_cell(nu: DyadicMeasure, cell, i: int) -> DyadicMeasure:
    shift = nu.k - i
    cell = np.asarray(cell, dtype=np.int64)
    inside = np.all((nu.coords >> shift) == cell, axis=1)
    if not inside.any():
        raise EmptyMeasureError("component cell carries no mass")
    coords = nu.coords[inside] - (cell << shift)
    masses = nu.masses[inside]
    return DyadicMeasure.from_arrays(coords, masses / masses.sum(), shift, nu.d,
                                     presorted=True)


def restrict_normalize(mu: DyadicMeasure, lo, hi) -> DyadicMeasure:
    """Keep cells whose anchors lie in the box ``[lo, hi)`` and renormalize."""
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), (mu.d,))
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), (mu.d,))
    a = mu.anchors()
    keep = np.all((a >= lo) & (a < hi), axis=1)
    if not keep.any():
        raise EmptyMeasureError("box carries no mass")
    masses = mu.masses[keep]
    return DyadicMeasure.from_arrays(mu.coords[keep], masses / masses.sum(), mu.k,
                                     mu.d, presorted=True)


@dataclass(frozen=True)
class DimEstimate:
    q: float
    slope: float
    stderr: float
    scales_used: tuple[int, ...]
    intercept: float = 0.0

    def as_dict(self) -> dict:
        return {"q": "inf" if math.isinf(self.q) else self.q, "slope": self.slope,
                "stderr": self.stderr, "intercept": self.intercept,
                "scales_used": list(self.scales_used)}


def dim_fit(norm_series: Iterable[tuple[int, float]], q) -> DimEstimate:
    """Least-squares dimension estimate from ``(k, value)`` pairs.

    For finite q the value is ``sum m**q`` and the regression is of
    ``-log2(value)`` against ``(q-1)k``; for ``q = inf`` the value is the maximal
    cell mass regressed against ``k``.
    """
    q = parse_q(q)
    series = sorted((int(k), float(v)) for k, v in norm_series)
    if len(series) < 3:
        raise ParameterError("dimension fits need at least 3 scales")
    ks = np.array([s[0] for s in series], dtype=np.float64)
    vals = np.array([s[1] for s in series])
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise ParameterError("norm values must be positive and finite")
    y = -np.log2(vals)
    x = ks if math.isinf(q) else (q - 1.0) * ks
    fit = stats.linregress(x, y)
    stderr = float(fit.stderr) if np.isfinite(fit.stderr) else 0.0
    return DimEstimate(q=q, slope=float(fit.slope), stderr=stderr,
                       scales_used=tuple(int(k) for k in ks),
                       intercept=float(fit.intercept))


def lq_dimension(generator: Callable[[int], DyadicMeasure], q,
                 scales: Sequence[int]) -> DimEstimate:
    """Fit the L^q dimension of measures produced at each requested scale."""
    return dim_fit([(k, lq_power_sum(generator(k), q)) for k in scales], q)


def measure_dimension(mu: DyadicMeasure, q, scales: Sequence[int]) -> DimEstimate:
    """Dimension fit of a single fine measure through its exact coarsenings.

    Scales above ``mu.k`` cannot be recovered and are dropped from the window.
    """
    usable = [k for k in scales if 0 <= k <= mu.k]
    return dim_fit([(k, lq_power_sum(coarsen(mu, k), q)) for k in usable], q)
