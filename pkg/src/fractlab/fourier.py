"""Fourier transforms of discretized measures and large-frequency scans.

The transform convention is ``mu_hat(xi) = sum_c m_c exp(-i <xi, a_c>)`` with
``a_c`` the anchor (lattice point) of cell ``c``; there is no ``2 pi`` in the
exponent.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special
from scipy.spatial import cKDTree

from .dyadic import DyadicMeasure
from .errors import BudgetError, ParameterError
from .parallel import chunk_bounds, ordered_map

__all__ = [
    "GRID_BUDGET",
    "DEFAULT_STEP",
    "ft",
    "ft_many",
    "ball_grid",
    "BadSetReport",
    "bad_set_scan",
    "moment",
    "BallBoundCheck",
    "l2_ball_bound_check",
    "unit_ball_volume",
]

GRID_BUDGET = 10**8
DEFAULT_STEP = 0.25
_BLOCK = 2**21


def ft(mu: DyadicMeasure, xi) -> complex:
    """Fourier transform at one frequency, with compensated summation."""
    xi = np.asarray(xi, dtype=np.float64).reshape(-1)
    phase = _phases(mu.anchors(), xi.reshape(1, -1))[0]
    m = mu.masses
    re = math.fsum((m * np.cos(phase)).tolist())
    im = -math.fsum((m * np.sin(phase)).tolist())
    return complex(re, im)


def _phases(anchors: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    out = np.multiply.outer(freqs[:, 0], anchors[:, 0])
    for j in range(1, anchors.shape[1]):
        out += np.multiply.outer(freqs[:, j], anchors[:, j])
    return out


def ft_many(mu: DyadicMeasure, freqs, threads: int | None = None) -> np.ndarray:
    """Transform on an ``(n, d)`` array of frequencies.

    Frequencies are processed in blocks whose size depends only on the
    number of cells, so the result does not depend on ``threads``.
    """
    freqs = np.asarray(freqs, dtype=np.float64)
    if freqs.ndim == 1:
        freqs = freqs.reshape(-1, mu.d)
    anchors = mu.anchors()
    m = mu.masses
    rows = max(1, _BLOCK // max(1, mu.nnz))

    def block(bounds):
        lo, hi = bounds
        ph = _phases(anchors, freqs[lo:hi])
        re = (np.cos(ph) * m).sum(axis=1)
        im = -(np.sin(ph) * m).sum(axis=1)
        return re + 1j * im

    parts = ordered_map(block, chunk_bounds(freqs.shape[0], rows), threads)
    return np.concatenate(parts) if parts else np.empty(0, dtype=complex)


def ball_grid(T: float, step: float, d: int, *, midpoint: bool = False) -> np.ndarray:
    """Grid points ``step * j`` (or ``step * (j + 1/2)``) inside the closed ball of radius T."""
    off = 0.5 if midpoint else 0.0
    n = int(math.floor(T / step - off + 1e-9))
    lo = -n - 1 if midpoint else -n
    count = (n - lo + 1) ** d
    if count > GRID_BUDGET:
        raise BudgetError(f"frequency grid of {count} points exceeds {GRID_BUDGET}")
    axis = (np.arange(lo, n + 1) + off) * step
    if d == 1:
        pts = axis.reshape(-1, 1)
    else:
        pts = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    keep = (pts ** 2).sum(axis=1) <= T * T * (1 + 1e-12)
    return pts[keep]


@dataclass
class BadSetReport:
    T: float
    delta: float
    step: float
    bad_count: int
    cover_count: int
    threshold: float
    slack: float
    grid_size: int

    def as_dict(self) -> dict:
        return asdict(self)


def bad_set_scan(mu: DyadicMeasure, T: float, delta: float, step: float = DEFAULT_STEP,
                 *, lipschitz_slack: bool = True, threads: int | None = None) -> BadSetReport:
    """Count grid frequencies in ``||xi|| <= T`` with ``|mu_hat| > T**-delta``.

    With ``lipschitz_slack`` the threshold is lowered by ``R * step * sqrt(d) / 2``
    (R the support radius), so no bad frequency between grid points is missed.
    The cover snaps bad frequencies to the nearest integer vector; each unit
    ball around such a vector contains its snapped points.
    """
    if T < 1:
        raise ParameterError("T must be at least 1")
    if delta <= 0:
        raise ParameterError("delta must be positive")
    if not 0 < step <= 0.5:
        raise ParameterError("step must lie in (0, 1/2]")
    grid = ball_grid(T, step, mu.d)
    amp = np.abs(ft_many(mu, grid, threads))
    threshold = T ** (-delta)
    slack = mu.support_radius() * step * math.sqrt(mu.d) / 2 if lipschitz_slack else 0.0
    bad = grid[amp > threshold - slack]
    cover = np.unique(np.rint(bad).astype(np.int64), axis=0).shape[0] if bad.size else 0
    return BadSetReport(T=float(T), delta=float(delta), step=float(step),
                        bad_count=int(bad.shape[0]), cover_count=int(cover),
                        threshold=float(threshold), slack=float(slack),
                        grid_size=int(grid.shape[0]))


def moment(mu: DyadicMeasure, T: float, n: int, step: float = DEFAULT_STEP,
           threads: int | None = None) -> float:
    """Midpoint-rule value of ``int_{||xi|| <= T} |mu_hat|^(2n)``."""
    if n < 1:
        raise ParameterError("moment order must be at least 1")
    grid = ball_grid(T, step, mu.d, midpoint=True)
    amp2 = np.abs(ft_many(mu, grid, threads)) ** 2
    return float(np.sum(amp2 ** n) * step ** mu.d)


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def _lens_volume(t: np.ndarray, r: float, d: int) -> np.ndarray:
    """Volume of the intersection of two radius-r balls whose centres are t apart."""
    x = np.clip(1.0 - (t / (2 * r)) ** 2, 0.0, 1.0)
    vol = unit_ball_volume(d) * r ** d * special.betainc((d + 1) / 2, 0.5, x)
    return np.where(t <= 2 * r, vol, 0.0)


@dataclass
class BallBoundCheck:
    lhs: float
    rhs: float
    ratio: float
    c_d: float
    holds: bool

    def as_dict(self) -> dict:
        return asdict(self)


def l2_ball_bound_check(points, weights, r: float, step: float | None = None,
                        threads: int | None = None) -> BallBoundCheck:
    """Compare the low-frequency L^2 mass of the transform with ball masses.

    ``lhs = int_{||xi|| <= 1/r} |mu_hat|^2`` by midpoint quadrature and
    ``rhs = r**(-2d) int mu(B(x, r))**2 dx``.  The x-integral is evaluated in
    closed form as a sum of pairwise ball-intersection volumes.
    """
    if not 0 < r <= 1:
        raise ParameterError("r must lie in (0, 1]")
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    w = np.asarray(weights, dtype=np.float64)
    d = pts.shape[1]
    diam = float(np.ptp(pts, axis=0).max()) if len(w) > 1 else 0.0
    if step is None:
        step = min(DEFAULT_STEP, 1.0 / (8.0 * max(diam, 1e-12)))
    grid = ball_grid(1.0 / r, step, d, midpoint=True)
    anchors_measure = _AtomView(pts, w)
    amp = np.abs(ft_many(anchors_measure, grid, threads))
    lhs = float(np.sum(amp ** 2) * step ** d)

    tree = cKDTree(pts)
    pairs = tree.query_pairs(2 * r, output_type="ndarray")
    self_term = float(np.sum(w * w)) * unit_ball_volume(d) * r ** d
    if pairs.size:
        t = np.sqrt(((pts[pairs[:, 0]] - pts[pairs[:, 1]]) ** 2).sum(axis=1))
        cross = 2.0 * float(np.sum(w[pairs[:, 0]] * w[pairs[:, 1]] * _lens_volume(t, r, d)))
    else:
        cross = 0.0
    rhs = (self_term + cross) * r ** (-2 * d)
    c_d = 4.0 ** d
    ratio = lhs / rhs
    return BallBoundCheck(lhs=lhs, rhs=rhs, ratio=ratio, c_d=c_d, holds=bool(ratio <= c_d))


class _AtomView:
    """Duck-typed stand-in letting :func:`ft_many` run on raw atoms."""

    def __init__(self, pts: np.ndarray, w: np.ndarray):
        self._pts = pts
        self.masses = w
        self.d = pts.shape[1]
        self.nnz = len(w)

    def anchors(self) -> np.ndarray:
        return self._pts
