"""Affine non-concentration scans, hyperplane decay fits and the
convolution-square transfer check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.spatial import cKDTree

from .convolution import convolve
from .dyadic import DyadicMeasure, coarsen
from .errors import InputError, ParameterError
from .parallel import ordered_map

__all__ = [
    "AffineSubspace",
    "tube_mass",
    "slab_masses",
    "AncReport",
    "anc_scan",
    "random_directions",
    "sample_hyperplanes",
    "HyperplaneFit",
    "hyperplane_decay_fit",
    "SqrtFriendlyReport",
    "sqrt_friendly_check",
    "loglog_fit",
]

TUBE_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class AffineSubspace:
    """``point + span(basis)`` with orthonormal basis rows (``m < d`` of them)."""

    point: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.point, dtype=np.float64).reshape(-1)
        b = np.asarray(self.basis, dtype=np.float64).reshape(-1, p.shape[0])
        if b.shape[0] >= p.shape[0]:
            raise InputError("a proper affine subspace needs fewer than d directions")
        if b.shape[0] and not np.allclose(b @ b.T, np.eye(b.shape[0]), atol=1e-10):
            raise InputError("subspace basis must be orthonormal")
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "basis", b)

    @property
    def d(self) -> int:
        return self.point.shape[0]

    @property
    def m(self) -> int:
        return self.basis.shape[0]

    @classmethod
    def hyperplane(cls, point, normal) -> "AffineSubspace":
        n = np.asarray(normal, dtype=np.float64).reshape(-1)
        n = n / np.linalg.norm(n)
        return cls(point=np.asarray(point, dtype=np.float64), basis=linalg.null_space(n.reshape(1, -1)).T)

    @classmethod
    def from_span(cls, point, directions) -> "AffineSubspace":
        v = np.asarray(directions, dtype=np.float64)
        p = np.asarray(point, dtype=np.float64).reshape(-1)
        if v.size == 0:
            return cls(point=p, basis=np.empty((0, p.shape[0])))
        return cls(point=p, basis=linalg.orth(v.reshape(-1, p.shape[0]).T).T)

    def complement(self) -> np.ndarray:
        """Orthonormal rows spanning the orthogonal complement of the directions."""
        if self.m == 0:
            return np.eye(self.d)
        return linalg.null_space(self.basis).T

    def normal(self) -> np.ndarray:
        comp = self.complement()
        if comp.shape[0] != 1:
            raise ParameterError("normal() is defined for hyperplanes only")
        return comp[0]

    def distance(self, pts: np.ndarray) -> np.ndarray:
        diff = np.asarray(pts, dtype=np.float64) - self.point
        proj = diff @ self.complement().T
        return np.sqrt((proj ** 2).sum(axis=1))

    def doubled(self) -> "AffineSubspace":
        """``W + W``: same directions, anchor point doubled."""
        return AffineSubspace(point=2 * self.point, basis=self.basis)


def tube_mass(mu: DyadicMeasure, W: AffineSubspace, eps: float, x=None,
              rho: float | None = None) -> float:
    """``mu(W^(eps*rho) ∩ B(x, rho))`` with cells decided by their anchors.

    Without ``x``/``rho`` the ball constraint is dropped and the tube width
    is ``eps`` itself.
    """
    if eps <= 0 or (rho is not None and rho <= 0):
        raise ParameterError("eps and rho must be positive")
    a = mu.anchors()
    width = eps if rho is None else eps * rho
    keep = W.distance(a) <= width + TUBE_SLACK
    if x is not None:
        x = np.asarray(x, dtype=np.float64).reshape(1, -1)
        keep &= ((a - x) ** 2).sum(axis=1) <= rho * rho + TUBE_SLACK
    return float(mu.masses[keep].sum())


def slab_masses(mu: DyadicMeasure, W: AffineSubspace, eps_grid) -> np.ndarray:
    """``mu(W^(eps))`` for every eps, sharing one distance computation."""
    dist = W.distance(mu.anchors())
    order = np.argsort(dist, kind="stable")
    cum = np.concatenate([[0.0], np.cumsum(mu.masses[order])])
    idx = np.searchsorted(dist[order], np.asarray(eps_grid, dtype=np.float64) + TUBE_SLACK,
                          side="right")
    return cum[idx]


def random_directions(d: int, n: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _best_window(proj: np.ndarray, w: np.ndarray, half_widths: np.ndarray) -> np.ndarray:
    """Max mass in a closed window ``[c - h, c + h]`` over all offsets c.

    ``proj`` is ``(n, D)`` (one column per direction); returns ``(len(h), D)``.
    An optimal window can always start at a data point.
    """
    n, D = proj.shape
    order = np.argsort(proj, axis=0, kind="stable")
    p = np.take_along_axis(proj, order, axis=0)
    p = p - p[0]
    # stack the sorted columns into one increasing sequence, separated by gaps
    # wider than any window, so one searchsorted serves every direction
    gap = p[-1].max() + 4 * float(np.max(half_widths)) + 1.0
    flat = (p + gap * np.arange(D)).T.ravel()
    cw = np.concatenate([[0.0], np.cumsum(w[order].T.ravel())])
    starts = np.arange(n * D)
    out = np.empty((len(half_widths), D))
    for i, h in enumerate(half_widths):
        end = np.searchsorted(flat, flat + 2 * h + TUBE_SLACK, side="right")
        out[i] = (cw[end] - cw[starts]).reshape(D, n).max(axis=1)
    return out


def _principal_normal(pts: np.ndarray, w: np.ndarray) -> np.ndarray:
    mean = (w[:, None] * pts).sum(axis=0) / w.sum()
    diff = pts - mean
    cov = (w[:, None] * diff).T @ diff / w.sum()
    _, vecs = np.linalg.eigh(cov)
    return vecs[:, 0]


@dataclass
class AncReport:
    theta: float
    r: int
    k: int
    delta_curve: list[tuple[float, float]]
    delta_curve_all: list[tuple[float, float]]
    eps_effective: list[float]
    exceptional_fraction: float
    threshold: float
    eps_ref: float
    n_points: int
    bad_scale_counts: list[int] = field(default_factory=list)
    fitted_power: float | None = None

    def as_dict(self) -> dict:
        return {
            "theta": self.theta, "r": self.r, "k": self.k,
            "delta_curve": [list(p) for p in self.delta_curve],
            "delta_curve_all": [list(p) for p in self.delta_curve_all],
            "eps_effective": self.eps_effective,
            "exceptional_fraction": self.exceptional_fraction,
            "threshold": self.threshold, "eps_ref": self.eps_ref,
            "n_points": self.n_points, "bad_scale_counts": self.bad_scale_counts,
            "fitted_power": self.fitted_power,
        }


DEFAULT_EPS = (0.5, 0.25, 0.125, 0.0625, 0.03125)


def anc_scan(mu: DyadicMeasure, theta: float, r: int, k: int,
             direction_samples: int = 64, offset_samples: int | None = None,
             *, eps_grid: Sequence[float] = DEFAULT_EPS, n_points: int = 32,
             threshold: float = 0.5, resolution: int = 5, seed: int = 0,
             threads: int | None = None) -> AncReport:
    """Scan tube-to-ball mass ratios over points, scales and hyperplanes.

    Scales are ``l = 0..k`` with radius ``rho = 2**(-r l)``.  At each sampled
    support point the ratio ``mu(W^(eps rho) ∩ B(x, rho)) / mu(B(x, rho))`` is
    maximized over ``direction_samples`` seeded random normals plus the local
    least-variance direction; offsets are optimized exactly by a sliding
    window unless ``offset_samples`` asks for an evenly spaced subset.
    A scale is bad when the ratio at the smallest eps exceeds ``threshold``;
    points with more than ``theta * k`` bad scales are exceptional.
    """
    if not 0 < theta < 1:
        raise ParameterError("theta must lie in (0, 1)")
    if r < 1 or k < 3:
        raise ParameterError("need r >= 1 and k >= 3")
    if mu.nnz == 0:
        raise InputError("empty support sample")
    eps = np.sort(np.asarray(eps_grid, dtype=np.float64))[::-1]
    rng = np.random.default_rng(seed)
    n_pts = min(n_points, mu.nnz)
    pick = np.sort(rng.choice(mu.nnz, size=n_pts, replace=False))
    centers = mu.anchors()[pick]
    point_w = mu.masses[pick] / mu.masses[pick].sum()
    normals = random_directions(mu.d, direction_samples, seed + 1) if mu.d > 1 else np.ones((1, 1))

    levels = []
    for ell in range(k + 1):
        rho = 2.0 ** (-r * ell)
        scale = min(mu.k, max(0, r * ell + resolution))
        nu = coarsen(mu, scale)
        a = nu.anchors()
        levels.append((ell, rho, nu, a, cKDTree(a), math.sqrt(mu.d) * 2.0 ** -scale / rho))

    def scan_point(i):
        x = centers[i]
        ratios = np.zeros((k + 1, len(eps)))
        for ell, rho, nu, a, tree, _ in levels:
            idx = np.asarray(tree.query_ball_point(x, rho * (1 + 1e-12)), dtype=np.int64)
            if idx.size == 0:
                continue
            pts, w = a[idx], nu.masses[idx]
            ball = w.sum()
            if mu.d > 1 and idx.size > 1:
                dirs = np.vstack([normals, _principal_normal(pts, w)])
            else:
                dirs = np.ones((1, mu.d)) if mu.d == 1 else normals
            proj = pts @ dirs.T
            if offset_samples:
                offs = x @ dirs.T + np.linspace(-rho, rho, offset_samples)[:, None]
                best = np.array([[w[np.abs(proj[:, j] - c) <= e * rho + 1e-12].sum()
                                  for j in range(dirs.shape[0]) for c in offs[:, j]] for e in eps]).max(axis=1)
            else:
                best = _best_window(proj, w, eps * rho).max(axis=1)
            ratios[ell] = best / ball
        return ratios

    all_ratios = np.stack(ordered_map(scan_point, list(range(n_pts)), threads))
    bad = all_ratios[:, :, -1] > threshold
    bad_counts = bad.sum(axis=1)
    exceptional = bad_counts > theta * k
    exc_fraction = float(point_w[exceptional].sum())
    good = (~exceptional)[:, None] & ~bad
    curve_all = sorted((float(e), float(all_ratios[:, :, j].max())) for j, e in enumerate(eps))
    if good.any():
        curve = sorted((float(e), float(all_ratios[:, :, j][good].max()))
                       for j, e in enumerate(eps))
    else:
        # nothing survives the exceptional set: report the raw worst case
        curve = list(curve_all)
    infl = max(lv[5] for lv in levels)
    eps_eff = [e + infl for e, _ in curve]
    power = None
    xs = [(math.log(e), math.log(v)) for e, v in curve if v > 0]
    if len(xs) >= 3:
        power = float(np.polyfit([p[0] for p in xs], [p[1] for p in xs], 1)[0])
    return AncReport(theta=theta, r=r, k=k, delta_curve=curve, delta_curve_all=curve_all,
                     eps_effective=eps_eff,
                     exceptional_fraction=exc_fraction, threshold=threshold,
                     eps_ref=float(eps[-1]), n_points=n_pts,
                     bad_scale_counts=[int(c) for c in bad_counts], fitted_power=power)


def sample_hyperplanes(mu: DyadicMeasure, n_random: int = 64, n_data: int = 8,
                       seed: int = 0, eps0: float | None = None) -> list[AffineSubspace]:
    """Seeded random normals plus covariance eigenvectors (global and local).

    Each hyperplane is placed at the offset where its slab of half-width
    ``eps0`` (a few cell widths by default) carries the most mass.
    """
    a = mu.anchors()
    w = mu.masses
    if eps0 is None:
        eps0 = 4.0 * math.sqrt(mu.d) * 2.0 ** -mu.k
    normals = [random_directions(mu.d, n_random, seed)] if n_random else []
    data = []
    mean = (w[:, None] * a).sum(axis=0) / w.sum()
    diff = a - mean
    data.extend(np.linalg.eigh((w[:, None] * diff).T @ diff)[1].T)
    tree = cKDTree(a)
    heavy = np.argsort(-w, kind="stable")
    radius = 0.125
    for i in heavy:
        if len(data) >= n_data:
            break
        idx = tree.query_ball_point(a[i], radius)
        if len(idx) > mu.d:
            data.append(_principal_normal(a[idx], w[idx]))
    normals.append(np.asarray(data[:n_data]).reshape(-1, mu.d))
    normals = np.vstack(normals)
    out = []
    for nvec in normals:
        proj = a @ nvec
        order = np.argsort(proj, kind="stable")
        p = proj[order]
        cw = np.concatenate([[0.0], np.cumsum(w[order])])
        end = np.searchsorted(p, p + 2 * eps0 + TUBE_SLACK, side="right")
        i = int(np.argmax(cw[end] - cw[:-1]))
        offset = 0.5 * (p[i] + p[end[i] - 1])
        out.append(AffineSubspace.hyperplane(offset * nvec, nvec))
    return out


def loglog_fit(eps_grid, masses):
    """Slope, intercept and rms residual of ``log m`` vs ``log eps``.

    Zero masses are censored; at least half the grid must survive, otherwise
    the slope is reported as ``+inf``.
    """
    e = np.asarray(eps_grid, dtype=np.float64)
    m = np.asarray(masses, dtype=np.float64)
    ok = m > 0
    if ok.sum() < 2 or ok.sum() * 2 <= len(m):
        return math.inf, math.nan, math.nan, int(ok.sum())
    x, y = np.log(e[ok]), np.log(m[ok])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid ** 2))), int(ok.sum())


@dataclass
class HyperplaneFit:
    kappa: float
    worst_index: int
    slopes: list[float]
    residuals: list[float]
    intercepts: list[float]

    def as_dict(self) -> dict:
        return {"kappa": self.kappa, "worst_index": self.worst_index,
                "slopes": self.slopes, "residuals": self.residuals,
                "intercepts": self.intercepts}


def hyperplane_decay_fit(mu: DyadicMeasure, W_family: Sequence[AffineSubspace],
                         eps_grid: Sequence[float]) -> HyperplaneFit:
    """Worst (smallest) log-log decay exponent of ``mu(W^(eps))`` over a family."""
    eps = np.asarray(eps_grid, dtype=np.float64)
    if len(eps) < 4:
        raise ParameterError("eps grid needs at least 4 points")
    ratios = eps[1:] / eps[:-1]
    if np.any(eps <= 0) or not np.allclose(ratios, ratios[0], rtol=1e-6):
        raise ParameterError("eps grid must be geometric and positive")
    slopes, resid, inter = [], [], []
    for W in W_family:
        s, b, rms, _ = loglog_fit(eps, slab_masses(mu, W, eps))
        slopes.append(s)
        resid.append(rms)
        inter.append(b)
    if not slopes:
        raise ParameterError("empty hyperplane family")
    worst = int(np.argmin(slopes))
    kappa = slopes[worst]
    # exact power laws can come out as -1e-16
    if abs(kappa) < 1e-12:
        kappa = 0.0
    return HyperplaneFit(kappa=kappa, worst_index=worst, slopes=slopes,
                         residuals=resid, intercepts=inter)


@dataclass
class SqrtFriendlyReport:
    alpha: float
    C: float
    kappa_W: float
    eps: list[float]
    mass_V: list[float]
    mass_W: list[float]
    bound_W: list[float]
    passed: bool

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("alpha", "C", "kappa_W", "eps", "mass_V", "mass_W", "bound_W", "passed")}


def sqrt_friendly_check(nu: DyadicMeasure, W: AffineSubspace, eps_grid: Sequence[float],
                        **conv_kwargs) -> SqrtFriendlyReport:
    """Transfer a decay bound on ``nu*nu`` near ``V = W + W`` back to ``nu`` near W.

    ``alpha`` is the log-log slope of ``nu**2(V^(eps))`` (clamped at 0) and
    ``C = max(1, max_eps nu**2(V^(eps)) / eps**alpha)`` makes the fitted bound an
    envelope.  The check asserts ``nu(W^(eps/2)) <= C eps**(alpha/2)`` on the grid.
    """
    eps = np.asarray(eps_grid, dtype=np.float64)
    sq = convolve(nu, nu, **conv_kwargs)
    V = W.doubled()
    mV = slab_masses(sq, V, eps + 2 * TUBE_SLACK)
    mW = slab_masses(nu, W, eps / 2)
    alpha, _, _, _ = loglog_fit(eps, mV)
    # censored or increasing fits fall back to the crude envelope alpha = 0
    if not math.isfinite(alpha) or alpha < 0:
        alpha = 0.0
    C = max(1.0, float(np.max(mV / eps ** alpha)))
    bound = C * eps ** (alpha / 2)
    passed = bool(np.all(mW <= bound * (1 + 1e-9) + 1e-12))
    kappa_W, _, _, _ = loglog_fit(eps, mW)
    return SqrtFriendlyReport(alpha=float(alpha), C=C, kappa_W=float(kappa_W), eps=eps.tolist(),
                              mass_V=mV.tolist(), mass_W=mW.tolist(), bound_W=bound.tolist(),
                              passed=passed)
