"""Fuchsian Schottky groups on the upper half-plane, their critical exponent,
Patterson-Sullivan measures and shadow/doubling validations.

Letters are coded ``2i`` for generator ``g_i`` and ``2i + 1`` for its
inverse.  Generator ``g_i`` maps the exterior of ``intervals[2i]`` onto the
interior of ``intervals[2i + 1]``, so letter ``2i`` lands in
``intervals[2i + 1]`` and letter ``2i + 1`` lands in ``intervals[2i]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize, stats
from scipy.interpolate import BarycentricInterpolator

from ..dyadic import DyadicMeasure, discretize
from ..errors import BudgetError, ConvergenceError, GeometryError, InputError, ParameterError
from ..report import ExperimentReport

WORD_BUDGET = 10**8
DEFAULT_NODES = 16
POWER_TOL = 1e-10
_POWER_MAXITER = 100_000


def _mobius(m: np.ndarray, x):
    a, b, c, d = m.ravel()
    return (a * x + b) / (c * x + d)


def _abs_deriv(m: np.ndarray, x):
    _, _, c, d = m.ravel()
    return 1.0 / (c * x + d) ** 2


def _inverse(m: np.ndarray) -> np.ndarray:
    a, b, c, d = m.ravel()
    return np.array([[d, -b], [-c, a]])


@dataclass(frozen=True, eq=False)
class SchottkyGroup:
    generators: tuple[np.ndarray, ...]
    intervals: np.ndarray

    def __post_init__(self):
        gens = tuple(np.asarray(g, dtype=np.float64).reshape(2, 2) for g in self.generators)
        iv = np.asarray(self.intervals, dtype=np.float64).reshape(-1, 2)
        if len(gens) < 1 or iv.shape[0] != 2 * len(gens):
            raise GeometryError("need 2g intervals for g generators")
        if not np.all(np.isfinite(iv)) or np.any(iv[:, 0] >= iv[:, 1]):
            raise GeometryError("intervals must be finite with left < right")
        srt = iv[np.argsort(iv[:, 0])]
        if np.any(srt[1:, 0] <= srt[:-1, 1]):
            raise GeometryError("Schottky intervals must be pairwise disjoint")
        for i, g in enumerate(gens):
            if abs(np.linalg.det(g) - 1.0) > 1e-10:
                raise GeometryError(f"generator {i} does not have determinant 1")
            _ping_pong(g, iv[2 * i], iv[2 * i + 1], i)
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "intervals", iv)

    @property
    def rank(self) -> int:
        return len(self.generators)

    @property
    def n_letters(self) -> int:
        return 2 * self.rank

    def letter(self, l: int) -> np.ndarray:
        g = self.generators[l // 2]
        return g if l % 2 == 0 else _inverse(g)

    def target(self, l: int) -> np.ndarray:
        """Interval that letter ``l`` maps the outside of ``target(l ^ 1)`` into."""
        return self.intervals[l + 1] if l % 2 == 0 else self.intervals[l - 1]

    @classmethod
    def from_intervals(cls, pairs) -> "SchottkyGroup":
        """Build generators pairing ``A = [a1, a2]`` with ``B = [b1, b2]``.

        Each generator sends ``a1 -> b2``, ``a2 -> b1`` and ``inf`` to the
        midpoint of B; for equal-length intervals this is the isometric-circle
        pairing.
        """
        pairs = np.asarray(pairs, dtype=np.float64).reshape(-1, 2, 2)
        gens = []
        for (a1, a2), (b1, b2) in pairs:
            m = 0.5 * (b1 + b2)
            s = np.array([[1.0, -a2], [1.0, -a1]])
            t = np.array([[m - b2, -b1 * (m - b2)], [m - b1, -b2 * (m - b1)]])
            g = _inverse(t) @ s
            det = np.linalg.det(g)
            if det <= 0:
                raise GeometryError("interval pair does not give an orientation-preserving map")
            gens.append(g / math.sqrt(det))
        return cls(generators=tuple(gens), intervals=pairs.reshape(-1, 2))

    def conjugate(self, h) -> "SchottkyGroup":
        """``h g h^-1`` for every generator, with intervals moved by ``h``.

        ``h`` must keep every interval bounded and preserve orientation.
        """
        h = np.asarray(h, dtype=np.float64).reshape(2, 2)
        h = h / math.sqrt(np.linalg.det(h))
        gens = tuple(h @ g @ _inverse(h) for g in self.generators)
        ends = np.sort(_mobius(h, self.intervals), axis=1)
        return SchottkyGroup(generators=gens, intervals=ends)

    def as_dict(self) -> dict:
        return {"generators": [g.tolist() for g in self.generators],
                "intervals": self.intervals.tolist()}


def _ping_pong(g: np.ndarray, A: np.ndarray, B: np.ndarray, i: int, tol: float = 1e-9) -> None:
    _, _, c, d = g.ravel()
    if c == 0:
        raise GeometryError(f"generator {i} fixes infinity")
    pole = -d / c
    if not A[0] < pole < A[1]:
        raise GeometryError(f"generator {i} does not send the outside of its source interval to a bounded set")
    img = _mobius(g, A)
    scale = tol * max(1.0, float(np.abs(B).max()))
    if np.any(img < B[0] - scale) or np.any(img > B[1] + scale):
        raise GeometryError(f"generator {i} fails the ping-pong condition")
    inf_img = g[0, 0] / g[1, 0]
    if not B[0] < inf_img < B[1]:
        raise GeometryError(f"generator {i} fails the ping-pong condition at infinity")


class _Transfer:
    """Collocation blocks of the transfer operator, independent of s."""

    def __init__(self, G: SchottkyGroup, nodes: int):
        L = G.n_letters
        ref = np.polynomial.chebyshev.chebpts1(nodes)
        self.pts = []
        for l in range(L):
            a, b = G.target(l)
            self.pts.append(0.5 * (a + b) + 0.5 * (b - a) * ref)
        self.blocks = []
        for row in range(L):
            x = self.pts[row]
            for col in range(L):
                if col == row ^ 1:
                    continue
                g = G.letter(col)
                y = _mobius(g, x)
                basis = BarycentricInterpolator(self.pts[col], np.eye(nodes))(y)
                self.blocks.append((row, col, np.log(_abs_deriv(g, x)), basis))
        self.n = nodes
        self.L = L

    def matrix(self, s: float) -> np.ndarray:
        n = self.n
        A = np.zeros((self.L * n, self.L * n))
        for row, col, logd, basis in self.blocks:
            A[row * n:(row + 1) * n, col * n:(col + 1) * n] = np.exp(s * logd)[:, None] * basis
        return A


def spectral_radius(A: np.ndarray, tol: float = POWER_TOL, maxiter: int = _POWER_MAXITER) -> float:
    """Leading eigenvalue by power iteration from the constant vector."""
    v = np.ones(A.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(maxiter):
        w = A @ v
        lam = float(v @ w)
        res = np.linalg.norm(w - lam * v)
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        if res <= tol * abs(lam):
            return lam
        v = w / norm
    raise ConvergenceError(f"power iteration did not reach residual {tol}")


def pressure_radius(G: SchottkyGroup, s: float, nodes: int = DEFAULT_NODES) -> float:
    return spectral_radius(_Transfer(G, nodes).matrix(s))


def schottky_delta(G: SchottkyGroup, tol: float = 1e-10, nodes: int = DEFAULT_NODES) -> float:
    """Critical exponent as the zero of ``s -> log rho(L_s)`` on ``[0, 1]``."""
    op = _Transfer(G, nodes)

    def f(s):
        return math.log(spectral_radius(op.matrix(s)))

    lo, hi = f(0.0), f(1.0)
    if not (lo > 0 > hi):
        raise ConvergenceError(f"pressure does not change sign on [0, 1] ({lo:.3g}, {hi:.3g})")
    return float(optimize.bisect(f, 0.0, 1.0, xtol=tol, maxiter=200))


def reduced_words(n_letters: int, depth: int) -> np.ndarray:
    """All reduced words of the given length, rows in lexicographic order."""
    if depth < 1:
        raise ParameterError("depth must be at least 1")
    count = n_letters * (n_letters - 1) ** (depth - 1)
    if count > WORD_BUDGET:
        raise BudgetError(f"{count} words exceed the budget of {WORD_BUDGET}")
    words = np.arange(n_letters, dtype=np.int64).reshape(-1, 1)
    letters = np.arange(n_letters, dtype=np.int64)
    for _ in range(depth - 1):
        nxt = np.repeat(words, n_letters, axis=0)
        tail = np.tile(letters, words.shape[0])
        keep = tail != (nxt[:, -1] ^ 1)
        words = np.concatenate([nxt, tail[:, None]], axis=1)[keep]
    return words


@dataclass
class PSCylinders:
    """Depth-n cylinder intervals of the limit set with their eigenmeasure masses."""

    G: SchottkyGroup
    delta: float
    depth: int
    words: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    masses: np.ndarray
    residual: float
    iterations: int

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def mass_between(self, a, b) -> np.ndarray:
        """Mass of ``[a, b]`` treating each cylinder as uniformly filled."""
        a = np.atleast_1d(np.asarray(a, dtype=np.float64))
        b = np.atleast_1d(np.asarray(b, dtype=np.float64))
        lo, hi, m = self.lo, self.hi, self.masses
        cum = np.concatenate([[0.0], np.cumsum(m)])
        width = hi - lo

        def upto(x):
            i = np.searchsorted(lo, x, side="right")
            out = cum[i].copy()
            j = i - 1
            inside = (j >= 0) & (x < hi[np.maximum(j, 0)])
            jj = j[inside]
            out[inside] -= m[jj] * (hi[jj] - x[inside]) / width[jj]
            return out

        return np.maximum(upto(b) - upto(a), 0.0)


def _cylinder_intervals(G: SchottkyGroup, words: np.ndarray):
    depth = words.shape[1]
    ends = np.stack([G.target(l) for l in range(G.n_letters)])
    lo, hi = ends[words[:, -1], 0].copy(), ends[words[:, -1], 1].copy()
    for pos in range(depth - 2, -1, -1):
        for l in range(G.n_letters):
            sel = words[:, pos] == l
            if not sel.any():
                continue
            g = G.letter(l)
            a, b = _mobius(g, lo[sel]), _mobius(g, hi[sel])
            lo[sel], hi[sel] = np.minimum(a, b), np.maximum(a, b)
    return lo, hi


def ps_cylinders(G: SchottkyGroup, depth: int, delta: float | None = None,
                 tol: float = 1e-12, maxiter: int = 10_000) -> PSCylinders:
    """Fixed point of the dual transfer operator on depth-``depth`` cylinders.

    One step sets ``m(L w) = sum_c |L'(x_c)|**delta m(c)`` over the depth-n
    children ``c`` of the length ``n - 1`` word ``w`` (``x_c`` the cylinder
    midpoint) and renormalizes.  The limit is the delta-conformal measure for
    the Euclidean metric on the line.
    """
    if depth < 2:
        raise ParameterError("cylinder depth must be at least 2")
    if delta is None:
        delta = schottky_delta(G)
    nl = G.n_letters
    words = reduced_words(nl, depth)
    lo, hi = _cylinder_intervals(G, words)
    mid = 0.5 * (lo + hi)
    order = np.argsort(lo, kind="stable")
    words, lo, hi, mid = words[order], lo[order], hi[order], mid[order]
    base = nl ** np.arange(depth - 1, -1, -1, dtype=np.int64)
    codes = words @ base
    code_order = np.argsort(codes, kind="stable")
    sorted_codes = codes[code_order]

    # for word L w (w of length n-1), its children are w M for admissible M
    first = words[:, 0]
    tails = words[:, 1:] @ base[1:] * nl
    rows, cols, weights = [], [], []
    for M in range(nl):
        ok = words[:, -1] != (M ^ 1)
        child_codes = tails + M
        pos = np.searchsorted(sorted_codes, child_codes)
        pos = np.minimum(pos, len(sorted_codes) - 1)
        found = ok & (sorted_codes[pos] == child_codes)
        child = code_order[pos[found]]
        r = np.flatnonzero(found)
        w = np.empty(len(r))
        for l in range(nl):
            sel = first[r] == l
            w[sel] = _abs_deriv(G.letter(l), mid[child[sel]]) ** delta
        rows.append(r)
        cols.append(child)
        weights.append(w)
    rows, cols, weights = np.concatenate(rows), np.concatenate(cols), np.concatenate(weights)
    srt = np.lexsort((cols, rows))
    rows, cols, weights = rows[srt], cols[srt], weights[srt]

    m = np.full(len(words), 1.0 / len(words))
    resid = math.inf
    for it in range(1, maxiter + 1):
        new = np.bincount(rows, weights=weights * m[cols], minlength=len(m))
        new /= new.sum()
        resid = float(np.abs(new - m).sum())
        m = new
        if resid <= tol:
            break
    else:
        raise ConvergenceError(f"dual iteration stalled at total variation {resid:.3g}")
    return PSCylinders(G=G, delta=delta, depth=depth, words=words, lo=lo, hi=hi,
                       masses=m, residual=resid, iterations=it)


def ps_measure(G: SchottkyGroup, k: int, depth: int, delta: float | None = None) -> DyadicMeasure:
    """Patterson-Sullivan eigenmeasure with cylinder masses placed at midpoints."""
    cyl = ps_cylinders(G, depth, delta)
    return discretize(cyl.mid.reshape(-1, 1), cyl.masses, k)


def conformality_error(cyl: PSCylinders, cells: int = 64, min_mass: float = 1e-4) -> float:
    """Worst ``|mu(g E) / int_E |g'|^delta dmu - 1|`` over generators and test intervals.

    Test intervals E split each source-side interval into ``cells`` equal
    pieces; pieces lighter than ``min_mass`` are skipped.
    """
    G = cyl.G
    worst = 0.0
    for l in range(G.n_letters):
        g = G.letter(l)
        for J in range(G.n_letters):
            if J == l ^ 1:
                continue
            a, b = G.target(J)
            edges = np.linspace(a, b, cells + 1)
            inside = (cyl.mid >= a) & (cyl.mid <= b)
            mid, m = cyl.mid[inside], cyl.masses[inside]
            idx = np.clip(np.searchsorted(edges, mid, side="right") - 1, 0, cells - 1)
            rhs = np.bincount(idx, weights=m * _abs_deriv(g, mid) ** cyl.delta, minlength=cells)
            src = np.bincount(idx, weights=m, minlength=cells)
            img = _mobius(g, edges)
            lhs = cyl.mass_between(np.minimum(img[:-1], img[1:]), np.maximum(img[:-1], img[1:]))
            ok = src >= min_mass
            if ok.any():
                worst = max(worst, float(np.abs(lhs[ok] / rhs[ok] - 1).max()))
    return worst


def sample_limit_points(cyl: PSCylinders, n: int, seed: int = 0) -> np.ndarray:
    """Midpoints of ``n`` mass-weighted random depth-n cylinders."""
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(cyl.masses), size=n, p=cyl.masses / cyl.masses.sum())
    return np.sort(cyl.mid[pick])


def _in_limit_intervals(G: SchottkyGroup, xi: np.ndarray) -> np.ndarray:
    iv = G.intervals
    return np.any((xi[:, None] >= iv[None, :, 0]) & (xi[:, None] <= iv[None, :, 1]), axis=1)


def shadow_check(G: SchottkyGroup, cyl: PSCylinders, xi, t_grid) -> ExperimentReport:
    """``log mu(O(xi(t))) + delta t`` along the rays toward sampled limit points.

    The shadow of the point at distance t along the ray to ``xi`` is the
    boundary interval of radius ``D exp(-t)`` about ``xi``, D being the
    diameter of the convex hull of the intervals.  ``values`` holds the mean
    over samples; ``C_hat`` is the ratio of the largest to the smallest
    ``mu(shadow) exp(delta t)`` over all samples and times.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    if not np.all(_in_limit_intervals(G, xi)):
        raise GeometryError("shadow sample lies outside the Schottky intervals")
    t = np.asarray(t_grid, dtype=np.float64)
    D = float(G.intervals.max() - G.intervals.min())
    rad = D * np.exp(-t)
    a = (xi[:, None] - rad[None, :]).ravel()
    b = (xi[:, None] + rad[None, :]).ravel()
    mass = cyl.mass_between(a, b).reshape(len(xi), len(t))
    if np.any(mass <= 0):
        raise ParameterError("a shadow carries no mass; increase the cylinder depth")
    logm = np.log(mass)
    vals = logm + cyl.delta * t[None, :]
    mean_log = logm.mean(axis=0)
    fit = stats.linregress(t, mean_log) if len(t) >= 3 else None
    C_hat = float(np.exp(vals.max() - vals.min()))
    smallest_cyl = float((cyl.hi - cyl.lo).max())
    return ExperimentReport(
        label="shadow",
        grid=t.tolist(),
        values=vals.mean(axis=0).tolist(),
        fit=(float(fit.slope), float(fit.intercept), float(fit.stderr)) if fit else (math.nan,) * 3,
        metadata={"delta": cyl.delta, "C_hat": C_hat, "n_samples": int(len(xi)),
                  "diameter": D, "depth": cyl.depth, "max_cylinder": smallest_cyl,
                  "slope_error": float(fit.slope + cyl.delta) if fit else math.nan},
    )


def doubling_check(mu: DyadicMeasure, sigma_grid, r_grid, n_centers: int = 64,
                   seed: int = 0) -> ExperimentReport:
    """Fit ``log(mu(B(x, sigma r)) / mu(B(x, r)))`` against ``log sigma``.

    Centers are mass-weighted random support cells.  Balls whose largest
    dilate leaves the bounding box of the support are trimmed (boundary
    effects); balls of zero mass are skipped and counted.  The ``sigma <= 1``
    and ``sigma >= 1`` branches are fitted separately and reported in the
    metadata as ``exponent_lower`` and ``exponent_upper``.
    """
    sig = np.asarray(sigma_grid, dtype=np.float64)
    rr = np.asarray(r_grid, dtype=np.float64)
    if np.any(sig <= 0) or np.any(rr <= 0):
        raise ParameterError("sigma and r grids must be positive")
    rng = np.random.default_rng(seed)
    a = mu.anchors() + 0.5 * 2.0 ** -mu.k
    w = mu.masses
    centers = a[rng.choice(mu.nnz, size=n_centers, p=w / w.sum())]
    lo_box, hi_box = a.min(axis=0), a.max(axis=0)
    smax = float(sig.max())

    if mu.d == 1:
        order = np.argsort(a[:, 0], kind="stable")
        p = a[order, 0]
        cum = np.concatenate([[0.0], np.cumsum(w[order])])

        def ball(x, rad):
            return cum[np.searchsorted(p, x + rad, side="right")] - cum[np.searchsorted(p, x - rad, side="left")]
    else:
        from scipy.spatial import cKDTree

        tree = cKDTree(a)

        def ball(x, rad):
            return float(w[tree.query_ball_point(x.reshape(mu.d), rad)].sum())

    xs_lo, ys_lo, xs_hi, ys_hi = [], [], [], []
    skipped = trimmed = 0
    per_sigma = {float(s): [] for s in sig}
    ratios = []
    for r in rr:
        for x in centers:
            if np.any(x - smax * r < lo_box) or np.any(x + smax * r > hi_box):
                trimmed += 1
                continue
            base = float(ball(x if mu.d > 1 else x[0], r))
            if base <= 0:
                skipped += 1
                continue
            for s in sig:
                m = float(ball(x if mu.d > 1 else x[0], s * r))
                if m <= 0:
                    skipped += 1
                    continue
                y = math.log(m / base)
                per_sigma[float(s)].append(y)
                ratios.append((float(s), m / base))
                if s <= 1:
                    xs_lo.append(math.log(s))
                    ys_lo.append(y)
                if s >= 1:
                    xs_hi.append(math.log(s))
                    ys_hi.append(y)

    def fit(xs, ys):
        if len(set(xs)) < 2:
            return math.nan, math.nan, math.nan
        res = stats.linregress(xs, ys)
        return float(res.slope), float(res.intercept), float(res.stderr)

    lower, upper = fit(xs_lo, ys_lo), fit(xs_hi, ys_hi)
    pooled = fit(xs_lo + xs_hi, ys_lo + ys_hi)
    grid = sorted(per_sigma)
    vals = [float(np.mean(per_sigma[s])) if per_sigma[s] else math.nan for s in grid]

    def constants(exponent):
        if not ratios or not math.isfinite(exponent):
            return math.nan, math.nan
        c = [q / s ** exponent for s, q in ratios]
        return float(min(c)), float(max(c))

    c_lo = constants(lower[0])
    c_hi = constants(upper[0])
    return ExperimentReport(
        label="doubling", grid=grid, values=vals, fit=pooled,
        metadata={"exponent_lower": lower[0], "stderr_lower": lower[2],
                  "exponent_upper": upper[0], "stderr_upper": upper[2],
                  "constant_range_lower": list(c_lo), "constant_range_upper": list(c_hi),
                  "skipped": skipped, "trimmed": trimmed, "n_centers": n_centers,
                  "r_grid": rr.tolist()},
    )
