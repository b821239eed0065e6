"""Additive energy, BSG-style extraction, Hochman concentration/saturation
diagnostics, component statistics and level-set extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg
from scipy.spatial import cKDTree

from .convolution import convolve
from .dyadic import DyadicMeasure, _sorted_unique, coarsen, discretize, entropy, lq_norm
from .errors import BigCountError, LemmaPreconditionError, ParameterError
from .parallel import ordered_map

__all__ = [
    "FiniteSet",
    "representation_counts",
    "additive_energy",
    "energy_via_convolution",
    "sumset",
    "BsgResult",
    "bsg_extract",
    "concentration_check",
    "project",
    "saturation_check",
    "component_fractions",
    "component_prob",
    "LevelSets",
    "level_sets",
]

_INT64_MAX = 2**63 - 1


@dataclass(frozen=True, eq=False)
class FiniteSet:
    """Sorted, deduplicated lattice points at a common scale."""

    d: int
    k: int
    points: np.ndarray

    @classmethod
    def from_points(cls, points, k: int = 0, d: int | None = None) -> "FiniteSet":
        pts = np.asarray(points, dtype=np.int64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if d in (None, 1) else pts.reshape(-1, d)
        if pts.size == 0:
            pts = pts.reshape(0, d or 1)
        pts, _ = _sorted_unique(pts, np.zeros(pts.shape[0]))
        pts.flags.writeable = False
        return cls(d=pts.shape[1], k=int(k), points=pts)

    @classmethod
    def support(cls, mu: DyadicMeasure) -> "FiniteSet":
        return cls(d=mu.d, k=mu.k, points=mu.coords)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def indicator(self) -> DyadicMeasure:
        return DyadicMeasure.from_arrays(self.points, np.ones(len(self)), self.k, self.d,
                                         presorted=True)

    def tolist(self) -> list:
        return self.points.tolist()


def _check(A: FiniteSet, B: FiniteSet) -> None:
    if A.d != B.d or A.k != B.k:
        raise ParameterError("sets must share dimension and scale")


def representation_counts(A: FiniteSet, B: FiniteSet) -> tuple[np.ndarray, np.ndarray]:
    """Sums ``s`` in ``A + B`` with ``r(s) = #{(a, b): a + b = s}``."""
    _check(A, B)
    if len(A) == 0 or len(B) == 0:
        return np.empty((0, A.d), dtype=np.int64), np.empty(0, dtype=np.int64)
    sums = (A.points[:, None, :] + B.points[None, :, :]).reshape(-1, A.d)
    s, counts = np.unique(sums, axis=0, return_counts=True)
    return s, counts.astype(np.int64)


def additive_energy(A: FiniteSet, B: FiniteSet) -> int:
    """Exact number of quadruples with ``a + b = a' + b'``."""
    _, r = representation_counts(A, B)
    bound = min(len(A), len(B)) * len(A) * len(B)
    if bound <= _INT64_MAX:
        return int(np.sum(r * r))
    total = sum(int(x) * int(x) for x in r)
    if total > _INT64_MAX:
        raise BigCountError(f"additive energy {total} exceeds 2^63")
    return total


def energy_via_convolution(A: FiniteSet, B: FiniteSet) -> float:
    """``||1_A * 1_B||_2^2`` computed through lattice convolution."""
    _check(A, B)
    conv = convolve(A.indicator(), B.indicator(), method="direct")
    return float(np.sum(conv.masses * conv.masses))


def sumset(A: FiniteSet, B: FiniteSet) -> FiniteSet:
    s, _ = representation_counts(A, B)
    return FiniteSet(d=A.d, k=A.k, points=s)


@dataclass
class BsgResult:
    A_prime: FiniteSet
    B_prime: FiniteSet
    certificate: dict

    def as_dict(self) -> dict:
        return {"A_prime": self.A_prime.tolist(), "B_prime": self.B_prime.tolist(),
                "certificate": self.certificate}


def bsg_extract(A: FiniteSet, B: FiniteSet, alpha: float, L: float, eps_prime: float = 0.1,
                max_rounds: int = 8) -> BsgResult:
    """Greedy extraction of large ``A' ⊆ A``, ``B' ⊆ B`` with small ``A' + B'``.

    The working density is ``max(alpha, E / (2 |A| |B|^2))``, so the energy
    itself sets the bar when it beats the stated hypothesis.  Sums represented
    at least ``density |B|`` times are popular; elements of A landing in
    popular sums with at least half that frequency are kept, then B is thinned
    the same way against the surviving A, and the two passes repeat until
    nothing changes.  The certificate records the achieved density and
    doubling ratios; nothing about optimality is claimed.  ``eps_prime`` only
    enters the reported reference target ``L**eps_prime / alpha``.
    """
    _check(A, B)
    if not (0 < alpha <= 1) or L < 1:
        raise ParameterError("need 0 < alpha <= 1 and L >= 1")
    energy = additive_energy(A, B)
    if energy < 2 * alpha * len(A) * len(B) ** 2 * (1 - 1e-12):
        raise ParameterError(f"energy {energy} is below 2 alpha |A||B|^2")
    if len(A) > L * len(B):
        raise ParameterError("|A| exceeds L |B|")
    density = max(alpha, energy / (2 * len(A) * len(B) ** 2))
    sums, r = representation_counts(A, B)
    popular = sums[r >= density * len(B)]
    pop_keys = {tuple(p) for p in popular.tolist()}

    def hits(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        s = (X[:, None, :] + Y[None, :, :]).reshape(-1, A.d)
        flags = np.fromiter((tuple(p) in pop_keys for p in s.tolist()), bool, len(s))
        return flags.reshape(len(X), len(Y)).sum(axis=1)

    a_keep = np.ones(len(A), dtype=bool)
    b_keep = np.ones(len(B), dtype=bool)
    for _ in range(max_rounds):
        Ap, Bp = A.points[a_keep], B.points[b_keep]
        if len(Ap) == 0 or len(Bp) == 0:
            break
        new_a = a_keep.copy()
        new_a[a_keep] = hits(Ap, Bp) >= 0.5 * density * len(Bp)
        if not new_a.any():
            break
        new_b = b_keep.copy()
        new_b[b_keep] = hits(B.points[b_keep], A.points[new_a]) >= 0.5 * density * new_a.sum()
        if not new_b.any():
            break
        done = np.array_equal(new_a, a_keep) and np.array_equal(new_b, b_keep)
        a_keep, b_keep = new_a, new_b
        if done:
            break
    A2 = FiniteSet(d=A.d, k=A.k, points=A.points[a_keep])
    B2 = FiniteSet(d=B.d, k=B.k, points=B.points[b_keep])
    doubling = len(sumset(A2, B2)) / len(A2) if len(A2) else math.inf
    cert = {
        "energy": energy,
        "alpha": alpha,
        "density": density,
        "L": L,
        "eps_prime": eps_prime,
        "A_density": len(A2) / len(A),
        "B_density": len(B2) / len(B),
        "doubling": doubling,
        "reference_target": alpha ** -1 * L ** eps_prime,
        "popular_sums": int(len(popular)),
    }
    return BsgResult(A2, B2, cert)


def _complement_basis(V, d: int) -> np.ndarray:
    v = np.asarray(V, dtype=np.float64).reshape(-1, d) if np.size(V) else np.empty((0, d))
    if v.shape[0] == 0:
        return np.eye(d)
    return linalg.null_space(v).T


def concentration_check(nu: DyadicMeasure, V, eps: float) -> bool:
    """Whether some translate L of span(V) has ``nu(L^(eps)) > 1 - eps``.

    The search slides a closed window of half-width eps over the marginal on
    the orthogonal complement; in codimension 2 and above the candidate
    centres are the projected support cells.
    """
    comp = _complement_basis(V, nu.d)
    if comp.shape[0] == 0:
        return nu.total > 1 - eps
    proj = nu.anchors() @ comp.T
    w = nu.masses
    if comp.shape[0] == 1:
        p = proj[:, 0]
        order = np.argsort(p, kind="stable")
        p = p[order]
        cw = np.concatenate([[0.0], np.cumsum(w[order])])
        end = np.searchsorted(p, p + 2 * eps + 1e-12, side="right")
        best = float((cw[end] - cw[:-1]).max())
    else:
        tree = cKDTree(proj)
        best = max(float(w[idx].sum()) for idx in tree.query_ball_point(proj, eps + 1e-12))
    return best > 1 - eps


def project(nu: DyadicMeasure, basis, m: int) -> DyadicMeasure:
    """Push ``nu`` forward to coordinates in ``basis`` rows and discretize at scale m."""
    coords = nu.anchors() @ np.asarray(basis, dtype=np.float64).T
    return discretize(coords, nu.masses, m)


def saturation_check(nu: DyadicMeasure, V, eps: float, m: int) -> bool:
    """``H_m(nu) >= H_m(pi_W nu) + dim V - eps`` with ``W = V^perp``."""
    if m < 1 or m > nu.k:
        raise ParameterError(f"saturation scale m={m} must lie in [1, {nu.k}]")
    v = np.asarray(V, dtype=np.float64).reshape(-1, nu.d) if np.size(V) else np.empty((0, nu.d))
    dim_v = int(np.linalg.matrix_rank(v)) if v.shape[0] else 0
    h = entropy(coarsen(nu, m))
    if dim_v == 0:
        h_proj = h
    elif dim_v == nu.d:
        h_proj = 0.0
    else:
        h_proj = entropy(project(nu, _complement_basis(v, nu.d), m))
    return h >= h_proj + dim_v - eps


def component_fractions(nu: DyadicMeasure, k: int, r: int,
                        predicate: Callable[[DyadicMeasure], bool],
                        threads: int | None = None) -> list[float]:
    """``nu{z : predicate(nu^{z, i r})}`` for ``i = 0..k``, summed exactly over cells."""
    if k * r > nu.k:
        raise ParameterError(f"scales up to {k * r} exceed the measure scale {nu.k}")

    def at_scale(i):
        shift = nu.k - i * r
        if shift == 0:
            # every component is the unit Dirac at the origin
            unit = DyadicMeasure.dirac([0] * nu.d, 0)
            return 1.0 if predicate(unit) else 0.0
        parents = nu.coords >> shift
        cells, inv = np.unique(parents, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        order = np.argsort(inv, kind="stable")
        bounds = np.searchsorted(inv[order], np.arange(len(cells) + 1))
        acc = 0.0
        # components of self-similar and product measures repeat, so the
        # predicate is evaluated once per distinct component
        seen: dict[bytes, bool] = {}
        for j in range(len(cells)):
            rows = order[bounds[j]:bounds[j + 1]]
            w = nu.masses[rows]
            local = nu.coords[rows] - (cells[j] << shift)
            w = w / w.sum()
            key = local.tobytes() + b"|" + w.tobytes()
            hit = seen.get(key)
            if hit is None:
                hit = seen[key] = bool(predicate(
                    DyadicMeasure.from_arrays(local, w, shift, nu.d, presorted=True)))
            if hit:
                acc += float(nu.masses[rows].sum())
        return acc / nu.total

    return ordered_map(at_scale, list(range(k + 1)), threads)


def component_prob(nu: DyadicMeasure, k: int, r: int,
                   predicate: Callable[[DyadicMeasure], bool],
                   threads: int | None = None) -> float:
    """``P_{0 <= i <= k}``: the average of :func:`component_fractions` over scales."""
    return math.fsum(component_fractions(nu, k, r, predicate, threads)) / (k + 1)


@dataclass
class LevelSets:
    A: FiniteSet
    B: FiniteSet
    j: int
    j_prime: int
    energy_ratio: float
    nu_A_ratio: float
    mu_B: float

    def as_dict(self) -> dict:
        return {"A": self.A.tolist(), "B": self.B.tolist(), "j": self.j,
                "j_prime": self.j_prime, "energy_ratio": self.energy_ratio,
                "nu_A_ratio": self.nu_A_ratio, "mu_B": self.mu_B}


def _dyadic_level(u: np.ndarray) -> np.ndarray:
    """Integer j with ``2**(-j-1) < u <= 2**(-j)``, exact for float input."""
    frac, ex = np.frexp(u)
    return np.where(frac == 0.5, 1 - ex, -ex).astype(np.int64)


def level_sets(nu: DyadicMeasure, mu: DyadicMeasure, eta: float) -> LevelSets:
    """Dyadic level sets A of nu and B of mu whose sumset energy stays large.

    A collects cells with ``nu(x)/||nu||_2^2`` in ``(2**(-j-1), 2**-j]`` and B
    cells with ``mu(x) 2**(d l)`` in ``(2**(-j'-1), 2**-j']``.  Pairs with
    ``j, j' <= 4 eta l`` are tried in lexicographic order; the first one with
    ``||1_A * 1_B||^2 >= 2**(-4 eta l)|A||B|^2``, ``||nu|_A||_2 >= 2**(-2 eta l)||nu||_2``
    and ``mu(B) >= 2**(-2 eta l)`` is returned.
    """
    if nu.d != mu.d or nu.k != mu.k:
        raise ParameterError("measures must share dimension and scale")
    ell, d = nu.k, nu.d
    n2 = lq_norm(nu, 2)
    if lq_norm(convolve(mu, nu), 2) < 2.0 ** (-eta * ell) * n2 * (1 - 1e-12):
        raise LemmaPreconditionError("||mu * nu||_2 < 2^(-eta l) ||nu||_2")
    jmax = math.floor(4 * eta * ell + 1e-12)
    jA = _dyadic_level(nu.masses / (n2 * n2))
    jB = _dyadic_level(np.ldexp(mu.masses, d * ell))
    total_nu2 = n2 * n2
    for j in sorted(set(jA[jA <= jmax].tolist())):
        selA = jA == j
        nu_A = math.sqrt(float(np.sum(nu.masses[selA] ** 2)))
        if nu_A < 2.0 ** (-2 * eta * ell) * n2 * (1 - 1e-12):
            continue
        A = FiniteSet(d=d, k=ell, points=nu.coords[selA])
        for jp in sorted(set(jB[jB <= jmax].tolist())):
            selB = jB == jp
            mu_B = float(mu.masses[selB].sum())
            if mu_B < 2.0 ** (-2 * eta * ell) * (1 - 1e-12):
                continue
            B = FiniteSet(d=d, k=ell, points=mu.coords[selB])
            ratio = additive_energy(A, B) / (len(A) * len(B) ** 2)
            if ratio >= 2.0 ** (-4 * eta * ell) * (1 - 1e-12):
                return LevelSets(A=A, B=B, j=int(j), j_prime=int(jp), energy_ratio=ratio,
                                 nu_A_ratio=nu_A / math.sqrt(total_nu2), mu_B=mu_B)
    raise LemmaPreconditionError("no level pair (j, j') satisfies all three conclusions")
