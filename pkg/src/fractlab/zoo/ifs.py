"""Self-similar measures and simple reference measures."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..dyadic import DyadicMeasure, discretize
from ..errors import BudgetError, InputError, ParameterError

WORD_BUDGET = 10**8
# extra word levels beyond the minimal depth, so that pieces straddling a
# cell boundary carry a negligible share of the mass
DEPTH_MARGIN = 6
_DEFAULT_WORDS = 10**7


@dataclass(frozen=True)
class Similarity:
    ratio: float
    rotation: np.ndarray
    translation: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.ratio * x @ self.rotation.T + self.translation

    def fixed_point(self) -> np.ndarray:
        a = np.eye(len(self.translation)) - self.ratio * self.rotation
        return np.linalg.solve(a, self.translation)


@dataclass(frozen=True)
class IfsSystem:
    """Weighted contracting similarities ``x -> r O x + t``."""

    maps: tuple[Similarity, ...]
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if len(self.maps) == 0 or len(self.maps) != w.shape[0]:
            raise InputError("an IFS needs one weight per map")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InputError("IFS weights must be a probability vector")
        for m in self.maps:
            if not 0 < m.ratio < 1:
                raise InputError("contraction ratios must lie in (0, 1)")
            o = m.rotation
            if not np.allclose(o @ o.T, np.eye(o.shape[0]), atol=1e-10):
                raise InputError("similarity linear parts must be orthogonal")
        object.__setattr__(self, "weights", w)

    @property
    def d(self) -> int:
        return len(self.maps[0].translation)

    @classmethod
    def from_params(cls, ratios: Sequence[float], translations, weights,
                    rotations=None) -> "IfsSystem":
        t = np.atleast_2d(np.asarray(translations, dtype=np.float64))
        if t.shape[0] != len(ratios):
            t = t.T
        d = t.shape[1]
        if rotations is None:
            rotations = [np.eye(d)] * len(ratios)
        maps = tuple(Similarity(float(r), np.asarray(o, dtype=np.float64).reshape(d, d), t[i])
                     for i, (r, o) in enumerate(zip(ratios, rotations)))
        return cls(maps=maps, weights=np.asarray(weights, dtype=np.float64))


def cantor_system() -> IfsSystem:
    """Middle-third Cantor coin tossing: ``x/3`` and ``x/3 + 2/3`` with weights 1/2."""
    return IfsSystem.from_params([1 / 3, 1 / 3], [[0.0], [2 / 3]], [0.5, 0.5])


def ifs_atoms(sys: IfsSystem, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Images of the first map's fixed point under all positive-weight words."""
    live = [i for i, w in enumerate(sys.weights) if w > 0]
    if depth < 0:
        raise ParameterError("depth must be nonnegative")
    if len(live) ** depth > WORD_BUDGET:
        raise BudgetError(f"{len(live)}**{depth} words exceed the budget of {WORD_BUDGET}")
    pts = sys.maps[live[0]].fixed_point().reshape(1, -1)
    w = np.ones(1)
    for _ in range(depth):
        pts = np.concatenate([sys.maps[i](pts) for i in live])
        w = np.concatenate([sys.weights[i] * w for i in live])
    return pts, w


def ifs_measure(sys: IfsSystem, k: int, depth: int) -> DyadicMeasure:
    """Scale-``k`` discretization of the depth-``depth`` word approximation."""
    live = [i for i, w in enumerate(sys.weights) if w > 0]
    if len(live) > 1:
        rmax = max(sys.maps[i].ratio for i in live)
        if rmax ** depth > 2.0 ** -k * (1 + 1e-12):
            raise ParameterError(
                f"depth {depth} leaves pieces of size {rmax ** depth:.3g} above the cell width 2^-{k}")
    pts, w = ifs_atoms(sys, depth)
    return discretize(pts, w, k)


def cantor_depth(k: int, ratio: float = 1 / 3) -> int:
    """Smallest word depth whose pieces are no larger than ``2**-k``."""
    return max(0, math.ceil(k * math.log(2) / -math.log(ratio) - 1e-12))


def default_depth(sys: IfsSystem, k: int) -> int:
    """Minimal resolving depth plus up to ``DEPTH_MARGIN`` levels, capped at 10^7 words."""
    live = [i for i, w in enumerate(sys.weights) if w > 0]
    if len(live) == 1:
        return 0
    base = cantor_depth(k, max(sys.maps[i].ratio for i in live))
    depth = base
    while depth < base + DEPTH_MARGIN and len(live) ** (depth + 1) <= _DEFAULT_WORDS:
        depth += 1
    return depth


def cantor_measure(k: int, depth: int | None = None) -> DyadicMeasure:
    """Middle-third coin-tossing measure at scale k (default depth from :func:`default_depth`)."""
    sys = cantor_system()
    return ifs_measure(sys, k, default_depth(sys, k) if depth is None else depth)


def lebesgue(d: int, k: int) -> DyadicMeasure:
    """Lebesgue measure on ``[0,1)**d``, exactly discretized at scale ``k``."""
    n = 1 << k
    axes = [np.arange(n, dtype=np.int64)] * d
    coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    masses = np.full(coords.shape[0], 2.0 ** (-d * k))
    return DyadicMeasure.from_arrays(coords, masses, k, d, presorted=True)


def line_measure(k: int, height: float = 0.5) -> DyadicMeasure:
    """Uniform measure on the segment ``[0,1) x {height}`` in the plane."""
    n = 1 << k
    row = math.floor(math.ldexp(height, k))
    coords = np.stack([np.arange(n, dtype=np.int64), np.full(n, row, dtype=np.int64)], axis=1)
    return DyadicMeasure.from_arrays(coords, np.full(n, 1.0 / n), k, 2, presorted=True)


def product_atoms(*factors: tuple[np.ndarray, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    pts, w = factors[0]
    pts = np.asarray(pts, dtype=np.float64).reshape(len(w), -1)
    for p2, w2 in factors[1:]:
        p2 = np.asarray(p2, dtype=np.float64).reshape(len(w2), -1)
        pts = np.concatenate([np.repeat(pts, len(w2), axis=0), np.tile(p2, (len(w), 1))], axis=1)
        w = np.outer(w, w2).ravel()
    return pts, w


def lebesgue_atoms(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell centres of the scale-``k`` Lebesgue discretization on ``[0,1)``."""
    n = 1 << k
    return (np.arange(n) + 0.5) / n, np.full(n, 1.0 / n)


def rotation_matrix(angle_deg: float) -> np.ndarray:
    a = math.radians(angle_deg)
    return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])


def rotate_atoms(atoms, angle_deg: float, center=(0.5, 0.5)):
    pts, w = atoms
    c = np.asarray(center, dtype=np.float64)
    return (pts - c) @ rotation_matrix(angle_deg).T + c, w
