"""Test-measure generators and a builder for small measure specifications.

A measure spec is a dict with a ``kind`` key and kind-specific parameters::

    {"kind": "cantor", "scale": 12, "depth": 10}
    {"kind": "ifs", "ratios": [...], "translations": [...], "weights": [...], "scale": 12}
    {"kind": "lebesgue", "d": 2, "scale": 8}
    {"kind": "line", "scale": 10, "height": 0.5}
    {"kind": "product", "factors": [spec, spec], "scale": 10, "rotate": 30}
    {"kind": "schottky", "intervals": [[[a1, a2], [b1, b2]], ...], "scale": 16, "depth": 10}
"""

from __future__ import annotations

import numpy as np

from ..dyadic import DyadicMeasure, discretize
from ..errors import InputError
from .ifs import (IfsSystem, Similarity, cantor_depth, cantor_measure, cantor_system,
                  default_depth, ifs_atoms, ifs_measure, lebesgue, line_measure, rotation_matrix)
from .schottky import (SchottkyGroup, doubling_check, ps_cylinders, ps_measure,
                       schottky_delta, shadow_check)

KINDS = ("cantor", "ifs", "lebesgue", "line", "product", "schottky")

__all__ = [
    "KINDS",
    "IfsSystem",
    "Similarity",
    "SchottkyGroup",
    "build_measure",
    "cantor_measure",
    "cantor_system",
    "doubling_check",
    "ifs_atoms",
    "ifs_measure",
    "lebesgue",
    "line_measure",
    "product_measure",
    "ps_cylinders",
    "ps_measure",
    "schottky_delta",
    "shadow_check",
]


def product_measure(*factors: DyadicMeasure) -> DyadicMeasure:
    """Cartesian product of measures at a common scale."""
    if len({f.k for f in factors}) != 1:
        raise InputError("product factors must share a scale")
    coords, masses = factors[0].coords, factors[0].masses
    for f in factors[1:]:
        coords = np.concatenate([np.repeat(coords, f.nnz, axis=0),
                                 np.tile(f.coords, (len(masses), 1))], axis=1)
        masses = np.outer(masses, f.masses).ravel()
    return DyadicMeasure.from_arrays(coords, masses, factors[0].k, coords.shape[1], presorted=True)


def build_measure(spec: dict, scale: int | None = None) -> DyadicMeasure:
    """Build the measure described by ``spec``; ``scale`` overrides ``spec["scale"]``."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise InputError("a measure spec needs a 'kind'")
    kind = spec["kind"]
    k = int(scale if scale is not None else spec.get("scale", 12))
    depth = spec.get("depth")
    if kind == "cantor":
        return cantor_measure(k, None if depth is None else int(depth))
    if kind == "ifs":
        try:
            sys = IfsSystem.from_params(spec["ratios"], spec["translations"], spec["weights"],
                                        spec.get("rotations"))
        except KeyError as exc:
            raise InputError(f"ifs spec is missing {exc}") from exc
        return ifs_measure(sys, k, default_depth(sys, k) if depth is None else int(depth))
    if kind == "lebesgue":
        return lebesgue(int(spec.get("d", 1)), k)
    if kind == "line":
        return line_measure(k, float(spec.get("height", 0.5)))
    if kind == "product":
        factors = spec.get("factors")
        if not factors:
            raise InputError("product spec needs 'factors'")
        mu = product_measure(*(build_measure(f, k) for f in factors))
        angle = spec.get("rotate")
        if angle:
            if mu.d != 2:
                raise InputError("rotation is supported for planar products only")
            c = np.asarray(spec.get("center", [0.5, 0.5]), dtype=np.float64)
            pts = (mu.centers() - c) @ rotation_matrix(float(angle)).T + c
            mu = discretize(pts, mu.masses, k)
        return mu
    if kind == "schottky":
        if "intervals" not in spec:
            raise InputError("schottky spec needs 'intervals'")
        G = SchottkyGroup.from_intervals(spec["intervals"])
        delta = schottky_delta(G, nodes=int(spec.get("nodes", 16)))
        return ps_measure(G, k, int(10 if depth is None else depth), delta)
    raise InputError(f"unknown measure kind {kind!r}; expected one of {', '.join(KINDS)}")
