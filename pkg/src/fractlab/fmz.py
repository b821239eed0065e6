"""Reading and writing FMZ measure files.

An FMZ document is a single JSON object::

    {"format": "fmz1", "d": 1, "k": 12,
     "cells": [[c1, ..., cd, "mass"], ...], "total": 1}

Cells are sorted lexicographically and masses are printed as decimal strings
with 17 significant digits, which round-trips float64 exactly.
"""

from __future__ import annotations

import json
import os
from typing import IO

import numpy as np

from .dyadic import DyadicMeasure
from .errors import InputError

FORMAT = "fmz1"
TOTAL_RTOL = 1e-9


def fmt17(x: float) -> str:
    return format(float(x), ".17g")


def dumps(mu: DyadicMeasure) -> str:
    rows = []
    for row, m in zip(mu.coords.tolist(), mu.masses.tolist()):
        rows.append("[" + ",".join(str(c) for c in row) + ',"' + fmt17(m) + '"]')
    header = f'{{"format":"{FORMAT}","d":{mu.d},"k":{mu.k},"cells":[\n'
    return header + ",\n".join(rows) + f'\n],"total":{fmt17(mu.total)}}}\n'


def write(mu: DyadicMeasure, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(mu))


def loads(text: str) -> DyadicMeasure:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"FMZ file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise InputError("not an fmz1 document")
    try:
        d, k = int(doc["d"]), int(doc["k"])
        cells = doc["cells"]
        total = float(doc["total"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed FMZ header: {exc}") from exc
    coords = np.empty((len(cells), d), dtype=np.int64)
    masses = np.empty(len(cells), dtype=np.float64)
    for i, cell in enumerate(cells):
        if len(cell) != d + 1:
            raise InputError(f"cell {i} has {len(cell) - 1} coordinates, expected {d}")
        coords[i] = cell[:d]
        masses[i] = float(cell[d])
    if np.any(masses <= 0) or not np.all(np.isfinite(masses)):
        raise InputError("FMZ masses must be positive and finite")
    mu = DyadicMeasure.from_arrays(coords, masses, k, d)
    if abs(mu.total - total) > TOTAL_RTOL * max(abs(total), abs(mu.total)):
        raise InputError(f"FMZ total {total!r} disagrees with cell sum {mu.total!r}")
    return mu


def read(path: str | os.PathLike | IO[str]) -> DyadicMeasure:
    if hasattr(path, "read"):
        return loads(path.read())
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
