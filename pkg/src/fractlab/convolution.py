"""Convolution of discretized measures and self-convolution experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.fft

from .dyadic import (DimEstimate, DyadicMeasure, _sorted_unique, dim_fit, discretize,
                     lq_norm, lq_power_sum, parse_q)
from .errors import BudgetError, ParameterError
from .parallel import resolve_threads

__all__ = [
    "DIRECT_THRESHOLD",
    "convolve",
    "self_power",
    "commute_check",
    "FlatteningReport",
    "flattening_experiment",
]

DIRECT_THRESHOLD = 2**26
CLAMP = 1e-14
_PAIR_CHUNK = 2**22
_DENSE_ACC_LIMIT = 2**24
_FFT_LIMIT = 2**26


def _check_pair(mu: DyadicMeasure, nu: DyadicMeasure) -> None:
    if mu.d != nu.d or mu.k != nu.k:
        raise ParameterError(f"cannot convolve (d={mu.d}, k={mu.k}) with (d={nu.d}, k={nu.k})")


def _strides(ext: np.ndarray) -> np.ndarray:
    strides = np.ones(len(ext), dtype=np.int64)
    for i in range(len(ext) - 2, -1, -1):
        strides[i] = strides[i + 1] * ext[i + 1]
    return strides


def _unravel(flat: np.ndarray, ext: np.ndarray) -> np.ndarray:
    return np.stack(np.unravel_index(flat, tuple(int(e) for e in ext)), axis=1).astype(np.int64)


def _convolve_direct(mu: DyadicMeasure, nu: DyadicMeasure) -> DyadicMeasure:
    lo = mu.coords.min(axis=0) + nu.coords.min(axis=0)
    ext = mu.coords.max(axis=0) + nu.coords.max(axis=0) - lo + 1
    vol = int(np.prod(ext.astype(object)))
    rows = max(1, _PAIR_CHUNK // nu.nnz)
    if vol <= _DENSE_ACC_LIMIT:
        strides = _strides(ext)
        nu_idx = (nu.coords - lo) @ strides
        mu_idx = mu.coords @ strides
        acc = np.zeros(vol)
        for start in range(0, mu.nnz, rows):
            stop = min(start + rows, mu.nnz)
            idx = (mu_idx[start:stop, None] + nu_idx[None, :]).ravel()
            w = (mu.masses[start:stop, None] * nu.masses[None, :]).ravel()
            acc += np.bincount(idx, weights=w, minlength=vol)
        flat = np.flatnonzero(acc)
        return DyadicMeasure.from_arrays(_unravel(flat, ext) + lo, acc[flat], mu.k, mu.d,
                                         presorted=True)
    parts_c, parts_m = [], []
    for start in range(0, mu.nnz, rows):
        stop = min(start + rows, mu.nnz)
        c = (mu.coords[start:stop, None, :] + nu.coords[None, :, :]).reshape(-1, mu.d)
        w = (mu.masses[start:stop, None] * nu.masses[None, :]).ravel()
        c, w = _sorted_unique(c, w)
        parts_c.append(c)
        parts_m.append(w)
    return DyadicMeasure.from_arrays(np.concatenate(parts_c), np.concatenate(parts_m),
                                     mu.k, mu.d)


def _fft_shape(mu: DyadicMeasure, nu: DyadicMeasure):
    ext_mu = mu.coords.max(axis=0) - mu.coords.min(axis=0) + 1
    ext_nu = nu.coords.max(axis=0) - nu.coords.min(axis=0) + 1
    out = ext_mu + ext_nu - 1
    padded = [1 << int(math.ceil(math.log2(max(int(e), 1)))) for e in out]
    return ext_mu, ext_nu, out, padded


def _dense(mu: DyadicMeasure, shape) -> np.ndarray:
    grid = np.zeros(shape)
    idx = tuple((mu.coords - mu.coords.min(axis=0)).T)
    grid[idx] = mu.masses
    return grid


def _convolve_fft(mu: DyadicMeasure, nu: DyadicMeasure, threads: int) -> DyadicMeasure:
    _, _, out, padded = _fft_shape(mu, nu)
    axes = tuple(range(mu.d))
    fa = scipy.fft.rfftn(_dense(mu, padded), s=padded, axes=axes, workers=threads)
    fb = scipy.fft.rfftn(_dense(nu, padded), s=padded, axes=axes, workers=threads)
    conv = scipy.fft.irfftn(fa * fb, s=padded, axes=axes, workers=threads)
    conv = conv[tuple(slice(0, int(e)) for e in out)]
    expected = mu.total * nu.total
    # ringing below the clamp is numerical noise, never mass
    conv = np.where(conv > CLAMP * expected, conv, 0.0)
    flat = np.flatnonzero(conv)
    masses = conv.ravel()[flat]
    masses *= expected / masses.sum()
    lo = mu.coords.min(axis=0) + nu.coords.min(axis=0)
    return DyadicMeasure.from_arrays(_unravel(flat, out) + lo, masses, mu.k, mu.d,
                                     presorted=True)


def convolve(mu: DyadicMeasure, nu: DyadicMeasure, *, method: str = "auto",
             direct_threshold: int = DIRECT_THRESHOLD,
             threads: int | None = None) -> DyadicMeasure:
    """Lattice convolution: mass at ``c`` is ``sum_{a+b=c} mu(a) nu(b)``.

    ``method`` is ``"direct"``, ``"fft"`` or ``"auto"``; auto uses direct
    accumulation while ``nnz(mu) * nnz(nu) <= direct_threshold`` and the
    padded transform otherwise.
    """
    _check_pair(mu, nu)
    if mu.nnz == 0 or nu.nnz == 0:
        return DyadicMeasure.from_arrays(np.empty((0, mu.d)), np.empty(0), mu.k, mu.d)
    if method not in ("auto", "direct", "fft"):
        raise ParameterError(f"unknown convolution method {method!r}")
    fft_size = int(np.prod(_fft_shape(mu, nu)[3]))
    if method == "auto":
        method = "direct" if mu.nnz * nu.nnz <= direct_threshold or fft_size > _FFT_LIMIT else "fft"
    if method == "fft":
        if fft_size > _FFT_LIMIT:
            raise BudgetError(f"transform window of {fft_size} points exceeds {_FFT_LIMIT}")
        return _convolve_fft(mu, nu, resolve_threads(threads))
    return _convolve_direct(mu, nu)


def self_power(mu: DyadicMeasure, n: int, **kwargs) -> DyadicMeasure:
    """``mu`` convolved with itself ``n`` times (the scale is unchanged)."""
    if n < 1:
        raise ParameterError("convolution power must be a positive integer")
    if n & (n - 1) == 0:
        out = mu
        while n > 1:
            out = convolve(out, out, **kwargs)
            n //= 2
        return out
    out = mu
    for _ in range(n - 1):
        out = convolve(out, mu, **kwargs)
    return out


def commute_check(mu_atoms, nu_atoms, k: int, q=2) -> float:
    """Ratio ``||(mu*nu)_k||_q / ||mu_k * nu_k||_q`` for atomic measures.

    Atoms are ``(points, weights)`` pairs; the numerator convolves the atoms
    exactly before discretizing.
    """
    q = parse_q(q)
    (pm, wm), (pn, wn) = mu_atoms, nu_atoms
    pm = np.asarray(pm, dtype=np.float64)
    pn = np.asarray(pn, dtype=np.float64)
    if pm.ndim == 1:
        pm, pn = pm.reshape(-1, 1), pn.reshape(-1, 1)
    wm = np.asarray(wm, dtype=np.float64)
    wn = np.asarray(wn, dtype=np.float64)
    sums = (pm[:, None, :] + pn[None, :, :]).reshape(-1, pm.shape[1])
    exact = discretize(sums, np.outer(wm, wn).ravel(), k)
    lattice = convolve(discretize(pm, wm, k), discretize(pn, wn, k))
    return lq_norm(exact, q) / lq_norm(lattice, q)


@dataclass
class FlatteningReport:
    q: float
    n_values: list[int]
    dims: list[DimEstimate]
    eta_hat: list[float]
    eta_scale: int
    norms: dict[int, list[float]] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "q": "inf" if math.isinf(self.q) else self.q,
            "n_values": self.n_values,
            "dims": [d.as_dict() for d in self.dims],
            "eta_hat": self.eta_hat,
            "eta_scale": self.eta_scale,
        }


def flattening_experiment(generator: Callable[[int], DyadicMeasure], q,
                          scales: Sequence[int], n_max: int,
                          **conv_kwargs) -> FlatteningReport:
    """Dimension of ``mu**n`` for ``n <= n_max`` and per-step L^2 contraction.

    ``eta_hat[n-2]`` is ``-(1/k) log2(||mu_k * nu||_2 / ||nu||_2)`` with
    ``nu = mu_k**(n-1)`` at the finest scale of the window.
    """
    q = parse_q(q)
    scales = sorted(int(k) for k in scales)
    if n_max < 1:
        raise ParameterError("n_max must be at least 1")
    series: dict[int, list[tuple[int, float]]] = {n: [] for n in range(1, n_max + 1)}
    l2: dict[int, list[float]] = {}
    for k in scales:
        mu = generator(k)
        power = mu
        l2[k] = []
        for n in range(1, n_max + 1):
            if n > 1:
                power = convolve(power, mu, **conv_kwargs)
            series[n].append((k, lq_power_sum(power, q)))
            l2[k].append(lq_norm(power, 2))
    dims = [dim_fit(series[n], q) for n in range(1, n_max + 1)]
    k_top = scales[-1]
    norms = l2[k_top]
    eta = [-math.log2(norms[i] / norms[i - 1]) / k_top for i in range(1, n_max)]
    return FlatteningReport(q=q, n_values=list(range(1, n_max + 1)), dims=dims,
                            eta_hat=eta, eta_scale=k_top, norms=l2)
