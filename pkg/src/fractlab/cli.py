"""Command-line front end.

Every subcommand resolves its configuration from built-in defaults, an
optional ``--config`` JSON file and the command-line flags (flags win), runs
one library operation and writes a JSON report (stdout unless ``--json`` is
given) plus, with ``--csv``, a plot-ready table.  Exit codes: 0 success,
2 bad input or parameters, 3 budget exceeded, 4 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Any, Callable

import numpy as np

from . import __version__, fmz
from .combinatorics import (FiniteSet, additive_energy, bsg_extract, component_fractions,
                            concentration_check, energy_via_convolution,
                            representation_counts, saturation_check)
from .convolution import convolve, self_power
from .dyadic import (DyadicMeasure, coarsen, dim_fit, discretize, lq_power_sum,
                     measure_dimension, parse_q)
from .errors import BudgetError, ConvergenceError, FractlabError, InputError
from .fourier import bad_set_scan
from .nonconc import (AffineSubspace, anc_scan, hyperplane_decay_fit, sample_hyperplanes,
                      sqrt_friendly_check)
from .report import ExperimentReport
from .schema import validate_report
from .zoo import build_measure
from .zoo.schottky import (SchottkyGroup, conformality_error, doubling_check, ps_cylinders,
                           sample_limit_points, schottky_delta, shadow_check)

fmt17 = fmz.fmt17

# runtime knobs that never change results and are left out of the echoed config
_RUNTIME_KEYS = ("threads", "config", "json", "csv")


# ----------------------------------------------------------------- helpers

def _floats(v) -> list[float]:
    if isinstance(v, str):
        v = v.strip()
        if v.startswith("["):
            v = json.loads(v)
        else:
            return [float(x) for x in v.split(",") if x.strip()]
    if isinstance(v, (int, float)):
        return [float(v)]
    return [float(x) for x in v]


def _scales(v) -> list[int]:
    if isinstance(v, str) and ":" in v:
        lo, hi = v.split(":")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in _floats(v)]


def _json_arg(v):
    return json.loads(v) if isinstance(v, str) else v


def _geometric(lo_exp: float, hi_exp: float, count: int, base: float = 2.0) -> list[float]:
    return [base ** e for e in np.linspace(lo_exp, hi_exp, int(count)).tolist()]


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return fmt17(x)
    return str(x)


class Context:
    def __init__(self, cfg: dict, threads: int | None):
        self.cfg = cfg
        self.threads = threads
        self.csv_header: list[str] | None = None
        self.csv_rows: list[list] = []

    def __getitem__(self, key):
        return self.cfg[key]

    def get(self, key, default=None):
        return self.cfg.get(key, default)

    def table(self, header: list[str], rows) -> None:
        self.csv_header = header
        self.csv_rows = [list(r) for r in rows]

    def measure(self) -> DyadicMeasure:
        if self.cfg.get("input"):
            return fmz.read(self.cfg["input"])
        return build_measure(self.measure_spec())

    def measure_spec(self) -> dict:
        spec = dict(_json_arg(self.cfg.get("measure") or {}))
        for key in ("kind", "scale", "depth", "d", "height", "intervals", "nodes"):
            if self.cfg.get(key) is not None:
                spec[key] = _json_arg(self.cfg[key]) if key == "intervals" else self.cfg[key]
        if "kind" not in spec:
            raise InputError("give a measure with --in or --kind/--measure")
        return spec


# ---------------------------------------------------------------- commands

def _measure_summary(mu: DyadicMeasure) -> dict:
    lo, hi = mu.bounding_box()
    return {"d": mu.d, "k": mu.k, "nnz": mu.nnz, "total": mu.total,
            "bounding_box": [lo.tolist(), hi.tolist()]}


def _cells_table(ctx: Context, mu: DyadicMeasure) -> None:
    ctx.table([f"c{i}" for i in range(mu.d)] + ["mass"],
              (row + [m] for row, m in zip(mu.coords.tolist(), mu.masses.tolist())))


def cmd_gen(ctx: Context) -> dict:
    mu = ctx.measure()
    if ctx.get("out"):
        fmz.write(mu, ctx["out"])
    _cells_table(ctx, mu)
    return {"measure": _measure_summary(mu), "out": ctx.get("out")}


def cmd_conv(ctx: Context) -> dict:
    mu = ctx.measure()
    n = int(ctx["n"])
    kw = {"method": ctx["method"], "threads": ctx.threads}
    if ctx.get("with"):
        other = fmz.read(ctx["with"])
        out = convolve(mu, other, **kw)
        for _ in range(n - 2):
            out = convolve(out, other, **kw)
    else:
        out = self_power(mu, n, **kw)
    if ctx.get("out"):
        fmz.write(out, ctx["out"])
    _cells_table(ctx, out)
    return {"measure": _measure_summary(out), "n": n, "out": ctx.get("out"),
            "l2_power_sum": lq_power_sum(out, 2)}


def cmd_dim(ctx: Context) -> dict:
    q = parse_q(ctx["q"])
    scales = _scales(ctx["scales"])
    if ctx.get("input"):
        mu = fmz.read(ctx["input"])
        est = measure_dimension(mu, q, scales)
        source = "coarsened"
        series = [(k, lq_power_sum(coarsen(mu, k), q)) for k in est.scales_used]
    else:
        spec = ctx.measure_spec()
        series = [(k, lq_power_sum(build_measure(spec, k), q)) for k in scales]
        est = dim_fit(series, q)
        source = "generated"
    ctx.table(["k", "value", "neg_log2_value"],
              ([k, v, -math.log2(v)] for k, v in series))
    return {"estimate": est.as_dict(), "source": source,
            "series": [[k, v] for k, v in series]}


def cmd_fourier_scan(ctx: Context) -> dict:
    mu = ctx.measure()
    Ts = [2.0 ** e for e in range(int(ctx["t_min_exp"]), int(ctx["t_max_exp"]) + 1)]
    reps = [bad_set_scan(mu, T, float(ctx["delta"]), float(ctx["step"]),
                         lipschitz_slack=not ctx["no_slack"], threads=ctx.threads) for T in Ts]
    counts = [r.cover_count for r in reps]
    slope = math.nan
    pos = [(math.log(T), math.log(c)) for T, c in zip(Ts, counts) if c > 0]
    if len(pos) >= 2:
        slope = float(np.polyfit([p[0] for p in pos], [p[1] for p in pos], 1)[0])
        if abs(slope) < 1e-12:
            slope = 0.0
    elif len(Ts) >= 2:
        slope = 0.0
    ctx.table(["T", "bad_count", "cover_count"], ([r.T, r.bad_count, r.cover_count] for r in reps))
    return {"scans": [r.as_dict() for r in reps], "cover_slope": slope}


def cmd_nonconc(ctx: Context) -> dict:
    mu = ctx.measure().normalized()
    rep = anc_scan(mu, float(ctx["theta"]), int(ctx["r"]), int(ctx["levels"]),
                   int(ctx["directions"]), ctx.get("offsets"),
                   eps_grid=_floats(ctx["eps"]), n_points=int(ctx["points"]),
                   threshold=float(ctx["threshold"]), resolution=int(ctx["resolution"]),
                   seed=int(ctx["seed"]), threads=ctx.threads)
    all_ = dict(rep.delta_curve_all)
    ctx.table(["eps", "delta", "delta_all"], ([e, v, all_[e]] for e, v in rep.delta_curve))
    return rep.as_dict()


def _axis_family(d: int, center) -> list[AffineSubspace]:
    c = np.asarray(center, dtype=np.float64)
    return [AffineSubspace.hyperplane(c, np.eye(d)[i]) for i in range(d)]


def _subspace(ctx: Context, d: int) -> AffineSubspace:
    normal = _floats(ctx["normal"]) if ctx.get("normal") is not None else [0.0] * (d - 1) + [1.0]
    point = _floats(ctx["point"]) if ctx.get("point") is not None else [0.0] * d
    if len(normal) != d or len(point) != d:
        raise InputError(f"point and normal need {d} coordinates")
    return AffineSubspace.hyperplane(point, normal)


def cmd_hplane_decay(ctx: Context) -> dict:
    mu = ctx.measure().normalized()
    eps = _geometric(-float(ctx["eps_min_exp"]), -float(ctx["eps_max_exp"]),
                     int(ctx["eps_count"]), float(ctx["eps_base"]))
    family = []
    kind = ctx["family"]
    if kind in ("axis", "both"):
        family += _axis_family(mu.d, _floats(ctx["point"]) if ctx.get("point") else [0.0] * mu.d)
    if kind in ("sampled", "both"):
        family += sample_hyperplanes(mu, int(ctx["directions"]), seed=int(ctx["seed"]))
    if kind == "single":
        family = [_subspace(ctx, mu.d)]
    if not family:
        raise InputError(f"unknown hyperplane family {kind!r}")
    fit = hyperplane_decay_fit(mu, family, eps)
    ctx.table(["index", "slope", "intercept", "residual"],
              ([i, s, b, r] for i, (s, b, r) in enumerate(zip(fit.slopes, fit.intercepts, fit.residuals))))
    worst = family[fit.worst_index]
    return {"fit": fit.as_dict(), "eps": eps, "family_size": len(family),
            "worst": {"point": worst.point.tolist(), "normal": worst.normal().tolist()}}


def cmd_sqrt_friendly(ctx: Context) -> dict:
    nu = ctx.measure().normalized()
    W = _subspace(ctx, nu.d)
    eps = _geometric(-float(ctx["eps_min_exp"]), -float(ctx["eps_max_exp"]),
                     int(ctx["eps_count"]), float(ctx["eps_base"]))
    rep = sqrt_friendly_check(nu, W, eps, threads=ctx.threads)
    ctx.table(["eps", "mass_V", "mass_W", "bound_W"],
              zip(rep.eps, rep.mass_V, rep.mass_W, rep.bound_W))
    return rep.as_dict()


def _finite_set(v, k: int) -> FiniteSet:
    pts = _json_arg(v)
    if not isinstance(pts, list):
        raise InputError("sets are JSON lists of integers or integer vectors")
    arr = np.asarray(pts, dtype=np.int64)
    return FiniteSet.from_points(arr.reshape(len(pts), -1) if arr.size else arr.reshape(0, 1), k)


def cmd_energy(ctx: Context) -> dict:
    A = _finite_set(ctx["A"], int(ctx["scale"]))
    B = _finite_set(ctx["B"], int(ctx["scale"]))
    E = additive_energy(A, B)
    sums, r = representation_counts(A, B)
    ctx.table([f"s{i}" for i in range(A.d)] + ["count"],
              (row + [c] for row, c in zip(sums.tolist(), r.tolist())))
    out = {"energy": E, "size_A": len(A), "size_B": len(B), "sumset_size": int(len(sums))}
    if len(A) and len(B):
        out["energy_via_convolution"] = energy_via_convolution(A, B)
    return out


def cmd_bsg(ctx: Context) -> dict:
    A = _finite_set(ctx["A"], int(ctx["scale"]))
    B = _finite_set(ctx["B"], int(ctx["scale"]))
    res = bsg_extract(A, B, float(ctx["alpha"]), float(ctx["L"]), float(ctx["eps_prime"]))
    ctx.table(["set"] + [f"c{i}" for i in range(A.d)],
              [["A_prime"] + p for p in res.A_prime.tolist()] + [["B_prime"] + p for p in res.B_prime.tolist()])
    return res.as_dict()


def cmd_hochman(ctx: Context) -> dict:
    nu = ctx.measure().normalized()
    V = _json_arg(ctx.get("V")) if ctx.get("V") is not None else [[1.0] + [0.0] * (nu.d - 1)]
    V = np.asarray(V, dtype=np.float64).reshape(-1, nu.d) if np.size(V) else np.empty((0, nu.d))
    eps = float(ctx["eps"])
    m = int(ctx["m"]) if ctx.get("m") is not None else nu.k
    levels, r = int(ctx["levels"]), int(ctx["r"])
    dim_v = int(np.linalg.matrix_rank(V)) if V.shape[0] else 0

    def concentrated(c):
        return concentration_check(c, V, eps)

    def saturated(c):
        if c.k == 0:
            return dim_v == 0
        return saturation_check(c, V, eps, min(m, c.k))

    conc = component_fractions(nu, levels, r, concentrated, ctx.threads)
    sat = component_fractions(nu, levels, r, saturated, ctx.threads)
    ctx.table(["level", "scale", "concentrated", "saturated"],
              ([i, i * r, a, b] for i, (a, b) in enumerate(zip(conc, sat))))
    return {"concentrated": concentration_check(nu, V, eps),
            "saturated": saturation_check(nu, V, eps, m),
            "component_concentrated": math.fsum(conc) / len(conc),
            "component_saturated": math.fsum(sat) / len(sat),
            "per_level_concentrated": conc, "per_level_saturated": sat,
            "dim_V": dim_v}


def _group(ctx: Context) -> SchottkyGroup:
    if ctx.get("intervals") is None:
        raise InputError("give the Schottky intervals as JSON endpoint pairs")
    return SchottkyGroup.from_intervals(_json_arg(ctx["intervals"]))


def cmd_schottky(ctx: Context) -> dict:
    G = _group(ctx)
    nodes, tol = int(ctx["nodes"]), float(ctx["tol"])
    delta = schottky_delta(G, tol, nodes)
    refined = schottky_delta(G, tol, 2 * nodes)
    cyl = ps_cylinders(G, int(ctx["depth"]), delta)
    out = {"group": G.as_dict(), "delta": delta, "delta_refined": refined,
           "refinement_change": abs(refined - delta), "depth": cyl.depth,
           "fixed_point_residual": cyl.residual, "iterations": cyl.iterations,
           "conformality_error": conformality_error(cyl),
           "max_cylinder": float((cyl.hi - cyl.lo).max()), "out": ctx.get("out")}
    if ctx.get("out"):
        mu = discretize(cyl.mid.reshape(-1, 1), cyl.masses, int(ctx["scale"]))
        fmz.write(mu, ctx["out"])
        out["measure"] = _measure_summary(mu)
    ctx.table(["nodes", "delta"], [[nodes, delta], [2 * nodes, refined]])
    return out


def _experiment(ctx: Context, rep: ExperimentReport, header: list[str]) -> dict:
    ctx.table(header, zip(rep.grid, rep.values))
    return rep.as_dict()


def cmd_shadow(ctx: Context) -> dict:
    G = _group(ctx)
    delta = schottky_delta(G, float(ctx["tol"]), int(ctx["nodes"]))
    cyl = ps_cylinders(G, int(ctx["depth"]), delta)
    xi = sample_limit_points(cyl, int(ctx["samples"]), int(ctx["seed"]))
    t = np.linspace(float(ctx["t_min"]), float(ctx["t_max"]), int(ctx["t_steps"]))
    return _experiment(ctx, shadow_check(G, cyl, xi, t), ["t", "log_mass_plus_delta_t"])


def cmd_doubling(ctx: Context) -> dict:
    mu = ctx.measure().normalized()
    radii = [2.0 ** -e for e in range(int(ctx["r_min_exp"]), int(ctx["r_max_exp"]) + 1)]
    rep = doubling_check(mu, _floats(ctx["sigmas"]), radii, int(ctx["centers"]), int(ctx["seed"]))
    return _experiment(ctx, rep, ["sigma", "mean_log_ratio"])


def _flatten(prefix: str, obj, out: list) -> None:
    if isinstance(obj, dict):
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}" if prefix else str(k), obj[k], out)
    elif isinstance(obj, (int, float, str, bool)) or obj is None:
        out.append((prefix, obj))


def cmd_report(ctx: Context) -> dict:
    files = ctx["inputs"]
    if isinstance(files, str):
        files = [files]
    summary, rows = [], []
    for path in files:
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}: not JSON ({exc})") from exc
        validate_report(doc)
        flat: list = []
        _flatten("", doc.get("result", {}), flat)
        for key, val in flat:
            rows.append([path, doc["command"], key, "" if val is None else val])
        summary.append({"file": path, "command": doc["command"], "scalars": len(flat)})
    ctx.table(["file", "command", "key", "value"], rows)
    return {"reports": summary, "valid": True}


# ------------------------------------------------------------ command table

MEASURE_FLAGS = [
    ("--in", {"dest": "input", "help": "FMZ measure file"}),
    ("--kind", {"help": "zoo measure kind"}),
    ("--scale", {"type": int, "help": "dyadic scale k"}),
    ("--depth", {"type": int, "help": "word depth for IFS/Schottky generators"}),
    ("--d", {"type": int, "help": "ambient dimension (lebesgue)"}),
    ("--height", {"type": float, "help": "line height (line)"}),
    ("--intervals", {"help": "Schottky endpoint pairs as JSON"}),
    ("--nodes", {"type": int, "help": "collocation nodes per interval"}),
    ("--measure", {"help": "full zoo spec as JSON"}),
]

EPS_FLAGS = [
    ("--eps-min-exp", {"type": float}),
    ("--eps-max-exp", {"type": float}),
    ("--eps-count", {"type": int}),
    ("--eps-base", {"type": float}),
]
EPS_DEFAULTS = {"eps_min_exp": 1.0, "eps_max_exp": 6.0, "eps_count": 6, "eps_base": 2.0}

SCHOTTKY_FLAGS = [
    ("--intervals", {"help": "endpoint pairs as JSON"}),
    ("--nodes", {"type": int}),
    ("--tol", {"type": float}),
    ("--depth", {"type": int}),
]
SCHOTTKY_DEFAULTS = {"nodes": 16, "tol": 1e-10, "depth": 10}


COMMANDS: dict[str, tuple[Callable[[Context], dict], str, list, dict]] = {
    "gen": (cmd_gen, "generate a zoo measure and write FMZ",
            MEASURE_FLAGS + [("--out", {})], {"out": None}),
    "conv": (cmd_conv, "convolution power of a measure",
             MEASURE_FLAGS + [("--n", {"type": int}), ("--with", {"help": "second FMZ factor"}),
                              ("--method", {"choices": ["auto", "direct", "fft"]}), ("--out", {})],
             {"n": 2, "method": "auto", "out": None}),
    "dim": (cmd_dim, "L^q dimension fit",
            MEASURE_FLAGS + [("--q", {}), ("--scales", {"help": "lo:hi or comma list"})],
            {"q": "2", "scales": "8:16"}),
    "fourier-scan": (cmd_fourier_scan, "bad-frequency cover counts",
                     MEASURE_FLAGS + [("--delta", {"type": float}), ("--step", {"type": float}),
                                      ("--t-min-exp", {"type": int}), ("--t-max-exp", {"type": int}),
                                      ("--no-slack", {"action": "store_true"})],
                     {"delta": 0.02, "step": 0.25, "t_min_exp": 6, "t_max_exp": 12, "no_slack": False}),
    "nonconc": (cmd_nonconc, "affine non-concentration scan",
                MEASURE_FLAGS + [("--theta", {"type": float}), ("--r", {"type": int}),
                                 ("--levels", {"type": int}), ("--directions", {"type": int}),
                                 ("--offsets", {"type": int}), ("--points", {"type": int}),
                                 ("--threshold", {"type": float}), ("--resolution", {"type": int}),
                                 ("--eps", {"help": "comma list"})],
                {"theta": 0.25, "r": 1, "levels": 4, "directions": 64, "offsets": None,
                 "points": 32, "threshold": 0.5, "resolution": 5,
                 "eps": "0.5,0.25,0.125,0.0625,0.03125"}),
    "hplane-decay": (cmd_hplane_decay, "hyperplane decay exponent fit",
                     MEASURE_FLAGS + EPS_FLAGS + [
                         ("--family", {"choices": ["axis", "sampled", "both", "single"]}),
                         ("--directions", {"type": int}), ("--point", {}), ("--normal", {})],
                     {**EPS_DEFAULTS, "family": "axis", "directions": 64, "point": None,
                      "normal": None}),
    "sqrt-friendly": (cmd_sqrt_friendly, "transfer decay from the convolution square",
                      MEASURE_FLAGS + EPS_FLAGS + [("--point", {}), ("--normal", {})],
                      {**EPS_DEFAULTS, "point": None, "normal": None}),
    "energy": (cmd_energy, "additive energy of two finite sets",
               [("--A", {"help": "JSON list"}), ("--B", {"help": "JSON list"}),
                ("--scale", {"type": int})], {"scale": 0}),
    "bsg": (cmd_bsg, "greedy BSG extraction",
            [("--A", {}), ("--B", {}), ("--scale", {"type": int}), ("--alpha", {"type": float}),
             ("--L", {"type": float}), ("--eps-prime", {"type": float})],
            {"scale": 0, "alpha": 0.1, "L": 1.0, "eps_prime": 0.1}),
    "hochman": (cmd_hochman, "concentration and saturation diagnostics",
                MEASURE_FLAGS + [("--V", {"help": "JSON list of direction vectors"}),
                                 ("--eps", {"type": float}), ("--m", {"type": int}),
                                 ("--levels", {"type": int}), ("--r", {"type": int})],
                {"V": None, "eps": 0.1, "m": None, "levels": 6, "r": 2}),
    "schottky": (cmd_schottky, "critical exponent and Patterson-Sullivan measure",
                 SCHOTTKY_FLAGS + [("--scale", {"type": int}), ("--out", {})],
                 {**SCHOTTKY_DEFAULTS, "scale": 20, "out": None}),
    "shadow": (cmd_shadow, "shadow lemma check",
               SCHOTTKY_FLAGS + [("--samples", {"type": int}), ("--t-min", {"type": float}),
                                 ("--t-max", {"type": float}), ("--t-steps", {"type": int})],
               {**SCHOTTKY_DEFAULTS, "samples": 32, "t_min": 0.0, "t_max": 7.0, "t_steps": 29}),
    "doubling": (cmd_doubling, "doubling exponent fit",
                 MEASURE_FLAGS + [("--sigmas", {}), ("--r-min-exp", {"type": int}),
                                  ("--r-max-exp", {"type": int}), ("--centers", {"type": int})],
                 {"sigmas": "0.125,0.25,0.5,1,2,4,8", "r_min_exp": 4, "r_max_exp": 8,
                  "centers": 64}),
    "report": (cmd_report, "validate reports and flatten them to CSV",
               [("inputs", {"nargs": "+", "help": "JSON report files"})], {}),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fractlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fractlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text, flags, _) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        for flag, kw in flags:
            kw = dict(kw)
            if not flag.startswith("-"):
                p.add_argument(flag, **kw)
                continue
            if kw.get("action") == "store_true":
                kw["default"] = argparse.SUPPRESS
            else:
                kw.setdefault("default", argparse.SUPPRESS)
            p.add_argument(flag, **kw)
        p.add_argument("--config", help="JSON config file; flags override its keys")
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: FRACTLAB_THREADS or all cores)")
        p.add_argument("--json", help="write the JSON report here instead of stdout")
        p.add_argument("--csv", help="write the CSV table here")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    name = args.command
    cfg: dict[str, Any] = {"seed": 0}
    cfg.update(COMMANDS[name][3])
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"config file is not JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise InputError("config file must hold a JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in loaded.items() if k != "command"})
    for key, val in vars(args).items():
        if key in ("command",) + _RUNTIME_KEYS:
            continue
        cfg[key] = val
    cfg["seed"] = int(cfg["seed"])
    return cfg


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(x) for x in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def dump_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        ctx = Context(cfg, args.threads)
        result = COMMANDS[args.command][0](ctx)
        report = _clean({"command": args.command, "version": __version__,
                         "config": cfg, "result": result})
        validate_report(report)
        text = dump_report(report)
        if args.json:
            with open(args.json, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        if args.csv and ctx.csv_header is not None:
            _write_csv(args.csv, ctx.csv_header, ctx.csv_rows)
    except BudgetError as exc:
        print(f"fractlab: budget exceeded: {exc}", file=sys.stderr)
        return 3
    except ConvergenceError as exc:
        print(f"fractlab: no convergence: {exc}", file=sys.stderr)
        return 4
    except (FractlabError, ValueError, TypeError, KeyError, OSError) as exc:
        print(f"fractlab: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
