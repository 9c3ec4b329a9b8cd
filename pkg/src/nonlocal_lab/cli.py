"""Config-driven experiment runner.

Usage::

    nonlocal-lab run CONFIG.json [--output DIR] [--svg] [-v]
    nonlocal-lab SUBCOMMAND CONFIG.json [...]

A run writes ``manifest.json`` (resolved config, library version, wall time),
``report.json`` (scalars and named pass/fail checks), CSV tables and
optionally SVG plots.  Exit status: 0 when every check passes, 2 when a check
fails, 1 on configuration or runtime errors.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__

log = logging.getLogger("nonlocal_lab")

SUBCOMMANDS = ("solve-dirichlet", "one-phase", "half-space", "obstacle", "beta0",
               "fit-exponent", "reduce-kernel")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int = {"type": "integer", "minimum": 1}
_numlist = {"type": "array", "items": _num}

KERNEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["tag", "s"],
    "properties": {
        "tag": {"enum": ["fractional-laplacian", "power-envelope-oscillating", "dyadic-piecewise"]},
        "n": {"type": "integer", "minimum": 1, "maximum": 2},
        "s": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "lambda": _pos,
        "Lambda": _pos,
        "params": {"type": "object", "additionalProperties": False,
                   "properties": {"log_frequency": _num}},
    },
}

GRID_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["min", "max", "nodes"],
    "properties": {"min": _num, "max": _num, "nodes": {"type": "integer", "minimum": 3}},
}

PROBLEM_SCHEMAS = {
    "solve-dirichlet": {
        "properties": {
            "domain": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
            "f": _num, "g": _num,
            "oracle": {"enum": ["getoor", None]},
            "boundary_layer_cells": {"type": "integer", "minimum": 0},
            "boundary_checks": {"type": "boolean"},
            "profile_R": _pos,
        },
    },
    "one-phase": {
        "properties": {
            "fixture": {"enum": ["step1", "none"]},
            "nodes": _int,
            "oracle_nodes": {"type": "integer", "minimum": 1, "maximum": 64},
            "M_values": _numlist,
            "oracle": {"type": "boolean"},
            "reports": {"type": "boolean"},
            "radii": _numlist,
            "energy_balls": {"type": "array", "items": {"type": "array", "items": _num,
                                                         "minItems": 2, "maxItems": 2}},
            "pythagorean_samples": {"type": "integer", "minimum": 0},
            "minmax_samples": {"type": "integer", "minimum": 0},
        },
    },
    "half-space": {
        "properties": {
            "route": {"enum": ["pipeline", "truncated", "both", "power-profile"]},
            "R": _pos,
            "nodes_per_unit": _int,
            "step1_nodes": _int,
            "window_nodes": _int,
            "max_levels": _int,
            "points": _numlist,
            "s_values": _numlist,
            "spacing": _pos,
            "reduction": {"type": "boolean"},
            "sqrt_reference": {"type": "boolean"},
            "probe_decades": _int,
        },
    },
    "obstacle": {
        "properties": {
            "obstacle": {"enum": ["bump"]},
            "width": _pos, "height": _pos,
            "profile_R": _pos, "profile_nodes_per_unit": _int,
        },
    },
    "beta0": {
        "properties": {
            "pairs": {"type": "array", "items": {"type": "array", "items": _pos, "minItems": 2,
                                                  "maxItems": 2}},
            "s_values": _numlist,
        },
    },
    "fit-exponent": {
        "properties": {
            "samples": {"type": "array", "items": {"type": "array", "items": _num,
                                                   "minItems": 2, "maxItems": 2}},
            "csv": {"type": "string"},
            "target": _num,
        },
    },
    "reduce-kernel": {
        "properties": {
            "direction": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
            "t_values": _numlist,
            "check_points": _numlist,
        },
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["subcommand", "kernel"],
    "properties": {
        "subcommand": {"enum": list(SUBCOMMANDS)},
        "description": {"type": "string"},
        "kernel": KERNEL_SCHEMA,
        "grid": GRID_SCHEMA,
        "problem": {"type": "object"},
        "output": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "tolerances": {"type": "object", "additionalProperties": _num},
        "svg": {"type": "boolean"},
    },
}

DEFAULT_TOLERANCES = {
    "solve-dirichlet": {"max_error": 2e-2, "center_error": 1e-2, "remainder_exponent": 0.55},
    "one-phase": {"energy": 1e-8, "certificate": 1e-6, "density_low": 0.05, "density_high": 0.95,
                  "exponent": 0.05, "pythagorean": 1e-10, "minmax": 1e-12},
    "half-space": {"profile": 3e-2, "exponent": 0.05, "routes": 2e-2, "reduction": 1e-6,
                   "c0": 1e-6, "residual": 1e-3},
    "obstacle": {"complementarity": 1e-8, "symmetry": 1e-8, "exponent": 0.1,
                 "remainder_exponent": 1.55, "holder": 0.4},
    "beta0": {"equal": 1e-2, "margin": 1e-3},
    "fit-exponent": {"exponent": 0.05},
    "reduce-kernel": {"c0": 1e-6, "relative": 1e-6},
}


class ConfigError(ValueError):
    pass


def _line_of(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for k, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return k
    return None


def load_config(path) -> dict:
    """Parse and validate a config file; errors carry line and key information."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    validate_config(cfg, text, str(path))
    return cfg


def validate_config(cfg: dict, text: str = "", where: str = "<config>") -> None:
    def fail(err: jsonschema.ValidationError, prefix=()):
        keys = [str(k) for k in (*prefix, *err.absolute_path)]
        key = keys[-1] if keys else None
        line = _line_of(text, key) if key and text else None
        loc = f"{where}:{line}" if line else where
        raise ConfigError(f"{loc}: at '{'/'.join(keys) or '<root>'}': {err.message}")

    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as err:
        fail(err)
    schema = dict(PROBLEM_SCHEMAS[cfg["subcommand"]], type="object", additionalProperties=False)
    try:
        jsonschema.validate(cfg.get("problem", {}), schema)
    except jsonschema.ValidationError as err:
        fail(err, ("problem",))
    unknown = set(cfg.get("tolerances", {})) - set(DEFAULT_TOLERANCES[cfg["subcommand"]])
    if unknown:
        raise ConfigError(f"{where}: unknown tolerance keys {sorted(unknown)}")


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def svg_plot(path: Path, series: list[dict], title: str = "", logx: bool = False, logy: bool = False,
             width: int = 640, height: int = 420) -> None:
    """Minimal SVG line/scatter plot.  Each series: {x, y, label, style: 'line'|'points'}."""
    ml, mr, mt, mb = 70, 20, 40, 50
    tx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    ty = (lambda v: math.log10(v)) if logy else (lambda v: v)
    pts = []
    for s in series:
        xy = [(tx(a), ty(b)) for a, b in zip(s["x"], s["y"])
              if (not logx or a > 0) and (not logy or b > 0) and math.isfinite(a) and math.isfinite(b)]
        pts.append(xy)
    flat = [p for xy in pts for p in xy]
    if not flat:
        return
    x0, x1 = min(p[0] for p in flat), max(p[0] for p in flat)
    y0, y1 = min(p[1] for p in flat), max(p[1] for p in flat)
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1
    W, H = width - ml - mr, height - mt - mb
    X = lambda v: ml + (v - x0) / (x1 - x0) * W
    Y = lambda v: mt + H - (v - y0) / (y1 - y0) * H
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{W}" height="{H}" fill="none" stroke="black"/>',
           f'<text x="{width / 2}" y="20" text-anchor="middle">{title}</text>']
    for k in range(5):
        xv = x0 + (x1 - x0) * k / 4
        yv = y0 + (y1 - y0) * k / 4
        xl = f"1e{xv:.2g}" if logx else f"{xv:.3g}"
        yl = f"1e{yv:.2g}" if logy else f"{yv:.3g}"
        out.append(f'<text x="{X(xv):.1f}" y="{mt + H + 18}" text-anchor="middle">{xl}</text>')
        out.append(f'<text x="{ml - 6}" y="{Y(yv) + 4:.1f}" text-anchor="end">{yl}</text>')
    for k, (s, xy) in enumerate(zip(series, pts)):
        c = colors[k % len(colors)]
        if s.get("style", "line") == "points":
            out += [f'<circle cx="{X(a):.2f}" cy="{Y(b):.2f}" r="3" fill="{c}"/>' for a, b in xy]
        elif xy:
            d = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in xy)
            out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{d}"/>')
        out.append(f'<text x="{ml + 10}" y="{mt + 16 + 14 * k}" fill="{c}">{s.get("label", "")}</text>')
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n")


class Run:
    """Collects tables, scalars, checks and plots of one experiment."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.tables: dict = {}
        self.scalars: dict = {}
        self.checks: dict = {}
        self.plots: list = []
        self.tol = dict(DEFAULT_TOLERANCES[cfg["subcommand"]], **cfg.get("tolerances", {}))

    def table(self, name, header, rows):
        self.tables[name] = (header, [tuple(r) for r in rows])

    def check(self, name, ok: bool, **detail):
        self.checks[name] = {"passed": bool(ok), **{k: _jsonable(v) for k, v in detail.items()}}

    def fit_plot(self, name, samples, fit, title):
        r = [a for a, _ in samples]
        self.plots.append((name, [
            {"x": r, "y": [b for _, b in samples], "label": "samples", "style": "points"},
            {"x": r, "y": [fit.coefficient * a**fit.exponent for a in r],
             "label": f"fit: exponent {fit.exponent:.4f}"}], title, True, True))


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def build_kernel(block: dict):
    from .kernels import kernel_from_config

    flat = {k: v for k, v in block.items() if k != "params"}
    flat.update(block.get("params", {}))
    return kernel_from_config(flat)


def _grid(cfg, default):
    from .mesh import Grid

    g = dict(default, **cfg.get("grid", {}))
    return Grid.line(float(g["min"]), float(g["max"]), int(g["nodes"]))


def _solve_dirichlet(run: Run):
    from .analysis import dyadic_ladder
    from .dirichlet import boundary_expansion, hopf_check, solve_dirichlet
    from .halfspace import build_halfspace_truncated
    from .mesh import ExteriorDescriptor, GridFunction, Region

    cfg, p, tol = run.cfg, run.cfg.get("problem", {}), run.tol
    K = build_kernel(cfg["kernel"])
    grid = _grid(cfg, {"min": -2.0, "max": 2.0, "nodes": 2000})
    a, b = p.get("domain", [-1.0, 1.0])
    f, gval = float(p.get("f", 1.0)), float(p.get("g", 0.0))
    omega = Region.interval(grid, a, b)
    data = GridFunction(grid, np.full(grid.shape, gval), ExteriorDescriptor.constant(gval))
    u = solve_dirichlet(K, omega, f, data)
    x = grid.x
    header, cols = ["x", "u"], [x, u.values]
    if p.get("oracle") == "getoor":
        from scipy.special import gamma

        s = K.s
        if K.family != "fractional-laplacian" or abs(b + a) > 1e-12:
            raise ConfigError("the Getoor oracle needs the fractional Laplacian on a symmetric interval")
        R = 0.5 * (b - a)
        c = 2.0 ** (-2 * s) * gamma(0.5) / (gamma(1 + s) * gamma(0.5 + s))
        exact = f * c * np.maximum(R * R - x * x, 0.0) ** s
        layer = int(p.get("boundary_layer_cells", 4)) * grid.h
        sel = omega.mask & (np.abs(x) <= R - layer)
        err = float(np.max(np.abs(u.values - exact)[sel]))
        centre = float(u(0.0))
        run.scalars.update(max_error=err, u_center=centre, exact_center=float(c * f * R ** (2 * s)))
        run.check("max_error", err <= tol["max_error"], value=err, tol=tol["max_error"])
        run.check("center", abs(centre - c * f * R ** (2 * s)) <= tol["center_error"], value=centre)
        header.append("exact")
        cols.append(exact)
    if p.get("boundary_checks"):
        npu = int(round(1.0 / grid.h))
        hs = build_halfspace_truncated(K, R=float(p.get("profile_R", 4.0)), nodes_per_unit=npu)
        radii = dyadic_ladder(4 * grid.h, 0.125)
        z = float(x[grid.index_of(a)])
        q, fit = boundary_expansion(u, hs, z, radii)
        hp = hopf_check(u, omega, K.s, K, f)
        run.scalars.update(q=q, remainder=fit.to_dict(), hopf_coefficient=hp.coefficient)
        run.check("remainder_exponent", fit.exponent >= tol["remainder_exponent"], value=fit.exponent)
        run.check("hopf", hp.passed, coefficient=hp.coefficient)
        run.table("hopf_bands", ["d_lo", "d_hi", "min_u_over_d_s"], hp.bands)
    run.table("solution", header, zip(*cols))
    run.plots.append(("solution", [{"x": list(x), "y": list(u.values), "label": "u"}],
                      "Dirichlet solution", False, False))


def _oracle_checks(run: Run, res, prefix: str):
    from .onephase import minimize_bruteforce_1d

    bf = minimize_bruteforce_1d(res.problem)
    same = bool(np.array_equal(bf.contact.mask, res.contact.mask))
    gap = abs(bf.total - res.total)
    run.scalars[prefix] = {"nodes": res.problem.omega.count, "M": res.problem.M, "energy": res.total,
                           "oracle_energy": bf.total, "contact_nodes": res.contact.count,
                           "oracle_contact_nodes": bf.contact.count}
    run.check(f"{prefix}_contact_set", same)
    run.check(f"{prefix}_energy", gap <= run.tol["energy"], difference=gap)


def _step1_checks(run: Run, K, p: dict, tol: dict):
    from .onephase import (density_report, energy_comparison, interior_growth_constant,
                           minimizer_certificate, nondegeneracy_report, optimal_regularity_report,
                           step1_fixture)

    nodes = int(p.get("nodes", 64))
    fx = step1_fixture(K, nodes, p.get("M_values"))
    res = fx.result
    run.scalars.update(M=fx.M, x0=fx.x0, contact_nodes=res.contact.count, energy=res.total,
                       sweeps=res.sweeps, M_sweep=fx.sweep,
                       positivity_components=len(res.positivity.components()))
    run.table("solution", ["x", "u"], zip(res.u.grid.x, res.u.values))
    run.table("trace", ["step", "functional"], enumerate(res.trace))
    if p.get("oracle", False):
        _oracle_checks(run, res, "oracle")
    cert = minimizer_certificate(res, tol["certificate"])
    run.check("minimizer_certificate", cert["passed"], **cert)
    if p.get("reports", False):
        radii = p.get("radii") or [2.0**-k for k in range(6, 1, -1)]
        dens = density_report(res, fx.x0, radii)
        nd = nondegeneracy_report(res, fx.x0, radii)
        fit = optimal_regularity_report(res, fx.x0, radii)
        run.table("density", ["r", "ratio", "resolved"], dens)
        run.table("nondegeneracy", ["r", "sup_u_over_r_s"], nd)
        run.scalars.update(regularity=fit.to_dict(), interior_growth=interior_growth_constant(res))
        run.check("density", all(tol["density_low"] < d[1] < tol["density_high"] for d in dens),
                  ratios=[d[1] for d in dens])
        run.check("nondegeneracy", min(v for _, v in nd) > 0, min_ratio=min(v for _, v in nd))
        run.check("optimal_regularity", fit.within(K.s, tol["exponent"]), exponent=fit.exponent)
        x = res.u.grid.x
        samples = [(r, float(np.max(res.u.values[np.abs(x - fx.x0) <= r + 1e-9 * res.problem.h])))
                   for r in radii]
        run.fit_plot("regularity_fit", samples, fit, "sup of u on balls at the free boundary")
    balls = p.get("energy_balls")
    if balls:
        rows = []
        for c, r in balls:
            lhs, rhs = energy_comparison(res, c, r)
            rows.append((c, r, lhs, rhs))
        scale = max(abs(res.dirichlet), 1.0)
        run.table("energy_comparison", ["center", "radius", "E_u_minus_v", "M_zero_measure"], rows)
        run.check("energy_comparison", all(l <= rr + tol["pythagorean"] * scale for _, _, l, rr in rows))


def _one_phase(run: Run):
    from .dirichlet import pythagorean_defect
    from .mesh import ExteriorDescriptor, Grid, GridFunction, Region
    from .onephase import minmax_identity, step1_fixture

    cfg, p, tol = run.cfg, run.cfg.get("problem", {}), run.tol
    K = build_kernel(cfg["kernel"])
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    if "oracle_nodes" in p:
        fx0 = step1_fixture(K, int(p["oracle_nodes"]), p.get("M_values"))
        _oracle_checks(run, fx0.result, "oracle")
    if p.get("fixture", "step1") == "step1":
        _step1_checks(run, K, p, tol)
    n_py = int(p.get("pythagorean_samples", 0))
    if n_py:
        g = Grid.line(-1.0, 1.0, 201)
        worst = 0.0
        for _ in range(n_py):
            u = GridFunction(g, rng.normal(size=g.shape), ExteriorDescriptor.constant(float(rng.normal())))
            B = Region.ball(g, float(rng.uniform(-0.5, 0.5)), float(rng.uniform(0.1, 0.4)))
            worst = max(worst, pythagorean_defect(K, u, B, Region.interval(g, -0.9, 0.9))["defect"])
        run.scalars["pythagorean_defect"] = worst
        run.check("pythagorean", worst <= tol["pythagorean"], worst=worst)
    n_mm = int(p.get("minmax_samples", 0))
    if n_mm:
        q = rng.normal(size=(4, n_mm))
        lhs, rhs = minmax_identity(*q)
        rel = float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(lhs))))
        l0, r0 = minmax_identity(3, 1, 0, 2)
        run.scalars.update(minmax_max_relative=rel, worked_instance=[float(l0), float(r0)])
        run.check("minmax_identity", rel <= tol["minmax"] and float(l0) == float(r0) == 2.0, worst=rel)


def _half_space(run: Run):
    from .halfspace import (build_halfspace_pipeline, build_halfspace_truncated,
                            derivative_bounds_report, dimensional_reduction_check, growth_fit,
                            monotonicity_defect, oscillation_amplitude, profile_difference,
                            quotient_oscillation_probe, residual_certificate)
    from .kernels import fractional_laplacian_kernel
    from .mesh import ExteriorDescriptor, Grid, GridFunction
    from .nonlocal_op import apply_L

    cfg, p, tol = run.cfg, run.cfg.get("problem", {}), run.tol
    K = build_kernel(cfg["kernel"])
    route = p.get("route", "both")
    if route == "power-profile":
        s_values = p.get("s_values", [K.s])
        h = float(p.get("spacing", 1.0 / 1024))
        pts = p.get("points") or list(np.linspace(0.1, 4.0, 20))
        rows = []
        for s in s_values:
            Ks = fractional_laplacian_kernel(1, s)
            g = Grid.with_spacing(-1.0, 5.0, h)
            u = GridFunction(g, np.maximum(g.x, 0.0) ** s, ExteriorDescriptor.power(1.0, s, "right"))
            Lu = apply_L(Ks, u)
            for x in pts:
                i = g.index_of(x)
                rows.append((s, g.x[i], Lu[i], abs(Lu[i]) * g.x[i] ** s))
        worst = max(r[3] for r in rows)
        run.table("power_residual", ["s", "x", "Lu", "relative"], rows)
        run.scalars["max_relative_residual"] = worst
        run.check("power_profile", worst <= tol["residual"], worst=worst)
        return
    if K.dimension != 1:
        raise ConfigError("half-space profiles need a 1D kernel")
    sols = {}
    if route in ("truncated", "both"):
        sols["truncated"] = build_halfspace_truncated(K, float(p.get("R", 16.0)),
                                                      int(p.get("nodes_per_unit", 256)))
    if route in ("pipeline", "both"):
        sols["pipeline"] = build_halfspace_pipeline(K, int(p.get("step1_nodes", 512)),
                                                    int(p.get("window_nodes", 2049)),
                                                    max_levels=int(p.get("max_levels", 12)))
    main = sols.get("pipeline") or sols["truncated"]
    for name, b in sols.items():
        run.table(f"profile_{name}", ["x", "b"], zip(b.x, b.values))
        probe = quotient_oscillation_probe(b, int(p.get("probe_decades", 2)))
        run.table(f"quotient_probe_{name}", ["r", "b_over_r_s"], probe)
        c1, c2 = derivative_bounds_report(b)
        res = residual_certificate(b)
        run.scalars[name] = {"c1": b.c1, "c2": b.c2, "derivative_c1": c1, "derivative_c2": c2,
                             "monotonicity_defect": monotonicity_defect(b),
                             "fitted_tail_exponent": b.fitted_tail_exponent,
                             "quotient_amplitude": oscillation_amplitude(probe),
                             "residual": res["max_abs_Lb"], "trace": b.trace}
    x = main.x
    sel = x <= 1.0 + 1e-12
    if K.family == "fractional-laplacian" and abs(K.s - 0.5) < 1e-12:
        err = float(np.max(np.abs(main.values[sel] - np.sqrt(x[sel]))))
        run.scalars["sup_error_vs_sqrt"] = err
        run.check("profile_vs_sqrt", err <= tol["profile"], value=err)
    fit = growth_fit(main)
    run.scalars["growth_fit"] = fit.to_dict()
    run.check("growth_exponent", fit.within(K.s, tol["exponent"]), exponent=fit.exponent)
    c1, c2 = derivative_bounds_report(main)
    run.check("derivative_bounds", 0 < c1 <= c2 < math.inf, c1=c1, c2=c2)
    run.check("monotone", monotonicity_defect(main) >= 0.0)
    if p.get("sqrt_reference", False):
        ref = build_halfspace_pipeline(fractional_laplacian_kernel(1, 0.5), int(p.get("step1_nodes", 512)),
                                       int(p.get("window_nodes", 2049)),
                                       max_levels=int(p.get("max_levels", 12)))
        xr = ref.x[ref.x <= 1.0 + 1e-12]
        err = float(np.max(np.abs(ref(xr) - np.sqrt(xr))))
        run.scalars["reference_sup_error_vs_sqrt"] = err
        run.table("profile_reference", ["x", "b", "sqrt_x"], zip(ref.x, ref.values, np.sqrt(ref.x)))
        run.check("reference_vs_sqrt", err <= tol["profile"], value=err)
    if len(sols) == 2:
        d = profile_difference(sols["pipeline"], sols["truncated"])
        run.scalars["route_difference"] = d
        run.check("routes_agree", d <= tol["routes"], value=d)
    if p.get("reduction", False):
        K2 = build_kernel(dict(cfg["kernel"], n=2)) if K.family != "fractional-laplacian" else \
            fractional_laplacian_kernel(2, K.s)
        red = dimensional_reduction_check(K2)
        run.scalars["reduction"] = red
        run.check("reduction", red["max_rel"] <= tol["reduction"], max_rel=red["max_rel"])
        if abs(K.s - 0.5) < 1e-12:
            run.check("c0", abs(red["c0"] - 2.0) <= tol["c0"], c0=red["c0"])
    series = [{"x": list(b.x[b.x <= 4]), "y": list(b.values[b.x <= 4]), "label": name}
              for name, b in sols.items()]
    run.plots.append(("profile", series, "half-space profile", False, False))
    samples = [(r, float(main(r))) for r in sorted({fit.r_range[0] * 2.0**k for k in range(fit.count)})]
    run.fit_plot("growth_fit", samples, fit, "b(r) on a dyadic ladder")


def _obstacle(run: Run):
    from .halfspace import build_halfspace_truncated
    from .obstacle import (ObstacleProblem, bump_obstacle, classify_free_boundary_point, expansion_fit,
                           obstacle_regularity_report, second_difference_growth, solve_obstacle)

    cfg, p, tol = run.cfg, run.cfg.get("problem", {}), run.tol
    K = build_kernel(cfg["kernel"])
    grid = _grid(cfg, {"min": -8.0, "max": 8.0, "nodes": 3200})
    phi = bump_obstacle(grid, float(p.get("width", 0.5)), float(p.get("height", 1.0)))
    res = solve_obstacle(ObstacleProblem(K, grid, phi), tol["complementarity"])
    u = res.u.values
    sym = float(np.max(np.abs(u - u[::-1])))
    run.scalars.update(residual=res.residual, iterations=res.iterations, method=res.method,
                       free_boundary=res.free_boundary, symmetry=sym)
    run.check("complementarity", res.residual <= tol["complementarity"], value=res.residual)
    run.check("above_obstacle", bool(np.all(res.gap >= 0)))
    run.check("symmetry", sym <= tol["symmetry"], value=sym)
    run.table("solution", ["x", "u", "phi", "contact"],
              zip(grid.x, u, phi.values, res.contact.mask.astype(int)))
    run.table("contact_set", ["x"], ((xc,) for xc in grid.x[res.contact.mask]))
    b = build_halfspace_truncated(K, float(p.get("profile_R", 16.0)),
                                  int(p.get("profile_nodes_per_unit", 256)))
    rows = []
    for x0 in res.free_boundary:
        cls, fit = classify_free_boundary_point(res, x0)
        c, rem = expansion_fit(res, x0, b)
        d2 = second_difference_growth(res, x0)
        rows.append((x0, cls, fit.exponent, fit.coefficient, fit.r2, c, rem.exponent, d2.exponent))
        ok = cls == "regular" and abs(fit.exponent - (1 + K.s)) <= tol["exponent"]
        run.check(f"regular_{x0:+.6f}", ok, exponent=fit.exponent)
        run.check(f"expansion_{x0:+.6f}", c > 0 and rem.exponent > tol["remainder_exponent"],
                  c=c, remainder_exponent=rem.exponent)
    run.table("classification", ["x0", "class", "exponent", "coefficient", "r2", "expansion_c",
                                 "remainder_exponent", "second_difference_exponent"], rows)
    reg = obstacle_regularity_report(res)
    run.scalars["holder_fit"] = reg.to_dict()
    run.check("holder", reg.exponent >= tol["holder"], alpha=reg.exponent)
    run.plots.append(("solution", [{"x": list(grid.x), "y": list(u), "label": "u"},
                                   {"x": list(grid.x), "y": list(phi.values), "label": "phi"}],
                      "obstacle problem", False, False))


def _beta0(run: Run):
    from .nonlocal_op import beta0

    cfg, p, tol = run.cfg, run.cfg.get("problem", {}), run.tol
    k = cfg["kernel"]
    pairs = p.get("pairs") or [[float(k.get("lambda", 1.0)), float(k.get("Lambda", k.get("lambda", 1.0)))]]
    s_values = p.get("s_values") or [float(k["s"])]
    rows = []
    ok_all = True
    for lam, Lam in pairs:
        for s in s_values:
            b = beta0(lam, Lam, s)
            if lam == Lam:
                ok = abs(b - s) <= tol["equal"]
            else:
                m = tol["margin"]
                ok = max(0.0, 2 * s - 1) + m < b < min(1.0, 2 * s) - m and b <= s
            ok_all &= ok
            rows.append((lam, Lam, s, b, ok))
    run.table("beta0", ["lambda", "Lambda", "s", "beta0", "passed"], rows)
    run.scalars["beta0"] = [r[3] for r in rows]
    run.check("beta0", ok_all)


def _fit_exponent(run: Run):
    from .analysis import fit_growth

    p, tol = run.cfg.get("problem", {}), run.tol
    if "csv" in p:
        data = np.loadtxt(p["csv"], delimiter=",", skiprows=1, ndmin=2)
        samples = [tuple(r[:2]) for r in data]
    else:
        samples = [tuple(r) for r in p.get("samples", [])]
    fit = fit_growth(samples)
    run.scalars["fit"] = fit.to_dict()
    run.table("samples", ["r", "value", "fitted"],
              [(r, v, fit.coefficient * r**fit.exponent) for r, v in samples])
    if "target" in p:
        run.check("exponent", fit.within(float(p["target"]), tol["exponent"]), exponent=fit.exponent)
    run.fit_plot("fit", samples, fit, "growth fit")


def _reduce_kernel(run: Run):
    from .kernels import _hyperplane_weight, reduce_to_1d
    from .halfspace import dimensional_reduction_check

    cfg, p, tol = run.cfg, run.cfg.get("problem", {}), run.tol
    K = build_kernel(cfg["kernel"])
    if K.dimension != 2:
        raise ConfigError("reduce-kernel needs n = 2")
    e = p.get("direction", [1.0, 0.0])
    K1 = reduce_to_1d(K, e)
    ts = p.get("t_values") or [0.25, 0.5, 1.0, 2.0, 4.0]
    rows = [(t, float(K1.density(np.array(t))), float(K1.density(np.array(t))) * t ** (1 + 2 * K.s))
            for t in ts]
    run.table("reduced_kernel", ["t", "K_reduced", "t_scaled"], rows)
    c0 = _hyperplane_weight(2, K.s)
    run.scalars.update(c0=c0, lambda_reduced=K1.lam, Lambda_reduced=K1.Lam)
    if abs(K.s - 0.5) < 1e-12:
        run.check("c0", abs(c0 - 2.0) <= tol["c0"], c0=c0)
    if p.get("check_points"):
        red = dimensional_reduction_check(K, points=tuple(p["check_points"]), e=tuple(e))
        run.scalars["reduction"] = red
        run.check("reduction", red["max_rel"] <= tol["relative"], max_rel=red["max_rel"])


HANDLERS = {"solve-dirichlet": _solve_dirichlet, "one-phase": _one_phase, "half-space": _half_space,
            "obstacle": _obstacle, "beta0": _beta0, "fit-exponent": _fit_exponent,
            "reduce-kernel": _reduce_kernel}


def run(cfg: dict, outdir, svg: bool | None = None, config_text: str = "") -> int:
    """Execute a validated config and write its artifacts; returns the exit code."""
    validate_config(cfg, config_text)
    outdir = Path(outdir)
    resolved = copy.deepcopy(cfg)
    resolved.setdefault("seed", 0)
    resolved["tolerances"] = dict(DEFAULT_TOLERANCES[cfg["subcommand"]], **cfg.get("tolerances", {}))
    r = Run(resolved)
    t0 = time.perf_counter()
    HANDLERS[cfg["subcommand"]](r)
    wall = time.perf_counter() - t0
    outdir.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in r.tables.items():
        write_csv(outdir / f"{name}.csv", header, rows)
    if svg if svg is not None else cfg.get("svg", False):
        for name, series, title, logx, logy in r.plots:
            svg_plot(outdir / f"{name}.svg", series, title, logx, logy)
    passed = all(c["passed"] for c in r.checks.values())
    report = {"subcommand": cfg["subcommand"], "passed": passed,
              "checks": r.checks, "scalars": _jsonable(r.scalars)}
    (outdir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    manifest = {"config": resolved, "version": __version__, "python": platform.python_version(),
                "numpy": np.__version__, "wall_time_s": wall,
                "artifacts": sorted(p.name for p in outdir.iterdir() if p.name != "manifest.json")}
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for name, c in r.checks.items():
        log.info("%-28s %s", name, "PASS" if c["passed"] else "FAIL")
    return 0 if passed else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nonlocal-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run",) + SUBCOMMANDS:
        sp = sub.add_parser(name, help="run a config file" if name == "run" else f"run a {name} config")
        sp.add_argument("config", help="JSON experiment config")
        sp.add_argument("-o", "--output", help="output directory (overrides the config)")
        sp.add_argument("--svg", action="store_true", default=None, help="write SVG plots")
        sp.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    outdir = None
    try:
        cfg = load_config(args.config)
        if args.command != "run" and cfg["subcommand"] != args.command:
            raise ConfigError(f"config is for {cfg['subcommand']!r}, not {args.command!r}")
        outdir = Path(args.output or cfg.get("output") or Path("results") / Path(args.config).stem)
        return run(cfg, outdir, args.svg, Path(args.config).read_text())
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit status 1
        msg = f"error: {exc}"
        print(msg, file=sys.stderr)
        target = Path(args.output) if args.output else outdir
        if target is not None:
            target.mkdir(parents=True, exist_ok=True)
            (target / "error.log").write_text(msg + "\n")
        if args.verbose:
            log.exception("run failed")
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
