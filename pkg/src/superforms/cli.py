"""Command-line runner for JSON experiment configs.

Usage::

    superforms run config.json [--out DIR] [--seed N] [--threads K]
    superforms run --list

Writes ``report.csv`` (one row per checked quantity), ``summary.json`` and
per-kind tables into the output directory.  Exit status is 0 when every row
passes, 1 when some row fails and 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import expr as ex
from .algebra import beta, factorial, wedge_power
from .expr import ExpressionError, parse_expression
from .quadrature import Box

__all__ = ["ReportRow", "ConfigError", "KINDS", "load_config", "run_experiment", "run", "main"]

PROVENANCE = ("closed-form", "theory", "oracle")
THREADS_ENV = "SUPERFORMS_THREADS"


class ConfigError(ValueError):
    pass


@dataclass
class ReportRow:
    experiment: str
    quantity: str
    computed: float
    reference: float
    provenance: str
    status: str
    tolerance: float

    def __post_init__(self):
        if self.provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def cells(self) -> list[str]:
        return [
            self.experiment, self.quantity, _fmt(self.computed), _fmt(self.reference),
            self.provenance, self.status, _fmt(self.tolerance),
        ]


HEADER = ["experiment", "quantity", "computed", "reference", "provenance", "status", "tolerance"]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v) + 0.0  # drop negative zero
    if math.isnan(v):
        return "nan"
    return repr(v)


class Report:
    def __init__(self, experiment: str):
        self.experiment = experiment
        self.rows: list[ReportRow] = []
        self.tables: dict[str, tuple[list[str], list[list]]] = {}
        self.documents: dict[str, dict] = {}

    def close(self, quantity, computed, reference, provenance, tol, relative=True):
        scale = abs(reference) if relative and reference != 0 else 1.0
        ok = abs(computed - reference) <= tol * scale
        self._add(quantity, computed, reference, provenance, ok, tol)

    def at_most(self, quantity, computed, provenance, tol, reference=0.0):
        self._add(quantity, computed, reference, provenance, computed <= tol, tol)

    def at_least(self, quantity, computed, reference, provenance, tol):
        self._add(quantity, computed, reference, provenance, computed >= reference - tol, tol)

    def flag(self, quantity, ok: bool, provenance, computed=1.0, reference=1.0, tol=0.0):
        self._add(quantity, computed, reference, provenance, ok, tol)

    def skip(self, quantity, provenance="oracle"):
        self.rows.append(ReportRow(self.experiment, quantity, math.nan, math.nan, provenance, "skip", 0.0))

    def _add(self, quantity, computed, reference, provenance, ok, tol):
        ok = bool(ok) and np.isfinite(computed)
        self.rows.append(
            ReportRow(self.experiment, quantity, float(computed), float(reference), provenance, "pass" if ok else "fail", float(tol))
        )


# ---------------------------------------------------------------------------
# config parsing


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"{path}: cannot read config ({err.strerror})") from err
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from err
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def _expr(text, names=("r",)):
    if isinstance(text, (int, float)):
        return ex.const(float(text))
    if not isinstance(text, str):
        raise ConfigError(f"expected a number or expression, got {text!r}")
    try:
        return parse_expression(text, list(names))
    except ExpressionError as err:
        raise ConfigError(f"expression {text!r}: {err}") from err


def _value(text, **at) -> float:
    names = tuple(at) or ("r",)
    e = _expr(text, names)
    point = np.array([float(at[k]) for k in names]) if at else np.zeros(1)
    return float(ex.evaluate(e, point))


def _scalar_field(text, n: int):
    if isinstance(text, (int, float)):
        return ex.const(float(text))
    try:
        return parse_expression(text, n)
    except ExpressionError as err:
        raise ConfigError(f"expression {text!r}: {err}") from err


def _manifold(spec):
    from .shapes import ManifoldSpecError, from_spec

    try:
        return from_spec(spec)
    except (ManifoldSpecError, TypeError, ExpressionError, KeyError) as err:
        raise ConfigError(f"manifold: {err}") from err


def _radii(spec) -> list[float]:
    if isinstance(spec, list):
        return [float(r) for r in spec]
    if isinstance(spec, dict):
        extra = set(spec) - {"min", "max", "count"}
        if extra or len(spec) != 3:
            raise ConfigError("radii object needs exactly min, max and count")
        return [float(r) for r in np.linspace(spec["min"], spec["max"], int(spec["count"]))]
    raise ConfigError("radii must be a list or {min, max, count}")


@dataclass
class Kind:
    fields: dict  # name -> default (REQUIRED for mandatory)
    tolerances: dict
    probabilistic: bool
    runner: Callable
    doc: str


REQUIRED = object()


def _pmap(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# experiment kinds


def _run_algebra(cfg, rep: Report, seed, threads):
    from .minimal import kernel_identity_check
    from .suite import algebra_suite, integration_by_parts_check

    tol = cfg["tolerances"]
    for chk in algebra_suite(seed, cfg["checks"], dims=tuple(cfg["dims"])):
        rep.at_most(f"{chk.name} max error ({chk.checks} checks)", chk.max_error, "theory", tol["alg"])
    for n in cfg["ibp_dims"]:
        for k in range(cfg["ibp_trials"]):
            for sharp in (False, True):
                lhs, rhs = integration_by_parts_check(n, seed + k, sharp=sharp)
                name = "dsharp" if sharp else "d"
                rep.close(f"integration by parts {name} n={n} trial={k}", lhs, rhs, "theory", tol["quad"], relative=False)
    kern = cfg["kernel"]
    if kern:
        for n in range(2, kern["n_max"] + 1):
            for p in range(0, min(kern["p_max"], n - 2) + 1):
                for delta in kern["deltas"]:
                    err = kernel_identity_check(n, p, delta, kern.get("samples", 1000), seed)
                    rep.at_most(f"kernel identity n={n} p={p} delta={delta}", err, "theory", tol["alg"])


def _run_manifold(cfg, rep: Report, seed, threads):
    from .manifold import (
        F_action_pair,
        F_sharp_action_pair,
        d_supercurrent_pair,
        dsharp_supercurrent_pair,
        frame_residuals,
        supercurrent_pair,
        supercurrent_pair_ambient,
    )
    from .minimal import default_test_suite, localized_test_forms, minimality_residual

    M = _manifold(cfg["manifold"])
    if getattr(M, "levelset", None) is not None:
        M = M.with_frame("closed")
    tol = cfg["tolerances"]
    checks = cfg["checks"]
    unknown = set(checks) - set(_MANIFOLD_CHECKS)
    if unknown:
        raise ConfigError(f"unknown checks {sorted(unknown)}; known {_MANIFOLD_CHECKS}")
    m, n = M.m, M.n
    top = wedge_power(beta(n), m) / factorial(m)
    sform = cfg["suite"]
    if "volume" in checks:
        vol = supercurrent_pair(M, top)
        if cfg["volume_reference"] is not None:
            rep.close("volume", vol, _value(cfg["volume_reference"]), "closed-form", tol["volume"])
        else:
            rep.close("volume vs chart area", vol, M.volume(), "oracle", tol["geom"])
        rep.close("volume ambient route", supercurrent_pair_ambient(M, top), vol, "oracle", tol["geom"])
    if "frame" in checks:
        r_d, r_sharp = frame_residuals(M)
        rep.at_most("frame residual n.F", r_d, "theory", tol["geom"])
        rep.at_most("frame residual n#.F", r_sharp, "theory", tol["geom"])
    if "boundary_d" in checks or "boundary_dsharp" in checks:
        count = cfg["test_forms"]
        if "boundary_d" in checks:
            forms = localized_test_forms(M, [(m - 1, m)], count, seed, sform["width"], 1, sform["margin"])
            worst = 0.0
            for psi in forms:
                a, b = d_supercurrent_pair(M, psi), F_action_pair(M, psi)
                worst = max(worst, abs(a - b) / max(1.0, abs(b)))
            rep.at_most("d[M] vs F[M] pairing", worst, "theory", tol["geom"])
        if "boundary_dsharp" in checks:
            forms = localized_test_forms(M, [(m, m - 1)], count, seed + 1, sform["width"], 1, sform["margin"])
            worst = 0.0
            for psi in forms:
                a, b = dsharp_supercurrent_pair(M, psi), -F_sharp_action_pair(M, psi)
                worst = max(worst, abs(a - b) / max(1.0, abs(b)))
            rep.at_most("d#[M] vs -F#[M] pairing", worst, "theory", tol["geom"])
    if "minimality" in checks:
        suite = default_test_suite(M, cfg["test_forms"], seed, sform["width"], 1, sform["margin"])
        res = minimality_residual(M, suite)
        if cfg["minimal"]:
            rep.at_most("minimality residual", res.residual, "theory", tol["minimal"])
        else:
            rep.at_most("minimality vs mean-curvature pairing", res.mismatch, "theory", tol["minimal"])


def _run_monotonicity(cfg, rep: Report, seed, threads):
    from .minimal import ball_integral, density, mass_in_ball_clipped

    M = _manifold(cfg["manifold"])
    tol = cfg["tolerances"]
    center = np.asarray(cfg["center"], dtype=float)
    radii = sorted(_radii(cfg["radii"]))
    if cfg["method"] == "polar":
        masses = _pmap(lambda r: ball_integral(M, center, r), radii, threads)
    elif cfg["method"] == "clip":
        masses = _pmap(lambda r: mass_in_ball_clipped(M, center, r), radii, threads)
    else:
        raise ConfigError("method must be 'polar' or 'clip'")
    ratios = [s / r**M.m for s, r in zip(masses, radii)]
    prev = ratios[0]
    table = []
    for r, s, q in zip(radii, masses, ratios):
        rep.at_least(f"ratio r={r:.6g}", q, prev, "theory", tol["monotone"] * abs(prev))
        table.append([r, s, q, rep.rows[-1].status])
        prev = max(prev, q)
    rep.tables["monotonicity"] = (["r", "mass", "ratio", "status"], table)
    dens = cfg["density"]
    if dens is not None:
        res = density(M, center, dens.get("r0", 0.2), dens.get("levels", 7))
        if "expected" in dens:
            rep.close("density", res.value, _value(dens["expected"]), "closed-form", tol["density"])
        rep.at_most("density extrapolation spread", res.spread, "oracle", tol["monotone"])


def _run_volume_bound(cfg, rep: Report, seed, threads):
    from .minimal import brendle_hung_weight, weighted_volume_bound

    M = _manifold(cfg["manifold"])
    tol = cfg["tolerances"]
    a = np.asarray(cfg["center"], dtype=float)
    w = brendle_hung_weight(a, M.m) if cfg["weight"] == "brendle-hung" else _scalar_field(cfg["weight"], M.n)
    try:
        res = weighted_volume_bound(M, a, w, cfg["ball_radius"], tol["bound"], seed=seed)
    except ValueError as err:
        raise ConfigError(f"volume-bound precondition: {err}") from err
    rep.at_least("mass in ball vs weighted density", res.lhs, res.rhs, "theory", tol["bound"])
    rep.close("clipped mass cross-check", res.certificate["clipped_mass"], res.lhs, "oracle", tol["equality"])
    if cfg["expect_equality"]:
        rep.close("equality case", res.lhs, res.rhs, "theory", tol["equality"])
    if cfg["expected_area"] is not None:
        rep.close("area", res.lhs, _value(cfg["expected_area"]), "closed-form", tol["equality"])


def _polynomials(cfg, seed):
    from .tropical import QuasitropicalPolynomial, pieces_from_expr, random_quasitropical

    given = [k for k in ("polynomial", "expression", "random") if cfg[k] is not None]
    if len(given) != 1:
        raise ConfigError("give exactly one of polynomial, expression or random")
    if cfg["polynomial"] is not None:
        try:
            return [QuasitropicalPolynomial.from_json(cfg["polynomial"])]
        except ValueError as err:
            raise ConfigError(f"polynomial: {err}") from err
    if cfg["expression"] is not None:
        if cfg["dim"] is None:
            raise ConfigError("expression needs 'dim'")
        try:
            return [pieces_from_expr(_scalar_field(cfg["expression"], cfg["dim"]), cfg["dim"])]
        except ValueError as err:
            raise ConfigError(f"expression: {err}") from err
    spec = cfg["random"]
    extra = set(spec) - {"count", "max_pieces", "dim", "integer"}
    if extra:
        raise ConfigError(f"unknown random fields {sorted(extra)}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(int(spec.get("count", 100))):
        k = int(rng.integers(2, int(spec.get("max_pieces", 8)) + 1))
        out.append(random_quasitropical(int(spec.get("dim", 2)), k, rng, bool(spec.get("integer", False))))
    return out


def _run_tropical(cfg, rep: Report, seed, threads):
    from .tropical import balancing_check, cell_complex, ma_measure_pl, multiplicities, reduce

    tol = cfg["tolerances"]
    polys = [reduce(p) for p in _polynomials(cfg, seed)]

    def one(p):
        cx = cell_complex(p)
        mults = multiplicities(cx)
        normal = max((mv.normality_residual for mv in mults), default=0.0)
        bal = balancing_check(cx, mults) if p.n == 2 and cx.vertices else 0.0
        return cx, normal, bal

    results = _pmap(one, polys, threads)
    rep.at_most("balancing defect (worst)", max(r[2] for r in results), "theory", tol["balance"])
    rep.at_most("multiplicity normality residual (worst)", max(r[1] for r in results), "theory", tol["balance"])
    if len(polys) == 1:
        cx = results[0][0]
        rep.tables["cells"] = (
            ["facet", "cell_i", "cell_k", "normal", "point"],
            [[k, f.i, f.k, " ".join(_fmt(v) for v in f.normal), " ".join(_fmt(v) for v in f.point)] for k, f in enumerate(cx.facets)],
        )
        doc = cx.to_json()
        doc["measure"] = [{"point": (pt + 0.0).tolist(), "mass": mass} for pt, mass in ma_measure_pl(polys[0])]
        rep.documents["complex"] = doc
        if cfg["expected_vertices"] is not None:
            rep.close("vertex count", len(cx.vertices), cfg["expected_vertices"], "closed-form", 0.0)
        if cfg["expected_ma_total"] is not None:
            total = sum(mass for _, mass in ma_measure_pl(polys[0]))
            rep.close("Monge-Ampere total mass", total, _value(cfg["expected_ma_total"]), "closed-form", tol["ma"])


def _run_ma(cfg, rep: Report, seed, threads):
    from .tropical import QuasitropicalPolynomial, log_sum_exp, ma_measure_pl, ma_measure_smooth

    tol = cfg["tolerances"]
    reg = cfg["region"]
    if set(reg) != {"lower", "upper"}:
        raise ConfigError("region needs exactly lower and upper")
    box = Box(tuple(reg["lower"]), tuple(reg["upper"]))
    n = box.dim
    if (cfg["expression"] is None) == (cfg["polynomial"] is None):
        raise ConfigError("give exactly one of expression or polynomial")
    if cfg["expression"] is not None:
        phi = _scalar_field(cfg["expression"], n)
        res = ma_measure_smooth(phi, box, cfg["nodes"], cfg["panels"])
        rep.at_most("(dd#phi)^n/n! vs det Hess pointwise", res.max_pointwise_error, "oracle", tol["pointwise"])
        rep.close("total mass vs det Hess route", res.total, res.det_total, "oracle", tol["pointwise"])
        if cfg["expected_total"] is not None:
            rep.close("total mass", res.total, _value(cfg["expected_total"]), "closed-form", tol["total"])
        return
    try:
        poly = QuasitropicalPolynomial.from_json(cfg["polynomial"])
    except ValueError as err:
        raise ConfigError(f"polynomial: {err}") from err
    total = sum(mass for _, mass in ma_measure_pl(poly))
    if cfg["expected_total"] is not None:
        rep.close("piecewise-linear total mass", total, _value(cfg["expected_total"]), "closed-form", tol["total"])
    rows = []
    for t in cfg["smoothing"]:
        res = ma_measure_smooth(log_sum_exp(poly, t), box, cfg["nodes"], cfg["panels"])
        rows.append([t, res.total, res.det_total, res.max_pointwise_error])
        rep.at_most(f"smoothing t={t} pointwise", res.max_pointwise_error, "oracle", tol["pointwise"])
    if rows:
        rep.close("smoothed total at largest t", rows[-1][1], total, "theory", tol["smoothing"])
        rep.tables["smoothing"] = (["t", "total", "det_total", "pointwise_error"], rows)


def _run_tube(cfg, rep: Report, seed, threads):
    from .tube import tube_polynomial, tube_volume_direct, tube_volume_superform

    M = _manifold(cfg["manifold"])
    if M.levelset is None:
        raise ConfigError("tube volumes need defining functions: give the chart a 'rho' list")
    if M.p >= 3 and seed is None:
        raise ConfigError("normal balls of dimension >= 3 use Monte Carlo: give 'seed' or --seed")
    seed = 0 if seed is None else seed
    tol = cfg["tolerances"]
    radii = _radii(cfg["radii"])
    fit = _radii(cfg["fit_radii"]) if cfg["fit_radii"] is not None else None
    need = M.m // 2 + 3
    if fit is None:
        top = max(radii)
        fit = [top * (k + 1) / need for k in range(need)]
    routes = cfg["routes"]
    unknown = set(routes) - {"direct", "superform", "polynomial"}
    if unknown or "direct" not in routes:
        raise ConfigError("routes must include 'direct' and may add 'superform' and 'polynomial'")
    nodes = cfg["ball_nodes"]
    direct = _pmap(lambda r: tube_volume_direct(M, r, nodes, seed=seed), radii, threads)
    superf = [math.nan] * len(radii)
    if "superform" in routes:
        superf = _pmap(lambda r: tube_volume_superform(M, r, nodes, seed=seed), radii, threads)
    P = tube_polynomial(M, fit, nodes) if "polynomial" in routes else None
    rows = []
    for r, d, s in zip(radii, direct, superf):
        poly = float(P(r)) if P is not None else math.nan
        if "superform" in routes:
            rep.close(f"superform vs direct r={r:.6g}", s, d, "oracle", tol["tube"])
        if P is not None:
            rep.close(f"polynomial vs direct r={r:.6g}", poly, d, "oracle", tol["tube"])
        if cfg["closed_form"] is not None:
            rep.close(f"direct vs closed form r={r:.6g}", d, _value(cfg["closed_form"], r=r), "closed-form", tol["tube"])
        rows.append([r, d, s, poly, abs(poly - d) / abs(d)])
    if P is not None:
        rep.at_most("polynomial fit residual", P.fit_residual, "theory", tol["tube"])
        if len(P.odd_coefficients):
            rep.at_most("odd-power coefficients (relative)", P.odd_ratio, "theory", tol["tube"])
        for q, (c, pred) in enumerate(zip(P.coefficients, P.predicted)):
            rep.close(f"coefficient r^{P.exponents[q]} vs curvature integral", c, pred, "oracle", tol["tube"])
    rep.tables["tube"] = (["r", "direct", "superform", "polynomial", "residual"], rows)


def _run_mcf(cfg, rep: Report, seed, threads):
    from .flow import FlowHaltError, initial_state, mcf_step, predicted_mass_derivative, volume_variation_check, weighted_mass

    M = _manifold(cfg["manifold"])
    tol = cfg["tolerances"]
    u = _scalar_field(cfg["u"], M.n)
    lhs, rhs = volume_variation_check(M, u, cfg["fd_step"])
    rep.close("volume variation fd vs formula", lhs, rhs, "theory", tol["flow"])
    if cfg["expected_variation"] is not None:
        rep.close("volume variation", rhs, _value(cfg["expected_variation"]), "closed-form", tol["flow"])
    state = initial_state(M)
    h, steps = cfg["h"], cfg["steps"]
    times, masses, preds, radii = [], [], [], []
    try:
        for k in range(steps + 1):
            times.append(state.t)
            masses.append(weighted_mass(state, u))
            preds.append(predicted_mass_derivative(state, u))
            radii.append(float(np.mean(np.linalg.norm(state.points - cfg["center"], axis=-1))))
            if k < steps:
                state = mcf_step(state, h)
    except FlowHaltError as err:
        rep.flag(f"flow halted at t={state.t:.6g}: {err}", False, "theory", 0.0, 1.0)
    fd = np.gradient(np.array(masses), np.array(times)) if len(times) > 1 else np.zeros(1)
    rep.tables["flow"] = (
        ["t", "mass", "predicted_derivative", "fd_derivative"],
        [[t, s, p, f] for t, s, p, f in zip(times, masses, preds, fd)],
    )
    if cfg["track_radius"]:
        t = np.array(times)
        exact = np.sqrt(radii[0] ** 2 - 2 * M.m * t)
        err = float(np.max(np.abs(np.array(radii) - exact) / exact))
        rep.at_most("radius tracking error", err, "closed-form", tol["radius"])
    if cfg["expect_decreasing"]:
        drops = np.diff(masses)
        rep.flag("weighted mass decreasing", bool(np.all(drops < 0)), "theory", float(np.max(drops)), 0.0)


_MANIFOLD_CHECKS = ["volume", "frame", "boundary_d", "boundary_dsharp", "minimality"]

KINDS: dict[str, Kind] = {
    "algebra-suite": Kind(
        {"checks": 10_000, "dims": [2, 3, 4], "ibp_dims": [1, 2, 3], "ibp_trials": 2, "kernel": None},
        {"alg": 1e-9, "quad": 1e-9}, True, _run_algebra,
        "randomized pointwise identities of d, d#, J, contraction and cup; integration by parts",
    ),
    "manifold-suite": Kind(
        {"manifold": REQUIRED, "checks": _MANIFOLD_CHECKS, "volume_reference": None, "test_forms": 20,
         "suite": {"width": 0.2, "margin": 0.3}, "minimal": False},
        {"volume": 1e-4, "geom": 1e-6, "minimal": 1e-4}, True, _run_manifold,
        "supercurrent volume, frame residuals, weak boundary identities and minimality",
    ),
    "monotonicity": Kind(
        {"manifold": REQUIRED, "center": REQUIRED, "radii": REQUIRED, "method": "clip", "density": None},
        {"monotone": 1e-3, "density": 1e-2}, False, _run_monotonicity,
        "mass ratios sigma(r)/r^m over radii and the density at the centre",
    ),
    "volume-bound": Kind(
        {"manifold": REQUIRED, "center": REQUIRED, "ball_radius": 1.0, "weight": "brendle-hung",
         "expect_equality": False, "expected_area": None},
        {"bound": 1e-4, "equality": 1e-3}, True, _run_volume_bound,
        "mass in the unit ball against w(a) times the density at a",
    ),
    "tropical": Kind(
        {"polynomial": None, "expression": None, "dim": None, "random": None,
         "expected_vertices": None, "expected_ma_total": None},
        {"balance": 1e-9, "ma": 1e-12}, False, _run_tropical,
        "cells, facets, multiplicity vectors and balancing of quasitropical polynomials",
    ),
    "ma-measure": Kind(
        {"expression": None, "polynomial": None, "region": REQUIRED, "nodes": 32, "panels": 1,
         "expected_total": None, "smoothing": []},
        {"pointwise": 1e-8, "total": 1e-8, "smoothing": 1e-3}, False, _run_ma,
        "Monge-Ampere mass of smooth convex functions and piecewise-linear atoms",
    ),
    "tube": Kind(
        {"manifold": REQUIRED, "radii": REQUIRED, "routes": ["direct", "superform", "polynomial"], "fit_radii": None,
         "ball_nodes": None, "closed_form": None},
        {"tube": 1e-3}, False, _run_tube,
        "tube volumes by the direct, superform and polynomial routes",
    ),
    "mcf": Kind(
        {"manifold": REQUIRED, "u": 1.0, "h": 1e-3, "steps": 50, "fd_step": 1e-4, "center": [0.0, 0.0, 0.0],
         "expected_variation": None, "track_radius": False, "expect_decreasing": False},
        {"flow": 1e-3, "radius": 1e-3}, False, _run_mcf,
        "mean curvature flow: first variation of weighted volume and radius tracking",
    ),
}

_PROBABILISTIC_KEYS = {"tropical": "random"}


def validate(cfg: dict, seed_override: int | None = None) -> dict:
    """Fill defaults and reject unknown fields."""
    for key in ("id", "kind"):
        if key not in cfg:
            raise ConfigError(f"missing field {key!r}")
    kind = cfg["kind"]
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {sorted(KINDS)}")
    spec = KINDS[kind]
    allowed = set(spec.fields) | {"id", "kind", "seed", "tolerances", "output"}
    extra = set(cfg) - allowed
    if extra:
        raise ConfigError(f"unknown fields for {kind}: {sorted(extra)}")
    out = {"id": str(cfg["id"]), "kind": kind, "output": cfg.get("output")}
    for name, default in spec.fields.items():
        if name in cfg:
            out[name] = cfg[name]
        elif default is REQUIRED:
            raise ConfigError(f"{kind} needs field {name!r}")
        else:
            out[name] = default
    tols = dict(spec.tolerances)
    given = cfg.get("tolerances", {})
    if not isinstance(given, dict):
        raise ConfigError("tolerances must be an object")
    bad = set(given) - set(tols)
    if bad:
        raise ConfigError(f"unknown tolerances for {kind}: {sorted(bad)}; known {sorted(tols)}")
    tols.update({k: float(v) for k, v in given.items()})
    out["tolerances"] = tols
    seed = seed_override if seed_override is not None else cfg.get("seed")
    needs_seed = spec.probabilistic or (kind in _PROBABILISTIC_KEYS and out.get(_PROBABILISTIC_KEYS[kind]) is not None)
    if seed is None and needs_seed:
        raise ConfigError(f"{kind} is probabilistic: give 'seed' or --seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
        raise ConfigError("seed must be an integer")
    out["seed"] = seed
    return out


def run_experiment(cfg: dict, threads: int = 1) -> Report:
    from .flow import FlowHaltError
    from .manifold import FrameError
    from .minimal import CoverageError
    from .tube import FocalRadiusError

    rep = Report(cfg["id"])
    try:
        KINDS[cfg["kind"]].runner(cfg, rep, cfg["seed"], threads)
    except (FocalRadiusError, CoverageError, FlowHaltError, FrameError) as err:
        # numerical preconditions that fail mid-run are reported, not raised
        rep.flag(f"{type(err).__name__}: {err}", False, "oracle", math.nan, math.nan)
    return rep


def _write(out_dir: Path, cfg: dict, rep: Report, threads: int) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for row in rep.rows:
            w.writerow(row.cells())
    for name, (header, rows) in rep.tables.items():
        with open(out_dir / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    for name, doc in rep.documents.items():
        with open(out_dir / f"{name}.json", "w", newline="\n") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    counts = {s: sum(r.status == s for r in rep.rows) for s in ("pass", "fail", "skip")}
    summary = {
        "experiment": cfg["id"],
        "kind": cfg["kind"],
        "seed": cfg["seed"],
        "threads": threads,
        "tolerances": cfg["tolerances"],
        "passed": counts["pass"],
        "failed": counts["fail"],
        "skipped": counts["skip"],
        "failures": [r.quantity for r in rep.rows if r.status == "fail"],
    }
    with open(out_dir / "summary.json", "w", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _threads(flag: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def run(path, out: str | None = None, seed: int | None = None, threads: int | None = None) -> int:
    """Run one config; returns the process exit code."""
    try:
        cfg = validate(load_config(path), seed)
        k = _threads(threads)
        rep = run_experiment(cfg, k)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    out_dir = Path(out or cfg["output"] or Path("out") / cfg["id"])
    summary = _write(out_dir, cfg, rep, k)
    for row in rep.rows:
        if row.status == "fail":
            print(f"FAIL {row.quantity}: computed {_fmt(row.computed)}, reference {_fmt(row.reference)}, "
                  f"tolerance {_fmt(row.tolerance)}", file=sys.stderr)
    print(f"{cfg['id']}: {summary['passed']} passed, {summary['failed']} failed, {summary['skipped']} skipped -> {out_dir}")
    return 0 if summary["failed"] == 0 else 1


def _list_kinds() -> str:
    lines = []
    for name, k in KINDS.items():
        lines.append(f"{name}: {k.doc}")
        for field_name, default in k.fields.items():
            shown = "required" if default is REQUIRED else json.dumps(default)
            lines.append(f"    {field_name} = {shown}")
        lines.append(f"    tolerances = {json.dumps(k.tolerances)}")
        lines.append(f"    seed {'required' if k.probabilistic else 'optional'}")
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="superforms", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", nargs="?", help="path to a JSON config")
    p_run.add_argument("--out", help="output directory (default out/<id>)")
    p_run.add_argument("--seed", type=int, help="override the config seed")
    p_run.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    p_run.add_argument("--list", action="store_true", help="list experiment kinds and their fields")
    args = parser.parse_args(argv)
    if args.list:
        print(_list_kinds())
        return 0
    if args.config is None:
        print("error: a config path is required", file=sys.stderr)
        return 2
    return run(args.config, args.out, args.seed, args.threads)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
