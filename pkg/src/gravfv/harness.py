"""Case catalog, batch runner, report writers, and the CLI.

Cases are TOML files shipped under gravfv/cases, one file per case.
A case builds its problem (EOS, potential, initial data, boundary),
runs the scheme for each configured order, writes one CSV profile per
run plus JSON and Markdown summaries, and evaluates its acceptance
checks. Case records land in summary.json; summary.md mirrors the
report tables (WB errors, EOC, Riemann diagnostics). The CLI exposes
run / catalog / eos / report subcommands with parameter overrides.
"""

from __future__ import annotations

import argparse
import fnmatch
import hashlib
import json
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import diagnostics as diag
from . import eos as eoslib
from . import fv
from . import state as st
from . import steady

__all__ = [
    "catalog",
    "exact_solution",
    "gaussian_perturbation_case",
    "boundary_perturbation_case",
    "run_case",
    "run_batch",
    "write_summary",
    "main",
]

CSV_COLUMNS = ("x", "rho", "u", "p", "q", "E", "s", "H",
               "drho_rel", "dq_rel", "dE_rel")


def catalog():
    """All shipped cases keyed by id, in filename order."""
    out = {}
    base = resources.files("gravfv") / "cases"
    for entry in sorted(base.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".toml"):
            case = tomllib.loads(entry.read_text())
            assert case["id"] not in out, f"duplicate case id {case['id']}"
            out[case["id"]] = case
    return out


def select_cases(patterns, cases=None):
    """Case dicts whose id matches any of the glob patterns."""
    cases = catalog() if cases is None else cases
    if not patterns:
        return []
    keep = [cid for cid in cases
            if any(fnmatch.fnmatch(cid, pat) for pat in patterns)]
    return [cases[cid] for cid in keep]


# ---------------------------------------------------------------------------
# case constructors


def exact_solution(params, x, t):
    """Traveling-wave solution (rho, u, p) under the linear potential.

    params maps rho0, u0, p0, A (and optionally k, default 4). The
    density rides a sine wave advected at constant speed u0 and the
    pressure balances the momentum equation exactly.
    """
    rho0 = params["rho0"]
    u0 = params["u0"]
    p0 = params["p0"]
    A = params["A"]
    k = params.get("k", 4)
    xi = np.asarray(x, dtype=float) - u0 * t
    kp = k * np.pi
    rho = rho0 * (1.0 + A * np.sin(kp * xi))
    p = p0 - rho0 * (xi - (A / kp) * np.cos(kp * xi))
    return rho, np.full_like(rho, u0), p


def gaussian_perturbation_case(eos_variant, triplet, nu, case_id=None,
                               t_final=0.05, guess=(1.0, 5.0)):
    """Case dict: steady background with a Gaussian pressure bump.

    The initial pressure is p_eq (1 + nu exp(-100 (x - 1/2)^2)) with
    density and velocity kept at equilibrium; 50 cells, steady-ghost
    (Dirichlet) boundaries.
    """
    q0, s0, H0 = triplet
    return {
        "id": case_id or f"gauss-{eos_variant}",
        "kind": "gaussian",
        "title": f"Gaussian pressure perturbation, {eos_variant}",
        "report_table": "gaussian_perturbation",
        "acceptance": False,
        "eos": eos_variant,
        "cells": 50,
        "domain": [0.0, 1.0],
        "t_final": t_final,
        "orders": [1, 2, 3],
        "c_theta": 0.01,
        "potential": {"kind": "quadratic", "phi0": 1.0, "x0": 0.5},
        "steady": {"q0": q0, "s0": s0, "H0": H0,
                   "guess_rho": guess[0], "guess_e": guess[1]},
        "perturbation": {"nu": nu},
        "thresholds": {"cone_tol": 1e-12, "support": 1e-13},
    }


def boundary_perturbation_case(eos_variant, triplet, nu, kappa,
                               side="right", case_id=None, t_final=0.72,
                               lam_factor=1.0, guess=(1.0, 5.0)):
    """Case dict: steady state excited through one momentum ghost.

    The ghost momentum on the given side is scaled by
    1 + nu sin(kappa pi t); 512 cells.
    """
    q0, s0, H0 = triplet
    return {
        "id": case_id or f"sine-{eos_variant}",
        "kind": "boundary_sine",
        "title": f"Boundary momentum wave train, {eos_variant}",
        "report_table": "boundary_perturbation",
        "acceptance": False,
        "eos": eos_variant,
        "cells": 512,
        "domain": [0.0, 1.0],
        "t_final": t_final,
        "orders": [1, 2, 3],
        "c_theta": 0.01,
        "lam_factor": lam_factor,
        "potential": {"kind": "quadratic", "phi0": 1.0, "x0": 0.5},
        "steady": {"q0": q0, "s0": s0, "H0": H0,
                   "guess_rho": guess[0], "guess_e": guess[1]},
        "perturbation": {"nu": nu, "kappa": kappa, "side": side},
    }


# ---------------------------------------------------------------------------
# problem assembly


def case_eos(case, ov=None):
    """(eos, analytic_base) for a case.

    analytic_base is the closed-form parameter set a table was sampled
    from (None for cases that run the closed form directly). An
    --eos-table override replaces everything with the loaded table.
    """
    ov = ov or {}
    if ov.get("eos_table"):
        return eoslib.load_eos_table(ov["eos_table"]), None
    variant = ov.get("eos", case["eos"])
    params = eoslib.make_cubic_eos(variant, **case.get("eos_overrides", {}))
    tab = case.get("table")
    if tab is None:
        return params, None
    table = eoslib.table_from_cubic(
        params, tab["rho_lo"], tab["rho_hi"], tab["e_lo"], tab["e_hi"],
        tab["n_rho"], tab["n_e"])
    return table, params


def case_potential(case):
    pot = case.get("potential", {"kind": "zero"})
    kind = pot["kind"]
    if kind == "quadratic":
        return steady.quadratic_potential(pot.get("phi0", 1.0),
                                          pot.get("x0", 0.5))
    if kind == "linear":
        return steady.linear_potential()
    if kind == "zero":
        return steady.zero_potential()
    raise ValueError(f"unknown potential kind {kind!r}")


def _case_grid(case, ov, n=None):
    lo, hi = case.get("domain", [0.0, 1.0])
    return fv.Grid1D(lo, hi, int(n or ov.get("cells") or case["cells"]))


def _case_orders(case, ov):
    if ov.get("orders"):
        return list(ov["orders"])
    return list(case.get("orders", [1]))


def _case_config(case, ov, order):
    return fv.SchemeConfig(
        order=order,
        cfl=case.get("cfl", 0.5),
        lam_factor=float(ov.get("lam_factor", case.get("lam_factor", 1.0))),
        c_theta=float(ov.get("c_theta", case.get("c_theta", 1.0))),
        c_tvb=float(case.get("c_tvb", 50.0)),
        source_correction=bool(case.get("source_correction", True)))


def _steady_ext(eos, spec, potential, grid):
    """Equilibrium states on the extended centers (ghosts included)."""
    trip = steady.SteadyTriplet(q0=spec["q0"], s0=spec["s0"], H0=spec["H0"])
    guess = (spec["guess_rho"], spec["guess_e"])
    return steady.steady_states_at(eos, trip, potential,
                                   grid.ext_centers(), guess)


def _gauss_averages(fn, centers, dx):
    """5-point Gauss cell averages of a pointwise state function."""
    nodes = centers[:, None] + 0.5 * dx * fv._G5_X[None, :]
    vals = np.asarray(fn(nodes.ravel()))
    vals = vals.reshape(centers.size, fv._G5_X.size, 3)
    return np.einsum("k,nkc->nc", fv._G5_W, vals) / 2.0


def _stats_row(order, n, stats, wall):
    return {
        "order": order,
        "cells": n,
        "steps": stats.steps,
        "t_end": float(stats.t_end),
        "wall_time": float(wall),
        "n_fallback": stats.n_fallback,
        "n_reverts": stats.n_reverts,
        "min_rho": float(stats.min_rho),
        "min_p": float(stats.min_p),
        "wave_travel": float(stats.wave_travel),
    }


def _check(name, value, limit, passed):
    return {"name": name, "value": value, "limit": limit,
            "passed": bool(passed)}


def _rel_scales(W_ref):
    """Per-component scale for relative deviations: the component's own
    sup floored at 1e-3 of the largest component (q may start at 0)."""
    per = np.abs(W_ref).max(axis=0)
    return np.maximum(per, 1e-3 * max(per.max(), 1e-300))


class _Sink:
    """CSV artifact collector for one case; out_dir None disables IO."""

    def __init__(self, out_dir, case_id):
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.case_id = case_id
        self.paths = []

    def profile(self, tag, eos, potential, grid, W, W_ref):
        if self.out_dir is None:
            return None
        name = f"{self.case_id}-{tag}.csv" if tag else f"{self.case_id}.csv"
        write_profile_csv(self.out_dir / name, eos, potential, grid,
                          W, W_ref)
        self.paths.append(name)
        return name


def write_profile_csv(path, eos, potential, grid, W, W_ref):
    """One profile: x, primitives, conserved, entropy, Bernoulli H, and
    deviations from the reference state scaled per component."""
    cen = grid.centers()
    rho, u, p = st.primitive(eos, W)
    s = st.entropy(eos, W)
    H = st.bernoulli(eos, W, potential.at(cen))
    rel = (W - W_ref) / _rel_scales(W_ref)
    cols = (cen, rho, u, p, W[:, st.MOM], W[:, st.ENE], s, H,
            rel[:, st.RHO], rel[:, st.MOM], rel[:, st.ENE])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in zip(*cols):
            fh.write(",".join("%.17g" % v for v in row) + "\n")


# ---------------------------------------------------------------------------
# per-kind runners

_RUNNERS = {}


def _runner(kind):
    def deco(fn):
        _RUNNERS[kind] = fn
        return fn
    return deco


def _preservation_runs(case, ov, sink, eos, tag=""):
    """Shared body of the preservation kinds: run each order from the
    equilibrium profile and record L2 drift per component."""
    potential = case_potential(case)
    grid = _case_grid(case, ov)
    W_ext0 = _steady_ext(eos, case["steady"], potential, grid)
    W0 = W_ext0[2:-2].copy()
    boundary = fv.SteadyGhostBoundary(W_ext0[:2], W_ext0[-2:])
    t_final = float(ov.get("t_final", case["t_final"]))
    runs = []
    finals = {}
    for order in _case_orders(case, ov):
        config = _case_config(case, ov, order)
        field = fv.Field(grid, W0.copy(), potential.at(grid.centers()))
        t0 = time.perf_counter()
        out, stats = fv.run(eos, field, potential, boundary, config, t_final)
        row = _stats_row(order, grid.n, stats, time.perf_counter() - t0)
        err = diag.error_norms(out, W0)
        scale = np.sqrt((grid.dx * W0 * W0).sum(axis=0))
        rel = err / np.maximum(scale, 1e-300)
        row["wb_err_rho"], row["wb_err_q"], row["wb_err_E"] = map(float, err)
        row["wb_rel_rho"], row["wb_rel_q"], row["wb_rel_E"] = map(float, rel)
        runs.append(row)
        finals[order] = out.W
        sink.profile(f"{tag}o{order}" if tag else f"o{order}",
                     eos, potential, grid, out.W, W0)
    return runs, W0, finals


def _wb_checks(runs, thr):
    checks = []
    lim = thr.get("wb_l2")
    rlim = thr.get("wb_rel")
    for row in runs:
        if lim is not None:
            worst = max(row["wb_err_rho"], row["wb_err_q"], row["wb_err_E"])
            checks.append(_check(f"wb_l2_order{row['order']}", worst,
                                 f"<= {lim}", worst <= lim))
        if rlim is not None:
            worst = max(row["wb_rel_rho"], row["wb_rel_q"], row["wb_rel_E"])
            checks.append(_check(f"wb_rel_order{row['order']}", worst,
                                 f"<= {rlim}", worst <= rlim))
    return checks


@_runner("steady_preservation")
def _run_steady_preservation(case, ov, sink):
    eos, _ = case_eos(case, ov)
    runs, _, _ = _preservation_runs(case, ov, sink, eos)
    checks = _wb_checks(runs, case.get("thresholds", {}))
    return runs, checks, {}


@_runner("table_preservation")
def _run_table_preservation(case, ov, sink):
    eos, base = case_eos(case, ov)
    runs, _, finals = _preservation_runs(case, ov, sink, eos)
    thr = case.get("thresholds", {})
    checks = _wb_checks(runs, thr)
    extras = {}
    if base is not None:
        # twin run on the generating closed form, same setup; the
        # tabulated path must land on the same trajectory
        twin_case = dict(case)
        twin_case.pop("table")
        twin_runs, _, twin_finals = _preservation_runs(
            twin_case, ov, _Sink(None, case["id"]), base)
        match = {}
        for order, W_tab in finals.items():
            W_ana = twin_finals[order]
            num = np.sqrt(((W_tab - W_ana) ** 2).sum(axis=0))
            den = np.sqrt((W_ana ** 2).sum(axis=0))
            match[order] = float((num / den).max())
        extras["match_rel_l2"] = {str(k): v for k, v in match.items()}
        mlim = thr.get("match_analytic")
        if mlim is not None:
            for order, val in match.items():
                checks.append(_check(f"match_analytic_order{order}", val,
                                     f"<= {mlim}", val <= mlim))
    return runs, checks, extras


@_runner("hll_contrast")
def _run_hll_contrast(case, ov, sink):
    """The same equilibrium run with the plain HLL reference scheme;
    quantifies the drift a non-balanced method produces."""
    eos, _ = case_eos(case, ov)
    potential = case_potential(case)
    grid = _case_grid(case, ov)
    W_ext0 = _steady_ext(eos, case["steady"], potential, grid)
    W0 = W_ext0[2:-2].copy()
    boundary = fv.SteadyGhostBoundary(W_ext0[:2], W_ext0[-2:])
    t_final = float(ov.get("t_final", case["t_final"]))
    field = fv.Field(grid, W0.copy(), potential.at(grid.centers()))
    t0 = time.perf_counter()
    out, stats = diag.plain_hll_run(eos, field, potential, boundary,
                                    t_final, cfl=case.get("cfl", 0.5))
    row = _stats_row(1, grid.n, stats, time.perf_counter() - t0)
    err = diag.error_norms(out, W0)
    scale = np.sqrt((grid.dx * W0 * W0).sum(axis=0))
    rel = err / np.maximum(scale, 1e-300)
    row["scheme"] = "plain_hll"
    row["wb_err_rho"], row["wb_err_q"], row["wb_err_E"] = map(float, err)
    row["wb_rel_rho"], row["wb_rel_q"], row["wb_rel_E"] = map(float, rel)
    sink.profile("plain-hll", eos, potential, grid, out.W, W0)

    # balanced counterpart at order 1 for the same table row
    field = fv.Field(grid, W0.copy(), potential.at(grid.centers()))
    config = _case_config(case, ov, 1)
    t0 = time.perf_counter()
    out2, stats2 = fv.run(eos, field, potential, boundary, config, t_final)
    row2 = _stats_row(1, grid.n, stats2, time.perf_counter() - t0)
    err2 = diag.error_norms(out2, W0)
    rel2 = err2 / np.maximum(scale, 1e-300)
    row2["scheme"] = "balanced_o1"
    row2["wb_err_rho"], row2["wb_err_q"], row2["wb_err_E"] = map(float, err2)
    row2["wb_rel_rho"], row2["wb_rel_q"], row2["wb_rel_E"] = map(float, rel2)

    checks = []
    thr = case.get("thresholds", {})
    if "rho_rel_min" in thr:
        # contrast window on the relative density drift, the unit the
        # reference table uses
        lo, hi = thr["rho_rel_min"], thr["rho_rel_max"]
        val = float(rel[0])
        checks.append(_check("plain_hll_rho_rel", val, f"in [{lo}, {hi}]",
                             lo <= val <= hi))
    return [row, row2], checks, {}


@_runner("accuracy")
def _run_accuracy(case, ov, sink):
    eos, _ = case_eos(case, ov)
    potential = case_potential(case)
    wave = case["wave"]
    grids = [int(ov["cells"])] if ov.get("cells") else list(wave["grids"])
    t_final = float(ov.get("t_final", case["t_final"]))
    lo, hi = case.get("domain", [0.0, 1.0])
    thr = case.get("thresholds", {})
    runs, checks = [], []

    def W_of(t):
        return lambda x: st.conserved(eos, *exact_solution(wave, x, t))

    for order in _case_orders(case, ov):
        errs = np.empty((len(grids), 3))
        steps = 0
        twall = time.perf_counter()
        for j, n in enumerate(grids):
            grid = fv.Grid1D(lo, hi, n)
            cen = grid.centers()
            W0 = _gauss_averages(W_of(0.0), cen, grid.dx)
            field = fv.Field(grid, W0, potential.at(cen))
            boundary = fv.ExactBoundary(
                lambda x, t: st.conserved(eos, *exact_solution(wave, x, t)),
                grid)
            config = _case_config(case, ov, order)
            out, stats = fv.run(eos, field, potential, boundary, config,
                                t_final)
            ref = _gauss_averages(W_of(t_final), cen, grid.dx)
            errs[j] = diag.error_norms(out, ref)
            steps += stats.steps
            if n == grids[-1]:
                sink.profile(f"o{order}-n{n}", eos, potential, grid,
                             out.W, ref)
        wall = time.perf_counter() - twall
        tail = min(4, len(grids))
        rates = [diag.eoc(errs[-tail:, c], grids[-tail:]) for c in range(3)]
        row = {
            "order": order,
            "grids": grids,
            "err_rho": errs[:, 0].tolist(),
            "err_q": errs[:, 1].tolist(),
            "err_E": errs[:, 2].tolist(),
            "eoc_rho": float(rates[0]),
            "eoc_q": float(rates[1]),
            "eoc_E": float(rates[2]),
            "steps": steps,
            "wall_time": float(wall),
        }
        runs.append(row)
        window = thr.get("eoc_window")
        if window is not None:
            dev = abs(row["eoc_rho"] - order)
            checks.append(_check(f"eoc_order{order}", row["eoc_rho"],
                                 f"within {order} +- {window}",
                                 dev <= window))
    return runs, checks, {}


@_runner("gaussian")
def _run_gaussian(case, ov, sink):
    eos, _ = case_eos(case, ov)
    potential = case_potential(case)
    grid = _case_grid(case, ov)
    cen = grid.centers()
    W_ext0 = _steady_ext(eos, case["steady"], potential, grid)
    W0 = W_ext0[2:-2].copy()
    boundary = fv.SteadyGhostBoundary(W_ext0[:2], W_ext0[-2:])
    nu = float(case["perturbation"]["nu"])
    thr = case.get("thresholds", {})
    support_tol = thr.get("support", 1e-13)

    rho, u, p = st.primitive(eos, W0)
    bump = nu * np.exp(-100.0 * (cen - 0.5) ** 2)
    # seeded inversion keeps e on the background branch where the
    # pressure fiber is non-monotone
    e_pert = eoslib.energy_rp(eos, rho, p * (1.0 + bump),
                              T_guess=st.temperature(eos, W0))
    W_init = st.conserved_from_rho_u_e(rho, u, e_pert)
    support = bump > support_tol
    scales = _rel_scales(W0)

    t_final = float(ov.get("t_final", case["t_final"]))
    runs, checks = [], []
    for order in _case_orders(case, ov):
        config = _case_config(case, ov, order)
        field = fv.Field(grid, W_init.copy(), potential.at(cen))
        t0 = time.perf_counter()
        out, stats = fv.run(eos, field, potential, boundary, config, t_final)
        row = _stats_row(order, grid.n, stats, time.perf_counter() - t0)
        dev = np.abs(out.W - W0) / scales
        row["max_rel_dev"] = float(dev.max())
        # cells no signal can have reached: distance to the initial
        # support exceeds the integrated fastest wave speed
        if support.any():
            dist = np.abs(cen[:, None] - cen[None, support]).min(axis=1)
        else:
            dist = np.full(grid.n, np.inf)
        unreached = dist > stats.wave_travel
        row["n_unreached"] = int(unreached.sum())
        if unreached.any():
            row["max_rel_dev_outside"] = float(dev[unreached].max())
        else:
            row["max_rel_dev_outside"] = None
        runs.append(row)
        sink.profile(f"o{order}", eos, potential, grid, out.W, W0)
        lim = thr.get("cone_tol")
        if lim is not None:
            if unreached.any():
                val = row["max_rel_dev_outside"]
                checks.append(_check(
                    f"cone_clean_order{order}", val, f"<= {lim}",
                    val <= lim))
            else:
                checks.append(_check(
                    f"cone_clean_order{order}", None,
                    "vacuous: signal cone covers every cell at t_f", True))
    return runs, checks, {"support_cells": int(support.sum())}


@_runner("boundary_sine")
def _run_boundary_sine(case, ov, sink):
    eos, _ = case_eos(case, ov)
    potential = case_potential(case)
    grid = _case_grid(case, ov)
    cen = grid.centers()
    W_ext0 = _steady_ext(eos, case["steady"], potential, grid)
    W0 = W_ext0[2:-2].copy()
    pert = case["perturbation"]
    boundary = fv.PerturbedMomentumBoundary(
        W_ext0[:2], W_ext0[-2:], pert["nu"], pert["kappa"],
        side=pert.get("side", "right"))
    u_bg = st.velocity(W0)
    scales = _rel_scales(W0)
    t_final = float(ov.get("t_final", case["t_final"]))
    runs = []
    for order in _case_orders(case, ov):
        config = _case_config(case, ov, order)
        field = fv.Field(grid, W0.copy(), potential.at(cen))
        t0 = time.perf_counter()
        out, stats = fv.run(eos, field, potential, boundary, config, t_final)
        row = _stats_row(order, grid.n, stats, time.perf_counter() - t0)
        row["max_rel_dev"] = float((np.abs(out.W - W0) / scales).max())
        row["max_rel_du"] = float(
            np.abs((st.velocity(out.W) - u_bg) / u_bg).max())
        runs.append(row)
        sink.profile(f"o{order}", eos, potential, grid, out.W, W0)
    return runs, [], {}


def _riemann_initial(case, eos, grid):
    """Piecewise-constant initial data from the left/right blocks."""
    x_jump = case.get("x_jump", 0.5)
    cen = grid.centers()
    W = np.empty((grid.n, 3))
    for side, mask in (("left", cen < x_jump), ("right", cen >= x_jump)):
        blk = case[side]
        if "u" in blk:
            Wside = st.conserved(eos, blk["rho"], blk["u"], blk["p"])
        else:
            Wside = st.conserved(eos, blk["rho"], blk["q"] / blk["rho"],
                                 blk["p"])
        W[mask] = Wside
    return W


@_runner("riemann")
def _run_riemann(case, ov, sink):
    eos, _ = case_eos(case, ov)
    potential = case_potential(case)
    grid = _case_grid(case, ov)
    W0 = _riemann_initial(case, eos, grid)
    boundary = fv.NeumannBoundary()
    t_final = float(ov.get("t_final", case["t_final"]))
    thr = case.get("thresholds", {})
    runs, checks = [], []
    for order in _case_orders(case, ov):
        config = _case_config(case, ov, order)
        field = fv.Field(grid, W0.copy(), potential.at(grid.centers()))
        trackers = []
        if order == 1 and "entropy_tol" in thr:
            trackers = [
                diag.EntropyTracker(
                    eos, grid.dx, lambda s: s, "s",
                    eta_p=lambda s: np.ones_like(s),
                    eta_pp=lambda s: np.zeros_like(s)),
                diag.EntropyTracker(
                    eos, grid.dx, lambda s: np.exp(s / 10.0), "exp(s/10)",
                    eta_p=lambda s: np.exp(s / 10.0) / 10.0,
                    eta_pp=lambda s: np.exp(s / 10.0) / 100.0),
            ]

        def on_step(Wb, Wa, sol, dt, t):
            for tr in trackers:
                tr(Wb, Wa, sol, dt, t)

        t0 = time.perf_counter()
        out, stats = fv.run(eos, field, potential, boundary, config,
                            t_final, on_step=on_step if trackers else None)
        row = _stats_row(order, grid.n, stats, time.perf_counter() - t0)
        for tr in trackers:
            key = "entropy_worst_s" if tr.eta_name == "s" \
                else "entropy_worst_exp"
            gated = float(tr.worst) if np.isfinite(tr.worst) else None
            row[key] = gated
            row[key + "_any"] = float(tr.worst_any)
            row[key + "_masked"] = tr.n_masked
            lim = thr["entropy_tol"]
            name = f"entropy_{tr.eta_name}_order{order}"
            if gated is None:
                checks.append(_check(
                    name, None,
                    "vacuous: no certified-compatible cell in the run",
                    True))
            else:
                checks.append(_check(name, gated, f"<= {lim}",
                                     gated <= lim))
        runs.append(row)
        sink.profile(f"o{order}", eos, potential, grid, out.W, W0)
        if thr.get("positivity"):
            val = min(row["min_rho"], row["min_p"])
            checks.append(_check(f"positivity_order{order}", val, "> 0",
                                 val > 0.0))
    if ov.get("reference"):
        _riemann_reference(case, ov, sink, eos, potential, t_final)
    return runs, checks, {}


def _riemann_reference(case, ov, sink, eos, potential, t_final,
                       n_ref=7500):
    """Fine-grid plain-HLL reference profile for Riemann cases."""
    lo, hi = case.get("domain", [0.0, 1.0])
    grid = fv.Grid1D(lo, hi, n_ref)
    if case["kind"] == "steady_riemann":
        W0 = _steady_riemann_initial(case, eos, potential, grid)[2:-2]
    else:
        W0 = _riemann_initial(case, eos, grid)
    field = fv.Field(grid, W0.copy(), potential.at(grid.centers()))
    out, _ = diag.plain_hll_run(eos, field, potential, fv.NeumannBoundary(),
                                t_final, cfl=case.get("cfl", 0.5))
    sink.profile("reference-hll", eos, potential, grid, out.W, W0)


def _steady_riemann_initial(case, eos, potential, grid):
    """Per-side equilibrium profiles on the extended centers."""
    x_jump = case.get("x_jump", 0.5)
    ext = grid.ext_centers()
    W_ext = np.empty((ext.size, 3))
    for side, mask in (("left", ext < x_jump), ("right", ext >= x_jump)):
        blk = case[side]
        trip = steady.SteadyTriplet(q0=blk["q"], s0=blk["s"], H0=blk["H"])
        W_ext[mask] = steady.steady_states_at(
            eos, trip, potential, ext[mask],
            (blk["guess_rho"], blk["guess_e"]))
    return W_ext


@_runner("steady_riemann")
def _run_steady_riemann(case, ov, sink):
    eos, _ = case_eos(case, ov)
    potential = case_potential(case)
    grid = _case_grid(case, ov)
    W_ext0 = _steady_riemann_initial(case, eos, potential, grid)
    W0 = W_ext0[2:-2].copy()
    boundary = fv.NeumannBoundary()
    t_final = float(ov.get("t_final", case["t_final"]))
    runs = []
    for order in _case_orders(case, ov):
        config = _case_config(case, ov, order)
        field = fv.Field(grid, W0.copy(), potential.at(grid.centers()))
        t0 = time.perf_counter()
        out, stats = fv.run(eos, field, potential, boundary, config, t_final)
        runs.append(_stats_row(order, grid.n, stats,
                               time.perf_counter() - t0))
        sink.profile(f"o{order}", eos, potential, grid, out.W, W0)
    if ov.get("reference"):
        _riemann_reference(case, ov, sink, eos, potential, t_final)
    return runs, [], {}


# ---------------------------------------------------------------------------
# batch driver


def _config_hash(case, ov):
    blob = json.dumps({"case": case, "overrides": ov}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def run_case(case, out_dir=None, overrides=None):
    """Execute one case; returns its record dict."""
    ov = dict(overrides or {})
    sink = _Sink(out_dir, case["id"])
    t0 = time.perf_counter()
    error = None
    try:
        runs, checks, extras = _RUNNERS[case["kind"]](case, ov, sink)
    except Exception as exc:
        runs, checks, extras = [], [], {}
        error = f"{type(exc).__name__}: {exc}"
    record = {
        "case": case["id"],
        "kind": case["kind"],
        "title": case.get("title", case["id"]),
        "report_table": case.get("report_table", ""),
        "acceptance": bool(case.get("acceptance", False)),
        "surrogate": bool(case.get("surrogate", False)),
        "config_hash": _config_hash(case, ov),
        "overrides": ov,
        "runs": runs,
        "checks": checks,
        "error": error,
        "passed": error is None and all(c["passed"] for c in checks),
        "artifacts": list(sink.paths),
        "wall_time": float(time.perf_counter() - t0),
    }
    record.update(extras)
    return record


def run_batch(patterns, out_dir=None, overrides=None, log=None):
    """Run every case matching the patterns; returns the record list."""
    records = []
    for case in select_cases(patterns):
        rec = run_case(case, out_dir=out_dir, overrides=overrides)
        records.append(rec)
        if log is not None:
            mark = "PASS" if rec["passed"] else "FAIL"
            note = f" ({rec['error']})" if rec["error"] else ""
            log(f"{mark} {rec['case']:<22s} [{rec['wall_time']:.1f}s]"
                f"{note}")
    if out_dir is not None:
        write_summary(out_dir, records)
    return records


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def write_summary(out_dir, records):
    """summary.json (sorted keys) and summary.md under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.json", "w") as fh:
        json.dump(_jsonable(records), fh, sort_keys=True, indent=1)
        fh.write("\n")
    with open(out / "summary.md", "w") as fh:
        fh.write(render_markdown(records))
    return out / "summary.json"


def _md_wb_rows(records):
    lines = ["| case | order | err rho | err q | err E | pass |",
             "|---|---|---|---|---|---|"]
    for rec in records:
        for row in rec["runs"]:
            if "wb_err_rho" not in row:
                continue
            scheme = row.get("scheme", f"o{row['order']}")
            ok = "yes" if rec["passed"] else "NO"
            lines.append(
                f"| {rec['case']} | {scheme} | {row['wb_err_rho']:.3e} "
                f"| {row['wb_err_q']:.3e} | {row['wb_err_E']:.3e} | {ok} |")
    return lines


def _md_eoc_rows(records):
    lines = ["| case | order | finest err rho | EOC rho | EOC q | EOC E |",
             "|---|---|---|---|---|---|"]
    for rec in records:
        for row in rec["runs"]:
            if "eoc_rho" not in row:
                continue
            lines.append(
                f"| {rec['case']} | {row['order']} | {row['err_rho'][-1]:.3e}"
                f" | {row['eoc_rho']:.3f} | {row['eoc_q']:.3f}"
                f" | {row['eoc_E']:.3f} |")
    return lines


def render_markdown(records):
    """Human-readable mirror of the summary records."""
    groups = {}
    for rec in records:
        groups.setdefault(rec["report_table"] or "other", []).append(rec)
    parts = ["# Run summary", ""]
    n_pass = sum(r["passed"] for r in records)
    parts.append(f"{n_pass}/{len(records)} cases passed.")
    parts.append("")
    for table in sorted(groups):
        recs = groups[table]
        parts.append(f"## {table}")
        parts.append("")
        if table in ("wb_errors",):
            parts.extend(_md_wb_rows(recs))
        elif table == "eoc":
            parts.extend(_md_eoc_rows(recs))
        parts.append("")
        for rec in recs:
            flag = " (surrogate)" if rec.get("surrogate") else ""
            status = "pass" if rec["passed"] else "FAIL"
            parts.append(f"- `{rec['case']}`{flag}: {status}, "
                         f"{len(rec['runs'])} runs, "
                         f"{rec['wall_time']:.1f}s "
                         f"[hash {rec['config_hash']}]")
            if rec["error"]:
                parts.append(f"  - error: {rec['error']}")
            for chk in rec["checks"]:
                mark = "ok" if chk["passed"] else "VIOLATED"
                val = chk["value"]
                vtxt = "n/a" if val is None else f"{val:.3e}"
                parts.append(f"  - {chk['name']}: {vtxt} ({chk['limit']}) "
                             f"{mark}")
        parts.append("")
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# CLI

_TABLE_GEN_BOXES = {
    # default sampling boxes for table-gen, wide enough for the shipped
    # equilibrium cases of each variant
    "ideal": (20.0, 40.0, 2.0, 5.0),
    "vdw": (1.0, 4.0, 10.0, 60.0),
    "rk": (1.0, 3.0, 4.0, 16.0),
    "pr": (0.3, 2.0, 4.0, 16.0),
}


def _cmd_run(args):
    ov = {}
    if args.order is not None:
        ov["orders"] = [args.order]
    if args.cells is not None:
        ov["cells"] = args.cells
    if args.ctheta is not None:
        ov["c_theta"] = args.ctheta
    if args.lam is not None:
        ov["lam_factor"] = args.lam
    if args.eos is not None:
        ov["eos"] = args.eos
    if args.eos_table is not None:
        ov["eos_table"] = args.eos_table
    if args.reference:
        ov["reference"] = True
    records = run_batch(args.patterns, out_dir=args.out, overrides=ov,
                        log=print)
    gated = [r for r in records if r["acceptance"]]
    print(f"{sum(r['passed'] for r in records)}/{len(records)} cases "
          f"passed ({len(gated)} acceptance-tagged)")
    return 0 if all(r["passed"] for r in gated) else 1


def _cmd_catalog(args):
    cases = catalog()
    width = max((len(cid) for cid in cases), default=0)
    for cid, case in cases.items():
        tags = []
        if case.get("acceptance"):
            tags.append("acceptance")
        if case.get("surrogate"):
            tags.append("surrogate")
        tag = f" [{', '.join(tags)}]" if tags else ""
        print(f"{cid:<{width}s}  {case['kind']:<20s} "
              f"{case.get('title', '')}{tag}")
    return 0


def _cmd_table_gen(args):
    params = eoslib.make_cubic_eos(args.variant)
    lo, hi, elo, ehi = _TABLE_GEN_BOXES[args.variant]
    table = eoslib.table_from_cubic(
        params,
        args.rho_lo if args.rho_lo is not None else lo,
        args.rho_hi if args.rho_hi is not None else hi,
        args.e_lo if args.e_lo is not None else elo,
        args.e_hi if args.e_hi is not None else ehi,
        args.n_rho, args.n_e)
    eoslib.save_eos_table(table, args.file)
    print(f"wrote {args.n_rho}x{args.n_e} {args.variant} table to "
          f"{args.file}")
    return 0


def _cmd_report(args):
    path = Path(args.dir) / "summary.json"
    with open(path) as fh:
        records = json.load(fh)
    write_summary(args.dir, records)
    print(render_markdown(records))
    gated = [r for r in records if r["acceptance"]]
    return 0 if all(r["passed"] for r in gated) else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gravfv",
        description="Finite-volume Euler-with-gravity case runner.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run cases matching id globs")
    p_run.add_argument("patterns", nargs="*", default=["*"],
                       help="case ids or glob patterns (default: all)")
    p_run.add_argument("--out", default="runs", help="output directory")
    p_run.add_argument("--order", type=int, choices=(1, 2, 3))
    p_run.add_argument("--cells", type=int)
    p_run.add_argument("--ctheta", type=float)
    p_run.add_argument("--lambda", dest="lam", type=float,
                       help="wave speed inflation factor")
    p_run.add_argument("--eos", choices=eoslib.CUBIC_VARIANTS)
    p_run.add_argument("--eos-table", dest="eos_table",
                       help="run with an EOS table file instead")
    p_run.add_argument("--reference", action="store_true",
                       help="add fine-grid plain-HLL reference profiles "
                            "for Riemann cases")
    p_run.set_defaults(fn=_cmd_run)

    p_cat = sub.add_parser("catalog", help="inspect the case catalog")
    cat_sub = p_cat.add_subparsers(dest="action", required=True)
    p_list = cat_sub.add_parser("list", help="list case ids")
    p_list.set_defaults(fn=_cmd_catalog)

    p_eos = sub.add_parser("eos", help="EOS table utilities")
    eos_sub = p_eos.add_subparsers(dest="action", required=True)
    p_gen = eos_sub.add_parser("table-gen", help="sample a cubic EOS "
                                                 "into a table file")
    p_gen.add_argument("variant", choices=eoslib.CUBIC_VARIANTS)
    p_gen.add_argument("file")
    p_gen.add_argument("--rho-lo", type=float)
    p_gen.add_argument("--rho-hi", type=float)
    p_gen.add_argument("--e-lo", type=float)
    p_gen.add_argument("--e-hi", type=float)
    p_gen.add_argument("--n-rho", type=int, default=256)
    p_gen.add_argument("--n-e", type=int, default=256)
    p_gen.set_defaults(fn=_cmd_table_gen)

    p_rep = sub.add_parser("report", help="regenerate summaries from "
                                          "summary.json")
    p_rep.add_argument("dir")
    p_rep.set_defaults(fn=_cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
