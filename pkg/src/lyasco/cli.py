"""Command-line front end: problem files in, certificates/solutions/
trajectories out.

Problem files are JSON with a ``kind`` selector; schemas reject unknown
fields and report violations with JSON pointer paths. Exit codes: 0 on
success, 2 when a requested certificate or program is infeasible, 1 on
input errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import __version__
from .core import Polytope, QuadraticCertificate
from .lure import LureSystem, SectorBoundError, estimate_sector, solve_lmi
from .nlp import SolverConfig
from .sco import DisturbanceScenario, ScoProblem, solve_sco
from .sdp import SdpInfeasibleError
from .sim import SimConfig, certificate_soundness_trial, classify_stability, integrate
from .sos import (ElementaryFactor, Polynomial, QuasiPolynomialSystem,
                  SosFailure, find_sos_convex_cllf, recast)
from .vmin import v_min
from . import power as power_mod
from .core import EquilibriumManifold


def _fmt(x) -> str:
    return f"{float(x):.12g}"


def max_threads() -> int:
    """Parallelism cap honored by scenario sweeps (LYASCO_THREADS)."""
    try:
        return max(1, int(os.environ.get("LYASCO_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# schemas
# ---------------------------------------------------------------------------

_POLY_TERMS = {
    "type": "object",
    "properties": {
        "terms": {"type": "array", "items": {
            "type": "object",
            "properties": {"exps": {"type": "array", "items": {"type": "integer"}},
                           "coeff": {"type": "number"}},
            "required": ["exps", "coeff"], "additionalProperties": False}},
    },
    "required": ["terms"], "additionalProperties": False,
}

_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_VECTOR = {"type": "array", "items": {"type": "number"}}

_POLYTOPE = {
    "type": "object",
    "properties": {"rows": _MATRIX, "lower": _VECTOR, "upper": _VECTOR},
    "required": ["rows", "lower", "upper"], "additionalProperties": False,
}

_SCENARIO = {
    "type": "object",
    "properties": {
        "t0": {"type": "number"}, "tc": {"type": "number"},
        "taylor_order": {"type": "integer", "minimum": 1},
        "line": {"type": "array", "items": {"type": "integer"},
                 "minItems": 2, "maxItems": 2},
        "disturbance": {
            "type": "object",
            "properties": {"type": {"enum": ["additive_pulse"]},
                           "gains": _VECTOR, "amplitude": {"type": "number"}},
            "required": ["type", "gains", "amplitude"],
            "additionalProperties": False},
    },
    "required": ["t0", "tc"], "additionalProperties": False,
}

_SOLVER = {
    "type": "object",
    "properties": {"tol": {"type": "number"}, "seed": {"type": "integer"},
                   "multistart": {"type": "integer", "minimum": 1},
                   "epsilon_rel": {"type": "number"}},
    "additionalProperties": False,
}

_NONLINEARITY = {
    "type": "object",
    "properties": {"type": {"enum": ["sine_gap", "sine", "linear"]},
                   "gain": {"type": "number"}},
    "required": ["type", "gain"], "additionalProperties": False,
}

_SCO_BLOCK = {
    "type": "object",
    "properties": {"cost_target": _VECTOR, "epsilon_rel": {"type": "number"}},
    "required": ["cost_target"], "additionalProperties": False,
}

PROBLEM_SCHEMAS = {
    "lure": {
        "type": "object",
        "properties": {
            "kind": {"const": "lure"}, "name": {"type": "string"},
            "system": {
                "type": "object",
                "properties": {
                    "a_matrix": _MATRIX, "b_matrix": _MATRIX, "c_matrix": _MATRIX,
                    "equilibrium": _VECTOR,
                    "nonlinearities": {"type": "array", "items": _NONLINEARITY}},
                "required": ["a_matrix", "b_matrix", "c_matrix", "equilibrium",
                             "nonlinearities"],
                "additionalProperties": False},
            "polytope": _POLYTOPE, "scenario": _SCENARIO,
            "solver": _SOLVER, "sco": _SCO_BLOCK,
        },
        "required": ["kind", "system", "polytope"], "additionalProperties": False,
    },
    "grid": {
        "type": "object",
        "properties": {
            "kind": {"const": "grid"}, "name": {"type": "string"},
            "system": {
                "type": "object",
                "properties": {
                    "b_prefault": _MATRIX, "b_onfault": _MATRIX,
                    "loads_pu": _VECTOR, "voltages_pu": _VECTOR,
                    "inertia": _VECTOR, "damping": _VECTOR,
                    "cost_a1": _VECTOR, "cost_a2": _VECTOR,
                    "mva_base": {"type": "number"},
                    "reference": {"type": "integer"},
                    "angle_box": {"type": "number"},
                    "angle_margin": {"type": "number"},
                    "omega_max": {"type": "number"}},
                "required": ["b_prefault", "b_onfault", "loads_pu", "voltages_pu",
                             "inertia", "damping", "cost_a1", "cost_a2"],
                "additionalProperties": False},
            "scenario": _SCENARIO, "solver": _SOLVER,
        },
        "required": ["kind", "system", "scenario"], "additionalProperties": False,
    },
    "polynomial": {
        "type": "object",
        "properties": {
            "kind": {"const": "polynomial"}, "name": {"type": "string"},
            "system": {
                "type": "object",
                "properties": {
                    "variables": {"type": "array", "items": {"type": "string"}},
                    "rhs": {"type": "array", "items": _POLY_TERMS},
                    "equilibrium": _VECTOR,
                    "constraints": {"type": "array", "items": _POLY_TERMS}},
                "required": ["variables", "rhs", "equilibrium"],
                "additionalProperties": False},
            "polytope": _POLYTOPE, "scenario": _SCENARIO, "solver": _SOLVER,
            "degree": {"type": "integer", "minimum": 2},
        },
        "required": ["kind", "system"], "additionalProperties": False,
    },
    "quasi_polynomial": {
        "type": "object",
        "properties": {
            "kind": {"const": "quasi_polynomial"}, "name": {"type": "string"},
            "system": {
                "type": "object",
                "properties": {
                    "variables": {"type": "array", "items": {"type": "string"}},
                    "rhs": {"type": "array", "items": {"type": "array", "items": {
                        "type": "object",
                        "properties": {
                            "coeff": {"type": "number"},
                            "factors": {"type": "array", "items": {
                                "type": "object",
                                "properties": {
                                    "kind": {"enum": ["mono", "elem"]},
                                    "exps": {"type": "array",
                                             "items": {"type": "integer"}},
                                    "func": {"enum": ["sin", "cos", "exp"]},
                                    "argument": _POLY_TERMS},
                                "required": ["kind"],
                                "additionalProperties": False}}},
                        "required": ["coeff", "factors"],
                        "additionalProperties": False}}},
                    "equilibrium": _VECTOR},
                "required": ["variables", "rhs", "equilibrium"],
                "additionalProperties": False},
            "polytope": _POLYTOPE, "scenario": _SCENARIO, "solver": _SOLVER,
            "degree": {"type": "integer", "minimum": 2},
        },
        "required": ["kind", "system"], "additionalProperties": False,
    },
}


class InputError(Exception):
    pass


def load_problem(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"{path}: no such file") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}, "
                         f"column {exc.colno}: {exc.msg}") from exc
    kind = doc.get("kind")
    if kind not in PROBLEM_SCHEMAS:
        raise InputError(f"{path}: /kind must be one of "
                         f"{sorted(PROBLEM_SCHEMAS)}, got {kind!r}")
    validator = Draft202012Validator(PROBLEM_SCHEMAS[kind])
    errors = sorted(validator.iter_errors(doc), key=lambda e: e.json_path)
    if errors:
        msgs = "; ".join(f"{e.json_path}: {e.message}" for e in errors[:5])
        raise InputError(f"{path}: schema violation: {msgs}")
    return doc


# ---------------------------------------------------------------------------
# problem-file materialization
# ---------------------------------------------------------------------------

_NLFUNCS = {
    "sine_gap": lambda g: (lambda s: g * (s - np.sin(s))),
    "sine": lambda g: (lambda s: g * np.sin(s)),
    "linear": lambda g: (lambda s: g * s),
}


def build_lure(doc):
    s = doc["system"]
    chans = [_NLFUNCS[nl["type"]](nl["gain"]) for nl in s["nonlinearities"]]

    def phi(vec):
        vec = np.atleast_1d(np.asarray(vec, dtype=float))
        return np.array([f(v) for f, v in zip(chans, vec)])

    sys = LureSystem(
        a_matrix=np.array(s["a_matrix"], dtype=float),
        b_matrix=np.array(s["b_matrix"], dtype=float),
        c_matrix=np.array(s["c_matrix"], dtype=float),
        nonlinearity=phi, equilibrium=np.array(s["equilibrium"], dtype=float),
        nonlinearity_channels=chans)
    p = doc["polytope"]
    poly = Polytope.from_parallel_rows(np.array(p["rows"], dtype=float),
                                       np.array(p["lower"], dtype=float),
                                       np.array(p["upper"], dtype=float))
    return sys, poly


def build_lure_scenario(doc, sys, taylor_order=None):
    sc = doc.get("scenario")
    if sc is None:
        return None
    dist = sc.get("disturbance")
    order = taylor_order or sc.get("taylor_order", 2)
    if dist is None:
        return DisturbanceScenario(t0=sc["t0"], tc=sc["tc"], taylor_order=order)
    gains = np.array(dist["gains"], dtype=float)
    amp = float(dist["amplitude"])

    def during(x):
        return sys.rhs(x) + amp * gains

    return DisturbanceScenario(
        t0=sc["t0"], tc=sc["tc"], taylor_order=order,
        during_field=during, during_field_builder=lambda x0, w: during,
        label=f"pulse u={amp:g}")


def build_polynomial_system(doc):
    s = doc["system"]
    names = list(s["variables"])
    rhs = [Polynomial(names, {tuple(t["exps"]): t["coeff"] for t in p["terms"]})
           for p in s["rhs"]]
    cons = [Polynomial(names, {tuple(t["exps"]): t["coeff"] for t in p["terms"]})
            for p in s.get("constraints", [])]
    from .sos import PolynomialSystem
    return PolynomialSystem(variables=names, rhs=rhs,
                            equilibrium=np.array(s["equilibrium"], dtype=float),
                            constraints=cons,
                            lift_map=lambda x: np.zeros(0),
                            e1=np.eye(len(names)),
                            e2=np.zeros((0, len(names))))


def build_quasi_polynomial(doc):
    s = doc["system"]
    names = list(s["variables"])
    rhs = []
    for state_terms in s["rhs"]:
        terms = []
        for t in state_terms:
            factors = []
            for f in t["factors"]:
                if f["kind"] == "mono":
                    factors.append(tuple(f["exps"]))
                else:
                    arg = Polynomial(names, {tuple(x["exps"]): x["coeff"]
                                             for x in f["argument"]["terms"]})
                    factors.append(ElementaryFactor(f["func"], arg))
            terms.append((t["coeff"], factors))
        rhs.append(terms)
    return QuasiPolynomialSystem(state_names=names, rhs=rhs,
                                 equilibrium=np.array(s["equilibrium"], dtype=float))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _print_matrix(name, M):
    print(f"{name} =")
    for row in np.atleast_2d(M):
        print("   " + "  ".join(_fmt(v) for v in row))


def cmd_certify(args):
    doc = load_problem(args.problem)
    kind = doc["kind"]
    if kind == "lure":
        sys, poly = build_lure(doc)
        sector = estimate_sector(sys, poly)
        lmi = solve_lmi(sys, sector)
        cert = lmi.quadratic(sys.equilibrium)
        res = v_min(cert, poly)
        print(f"kind: lure  channels: {sys.n_channels}")
        print(f"sector: [{_fmt(sector.gamma)}, {_fmt(sector.beta)}]")
        _print_matrix("P", lmi.p_matrix)
        print(f"tau = {_fmt(lmi.tau)}  lmi_residual = {_fmt(lmi.residual)}")
        print(f"v_min = {_fmt(res.v_min)}  (facet {res.argmin_facet})")
    elif kind == "grid":
        grid = power_mod.load_grid({**doc["system"], "name": doc.get("name", "")})
        sc = doc["scenario"]
        scen = power_mod.line_trip_scenario(
            grid, tuple(sc.get("line", [1, 2])[k] - 1 for k in (0, 1)),
            sc["t0"], sc["tc"], sc.get("taylor_order", 2))
        opf = power_mod.solve_opf(grid)
        anchor = _certificate_anchor(grid, opf, scen)
        sysL, poly, lmi, cert = power_mod.build_certificate(grid, anchor, scen)
        res = v_min(cert, poly, anchor_state(grid, anchor))
        print(f"kind: grid  buses: {grid.n_bus}")
        print(f"sector: [{_fmt(lmi.sector.gamma)}, {_fmt(lmi.sector.beta)}]")
        _print_matrix("P", lmi.p_matrix)
        print(f"tau = {_fmt(lmi.tau)}  lmi_residual = {_fmt(lmi.residual)}")
        print(f"v_min = {_fmt(res.v_min)}  (facet {res.argmin_facet})")
    else:
        if kind == "quasi_polynomial":
            psys = recast(build_quasi_polynomial(doc))
        else:
            psys = build_polynomial_system(doc)
        degree = doc.get("degree", 2)
        cert = find_sos_convex_cllf(psys, degree=degree)
        print(f"kind: {kind}  lifted_dim: {psys.dim}  degree: {degree}")
        print(f"V(z) = {cert.v_poly}")
        print(f"gram min eigenvalue = {_fmt(np.linalg.eigvalsh(cert.gram)[0])}")
    return 0


def anchor_state(grid, dispatch):
    free = [k for k in range(grid.n_bus) if k != grid.reference]
    return np.r_[dispatch.angles_rad[free] - dispatch.angles_rad[grid.reference],
                 np.zeros(grid.n_bus - 1)]


def _certificate_anchor(grid, opf, scen):
    for shrink in (1.0, 0.6, 0.35, 0.2, 0.1):
        th = opf.angles_rad * shrink
        p = grid.loads + grid.injections(th)
        cand = power_mod.DispatchSolution(generation_pu=p, angles_rad=th,
                                          objective=grid.cost(p))
        try:
            power_mod.build_certificate(grid, cand, scen)
            return cand
        except (SdpInfeasibleError, SectorBoundError, power_mod.GridDataError):
            continue
    raise SdpInfeasibleError("no feasible certificate anchor found")


def _solver_config(doc, args):
    conf = SolverConfig(multistart=3)
    sv = doc.get("solver", {})
    if "multistart" in sv:
        conf.multistart = sv["multistart"]
    if "seed" in sv:
        conf.seed = sv["seed"]
    if args.seed is not None:
        conf.seed = args.seed
    if args.tol is not None:
        conf.kkt_tol = args.tol
        conf.feas_tol = args.tol
    return conf


def cmd_solve_sco(args):
    doc = load_problem(args.problem)
    kind = doc["kind"]
    conf = _solver_config(doc, args)
    out = {"problem": str(args.problem), "kind": kind}
    if kind == "grid":
        grid = power_mod.load_grid({**doc["system"], "name": doc.get("name", "")})
        sc = doc["scenario"]
        scen = power_mod.line_trip_scenario(
            grid, tuple(sc.get("line", [1, 2])[k] - 1 for k in (0, 1)),
            sc["t0"], sc["tc"],
            args.taylor_order or sc.get("taylor_order", 2))
        sol = power_mod.solve_tscopf(grid, scen, conf)
        if sol.sco.status != "Optimal":
            print(f"status: {sol.sco.status}", file=sys.stderr)
            return 2
        out.update({
            "w_opt": sol.generation_pu.tolist(),
            "x0_opt": anchor_state(grid, sol).tolist(),
            "angles_rad": sol.angles_rad.tolist(),
            "v_min": sol.v_min, "cost": sol.objective,
            "status": sol.sco.status, "tightness_gap": sol.sco.tightness_gap,
            "stability_label": sol.stability_label,
        })
    elif kind == "lure":
        if "sco" not in doc or "scenario" not in doc:
            raise InputError(f"{args.problem}: /sco and /scenario are required "
                             "for solve-sco on a lure problem")
        sys_l, poly = build_lure(doc)
        scen = build_lure_scenario(doc, sys_l, args.taylor_order)
        sector = estimate_sector(sys_l, poly)
        lmi = solve_lmi(sys_l, sector)
        target = np.array(doc["sco"]["cost_target"], dtype=float)
        n = sys_l.dim
        manifold = EquilibriumManifold(
            steady_state_residual=lambda x0, w: x0 - w,
            state_dim=n, control_dim=n)
        prob = ScoProblem(
            cost=lambda w: float(((w - target) ** 2).sum()),
            manifold=manifold,
            certificate=QuadraticCertificate(lmi.p_matrix, sys_l.equilibrium),
            polytope=poly, scenario=scen,
            w0=sys_l.equilibrium.copy(), x0_init=sys_l.equilibrium.copy(),
            epsilon_rel=doc["sco"].get("epsilon_rel", 1e-6))
        sol = solve_sco(prob, conf)
        if sol.status != "Optimal":
            print(f"status: {sol.status}", file=sys.stderr)
            return 2
        out.update({
            "w_opt": sol.w_opt.tolist(), "x0_opt": sol.x0_opt.tolist(),
            "v_min": sol.v_min_opt, "cost": sol.cost_value,
            "status": sol.status, "tightness_gap": sol.tightness_gap,
        })
    else:
        raise InputError(f"{args.problem}: solve-sco supports kinds "
                         "'grid' and 'lure'")
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        dest = Path(args.out) / "solution.json"
        dest.write_text(text + "\n")
        print(f"wrote {dest}")
    else:
        print(text)
    return 0


def cmd_simulate(args):
    doc = load_problem(args.problem)
    try:
        with open(args.from_solution) as fh:
            sol = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{args.from_solution}: {exc}") from exc
    kind = doc["kind"]
    horizon = args.horizon or 20.0
    cfg = SimConfig(horizon=horizon, step=1e-3, convergence_tol=2e-3,
                    settle_window=2.0)
    if kind == "grid":
        grid = power_mod.load_grid({**doc["system"], "name": doc.get("name", "")})
        sc = doc["scenario"]
        scen = power_mod.line_trip_scenario(
            grid, tuple(sc.get("line", [1, 2])[k] - 1 for k in (0, 1)),
            sc["t0"], sc["tc"])
        disp = power_mod.DispatchSolution(
            generation_pu=np.array(sol["w_opt"], dtype=float),
            angles_rad=np.array(sol["angles_rad"], dtype=float),
            objective=0.0)
        traj, label = power_mod.simulate_dispatch(grid, disp, scen, cfg)
    elif kind == "lure":
        sys_l, _ = build_lure(doc)
        scen = build_lure_scenario(doc, sys_l)
        x0 = np.array(sol["x0_opt"], dtype=float)
        traj = integrate(sys_l.rhs, x0, scenario=scen, config=cfg)
        label = classify_stability(traj, x0, cfg)
    else:
        raise InputError("simulate supports kinds 'grid' and 'lure'")
    outdir = Path(args.out or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    dest = outdir / "trajectory.csv"
    traj.to_csv(dest)
    print(f"stability: {label}")
    print(f"wrote {dest}")
    return 0


def cmd_verify(args):
    doc = load_problem(args.problem)
    kind = doc["kind"]
    if kind == "lure":
        sys_l, poly = build_lure(doc)
        sector = estimate_sector(sys_l, poly)
        lmi = solve_lmi(sys_l, sector)
        cert = lmi.quadratic(sys_l.equilibrium)
        vres = v_min(cert, poly)
        base = doc.get("scenario", {"t0": 0.0, "tc": 0.1})
        rng = np.random.default_rng(args.seed or 0)
        amps = rng.uniform(0.2, 4.0, 50)
        scens = []
        for a in amps:
            gains = np.array(base.get("disturbance", {}).get("gains",
                                                             [-1.0, 1.0]))
            def during(x, a=a, gains=gains):
                return sys_l.rhs(x) + a * gains
            scens.append(DisturbanceScenario(
                t0=base["t0"], tc=base["tc"], during_field=during,
                label=f"u={a:.3f}"))
        cfg = SimConfig(horizon=args.horizon or 20.0, step=1e-3,
                        convergence_tol=1e-3, settle_window=2.0)
        report = certificate_soundness_trial(sys_l.rhs, cert, vres.v_min,
                                             poly, scens, cfg,
                                             max_workers=max_threads())
        print(f"scenarios: {len(report.records)}  fired: {report.n_fired}  "
              f"counterexamples: {len(report.counterexamples)}")
        for r in report.counterexamples:
            print(f"  scenario {r.scenario_index}: {r.label}")
        return 0 if not report.counterexamples else 2
    if kind == "grid":
        grid = power_mod.load_grid({**doc["system"], "name": doc.get("name", "")})
        sc = doc["scenario"]
        line = tuple(sc.get("line", [1, 2])[k] - 1 for k in (0, 1))
        opf = power_mod.solve_opf(grid)
        scen0 = power_mod.line_trip_scenario(grid, line, sc["t0"], sc["tc"])
        ts = power_mod.solve_tscopf(grid, scen0)
        sysL, poly, lmi, cert = power_mod.build_certificate(grid, ts, scen0)
        vres = v_min(cert, poly, anchor_state(grid, ts))
        fld, _ = power_mod.reduced_swing_field(grid, ts.generation_pu)
        scens = []
        for tc in np.linspace(0.02, 0.14, 25):
            s = power_mod.line_trip_scenario(grid, line, 0.0, float(tc))
            power_mod._attach_fields(grid, s, ts.generation_pu)
            scens.append(s)
        cfg = SimConfig(horizon=args.horizon or 10.0, step=1e-3,
                        convergence_tol=2e-3, settle_window=2.0)
        report = certificate_soundness_trial(fld, cert, vres.v_min, poly,
                                             scens, cfg,
                                             max_workers=max_threads())
        print(f"scenarios: {len(report.records)}  fired: {report.n_fired}  "
              f"counterexamples: {len(report.counterexamples)}")
        return 0 if not report.counterexamples else 2
    raise InputError("verify supports kinds 'lure' and 'grid'")


def cmd_demo(args):
    if args.case == "three-bus":
        return _demo_three_bus(args)
    if args.case == "pendulum":
        return _demo_pendulum(args)
    raise InputError(f"unknown demo {args.case!r}")


def _demo_three_bus(args):
    grid = power_mod.bundled_grid("threebus")
    scen = power_mod.line_trip_scenario(grid, (0, 1), 0.0, 0.1,
                                        args.taylor_order or 2)
    opf = power_mod.solve_opf(grid)
    _, opf_label = power_mod.simulate_dispatch(grid, opf, scen)
    ts = power_mod.solve_tscopf(grid, scen)
    gap = (ts.objective - opf.objective) / opf.objective

    print("three-bus line 1-2 trip, clearing time 0.1 s")
    print(f"{'':14s}{'economic dispatch':>22s}{'stability-constrained':>24s}")
    for i in range(grid.n_bus):
        print(f"gen {i+1} (MW)   {opf.generation_mw[i]:>22.12g}"
              f"{ts.generation_mw[i]:>24.12g}")
    for i in range(grid.n_bus):
        print(f"angle {i+1} (deg){opf.angles_deg[i]:>22.12g}"
              f"{ts.angles_deg[i]:>24.12g}")
    print(f"cost ($)      {opf.objective:>22.12g}{ts.objective:>24.12g}")
    print(f"simulated     {opf_label:>22s}{ts.stability_label:>24s}")
    print(f"cost gap: {_fmt(100 * gap)} %   certified v_min: {_fmt(ts.v_min)}")
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        traj_opf, _ = power_mod.simulate_dispatch(grid, opf, scen)
        traj_ts, _ = power_mod.simulate_dispatch(grid, ts, scen)
        traj_opf.to_csv(outdir / "threebus_economic.csv")
        traj_ts.to_csv(outdir / "threebus_constrained.csv")
        print(f"wrote {outdir}/threebus_economic.csv, "
              f"{outdir}/threebus_constrained.csv")
    ok = (opf_label == "Unstable" and ts.stability_label == "Stable"
          and 0 < gap < 0.05)
    return 0 if ok else 2


def _demo_pendulum(args):
    from .pendulum import pendulum_field, pendulum_lure, pulse_scenario
    sys_l, poly = pendulum_lure()
    sector = estimate_sector(sys_l, poly)
    lmi = solve_lmi(sys_l, sector)
    cert = lmi.quadratic(sys_l.equilibrium)
    vres = v_min(cert, poly)
    print("damped pendulum with a vanishing pulse")
    print(f"sector: [{_fmt(sector.gamma)}, {_fmt(sector.beta)}]")
    _print_matrix("P", lmi.p_matrix)
    print(f"v_min = {_fmt(vres.v_min)}")
    cfg = SimConfig(horizon=args.horizon or 20.0, step=1e-3,
                    convergence_tol=1e-3, settle_window=2.0)
    rows = []
    for amp in (1.0, 2.0, 4.0, 8.0):
        scen = pulse_scenario(amp, 0.5, 0.6)
        pre = integrate(scen.during_field, np.zeros(2),
                        config=SimConfig(horizon=0.1, step=1e-3,
                                         settle_window=0.1))
        xc = pre.final_state
        fired = cert.value(xc) <= vres.v_min and poly.contains(xc)
        traj = integrate(pendulum_field, np.zeros(2), scenario=scen, config=cfg)
        label = classify_stability(traj, np.zeros(2), cfg)
        rows.append((amp, cert.value(xc), fired, label))
        if args.out:
            outdir = Path(args.out)
            outdir.mkdir(parents=True, exist_ok=True)
            traj.to_csv(outdir / f"pendulum_pulse_{amp:g}.csv")
    print(f"{'pulse':>8s}{'V(xc)':>16s}{'certified':>11s}{'simulated':>11s}")
    for amp, v, fired, label in rows:
        print(f"{amp:>8g}{v:>16.6g}{str(fired):>11s}{label:>11s}")
    sound = all(label == "Stable" for _, _, fired, label in rows if fired)
    print(f"certificate sound on this sweep: {sound}")
    return 0 if sound else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lyasco",
        description="stability-constrained optimization via convex Lyapunov "
                    "certificates")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--taylor-order", type=int, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--horizon", type=float, default=None)
    common.add_argument("--out", type=str, default=None)

    p = sub.add_parser("certify", parents=[common],
                       help="build a Lyapunov certificate for a problem file")
    p.add_argument("problem")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("solve-sco", parents=[common],
                       help="solve the stability-constrained program")
    p.add_argument("problem")
    p.set_defaults(func=cmd_solve_sco)

    p = sub.add_parser("simulate", parents=[common],
                       help="simulate a scenario from a solved operating point")
    p.add_argument("problem")
    p.add_argument("--from", dest="from_solution", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", parents=[common],
                       help="certificate soundness sweep against simulation")
    p.add_argument("problem")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("demo", parents=[common],
                       help="run a bundled end-to-end case")
    p.add_argument("case", choices=["three-bus", "pendulum"])
    p.set_defaults(func=cmd_demo)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except (SdpInfeasibleError, SectorBoundError, SosFailure) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
