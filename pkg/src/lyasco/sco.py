"""Single-level stability-constrained optimization.

Couples a cost over controls with steady-state equations, a Taylor map from
equilibrium to fault-cleared state, and Lyapunov-region constraints. For
quadratic certificates the per-facet minimizers are eliminated through
their closed form; otherwise explicit per-facet stationarity rows are kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import EquilibriumManifold, Polytope, QuadraticCertificate
from .lure import convex_relaxation_coeffs, inner_approximation_coeffs
from .nlp import NlpProblem, NlpSolution, SolverConfig, solve as nlp_solve


@dataclass
class DisturbanceScenario:
    """Vanishing disturbance acting on [t0, tc) plus the Taylor order used
    to map the equilibrium to the fault-cleared state.

    ``during_field`` is the concrete faulted vector field for simulation;
    ``during_field_builder(x0, w)`` supplies the parametric version used
    inside optimization. ``field_jvp_builder`` may return an exact
    Jacobian-vector product ``(x, v) -> J_f(x) v`` for noise-free Taylor
    coefficients.
    """

    t0: float
    tc: float
    taylor_order: int = 2
    during_field: Optional[Callable] = None
    during_field_builder: Optional[Callable] = None
    field_jvp_builder: Optional[Callable] = None
    label: str = ""

    def __post_init__(self):
        if self.tc < self.t0:
            raise ValueError("clearing time precedes disturbance onset")
        if self.taylor_order < 1:
            raise ValueError("Taylor order must be >= 1")

    @property
    def is_identity(self) -> bool:
        return self.tc <= self.t0


def taylor_fault_state(during_field, x0, dt: float, order: int = 2,
                       jvp: Optional[Callable] = None) -> np.ndarray:
    """Fault-cleared state x0 + sum_k g_k dt^k / k! from nested time
    derivatives of the frozen-disturbance field.

    g_1 = f(x0); g_{k+1} = J(g_k) f, evaluated by the exact ``jvp`` when
    supplied and by central directional differences otherwise.
    """
    x0 = np.asarray(x0, dtype=float)
    if order < 1:
        raise ValueError("order must be >= 1")
    f = lambda z: np.asarray(during_field(z), dtype=float)

    def directional(gfun, z, direction):
        nd = np.linalg.norm(direction)
        if nd < 1e-300:
            return np.zeros_like(z)
        h = 6e-6 * max(1.0, np.linalg.norm(z))
        u = direction / nd
        return nd * (gfun(z + h * u) - gfun(z - h * u)) / (2 * h)

    funcs = [f]
    for k in range(1, order):
        prev = funcs[-1]
        if k == 1 and jvp is not None:
            nxt = lambda z, p=prev: np.asarray(jvp(z, f(z)), dtype=float)
        else:
            nxt = lambda z, p=prev: directional(p, z, f(z))
        funcs.append(nxt)

    xc = x0.copy()
    for k, gk in enumerate(funcs, start=1):
        xc = xc + gk(x0) * dt ** k / math.factorial(k)
    return xc


@dataclass
class ScoProblem:
    """Data for one stability-constrained solve.

    ``cost(w)`` is the economic objective; ``certificate_of(x0, w)`` maps a
    candidate equilibrium to the Lyapunov form (a fixed quadratic
    certificate may be passed directly). ``epsilon_rel`` weights the region
    bonus relative to the cost magnitude and must stay in (0, 1e-3].
    """

    cost: Callable[[np.ndarray], float]
    manifold: EquilibriumManifold
    certificate: object
    polytope: Polytope
    scenario: DisturbanceScenario
    w0: np.ndarray = None
    x0_init: np.ndarray = None
    epsilon_rel: float = 1e-6
    w_lower: Optional[np.ndarray] = None
    w_upper: Optional[np.ndarray] = None
    x_lower: Optional[np.ndarray] = None
    x_upper: Optional[np.ndarray] = None
    facet_mode: str = "eliminated"        # or "explicit"
    constraint_form: str = "exact"        # "exact" | "relaxation" | "inner"
    x_ranges: Optional[dict] = None       # pair index -> (x_lo, x_hi), convex forms

    def __post_init__(self):
        if not (0.0 < self.epsilon_rel <= 1e-3):
            raise ValueError("epsilon_rel must lie in (0, 1e-3]")
        self.w0 = np.asarray(self.w0, dtype=float)
        self.x0_init = np.asarray(self.x0_init, dtype=float)
        if self.facet_mode not in ("eliminated", "explicit"):
            raise ValueError("facet_mode must be 'eliminated' or 'explicit'")
        if self.constraint_form not in ("exact", "relaxation", "inner"):
            raise ValueError("unknown constraint_form")
        if self.constraint_form != "exact" and self.x_ranges is None:
            raise ValueError("convexified forms need x_ranges per facet pair")


@dataclass
class ScoSolution:
    w_opt: np.ndarray
    x0_opt: np.ndarray
    v_min_opt: float
    x_fault_opt: np.ndarray
    tightness_gap: float
    cost_value: float
    nlp_report: NlpSolution

    @property
    def status(self) -> str:
        return self.nlp_report.status


def _certificate_at(problem: ScoProblem, x0, w) -> QuadraticCertificate:
    cert = problem.certificate
    if callable(cert) and not isinstance(cert, QuadraticCertificate):
        return cert(x0, w)
    if isinstance(cert, QuadraticCertificate):
        # same P, equilibrium follows the candidate x0
        return QuadraticCertificate(cert.p_matrix, np.asarray(x0, dtype=float))
    raise TypeError("certificate must be a QuadraticCertificate or a builder")


def _fault_state(problem: ScoProblem, x0, w) -> np.ndarray:
    scen = problem.scenario
    if scen.is_identity:
        return np.asarray(x0, dtype=float).copy()
    if scen.during_field_builder is not None:
        fld = scen.during_field_builder(x0, w)
    elif scen.during_field is not None:
        fld = scen.during_field
    else:
        raise ValueError("scenario supplies no during-fault field")
    jvp = scen.field_jvp_builder(x0, w) if scen.field_jvp_builder else None
    return taylor_fault_state(fld, x0, scen.tc - scen.t0,
                              order=scen.taylor_order, jvp=jvp)


def _facet_value_terms(problem: ScoProblem, P: np.ndarray):
    """Per-facet denominators c' P^-1 c and (normal, offset) data."""
    F, g = problem.polytope.facet_normals, problem.polytope.facet_offsets
    Pinv = np.linalg.inv(P)
    dens = np.einsum("ij,jk,ik->i", F, Pinv, F)
    return F, g, dens


def assemble_ssco(problem: ScoProblem) -> NlpProblem:
    """Build the single-level NLP over (w, x0, vmin [, facet blocks]).

    Constraints: steady-state residual = 0, operating bounds <= 0, the
    fault-cleared state inside the certified sublevel set, and vmin below
    every facet minimum (closed form for quadratic certificates, explicit
    stationarity rows otherwise). Objective: cost(w) - eps * vmin.
    """
    m = problem.w0.size
    n = problem.x0_init.size
    N = problem.polytope.n_facets
    cert_probe = _certificate_at(problem, problem.x0_init, problem.w0)
    P = cert_probe.p_matrix
    F, g, dens = _facet_value_terms(problem, P)

    cost_scale = max(1.0, abs(problem.cost(problem.w0)))
    eps = problem.epsilon_rel * cost_scale

    explicit = problem.facet_mode == "explicit"
    # layout: w (m) | x0 (n) | vmin (1) | per facet: x^i (n), lambda_i (1)
    n_base = m + n + 1
    n_var = n_base + (N * (n + 1) if explicit else 0)

    def split(z):
        w = z[:m]
        x0 = z[m:m + n]
        vmin = z[m + n]
        return w, x0, vmin

    def objective(z):
        w, _, vmin = split(z)
        return problem.cost(w) - eps * vmin

    def equalities(z):
        w, x0, _ = split(z)
        rows = [np.atleast_1d(problem.manifold.steady_state_residual(x0, w))]
        if explicit:
            cert = _certificate_at(problem, x0, w)
            for i in range(N):
                xi = z[n_base + i * (n + 1): n_base + i * (n + 1) + n]
                lam = z[n_base + i * (n + 1) + n]
                rows.append(np.asarray(cert.gradient(xi)) - lam * F[i])
                rows.append(np.atleast_1d(F[i] @ xi - g[i]))
        return np.concatenate(rows)

    pairs = problem.polytope.pairing or ()
    conv_coeffs = {}
    if problem.constraint_form != "exact":
        for k, (lo_i, hi_i) in enumerate(pairs):
            x_lo, x_hi = problem.x_ranges[k]
            d_lo, d_hi = -g[lo_i], g[hi_i]
            if problem.constraint_form == "relaxation":
                a, b, ap, bp = convex_relaxation_coeffs(x_lo, x_hi, d_lo, d_hi)
                conv_coeffs[k] = [(a, b), (ap, bp)]
            else:
                conv_coeffs[k] = inner_approximation_coeffs(x_lo, x_hi, d_lo, d_hi)

    def inequalities(z):
        w, x0, vmin = split(z)
        rows = []
        if problem.manifold.bound_constraints is not None:
            rows.append(np.atleast_1d(problem.manifold.bound_constraints(x0, w)))
        cert = _certificate_at(problem, x0, w)
        xc = _fault_state(problem, x0, w)
        rows.append(np.atleast_1d(cert.value(xc) - vmin))
        if explicit:
            for i in range(N):
                xi = z[n_base + i * (n + 1): n_base + i * (n + 1) + n]
                rows.append(F @ xi - g)
                rows.append(np.atleast_1d(vmin - cert.value(xi)))
        elif problem.constraint_form == "exact":
            vals = (F @ x0 - g) ** 2 / dens
            rows.append(vmin - vals)
        else:
            for k, (lo_i, hi_i) in enumerate(pairs):
                X = F[hi_i] @ x0
                den = dens[hi_i]
                for a, b in conv_coeffs[k]:
                    rows.append(np.atleast_1d(vmin - (a * X + b) / den))
        return np.concatenate(rows)

    lower = np.full(n_var, -np.inf)
    upper = np.full(n_var, np.inf)
    if problem.w_lower is not None:
        lower[:m] = problem.w_lower
    if problem.w_upper is not None:
        upper[:m] = problem.w_upper
    if problem.x_lower is not None:
        lower[m:m + n] = problem.x_lower
    if problem.x_upper is not None:
        upper[m:m + n] = problem.x_upper
    lower[m + n] = 0.0

    z0 = np.zeros(n_var)
    z0[:m] = problem.w0
    z0[m:m + n] = problem.x0_init
    vals0 = (F @ problem.x0_init - g) ** 2 / dens
    z0[m + n] = max(vals0.min(), 0.0)
    if explicit:
        cert0 = _certificate_at(problem, problem.x0_init, problem.w0)
        for i in range(N):
            xi0 = problem.x0_init + (g[i] - F[i] @ problem.x0_init) / (F[i] @ F[i]) * F[i]
            z0[n_base + i * (n + 1): n_base + i * (n + 1) + n] = xi0
            z0[n_base + i * (n + 1) + n] = F[i] @ np.asarray(cert0.gradient(xi0)) / (F[i] @ F[i])
    z0 = np.clip(z0, lower, upper)

    return NlpProblem(objective=objective, x0=z0,
                      equalities=equalities, inequalities=inequalities,
                      lower=lower, upper=upper)


def solve_sco(problem: ScoProblem,
              config: Optional[SolverConfig] = None) -> ScoSolution:
    """Warm start from the stability-free optimum, then solve the full
    single-level program and report the facet tightness gap."""
    config = config or SolverConfig(multistart=5)
    m = problem.w0.size
    n = problem.x0_init.size

    # stage 1: economic solve without the stability block
    def base_obj(z):
        return problem.cost(z[:m])

    def base_eq(z):
        return np.atleast_1d(problem.manifold.steady_state_residual(z[m:m + n], z[:m]))

    base_ineq = None
    if problem.manifold.bound_constraints is not None:
        base_ineq = lambda z: np.atleast_1d(
            problem.manifold.bound_constraints(z[m:m + n], z[:m]))
    lower = np.full(m + n, -np.inf)
    upper = np.full(m + n, np.inf)
    if problem.w_lower is not None:
        lower[:m] = problem.w_lower
    if problem.w_upper is not None:
        upper[:m] = problem.w_upper
    if problem.x_lower is not None:
        lower[m:] = problem.x_lower
    if problem.x_upper is not None:
        upper[m:] = problem.x_upper
    base = NlpProblem(objective=base_obj,
                      x0=np.clip(np.r_[problem.w0, problem.x0_init], lower, upper),
                      equalities=base_eq, inequalities=base_ineq,
                      lower=lower, upper=upper)
    warm = nlp_solve(base, config)
    if warm.status == "Optimal":
        problem.w0 = warm.point[:m].copy()
        problem.x0_init = warm.point[m:m + n].copy()

    nlp = assemble_ssco(problem)
    report = nlp_solve(nlp, config)

    w = report.point[:m]
    x0 = report.point[m:m + n]
    vmin = float(report.point[m + n])
    cert = _certificate_at(problem, x0, w)
    xc = _fault_state(problem, x0, w)
    # honest tightness: true facet minima from the KKT facet solver, not the
    # constraint formulas the NLP itself used
    try:
        gap = float(vmin_facet_min(cert, problem.polytope, x0) - vmin)
    except Exception:
        F, g, dens = _facet_value_terms(problem, cert.p_matrix)
        gap = float(((F @ x0 - g) ** 2 / dens).min() - vmin)
    return ScoSolution(
        w_opt=w, x0_opt=x0, v_min_opt=vmin, x_fault_opt=xc,
        tightness_gap=gap, cost_value=float(problem.cost(w)),
        nlp_report=report)


def vmin_facet_min(cert: QuadraticCertificate, poly: Polytope, x0) -> float:
    from .vmin import v_min as _v_min
    return _v_min(cert, poly, x0).v_min
