"""Three-bus optimal power flow, swing dynamics in feedback form, and the
transient-stability-constrained redispatch.

Angles are radians internally; powers are per-unit on the grid's MVA base
with costs quoted in $/MW. The swing model keeps voltage magnitudes frozen
and reduces out the uniform rotation mode by referencing all angles to the
slack bus, so the dynamic state is (relative angles, relative speeds).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import List, Optional, Tuple

import numpy as np

from .core import EquilibriumManifold, Polytope, QuadraticCertificate
from .lure import (LureSystem, SectorBound, SectorBoundError, solve_lmi)
from .nlp import NlpProblem, SolverConfig, solve as nlp_solve
from .sco import DisturbanceScenario, ScoProblem, ScoSolution, solve_sco
from .sdp import SdpInfeasibleError
from .sim import SimConfig, classify_stability, integrate


class GridDataError(ValueError):
    pass


@dataclass
class GridModel:
    """Lossless network snapshot: susceptances, loads, machine and cost data.

    ``angle_box`` is the half-width (rad) of the line-angle polytope used by
    the stability certificate; ``omega_max`` caps the polytope's relative
    machine speeds purely to keep the region bounded.
    """

    b_prefault: np.ndarray
    b_onfault: np.ndarray
    loads: np.ndarray
    voltages: np.ndarray
    inertia: np.ndarray
    damping: np.ndarray
    cost_a1: np.ndarray
    cost_a2: np.ndarray
    mva_base: float = 100.0
    reference: int = 0
    angle_box: float = np.pi / 2
    angle_margin: float = 0.01
    omega_max: float = 60.0
    voltage_bounds: Tuple[float, float] = (0.9, 1.1)
    name: str = ""

    def __post_init__(self):
        for attr in ("b_prefault", "b_onfault", "loads", "voltages",
                     "inertia", "damping", "cost_a1", "cost_a2"):
            setattr(self, attr, np.asarray(getattr(self, attr), dtype=float))
        nb = self.b_prefault.shape[0]
        for B, tag in ((self.b_prefault, "pre-fault"), (self.b_onfault, "on-fault")):
            if B.shape != (nb, nb) or np.abs(B - B.T).max() > 1e-12:
                raise GridDataError(f"{tag} susceptance matrix must be symmetric")
            if np.abs(B.sum(axis=1)).max() > 1e-9:
                raise GridDataError(f"{tag} susceptance rows must sum to zero")
        lo, hi = self.voltage_bounds
        if ((self.voltages < lo) | (self.voltages > hi)).any():
            raise GridDataError("voltage set-points violate bounds")
        if (self.inertia <= 0).any() or (self.damping <= 0).any():
            raise GridDataError("inertia and damping must be positive")

    @property
    def n_bus(self) -> int:
        return self.b_prefault.shape[0]

    def lines(self) -> List[Tuple[int, int]]:
        nb = self.n_bus
        return [(i, j) for i in range(nb) for j in range(i + 1, nb)
                if abs(self.b_prefault[i, j]) > 1e-12]

    def incidence(self) -> np.ndarray:
        """Signed line-bus incidence; row l of E gives angle theta_i - theta_j."""
        lines = self.lines()
        E = np.zeros((len(lines), self.n_bus))
        for l, (i, j) in enumerate(lines):
            E[l, i], E[l, j] = 1.0, -1.0
        return E

    def line_weights(self, B=None) -> np.ndarray:
        B = self.b_prefault if B is None else B
        v = self.voltages
        return np.array([v[i] * v[j] * B[i, j] for i, j in self.lines()])

    def injections(self, theta, B=None) -> np.ndarray:
        B = self.b_prefault if B is None else B
        v = self.voltages
        d = theta[:, None] - theta[None, :]
        return (v[:, None] * v[None, :] * B * np.sin(d)).sum(axis=1)

    def cost(self, p_gen_pu) -> float:
        p = np.asarray(p_gen_pu, dtype=float) * self.mva_base
        return float((self.cost_a1 * p + self.cost_a2 * p ** 2).sum())


def load_grid(source) -> GridModel:
    """Grid from a JSON file path, an open dict, or a bundled data name."""
    if isinstance(source, dict):
        doc = source
    else:
        with open(source) as fh:
            doc = json.load(fh)
    keys = dict(
        b_prefault="b_prefault", b_onfault="b_onfault", loads="loads_pu",
        voltages="voltages_pu", inertia="inertia", damping="damping",
        cost_a1="cost_a1", cost_a2="cost_a2")
    kwargs = {a: doc[k] for a, k in keys.items()}
    for opt in ("mva_base", "reference", "angle_box", "angle_margin",
                "omega_max", "name"):
        if opt in doc:
            kwargs[opt] = doc[opt]
    return GridModel(**kwargs)


def bundled_grid(name: str = "threebus") -> GridModel:
    with resources.files("lyasco.data").joinpath(f"{name}.json").open() as fh:
        return load_grid(json.load(fh))


@dataclass
class DispatchSolution:
    generation_pu: np.ndarray
    angles_rad: np.ndarray
    objective: float
    stability_label: str = "Uncertified"
    v_min: Optional[float] = None
    certificate: Optional[QuadraticCertificate] = None
    sco: Optional[ScoSolution] = None

    @property
    def angles_deg(self) -> np.ndarray:
        return np.rad2deg(self.angles_rad)

    @property
    def generation_mw(self) -> np.ndarray:
        return self.generation_pu * 100.0


def _flow_residual(grid: GridModel, theta, p_gen):
    return p_gen - grid.loads - grid.injections(theta)


def solve_opf(grid: GridModel, config: Optional[SolverConfig] = None) -> DispatchSolution:
    """Economic dispatch under the steady-state flow equations and line-angle
    limits; returns an Uncertified dispatch."""
    nb = grid.n_bus
    ref = grid.reference
    free = [i for i in range(nb) if i != ref]
    E = grid.incidence()
    lim = np.pi / 2 - grid.angle_margin

    def unpack(z):
        theta = np.zeros(nb)
        theta[free] = z[: nb - 1]
        return theta, z[nb - 1:]

    def objective(z):
        _, p = unpack(z)
        return grid.cost(p)

    def gradient(z):
        _, p = unpack(z)
        g = np.zeros_like(z)
        g[nb - 1:] = (grid.cost_a1 + 2 * grid.cost_a2 * p * grid.mva_base) * grid.mva_base
        return g

    def equalities(z):
        theta, p = unpack(z)
        return _flow_residual(grid, theta, p)

    def inequalities(z):
        theta, _ = unpack(z)
        u = E @ theta
        return np.r_[u - lim, -u - lim]

    z0 = np.r_[np.zeros(nb - 1), grid.loads + grid.loads.sum() / nb * 0]
    z0[nb - 1:] = grid.loads.sum() / nb
    problem = NlpProblem(objective=objective, x0=z0, gradient=gradient,
                         equalities=equalities, inequalities=inequalities)
    sol = nlp_solve(problem, config or SolverConfig(multistart=3))
    theta, p = unpack(sol.point)
    if sol.status != "Optimal":
        raise RuntimeError(f"OPF solve failed: {sol.status}")
    return DispatchSolution(generation_pu=p, angles_rad=theta,
                            objective=grid.cost(p))


def sector_from_formula(grid: GridModel, theta, angle_box: Optional[float] = None):
    """Printed sector recipe: lower end from the smallest line angle's
    box-corner secant, upper end from the largest susceptance magnitude."""
    r = grid.angle_box if angle_box is None else angle_box
    v = grid.voltages
    th_line = np.abs(grid.incidence() @ np.asarray(theta, dtype=float))
    th_lo = th_line.min()
    b_lo = min(abs(grid.b_prefault[i, j]) for i, j in grid.lines())
    b_hi = np.abs(grid.b_prefault).max()
    gamma = v.min() ** 2 * b_lo * (np.sin(r) - np.sin(th_lo)) / (r - th_lo)
    beta = v.max() ** 2 * b_hi
    return SectorBound(gamma, beta)


def _channel_slope_ranges(theta_line, r, n=20001):
    """Secant-slope envelope of sin around each line angle over |angle|<=r;
    slopes are in cos units (line weight factored out)."""
    out = np.zeros((theta_line.size, 2))
    for l, th in enumerate(theta_line):
        s = np.linspace(-r - th, r - th, n)
        s = s[np.abs(s) > 1e-9]
        sl = (np.sin(th + s) - np.sin(th)) / s
        out[l] = sl.min(), sl.max()
    return out


def swing_to_lure(grid: GridModel, dispatch: DispatchSolution,
                  angle_box: Optional[float] = None):
    """Reduced swing dynamics as a sector-bounded feedback system.

    State: (angles relative to the reference bus, relative speeds). The
    channel matrix carries the line weight so one scalar sector covers all
    lines; the sector's linear floor is absorbed into the linear block to
    make it Hurwitz. Returns (system, polytope, sector, quoted_sector):
    ``sector`` is the tight sampled envelope in transformed channel units
    (what the LMI consumes), ``quoted_sector`` the textbook recipe in plain
    units whenever that recipe actually contains the envelope.
    """
    r = grid.angle_box if angle_box is None else angle_box
    theta = dispatch.angles_rad
    E = grid.incidence()
    th_line = E @ theta
    if np.abs(th_line).max() >= r - 1e-9:
        raise GridDataError("dispatch line angles leave the certificate polytope")
    if len(set(grid.inertia)) > 1 or len(set(grid.damping)) > 1:
        raise GridDataError("reduction assumes uniform inertia and damping")
    m_i, d_i = float(grid.inertia[0]), float(grid.damping[0])

    nb = grid.n_bus
    ref = grid.reference
    free = [i for i in range(nb) if i != ref]
    S = np.zeros((nb, nb - 1))
    for k, i in enumerate(free):
        S[i, k] = 1.0
    Rred = (S - np.outer(np.eye(nb)[:, ref], np.ones(nb - 1))).T   # acc differences
    # line angles depend only on relative angles: E (S dtheta + ref * 1) = E S dtheta
    Etil = E @ S
    w_line = grid.line_weights()

    nred = nb - 1
    dim = 2 * nred

    # weighted channels: the line weight cancels between phi and the scaled
    # channel, so the per-channel slope envelope is the cos-secant range
    ranges = _channel_slope_ranges(th_line, r)
    gamma_env = float(ranges[:, 0].min()) - 1e-6
    beta_env = float(ranges[:, 1].max()) + 1e-6

    sector_f = sector_from_formula(grid, theta, r)
    # formula is quoted in unweighted units; weighted channels divide by w
    gamma_f_w = sector_f.gamma / w_line.max()
    beta_f_w = sector_f.beta / w_line.min()

    def build(gamma, beta):
        k = gamma
        A = np.zeros((dim, dim))
        A[:nred, nred:] = np.eye(nred)
        # linear floor k of the weighted channels: torque k*s = k*w*(Etil d)
        A[nred:, :nred] = -(1.0 / m_i) * (Rred @ E.T @ np.diag(k * w_line) @ Etil)
        A[nred:, nred:] = -(d_i / m_i) * np.eye(nred)
        Bm = np.zeros((dim, len(w_line)))
        Bm[nred:, :] = -(1.0 / m_i) * (Rred @ E.T)
        Cm = np.zeros((len(w_line), dim))
        Cm[:, :nred] = np.diag(w_line) @ Etil

        def phi(s):
            u_dev = s / w_line
            raw = w_line * (np.sin(th_line + u_dev) - np.sin(th_line))
            return raw - k * s

        chans = []
        for l in range(len(w_line)):
            def ch(sv, l=l):
                u = sv / w_line[l]
                return w_line[l] * (np.sin(th_line[l] + u) - np.sin(th_line[l])) - k * sv
            chans.append(ch)
        x_eq = np.r_[theta[free] - theta[ref], np.zeros(nred)]
        sys = LureSystem(a_matrix=A, b_matrix=Bm, c_matrix=Cm,
                         nonlinearity=phi, equilibrium=x_eq,
                         nonlinearity_channels=chans)
        return sys, SectorBound(gamma - k - 1e-9, beta - k)

    rows = np.zeros((len(w_line), dim))
    rows[:, :nred] = Etil
    pair_rows = np.vstack([rows, np.c_[np.zeros((nred, nred)), np.eye(nred)]])
    lo = np.r_[np.full(len(w_line), -r), np.full(nred, -grid.omega_max)]
    hi = np.r_[np.full(len(w_line), r), np.full(nred, grid.omega_max)]
    poly = Polytope.from_parallel_rows(pair_rows, lo, hi)

    # the LMI always gets the tight sampled envelope; the printed recipe is
    # quoted alongside whenever it actually contains the envelope
    sys, sector = build(gamma_env, beta_env)
    if gamma_f_w <= gamma_env and beta_f_w >= beta_env:
        sector_quoted = sector_f
    else:
        sector_quoted = SectorBound(gamma_env * w_line.min(), beta_env * w_line.max())
    return sys, poly, sector, sector_quoted


def reduced_swing_field(grid: GridModel, p_gen, B=None):
    """Reduced-state swing field: the state is (angles relative to the
    reference bus, relative speeds); ``B`` selects the network coupling."""
    B = grid.b_prefault if B is None else np.asarray(B, dtype=float)
    nb, ref = grid.n_bus, grid.reference
    free = [i for i in range(nb) if i != ref]
    m_i, d_i = float(grid.inertia[0]), float(grid.damping[0])
    p_net = np.asarray(p_gen, dtype=float) - grid.loads

    def fld(x):
        x = np.asarray(x, dtype=float)
        delta = np.zeros(nb)
        delta[free] = x[: nb - 1]
        acc = (p_net - grid.injections(delta, B)) / m_i
        rel_acc = acc[free] - acc[ref] - (d_i / m_i) * x[nb - 1:]
        return np.r_[x[nb - 1:], rel_acc]

    def jvp(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        delta = np.zeros(nb)
        delta[free] = x[: nb - 1]
        v = grid.voltages
        d = delta[:, None] - delta[None, :]
        W = v[:, None] * v[None, :] * B * np.cos(d)
        L = np.diag(W.sum(axis=1) - np.diag(W)) - (W - np.diag(np.diag(W)))
        du = np.zeros(nb)
        du[free] = u[: nb - 1]
        dacc_full = -(L @ du) / m_i
        rel = dacc_full[free] - dacc_full[ref] - (d_i / m_i) * u[nb - 1:]
        return np.r_[u[nb - 1:], rel]

    return fld, jvp


def line_trip_scenario(grid: GridModel, line: Tuple[int, int], t0: float = 0.0,
                       tc: float = 0.1, taylor_order: int = 2) -> DisturbanceScenario:
    """Outage of one line on [t0, tc) followed by reclosing.

    The on-fault susceptances come from the grid's stored on-fault matrix
    when the tripped line matches its zeroed coupling; otherwise they are
    derived by zeroing the line and repairing the diagonal.
    """
    i, j = min(line), max(line)
    if tc < t0:
        raise ValueError("clearing time precedes the trip")
    if not (0 <= i < grid.n_bus and 0 <= j < grid.n_bus) or i == j:
        raise ValueError(f"no line between buses {i} and {j}")
    if abs(grid.b_prefault[i, j]) < 1e-12:
        raise ValueError(f"no line between buses {i} and {j}")
    if abs(grid.b_onfault[i, j]) < 1e-12 and not np.allclose(
            grid.b_onfault, grid.b_prefault):
        b_on = grid.b_onfault
    else:
        b_on = grid.b_prefault.copy()
        b = b_on[i, j]
        b_on[i, j] = b_on[j, i] = 0.0
        b_on[i, i] += b
        b_on[j, j] += b

    scen = DisturbanceScenario(t0=t0, tc=tc, taylor_order=taylor_order,
                               label=f"trip line {i+1}-{j+1}")
    scen.b_onfault = b_on
    return scen


def _attach_fields(grid: GridModel, scen: DisturbanceScenario, p_gen):
    b_on = scen.b_onfault

    def builder(x0, w):
        fld, _ = reduced_swing_field(grid, np.asarray(w, dtype=float), B=b_on)
        return fld

    def jvp_builder(x0, w):
        _, jvp = reduced_swing_field(grid, np.asarray(w, dtype=float), B=b_on)
        return jvp

    fld, _ = reduced_swing_field(grid, p_gen, B=b_on)
    scen.during_field = fld
    scen.during_field_builder = builder
    scen.field_jvp_builder = jvp_builder
    return scen


def simulate_dispatch(grid: GridModel, dispatch: DispatchSolution,
                      scenario: DisturbanceScenario,
                      config: Optional[SimConfig] = None):
    """Integrate the line-trip transient from a dispatch and classify it."""
    config = config or SimConfig(horizon=10.0, step=1e-3,
                                 convergence_tol=2e-3, settle_window=2.0)
    theta, p = dispatch.angles_rad, dispatch.generation_pu
    scen = _attach_fields(grid, scenario, p)
    nominal, _ = reduced_swing_field(grid, p, B=grid.b_prefault)
    nb, ref = grid.n_bus, grid.reference
    free = [k for k in range(nb) if k != ref]
    x_eq = np.r_[theta[free] - theta[ref], np.zeros(nb - 1)]
    traj = integrate(nominal, x_eq, scenario=scen, config=config)
    label = classify_stability(traj, x_eq, config)
    return traj, label


def build_certificate(grid: GridModel, dispatch: DispatchSolution,
                      scenario: DisturbanceScenario,
                      angle_box: Optional[float] = None):
    """Sector + LMI certificate shaped toward the fault direction at the
    given dispatch; returns (lure system, polytope, certificate)."""
    from .sco import taylor_fault_state

    sys, poly, sector, _ = swing_to_lure(grid, dispatch, angle_box)
    scen = _attach_fields(grid, scenario, dispatch.generation_pu)
    nred = grid.n_bus - 1
    x_eq = sys.equilibrium
    if scen.is_identity:
        x_hat = np.zeros(2 * nred)
        x_hat[nred:] = 1.0
    else:
        jvp = scen.field_jvp_builder(x_eq, dispatch.generation_pu)
        xc = taylor_fault_state(scen.during_field, x_eq, scen.tc - scen.t0,
                                order=scen.taylor_order, jvp=jvp)
        x_hat = xc - x_eq
    E = grid.incidence()
    th_line = E @ dispatch.angles_rad
    r = grid.angle_box if angle_box is None else angle_box
    rows = np.zeros((len(th_line), 2 * nred))
    free = [k for k in range(grid.n_bus) if k != grid.reference]
    rows[:, :nred] = E @ np.eye(grid.n_bus)[:, free]
    dist = np.minimum(np.abs(th_line + r), np.abs(th_line - r))
    shaping = dict(x_hat=x_hat, rows=rows,
                   weights=0.12 / np.maximum(dist, 1e-2) ** 2, margin=1e-3)
    lmi = solve_lmi(sys, sector, shaping=shaping)
    cert = QuadraticCertificate(lmi.p_matrix, x_eq)
    return sys, poly, lmi, cert


def _tscopf_sco_problem(grid: GridModel, scenario: DisturbanceScenario,
                        cert: QuadraticCertificate, dispatch: DispatchSolution,
                        epsilon_rel: float = 1e-6) -> ScoProblem:
    nb, ref = grid.n_bus, grid.reference
    nred = nb - 1
    free = [k for k in range(nb) if k != ref]
    E = grid.incidence()
    Ered = E[:, free]
    r = grid.angle_box
    lim = r - grid.angle_margin

    def residual(x0, w):
        th = np.zeros(nb)
        th[free] = np.asarray(x0)[:nred]
        return _flow_residual(grid, th, np.asarray(w))

    def bounds(x0, w):
        u = Ered @ np.asarray(x0)[:nred]
        return np.r_[u - lim, -u - lim]

    manifold = EquilibriumManifold(steady_state_residual=residual,
                                   bound_constraints=bounds,
                                   state_dim=2 * nred, control_dim=nb)

    rows = np.zeros((len(grid.lines()), 2 * nred))
    rows[:, :nred] = Ered
    poly_rows = np.vstack([rows, np.c_[np.zeros((nred, nred)), np.eye(nred)]])
    lo = np.r_[np.full(rows.shape[0], -r), np.full(nred, -grid.omega_max)]
    hi = np.r_[np.full(rows.shape[0], r), np.full(nred, grid.omega_max)]
    poly = Polytope.from_parallel_rows(poly_rows, lo, hi)

    scen = _attach_fields(grid, scenario, dispatch.generation_pu)
    x_init = np.r_[dispatch.angles_rad[free] - dispatch.angles_rad[ref],
                   np.zeros(nred)]
    zeros = np.zeros(nred)
    return ScoProblem(
        cost=grid.cost, manifold=manifold, certificate=cert, polytope=poly,
        scenario=scen, w0=dispatch.generation_pu.copy(), x0_init=x_init,
        epsilon_rel=epsilon_rel,
        x_lower=np.r_[np.full(nred, -np.inf), zeros],
        x_upper=np.r_[np.full(nred, np.inf), zeros])


def solve_tscopf(grid: GridModel, scenario: DisturbanceScenario,
                 config: Optional[SolverConfig] = None,
                 max_rounds: int = 4) -> DispatchSolution:
    """Stability-constrained redispatch for a line-trip scenario.

    The certificate is rebuilt at each round's dispatch until the iteration
    settles (the sector and shape depend on the operating point); the final
    dispatch is labeled by direct simulation.
    """
    config = config or SolverConfig(multistart=3)
    opf = solve_opf(grid, config)
    # pull the certificate anchor toward flat until the LMI accepts
    cand = None
    for shrink in (1.0, 0.6, 0.35, 0.2, 0.1):
        th = opf.angles_rad * shrink
        p = grid.loads + grid.injections(th)
        anchor = DispatchSolution(generation_pu=p, angles_rad=th,
                                  objective=grid.cost(p))
        try:
            build_certificate(grid, anchor, scenario)
            cand = anchor
            break
        except (SdpInfeasibleError, SectorBoundError, GridDataError):
            continue
    if cand is None:
        raise SdpInfeasibleError("no feasible certificate anchor found")

    last_angles = None
    sol = None
    cert = None
    for _ in range(max_rounds):
        try:
            _, poly, lmi, cert = build_certificate(grid, cand, scenario)
        except (SdpInfeasibleError, SectorBoundError, GridDataError):
            if cert is None:
                raise
            break   # keep the last certified round; its constraints bound sol
        problem = _tscopf_sco_problem(grid, scenario, cert, opf)
        sol = solve_sco(problem, config)
        nb, ref = grid.n_bus, grid.reference
        free = [k for k in range(nb) if k != ref]
        theta = np.zeros(nb)
        theta[free] = sol.x0_opt[: nb - 1]
        p = sol.w_opt
        cand = DispatchSolution(generation_pu=p, angles_rad=theta,
                                objective=grid.cost(p))
        if last_angles is not None and np.abs(theta - last_angles).max() < 1e-6:
            break
        last_angles = theta.copy()

    _, label = simulate_dispatch(grid, cand, scenario)
    free = [k for k in range(grid.n_bus) if k != grid.reference]
    x_eq = np.r_[cand.angles_rad[free] - cand.angles_rad[grid.reference],
                 np.zeros(grid.n_bus - 1)]
    return DispatchSolution(
        generation_pu=cand.generation_pu, angles_rad=cand.angles_rad,
        objective=cand.objective, stability_label=label,
        v_min=sol.v_min_opt,
        certificate=QuadraticCertificate(cert.p_matrix, x_eq),
        sco=sol)
