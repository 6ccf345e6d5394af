"""Small-scale smooth NLP solver.

Augmented-Lagrangian outer loop (classical multiplier updates for
equalities, squared-hinge treatment of inequalities) around bound-constrained
quasi-Newton inner solves. Deterministic: identical inputs give identical
iterates. Nonconvex problems are attacked by multi-start from a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize as _scipy_minimize


class GradientAuditError(ValueError):
    """A supplied gradient disagrees with finite differences."""


_EMPTY = lambda x: np.zeros(0)


def _fd_gradient(f, x, h=1e-7):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        g[i] = (f(x + e) - f(x - e)) / (2 * e[i])
    return g


def _fd_jacobian(f, x, h=1e-7):
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(f(x))
    J = np.zeros((f0.size, x.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        J[:, i] = (np.atleast_1d(f(x + e)) - np.atleast_1d(f(x - e))) / (2 * e[i])
    return J


@dataclass
class NlpProblem:
    """min f(x) s.t. h(x) = 0, g(x) <= 0, lb <= x <= ub.

    Gradients/Jacobians are optional; central finite differences are used
    where they are omitted. All callbacks must be deterministic.
    """

    objective: Callable[[np.ndarray], float]
    x0: np.ndarray
    gradient: Optional[Callable] = None
    equalities: Optional[Callable] = None
    equalities_jac: Optional[Callable] = None
    inequalities: Optional[Callable] = None
    inequalities_jac: Optional[Callable] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        n = self.x0.size
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if (self.x0 < self.lower - 1e-12).any() or (self.x0 > self.upper + 1e-12).any():
            raise ValueError("initial point violates bounds")
        if self.gradient is None:
            self.gradient = lambda x, f=self.objective: _fd_gradient(f, x)
        if self.equalities is not None and self.equalities_jac is None:
            self.equalities_jac = lambda x, f=self.equalities: _fd_jacobian(f, x)
        if self.inequalities is not None and self.inequalities_jac is None:
            self.inequalities_jac = lambda x, f=self.inequalities: _fd_jacobian(f, x)

    def audit_gradients(self, tol=1e-5):
        """Compare supplied derivatives with finite differences at x0."""
        x = self.x0
        ga = np.asarray(self.gradient(x), dtype=float)
        gf = _fd_gradient(self.objective, x)
        scale = max(1.0, np.linalg.norm(gf))
        if np.linalg.norm(ga - gf) > tol * scale:
            raise GradientAuditError("objective gradient fails finite-difference audit")
        for fun, jac in ((self.equalities, self.equalities_jac),
                         (self.inequalities, self.inequalities_jac)):
            if fun is None:
                continue
            Ja = np.atleast_2d(np.asarray(jac(x), dtype=float))
            Jf = _fd_jacobian(fun, x)
            scale = max(1.0, np.linalg.norm(Jf))
            if np.linalg.norm(Ja - Jf) > tol * scale:
                raise GradientAuditError("constraint Jacobian fails finite-difference audit")


@dataclass
class SolverConfig:
    outer_tol: float = 1e-8
    kkt_tol: float = 1e-7
    feas_tol: float = 1e-8
    max_outer: int = 50
    max_inner_evals: int = 10_000
    penalty0: float = 10.0
    penalty_growth: float = 10.0
    multistart: int = 1
    seed: int = 42
    start_scale: float = 0.5


@dataclass
class NlpSolution:
    point: np.ndarray
    objective_value: float
    kkt_residual: float
    max_violation: float
    status: str                      # "Optimal" | "Infeasible" | "IterLimit"
    eq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ineq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_outer: int = 0
    start_index: int = 0


def _kkt_residual(problem: NlpProblem, x, lam, mu, f_scale=1.0):
    """Projected-gradient stationarity plus complementarity, computed from
    the problem callbacks independently of solver internals. The residual is
    measured on the objective-normalized Lagrangian (scale ``f_scale``)."""
    g = np.asarray(problem.gradient(x), dtype=float) / f_scale
    grad_L = g.copy()
    if problem.equalities is not None and lam.size:
        grad_L -= np.atleast_2d(problem.equalities_jac(x)).T @ lam
    if problem.inequalities is not None and mu.size:
        grad_L += np.atleast_2d(problem.inequalities_jac(x)).T @ mu
    stepped = np.clip(x - grad_L, problem.lower, problem.upper)
    stat = np.abs(x - stepped).max() if x.size else 0.0
    comp = 0.0
    if problem.inequalities is not None and mu.size:
        gx = np.atleast_1d(problem.inequalities(x))
        comp = np.abs(mu * gx).max() if gx.size else 0.0
    return max(stat, comp)


def _max_violation(problem: NlpProblem, x):
    v = 0.0
    if problem.equalities is not None:
        hx = np.atleast_1d(problem.equalities(x))
        if hx.size:
            v = max(v, np.abs(hx).max())
    if problem.inequalities is not None:
        gx = np.atleast_1d(problem.inequalities(x))
        if gx.size:
            v = max(v, max(0.0, gx.max()))
    return v


def _solve_single(problem: NlpProblem, x0, config: SolverConfig) -> NlpSolution:
    has_eq = problem.equalities is not None
    has_in = problem.inequalities is not None
    m_eq = np.atleast_1d(problem.equalities(x0)).size if has_eq else 0
    m_in = np.atleast_1d(problem.inequalities(x0)).size if has_in else 0

    # objective normalization keeps multipliers O(1) and the quasi-Newton
    # gradient floor well below the KKT tolerance
    g0 = np.asarray(problem.gradient(x0), dtype=float)
    f_scale = max(1.0, abs(problem.objective(x0)), np.abs(g0).max())

    # least-squares multiplier warm start at x0
    lam = np.zeros(m_eq)
    if has_eq and m_eq:
        J0 = np.atleast_2d(problem.equalities_jac(x0))
        lam = np.linalg.lstsq(J0.T, g0 / f_scale, rcond=None)[0]
        lam = np.clip(lam, -1e4, 1e4)
    mu = np.zeros(m_in)
    rho = config.penalty0
    x = x0.copy()
    bounds = list(zip(problem.lower, problem.upper))
    evals = [0]
    prev_viol = np.inf
    inner_gtol = 1e-5

    def aug_val_grad(z):
        evals[0] += 1
        f = problem.objective(z) / f_scale
        g = np.asarray(problem.gradient(z), dtype=float) / f_scale
        if has_eq:
            h = np.atleast_1d(problem.equalities(z))
            J = np.atleast_2d(problem.equalities_jac(z))
            f += -lam @ h + 0.5 * rho * h @ h
            g = g + J.T @ (rho * h - lam)
        if has_in:
            c = np.atleast_1d(problem.inequalities(z))
            J = np.atleast_2d(problem.inequalities_jac(z))
            act = np.maximum(0.0, mu + rho * c)
            f += (act @ act - mu @ mu) / (2.0 * rho)
            g = g + J.T @ act
        return f, g

    status = "IterLimit"
    n_outer = 0
    for outer in range(config.max_outer):
        n_outer = outer + 1
        res = _scipy_minimize(
            aug_val_grad, x, jac=True, method="L-BFGS-B", bounds=bounds,
            options=dict(maxiter=500, ftol=1e-16, gtol=inner_gtol, maxls=80),
        )
        x = np.clip(res.x, problem.lower, problem.upper)
        viol = _max_violation(problem, x)
        if has_eq:
            h = np.atleast_1d(problem.equalities(x))
            lam = lam - rho * h
        if has_in:
            c = np.atleast_1d(problem.inequalities(x))
            mu = np.maximum(0.0, mu + rho * c)
        kkt = _kkt_residual(problem, x, lam, mu, f_scale)
        if viol <= config.feas_tol and kkt <= config.kkt_tol:
            status = "Optimal"
            break
        if viol > 0.25 * prev_viol and viol > config.feas_tol:
            rho = min(rho * config.penalty_growth, 1e10)
        prev_viol = viol
        inner_gtol = max(1e-11, inner_gtol * 0.2)
        if evals[0] > config.max_inner_evals:
            break

    viol = _max_violation(problem, x)
    kkt = _kkt_residual(problem, x, lam, mu, f_scale)
    if status != "Optimal" and viol > max(1e-4, 100 * config.feas_tol) and rho >= 1e9:
        status = "Infeasible"
    if status != "Optimal" and viol <= config.feas_tol and kkt <= config.kkt_tol:
        status = "Optimal"
    return NlpSolution(
        point=x, objective_value=float(problem.objective(x)),
        kkt_residual=float(kkt), max_violation=float(viol), status=status,
        eq_multipliers=lam * f_scale, ineq_multipliers=mu * f_scale,
        n_outer=n_outer,
    )


def solve(problem: NlpProblem, config: Optional[SolverConfig] = None) -> NlpSolution:
    """Solve the NLP; with ``config.multistart > 1`` the best Optimal point
    over perturbed starts wins (ties break toward the lowest start index)."""
    config = config or SolverConfig()
    starts = [problem.x0.copy()]
    if config.multistart > 1:
        rng = np.random.default_rng(config.seed)
        bounded = np.isfinite(problem.lower) & np.isfinite(problem.upper)
        for _ in range(config.multistart - 1):
            u = rng.uniform(0.0, 1.0, problem.x0.size)
            pert = problem.x0 + config.start_scale * 2.0 * np.maximum(
                1.0, np.abs(problem.x0)) * (2.0 * u - 1.0)
            # bounded coordinates explore their whole range instead
            lo, hi = problem.lower[bounded], problem.upper[bounded]
            pert[bounded] = lo + u[bounded] * (hi - lo)
            starts.append(np.clip(pert, problem.lower, problem.upper))

    best = None
    for idx, s in enumerate(starts):
        sol = _solve_single(problem, s, config)
        sol.start_index = idx
        if best is None:
            best = sol
            continue
        rank = (sol.status == "Optimal", -sol.objective_value)
        rank_best = (best.status == "Optimal", -best.objective_value)
        if rank > rank_best:
            best = sol
    return best
