"""Minimum of a convex function over polytope facets.

Each facet problem min V(x) s.t. F_i.x = g_i, Fx <= g is solved by Newton
steps on the facet-affine subspace with an active set for the remaining
inequalities. A brute-force grid search over sampled facets doubles as the
test oracle for low dimensions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog

from .core import Polytope, _as_vector


class EmptyFacetError(ValueError):
    """The facet has no point satisfying the remaining half-spaces."""


class ConvergenceError(RuntimeError):
    """Facet solve did not reach the residual tolerance."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


@dataclass(frozen=True)
class FacetMinimum:
    facet_index: int
    minimizer: np.ndarray
    multiplier: float            # multiplier of the facet equality
    value: float
    kkt_residual: float          # includes active-inequality multipliers
    active_facets: tuple = ()


@dataclass(frozen=True)
class VminResult:
    per_facet: List[FacetMinimum]
    v_min: float
    argmin_facet: int


def _facet_interior_point(poly: Polytope, facet: int):
    """Phase-1 solve: a point on facet ``facet`` satisfying the rest, or None."""
    F, g = poly.facet_normals, poly.facet_offsets
    n = poly.dim
    mask = np.arange(poly.n_facets) != facet
    res = linprog(
        c=np.r_[np.zeros(n), -1.0],
        A_ub=np.c_[F[mask], np.ones(mask.sum())],
        b_ub=g[mask],
        A_eq=np.c_[F[facet][None, :], np.zeros((1, 1))],
        b_eq=[g[facet]],
        bounds=[(None, None)] * n + [(-1e3, 1e3)],
        method="highs",
    )
    if not res.success or res.x[-1] < -1e-9:
        return None
    return res.x[:n]


def _hessian_of(V, x, h=1e-5):
    n = x.size
    H = np.zeros((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        gp = np.asarray(V.gradient(x + ei))
        gm = np.asarray(V.gradient(x - ei))
        H[:, i] = (gp - gm) / (2 * h)
    return 0.5 * (H + H.T)


def facet_minimize(V, poly: Polytope, facet: int,
                   warm_start: Optional[np.ndarray] = None,
                   tol: float = 1e-9, max_iter: int = 200) -> FacetMinimum:
    """KKT point of min V over one facet of the polytope.

    ``V`` needs ``value``/``gradient`` and optionally ``hessian`` methods;
    for convex V the returned point is the facet's global minimum.
    """
    if not (0 <= facet < poly.n_facets):
        raise IndexError(f"facet {facet} out of range")
    F, g = poly.facet_normals, poly.facet_offsets
    n = poly.dim
    ci, di = F[facet], g[facet]

    feas = _facet_interior_point(poly, facet)
    if feas is None:
        raise EmptyFacetError(f"facet {facet} is empty")

    if warm_start is None:
        # Euclidean projection of the polytope interior point onto the facet
        p = poly.interior_point()
        x = p + (di - ci @ p) / (ci @ ci) * ci
    else:
        x = _as_vector(warm_start).copy()
        x = x + (di - ci @ x) / (ci @ ci) * ci
    if not poly.contains(x, tol=1e-9):
        x = feas.copy()

    Z = null_space(ci[None, :])          # facet tangent basis, n x (n-1)
    others = [j for j in range(poly.n_facets) if j != facet]
    active = set()

    def grad_hess(xx):
        gr = np.asarray(V.gradient(xx), dtype=float)
        if hasattr(V, "hessian"):
            H = np.asarray(V.hessian(xx), dtype=float)
        else:
            H = _hessian_of(V, xx)
        return gr, H

    mu = {}
    for _ in range(max_iter):
        gr, H = grad_hess(x)
        act = sorted(active)
        A = Z.T @ F[act].T if act else np.zeros((n - 1, 0))
        Hr = Z.T @ H @ Z
        gr_r = Z.T @ gr
        k = len(act)
        # KKT system on the reduced space: [Hr A; A^T 0][du; mu] = [-gr_r; 0]
        KKT = np.block([[Hr, A], [A.T, np.zeros((k, k))]])
        rhs = np.r_[-gr_r, np.zeros(k)]
        sol, *_ = np.linalg.lstsq(KKT, rhs, rcond=None)
        du, mu_act = sol[: n - 1], sol[n - 1:]
        step = Z @ du

        if np.linalg.norm(step) <= 1e-10 * max(1.0, np.linalg.norm(x)):
            # stationary on current working set; check multiplier signs
            mu = dict(zip(act, mu_act))
            neg = [j for j, m in mu.items() if m < -1e-10]
            if not neg:
                break
            active.remove(min(neg, key=lambda j: mu[j]))
            continue

        # longest feasible step along `step` w.r.t. inactive facets
        alpha = 1.0
        blocking = None
        for j in others:
            if j in active:
                continue
            denom = F[j] @ step
            if denom > 1e-14:
                a = (g[j] - F[j] @ x) / denom
                if a < alpha - 1e-14:
                    alpha = max(a, 0.0)
                    blocking = j
        # backtracking on V to keep descent (convex V: full step fine, but
        # guard against FD-hessian noise)
        v0 = V.value(x)
        t = alpha
        for _ in range(40):
            if V.value(x + t * step) <= v0 + 1e-14 * max(1.0, abs(v0)):
                break
            t *= 0.5
        x = x + t * step
        if blocking is not None and abs(t - alpha) < 1e-14:
            active.add(blocking)
    else:
        gr, _ = grad_hess(x)
        res = np.linalg.norm(Z.T @ gr)
        raise ConvergenceError(f"facet {facet}: no convergence", residual=res)

    # recover full-space multipliers: grad V = lam * c_i - sum mu_j F_j
    gr, _ = grad_hess(x)
    act = sorted(active)
    basis = np.column_stack([ci] + [-F[j] for j in act])
    coeffs, *_ = np.linalg.lstsq(basis, gr, rcond=None)
    lam = float(coeffs[0])
    mu_map = dict(zip(act, coeffs[1:]))
    kkt_res = float(np.linalg.norm(gr - basis @ coeffs))
    if kkt_res > 1e-7 * max(1.0, np.linalg.norm(gr)):
        raise ConvergenceError(f"facet {facet}: stationarity residual {kkt_res:.2e}",
                               residual=kkt_res)
    if abs(ci @ x - di) > 1e-8 or not poly.contains(x, tol=1e-8):
        raise ConvergenceError(f"facet {facet}: iterate left the facet")
    return FacetMinimum(
        facet_index=facet, minimizer=x, multiplier=lam,
        value=float(V.value(x)), kkt_residual=kkt_res,
        active_facets=tuple(act),
    )


def v_min(V, poly: Polytope, x0=None) -> VminResult:
    """Aggregate facet minimization over every nonempty facet.

    ``x0`` (default: the certificate equilibrium) must be strictly interior;
    ties between facets resolve to the lowest index.
    """
    if x0 is None:
        x0 = V.equilibrium
    x0 = _as_vector(x0)
    slack = poly.facet_offsets - poly.facet_normals @ x0
    if (slack <= 1e-12).any():
        raise ValueError("x0 is not strictly interior to the polytope")

    per = []
    for i in range(poly.n_facets):
        try:
            per.append(facet_minimize(V, poly, i, warm_start=x0))
        except EmptyFacetError:
            continue
    if not per:
        raise EmptyFacetError("all facets empty")
    best = min(per, key=lambda fm: (fm.value, fm.facet_index))
    return VminResult(per_facet=per, v_min=best.value, argmin_facet=best.facet_index)


def _facet_vertices(poly: Polytope, facet: int):
    """Vertices of one facet by enumerating active-set intersections (n <= 4)."""
    F, g = poly.facet_normals, poly.facet_offsets
    n = poly.dim
    verts = []
    others = [j for j in range(poly.n_facets) if j != facet]
    for combo in itertools.combinations(others, n - 1):
        A = np.vstack([F[facet], F[list(combo)]])
        b = np.r_[g[facet], g[list(combo)]]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, b)
        if poly.contains(x, tol=1e-8):
            verts.append(x)
    return verts


def _values_on(V, X):
    if hasattr(V, "value_batch"):
        return np.asarray(V.value_batch(X))
    return np.array([V.value(x) for x in X])


def v_min_oracle(V, poly: Polytope, grid_density: int = 40,
                 refine_rounds: int = 2) -> float:
    """Brute-force boundary minimum by dense facet grids; test oracle only.

    Guarded to n <= 4 to keep the grid tractable. Each facet grid is
    re-sampled ``refine_rounds`` times around its incumbent to sharpen the
    minimum without any gradient information.
    """
    n = poly.dim
    if n > 4:
        raise ValueError("grid oracle limited to n <= 4")
    F, g = poly.facet_normals, poly.facet_offsets
    best = np.inf
    for i in range(poly.n_facets):
        verts = _facet_vertices(poly, i)
        if not verts:
            continue
        Vmat = np.array(verts)
        ci = F[i]
        Z = null_space(ci[None, :])
        origin = Vmat[0]
        U = (Vmat - origin) @ Z               # facet vertices in tangent coords
        lo, hi = U.min(axis=0), U.max(axis=0)
        best = min(best, _values_on(V, Vmat).min())

        def sweep(lo_k, hi_k):
            axes = [np.linspace(a, b, grid_density) for a, b in zip(lo_k, hi_k)]
            if not axes:
                return None, np.inf
            mesh = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([m.ravel() for m in mesh], axis=1)
            X = origin + pts @ Z.T
            keep = (X @ F.T - g <= 1e-9).all(axis=1)
            if not keep.any():
                return None, np.inf
            vals = _values_on(V, X[keep])
            k = int(np.argmin(vals))
            return pts[keep][k], float(vals[k])

        u_best, val = sweep(lo, hi)
        best = min(best, val)
        span = (hi - lo) / max(grid_density - 1, 1)
        for _ in range(refine_rounds):
            if u_best is None:
                break
            lo_k = np.maximum(u_best - 2 * span, lo)
            hi_k = np.minimum(u_best + 2 * span, hi)
            u_best, val = sweep(lo_k, hi_k)
            best = min(best, val)
            span = (hi_k - lo_k) / max(grid_density - 1, 1)
    if not np.isfinite(best):
        raise EmptyFacetError("no facet points found")
    return float(best)
