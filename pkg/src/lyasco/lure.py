"""Quadratic Lyapunov certificates for systems with sector-bounded
nonlinear feedback.

The dynamics are xdot = A(x - x0) + B phi(C(x - x0)) with Hurwitz A and
channelwise scalar nonlinearities phi. A sector envelope [gamma, beta] on
the channels turns the Lyapunov decrease condition into one linear matrix
inequality; the resulting quadratic form admits closed-form facet minima
over parallel-facet polytopes plus two convex surrogates of those minima.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import cvxpy as cp

from .core import Polytope, QuadraticCertificate, _as_matrix, _as_vector
from .sdp import SdpInfeasibleError, max_eigenvalue, solve_sdp


class SectorBoundError(ValueError):
    """No valid sector envelope exists for the sampled slopes."""


class HypothesisError(ValueError):
    """Input violates the midpoint hypothesis of the convexification."""


class InnerApproximationError(RuntimeError):
    """Neither inner-approximation construction verifies as a subset."""


class NotHurwitzError(ValueError):
    """System matrix A has an eigenvalue with nonnegative real part."""


@dataclass(frozen=True)
class LureSystem:
    """Linear block plus channelwise nonlinear feedback around x0.

    ``nonlinearity`` maps a channel vector s (= C(x-x0)) to phi(s); it must
    vanish at s = 0 so that x0 is an equilibrium. ``nonlinearity_channels``
    optionally gives per-channel scalar callables for sector sweeps.
    """

    a_matrix: np.ndarray
    b_matrix: np.ndarray
    c_matrix: np.ndarray
    nonlinearity: Callable[[np.ndarray], np.ndarray]
    equilibrium: np.ndarray
    nonlinearity_channels: Optional[Sequence[Callable[[float], float]]] = None

    def __post_init__(self):
        A = _as_matrix(self.a_matrix)
        B = _as_matrix(self.b_matrix)
        C = _as_matrix(self.c_matrix)
        x0 = _as_vector(self.equilibrium)
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n or x0.shape[0] != n:
            raise ValueError("inconsistent A/B/C/equilibrium dimensions")
        if B.shape[1] != C.shape[0]:
            raise ValueError("channel counts of B and C differ")
        if np.linalg.eigvals(A).real.max() >= -1e-9:
            raise NotHurwitzError("A is not Hurwitz")
        phi0 = np.atleast_1d(self.nonlinearity(np.zeros(C.shape[0])))
        if np.abs(phi0).max() > 1e-10:
            raise ValueError("nonlinearity must vanish at the equilibrium offset")
        object.__setattr__(self, "a_matrix", A)
        object.__setattr__(self, "b_matrix", B)
        object.__setattr__(self, "c_matrix", C)
        object.__setattr__(self, "equilibrium", x0)

    @property
    def dim(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def n_channels(self) -> int:
        return self.c_matrix.shape[0]

    def rhs(self, x) -> np.ndarray:
        d = np.asarray(x, dtype=float) - self.equilibrium
        return self.a_matrix @ d + self.b_matrix @ np.atleast_1d(
            self.nonlinearity(self.c_matrix @ d))


@dataclass(frozen=True)
class SectorBound:
    gamma: float
    beta: float

    def __post_init__(self):
        if not self.gamma < self.beta:
            raise SectorBoundError(f"need gamma < beta, got [{self.gamma}, {self.beta}]")

    def residual(self, phi: np.ndarray, s: np.ndarray) -> float:
        """(phi - gamma s).(phi - beta s); nonpositive inside the sector."""
        return float((phi - self.gamma * s) @ (phi - self.beta * s))


@dataclass(frozen=True)
class LmiCertificate:
    p_matrix: np.ndarray
    tau: float
    residual: float                  # max eigenvalue of the certificate LMI block
    sector: SectorBound

    def quadratic(self, equilibrium) -> QuadraticCertificate:
        return QuadraticCertificate(self.p_matrix, equilibrium)


def channel_ranges(sys: LureSystem, poly: Polytope) -> np.ndarray:
    """Per-channel range of s = C(x - x0) over the polytope (LP per end)."""
    from scipy.optimize import linprog

    C, x0 = sys.c_matrix, sys.equilibrium
    F, g = poly.facet_normals, poly.facet_offsets
    out = np.zeros((sys.n_channels, 2))
    for l in range(sys.n_channels):
        ends = []
        for sign in (1.0, -1.0):
            r = linprog(sign * C[l], A_ub=F, b_ub=g,
                        bounds=[(None, None)] * poly.dim, method="highs")
            if not r.success:
                raise SectorBoundError("channel range LP failed (polytope empty?)")
            ends.append(sign * r.fun)
        out[l] = min(ends) - C[l] @ x0, max(ends) - C[l] @ x0
    return out


def estimate_sector(sys: LureSystem, poly: Polytope, samples: int = 20001,
                    widen: float = 1e-6) -> SectorBound:
    """Uniform sector from dense per-channel slope sweeps over the polytope.

    Each channel's phi_l(s)/s is sampled over the reachable s-interval; the
    envelope is widened slightly so the inequality is strict away from 0.
    """
    ranges = channel_ranges(sys, poly)
    los, his = [], []
    for l in range(sys.n_channels):
        lo, hi = ranges[l]
        s = np.linspace(lo, hi, samples)
        s = s[np.abs(s) > 1e-9]
        if s.size == 0:
            continue
        if sys.nonlinearity_channels is not None:
            phi_l = np.array([sys.nonlinearity_channels[l](si) for si in s])
        else:
            phis = np.zeros((s.size, sys.n_channels))
            for k, si in enumerate(s):
                e = np.zeros(sys.n_channels)
                e[l] = si
                phis[k] = np.atleast_1d(sys.nonlinearity(e))
            phi_l = phis[:, l]
        slopes = phi_l / s
        los.append(slopes.min())
        his.append(slopes.max())
    if not los:
        raise SectorBoundError("no usable channel samples")
    gamma, beta = min(los) - widen, max(his) + widen
    if gamma >= beta:
        raise SectorBoundError("slope sweep produced an empty sector")
    return SectorBound(gamma, beta)


def verify_sector(sys: LureSystem, poly: Polytope, sector: SectorBound,
                  n_samples: int = 10_000, seed: int = 0,
                  tol: float = 1e-9) -> float:
    """Max sampled sector residual over the polytope (valid iff <= tol)."""
    rng = np.random.default_rng(seed)
    F, g = poly.facet_normals, poly.facet_offsets
    p0 = poly.interior_point()
    n = poly.dim
    worst = -np.inf
    count = 0
    while count < n_samples:
        x = p0 + rng.uniform(-1.0, 1.0, n) * (1.0 + np.abs(p0))
        # hit-and-run style rescale toward the interior point until inside
        t = 1.0
        for _ in range(60):
            cand = p0 + t * (x - p0)
            if (F @ cand - g <= 0).all():
                break
            t *= 0.7
        else:
            continue
        cand = p0 + t * rng.uniform(0.0, 1.0) ** (1.0 / n) * (x - p0)
        s = sys.c_matrix @ (cand - sys.equilibrium)
        phi = np.atleast_1d(sys.nonlinearity(s))
        worst = max(worst, sector.residual(phi, s))
        count += 1
    return worst


def _lmi_block(A, B, C, P, tau, gamma, beta):
    n, l = A.shape[0], C.shape[0]
    M11 = A.T @ P + P @ A - tau * gamma * beta * (C.T @ C)
    M12 = P @ B + tau * (gamma + beta) / 2.0 * C.T
    if isinstance(P, np.ndarray):
        return np.block([[M11, M12], [M12.T, -tau * np.eye(l)]])
    return cp.bmat([[M11, M12], [M12.T, -tau * np.eye(l)]])


def solve_lmi(sys: LureSystem, sector: SectorBound,
              residual_tol: float = 1e-8,
              shaping: Optional[dict] = None) -> LmiCertificate:
    """Find (P, tau) making the sector LMI block negative semidefinite.

    Default objective minimizes the block's maximum eigenvalue subject to
    trace(P) = n and P positive definite. ``shaping`` optionally replaces
    the objective by min x_hat' P x_hat + weighted facet-width terms (keys:
    ``x_hat``, ``rows``, ``weights``, ``margin``) to steer P toward a larger
    certified region; feasibility and the returned residual are unaffected.
    """
    A, B, C = sys.a_matrix, sys.b_matrix, sys.c_matrix
    n, l = sys.dim, sys.n_channels
    P = cp.Variable((n, n), symmetric=True)
    tau = cp.Variable(nonneg=True)
    M = _lmi_block(A, B, C, P, tau, sector.gamma, sector.beta)

    if shaping is None:
        t = cp.Variable()
        cons = [M << t * np.eye(n + l), P >> 1e-5 * np.eye(n), cp.trace(P) == n]
        prob = cp.Problem(cp.Minimize(t), cons)
        solve_sdp(prob)
        if t.value is None or t.value > -0.0:
            raise SdpInfeasibleError(
                "LMI infeasible: sector too wide for a common quadratic certificate",
                margin=None if t.value is None else float(t.value))
    else:
        x_hat = np.asarray(shaping["x_hat"], dtype=float)
        rows = np.asarray(shaping["rows"], dtype=float)
        weights = np.asarray(shaping["weights"], dtype=float)
        margin = float(shaping.get("margin", 1e-3))
        ts = cp.Variable(rows.shape[0])
        cons = [M << -margin * np.eye(n + l), P >> 1e-5 * np.eye(n), cp.trace(P) == n]
        for k in range(rows.shape[0]):
            r = rows[k].reshape(-1, 1)
            cons.append(cp.bmat([[P, r], [r.T, cp.reshape(ts[k], (1, 1), order="C")]]) >> 0)
        prob = cp.Problem(cp.Minimize(cp.quad_form(x_hat, P) + weights @ ts), cons)
        try:
            solve_sdp(prob)
        except SdpInfeasibleError as exc:
            raise SdpInfeasibleError(
                "LMI infeasible: sector too wide for a common quadratic certificate"
            ) from exc
        if P.value is None:
            raise SdpInfeasibleError("LMI infeasible under shaping objective")

    Pv = 0.5 * (P.value + P.value.T)
    tau_v = float(tau.value)
    resid = max_eigenvalue(_lmi_block(A, B, C, Pv, tau_v, sector.gamma, sector.beta))
    pmin = float(np.linalg.eigvalsh(Pv)[0])
    if resid > residual_tol or pmin < 1e-8:
        raise SdpInfeasibleError(
            f"LMI solution fails verification (residual {resid:.2e}, min eig {pmin:.2e})",
            margin=resid)
    return LmiCertificate(p_matrix=Pv, tau=tau_v, residual=resid, sector=sector)


def facet_vmin_closed_form(cert: QuadraticCertificate, c_row, d_lo: float,
                           d_hi: float) -> float:
    """Facet minimum of the quadratic form across a parallel facet pair:
    min{(c.x0 - d_lo)^2, (c.x0 - d_hi)^2} / (c' P^-1 c)."""
    c = _as_vector(c_row)
    if np.linalg.norm(c) < 1e-14:
        raise ValueError("zero facet row")
    X = float(c @ cert.equilibrium)
    if not (d_lo <= X <= d_hi):
        raise ValueError("equilibrium lies outside the facet slab")
    try:
        w = np.linalg.solve(cert.p_matrix, c)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular P") from exc
    denom = float(c @ w)
    return min((X - d_lo) ** 2, (X - d_hi) ** 2) / denom


def convex_relaxation_coeffs(x_lo: float, x_hi: float, d_lo: float,
                             d_hi: float):
    """Secant coefficients (a, b, a', b') of the hull of the facet-minimum
    envelope over X in [x_lo, x_hi]; requires the slab midpoint inside."""
    mid = 0.5 * (d_hi + d_lo)
    if not (x_lo <= mid <= x_hi):
        raise HypothesisError("midpoint of the slab must lie in the X-interval")
    a = x_hi - 1.5 * d_hi + 0.5 * d_lo
    b = d_hi ** 2 - (d_hi + d_lo) * x_hi / 2.0
    a_p = x_lo - 1.5 * d_lo + 0.5 * d_hi
    b_p = d_lo ** 2 - (d_hi + d_lo) * x_lo / 2.0
    return a, b, a_p, b_p


def _envelope(X, d_lo, d_hi):
    return np.minimum((X - d_lo) ** 2, (X - d_hi) ** 2)


def _verify_inner(lines, x_lo, x_hi, d_lo, d_hi, n_samples=10_000, seed=0):
    """Every sampled (X, V) under all lines (and V >= 0) must satisfy the
    concave envelope; returns the worst violation."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(x_lo, x_hi, n_samples)
    cap = np.full(n_samples, np.inf)
    for a, b in lines:
        cap = np.minimum(cap, a * X + b)
    keep = cap > 0
    if not keep.any():
        return 0.0
    V = rng.uniform(0.0, 1.0, keep.sum()) * cap[keep]
    return float((V - _envelope(X[keep], d_lo, d_hi)).max())


def inner_approximation_coeffs(x_lo: float, x_hi: float, d_lo: float,
                               d_hi: float, n_samples: int = 10_000):
    """Two half-space coefficients [(a1,b1),(a2,b2)] whose intersection with
    V >= 0 sits inside the facet-minimum envelope.

    The width-based construction (half-width delta, c = x_lo + x_hi +
    2 delta) is tried first and kept only if it passes a sampled subset
    check; otherwise the tangents of the two envelope branches at the
    vertical axis (or slab midpoint) are used and re-verified.
    """
    mid = 0.5 * (d_hi + d_lo)
    if not (x_lo <= mid <= x_hi):
        raise HypothesisError("midpoint of the slab must lie in the X-interval")
    delta = 0.5 * (d_hi - d_lo)
    c = x_hi + x_lo + 2.0 * delta
    primary = [(c, -x_hi * x_lo + delta ** 2), (2.0 * delta, -delta ** 2)]
    if _verify_inner(primary, x_lo, x_hi, d_lo, d_hi, n_samples) <= 1e-9:
        return primary
    # tangents of (X-d_hi)^2 and (X-d_lo)^2 at the anchor
    anchor = 0.0 if d_lo < 0.0 < d_hi else mid
    fallback = [(2.0 * (anchor - d_hi), (anchor - d_hi) ** 2 - 2.0 * (anchor - d_hi) * anchor),
                (2.0 * (anchor - d_lo), (anchor - d_lo) ** 2 - 2.0 * (anchor - d_lo) * anchor)]
    worst = _verify_inner(fallback, x_lo, x_hi, d_lo, d_hi, n_samples)
    if worst > 1e-9:
        raise InnerApproximationError(f"subset check failed by {worst:.2e}")
    return fallback


def verify_vdot(sys: LureSystem, cert: QuadraticCertificate, poly: Polytope,
                n_samples: int = 10_000, seed: int = 0) -> float:
    """Max sampled Lyapunov derivative 2(x-x0)'P f(x) over the polytope."""
    rng = np.random.default_rng(seed)
    F, g = poly.facet_normals, poly.facet_offsets
    p0 = poly.interior_point()
    n = poly.dim
    worst = -np.inf
    count = 0
    while count < n_samples:
        x = p0 + rng.uniform(-1.0, 1.0, n) * (1.0 + np.abs(p0) + np.abs(g).max())
        t = 1.0
        for _ in range(80):
            cand = p0 + t * (x - p0)
            if (F @ cand - g <= 0).all():
                break
            t *= 0.7
        else:
            continue
        cand = p0 + t * rng.uniform(0.0, 1.0) ** (1.0 / n) * (x - p0)
        d = cand - cert.equilibrium
        worst = max(worst, 2.0 * float(d @ cert.p_matrix @ sys.rhs(cand)))
        count += 1
    return worst
