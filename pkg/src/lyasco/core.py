"""Shared domain types and dense linear-algebra primitives.

Everything here is plain numpy on small dense arrays (n <= ~50). Values are
immutable after construction and safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog

SYMMETRY_TOL = 1e-10
PD_EIG_FLOOR = 1e-10


class DimensionMismatch(ValueError):
    """Operands have inconsistent dimensions."""


class DegenerateRegionError(ValueError):
    """Region is empty, unbounded, or otherwise unusable."""


def _as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got ndim={m.ndim}")
    return m


def _as_vector(a) -> np.ndarray:
    v = np.asarray(a, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got ndim={v.ndim}")
    return v


def min_eigenvalue(matrix) -> float:
    """Smallest eigenvalue of a symmetric matrix.

    Uses the dense symmetric eigensolver; input must be symmetric within
    1e-10 or the call is rejected.
    """
    m = _as_matrix(matrix)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch("matrix must be square")
    if np.abs(m - m.T).max() > SYMMETRY_TOL:
        raise ValueError("matrix is not symmetric within 1e-10")
    return float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])


@dataclass(frozen=True)
class Polytope:
    """Bounded region {x : Fx <= g} given by facet normals F and offsets g.

    ``pairing`` optionally lists (lower, upper) facet index pairs whose
    normals are negatives of each other; parallel pairs admit closed-form
    facet minima for quadratic functions.
    """

    facet_normals: np.ndarray
    facet_offsets: np.ndarray
    pairing: Optional[tuple] = None

    def __post_init__(self):
        F = _as_matrix(self.facet_normals)
        g = _as_vector(self.facet_offsets)
        if F.shape[0] != g.shape[0]:
            raise DimensionMismatch("one offset per facet required")
        norms = np.linalg.norm(F, axis=1)
        if (norms < 1e-14).any():
            raise ValueError("zero facet normal")
        object.__setattr__(self, "facet_normals", F)
        object.__setattr__(self, "facet_offsets", g)
        if self.pairing is not None:
            pairs = tuple((int(i), int(j)) for i, j in self.pairing)
            for i, j in pairs:
                ci, cj = F[i], F[j]
                if np.linalg.norm(ci / np.linalg.norm(ci) + cj / np.linalg.norm(cj)) > 1e-8:
                    raise ValueError(f"facets {i},{j} are not an antiparallel pair")
            object.__setattr__(self, "pairing", pairs)
        self._check_bounded_nonempty()

    @property
    def n_facets(self) -> int:
        return self.facet_normals.shape[0]

    @property
    def dim(self) -> int:
        return self.facet_normals.shape[1]

    def _check_bounded_nonempty(self):
        F, g = self.facet_normals, self.facet_offsets
        n = self.dim
        # interior point via Chebyshev center: max r s.t. Fx + r||F_i|| <= g
        norms = np.linalg.norm(F, axis=1)
        res = linprog(
            c=np.r_[np.zeros(n), -1.0],
            A_ub=np.c_[F, norms],
            b_ub=g,
            bounds=[(None, None)] * n + [(0, None)],
            method="highs",
        )
        if not res.success or res.x[-1] <= 1e-12:
            raise DegenerateRegionError("polytope is empty or has no interior")
        object.__setattr__(self, "_interior_point", res.x[:n].copy())
        # bounded iff every coordinate extreme is finite
        for k in range(n):
            for sign in (1.0, -1.0):
                c = np.zeros(n)
                c[k] = sign
                r = linprog(c, A_ub=F, b_ub=g, bounds=[(None, None)] * n, method="highs")
                if r.status == 3:
                    raise DegenerateRegionError(f"polytope unbounded along coordinate {k}")

    def interior_point(self) -> np.ndarray:
        return self._interior_point.copy()

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = _as_vector(x)
        if x.shape[0] != self.dim:
            raise DimensionMismatch("point dimension does not match polytope")
        return bool((self.facet_normals @ x - self.facet_offsets <= tol).all())

    @staticmethod
    def box(lower, upper) -> "Polytope":
        """Axis-aligned box with paired facets (lower_i, upper_i)."""
        lo, hi = _as_vector(lower), _as_vector(upper)
        if lo.shape != hi.shape or (lo >= hi).any():
            raise ValueError("need lower < upper per coordinate")
        n = lo.shape[0]
        F = np.vstack([-np.eye(n), np.eye(n)])
        g = np.r_[-lo, hi]
        return Polytope(F, g, pairing=tuple((i, n + i) for i in range(n)))

    @staticmethod
    def from_parallel_rows(rows, lower, upper) -> "Polytope":
        """Slab intersection lower_l <= rows_l . x <= upper_l as paired facets."""
        R = _as_matrix(rows)
        lo, hi = _as_vector(lower), _as_vector(upper)
        L = R.shape[0]
        if lo.shape[0] != L or hi.shape[0] != L or (lo >= hi).any():
            raise ValueError("need lower < upper per row")
        F = np.vstack([-R, R])
        g = np.r_[-lo, hi]
        return Polytope(F, g, pairing=tuple((l, L + l) for l in range(L)))


def polytope_contains(poly: Polytope, x, tol: float = 1e-9) -> bool:
    """Membership test: Fx - g <= tol componentwise."""
    return poly.contains(x, tol)


@dataclass(frozen=True)
class QuadraticCertificate:
    """Positive-definite quadratic form (x - x0)^T P (x - x0)."""

    p_matrix: np.ndarray
    equilibrium: np.ndarray

    def __post_init__(self):
        P = _as_matrix(self.p_matrix)
        x0 = _as_vector(self.equilibrium)
        if P.shape[0] != P.shape[1] or P.shape[0] != x0.shape[0]:
            raise DimensionMismatch("P must be n x n with an n-vector equilibrium")
        if np.abs(P - P.T).max() > 1e-12:
            raise ValueError("P is not symmetric within 1e-12")
        P = 0.5 * (P + P.T)
        if np.linalg.eigvalsh(P)[0] <= PD_EIG_FLOOR:
            raise ValueError("P is not positive definite")
        object.__setattr__(self, "p_matrix", P)
        object.__setattr__(self, "equilibrium", x0)

    @property
    def dim(self) -> int:
        return self.equilibrium.shape[0]

    def value(self, x) -> float:
        return eval_quadratic(self, x)

    def value_batch(self, X) -> np.ndarray:
        D = np.atleast_2d(np.asarray(X, dtype=float)) - self.equilibrium
        return np.einsum("ij,jk,ik->i", D, self.p_matrix, D)

    def gradient(self, x) -> np.ndarray:
        return eval_quadratic_gradient(self, x)

    def hessian(self, x=None) -> np.ndarray:
        return 2.0 * self.p_matrix


def eval_quadratic(cert: QuadraticCertificate, x) -> float:
    """(x - x0)^T P (x - x0); zero exactly at the equilibrium."""
    x = _as_vector(x)
    if x.shape[0] != cert.dim:
        raise DimensionMismatch("state dimension does not match certificate")
    d = x - cert.equilibrium
    return float(d @ cert.p_matrix @ d)


def eval_quadratic_gradient(cert: QuadraticCertificate, x) -> np.ndarray:
    """Gradient 2 P (x - x0) of the quadratic form."""
    x = _as_vector(x)
    if x.shape[0] != cert.dim:
        raise DimensionMismatch("state dimension does not match certificate")
    return 2.0 * (cert.p_matrix @ (x - cert.equilibrium))


@dataclass(frozen=True)
class EquilibriumManifold:
    """Steady-state equations and operating bounds tying x0 to controls w.

    ``steady_state_residual(x0, w)`` must vanish at admissible pairs;
    ``bound_constraints(x0, w) <= 0`` collects the operating limits.
    """

    steady_state_residual: Callable[[np.ndarray, np.ndarray], np.ndarray]
    bound_constraints: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    state_dim: int = 0
    control_dim: int = 0


@dataclass(frozen=True)
class Trajectory:
    """Time-stamped state samples from one simulation run."""

    times: np.ndarray
    states: np.ndarray
    diverged: bool = False

    def __post_init__(self):
        t = _as_vector(self.times)
        X = _as_matrix(self.states)
        if X.shape[0] != t.shape[0]:
            raise DimensionMismatch("one state row per time stamp required")
        if (np.diff(t) <= 0).any():
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", X)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1].copy()

    def to_csv(self, path, stride: int = 1):
        """Write `t,x1,...,xn` rows; ``stride`` subsamples stored steps."""
        n = self.states.shape[1]
        header = "t," + ",".join(f"x{i+1}" for i in range(n))
        data = np.c_[self.times[::stride], self.states[::stride]]
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.12g")
