"""Polynomial recasting and sum-of-squares Lyapunov search.

Vector fields built from elementary functions (sin, cos, exp) are lifted to
polynomial systems by introducing one state per elementary factor and
differentiating through the chain rule. Lyapunov candidates are then found
as one joint semidefinite feasibility problem: a PSD Gram for V, a PSD Gram
for the midpoint-convexity expression on doubled variables, and a PSD Gram
for -Vdot minus a free combination of the lift's polynomial identities.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import cvxpy as cp
from scipy.linalg import solve_continuous_lyapunov

from .core import QuadraticCertificate
from .sdp import SdpInfeasibleError, solve_sdp


# ---------------------------------------------------------------------------
# polynomial arithmetic over an exponent map
# ---------------------------------------------------------------------------

class Polynomial:
    """Multivariate polynomial keyed by exponent tuples."""

    __slots__ = ("variables", "terms")

    def __init__(self, variables: Sequence[str], terms: Optional[Dict] = None):
        self.variables = tuple(variables)
        clean = {}
        for exps, c in (terms or {}).items():
            if c != 0.0:
                clean[tuple(int(e) for e in exps)] = float(c)
        self.terms = clean

    # -- constructors
    @classmethod
    def zero(cls, variables):
        return cls(variables, {})

    @classmethod
    def constant(cls, variables, c):
        v = tuple(variables)
        return cls(v, {tuple([0] * len(v)): float(c)} if c else {})

    @classmethod
    def variable(cls, variables, index):
        v = tuple(variables)
        e = [0] * len(v)
        e[index] = 1
        return cls(v, {tuple(e): 1.0})

    # -- structure
    @property
    def n_vars(self):
        return len(self.variables)

    def total_degree(self):
        return max((sum(e) for e in self.terms), default=0)

    def min_degree(self):
        return min((sum(e) for e in self.terms), default=0)

    def degree_of(self, i):
        return max((e[i] for e in self.terms), default=0)

    def is_zero(self, tol=0.0):
        return all(abs(c) <= tol for c in self.terms.values())

    def extend(self, variables):
        """Re-express over a longer variable list (prefix must match)."""
        v = tuple(variables)
        assert v[: self.n_vars] == self.variables
        pad = len(v) - self.n_vars
        return Polynomial(v, {e + (0,) * pad: c for e, c in self.terms.items()})

    # -- arithmetic
    def __add__(self, other):
        if np.isscalar(other):
            other = Polynomial.constant(self.variables, other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return Polynomial(self.variables, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.variables, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        if np.isscalar(other):
            other = Polynomial.constant(self.variables, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            if other == 0:
                return Polynomial.zero(self.variables)
            return Polynomial(self.variables,
                              {e: c * other for e, c in self.terms.items()})
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Polynomial(self.variables, out)

    __rmul__ = __mul__

    def __pow__(self, k):
        if k < 0:
            raise ValueError("negative power")
        out = Polynomial.constant(self.variables, 1.0)
        for _ in range(int(k)):
            out = out * self
        return out

    def diff(self, i):
        out = {}
        for e, c in self.terms.items():
            if e[i] == 0:
                continue
            ne = list(e)
            ne[i] -= 1
            out[tuple(ne)] = out.get(tuple(ne), 0.0) + c * e[i]
        return Polynomial(self.variables, out)

    def shift(self, offsets):
        """Substitute x_i -> x_i + offsets_i."""
        off = np.asarray(offsets, dtype=float)
        out = Polynomial.zero(self.variables)
        for e, c in self.terms.items():
            term = Polynomial.constant(self.variables, c)
            for i, k in enumerate(e):
                if k == 0:
                    continue
                base = Polynomial.variable(self.variables, i) + off[i]
                term = term * base ** k
            out = out + term
        return out

    def __call__(self, point):
        x = np.asarray(point, dtype=float)
        val = 0.0
        for e, c in self.terms.items():
            val += c * np.prod([x[i] ** k for i, k in enumerate(e) if k], initial=1.0)
        return float(val)

    def coefficients(self, tol=0.0):
        return {e: c for e, c in sorted(self.terms.items()) if abs(c) > tol}

    def prune(self, tol=1e-12):
        return Polynomial(self.variables,
                          {e: c for e, c in self.terms.items() if abs(c) > tol})

    def __repr__(self):
        if not self.terms:
            return "0"
        bits = []
        for e, c in sorted(self.terms.items()):
            mono = "*".join(f"{self.variables[i]}^{k}" if k > 1 else self.variables[i]
                            for i, k in enumerate(e) if k)
            bits.append(f"{c:+g}" + (f"*{mono}" if mono else ""))
        return " ".join(bits)


# ---------------------------------------------------------------------------
# quasi-polynomial systems and the lifting algorithm
# ---------------------------------------------------------------------------

_DERIVATIVE_RULES = {
    # fname -> (coeff, fname of derivative or None for polynomial 1)
    "sin": (1.0, "cos"),
    "cos": (-1.0, "sin"),
    "exp": (1.0, "exp"),
}

_EVAL = {"sin": math.sin, "cos": math.cos, "exp": math.exp}


class UnregisteredFunctionError(ValueError):
    pass


class RecastDepthError(RuntimeError):
    pass


@dataclass(frozen=True)
class ElementaryFactor:
    fname: str
    argument: Polynomial          # over the current variable list

    def key(self):
        return (self.fname, tuple(sorted(self.argument.terms.items())))


@dataclass
class QuasiPolynomialSystem:
    """xdot_i = sum_j coeff_j * prod_k factor_jk, factors being monomials or
    registered elementary functions of polynomial arguments."""

    state_names: List[str]
    rhs: List[List[Tuple[float, list]]]   # per state: [(coeff, [factors])]
    equilibrium: np.ndarray

    def __post_init__(self):
        self.equilibrium = np.asarray(self.equilibrium, dtype=float)
        for terms in self.rhs:
            for _, factors in terms:
                for f in factors:
                    if isinstance(f, ElementaryFactor) and f.fname not in _DERIVATIVE_RULES:
                        raise UnregisteredFunctionError(f.fname)

    @property
    def dim(self):
        return len(self.state_names)

    def field(self, x):
        """Evaluate the original vector field (for simulation checks)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.dim)
        for i, terms in enumerate(self.rhs):
            for coeff, factors in terms:
                val = coeff
                for f in factors:
                    if isinstance(f, ElementaryFactor):
                        val *= _EVAL[f.fname](f.argument(x))
                    else:  # exponent tuple over state variables
                        val *= np.prod([x[j] ** k for j, k in enumerate(f) if k],
                                       initial=1.0)
                out[i] += val
        return out


@dataclass
class PolynomialSystem:
    variables: List[str]
    rhs: List[Polynomial]                 # absolute coordinates
    equilibrium: np.ndarray               # lifted equilibrium
    constraints: List[Polynomial]         # vanish on the lift manifold
    lift_names: List[str] = field(default_factory=list)
    lift_map: Optional[Callable] = None   # x -> y values
    e1: Optional[np.ndarray] = None       # selects original states
    e2: Optional[np.ndarray] = None       # selects lifted states

    @property
    def dim(self):
        return len(self.variables)

    def _compiled(self):
        # exponent/coefficient arrays for fast repeated evaluation
        comp = getattr(self, "_rhs_compiled", None)
        if comp is None:
            comp = []
            for p in self.rhs:
                if p.terms:
                    E = np.array(list(p.terms.keys()), dtype=float)
                    c = np.array(list(p.terms.values()))
                else:
                    E = np.zeros((0, self.dim))
                    c = np.zeros(0)
                comp.append((E, c))
            object.__setattr__(self, "_rhs_compiled", comp)
        return comp

    def field(self, xt):
        xt = np.asarray(xt, dtype=float)
        out = np.zeros(self.dim)
        for i, (E, c) in enumerate(self._compiled()):
            if c.size:
                out[i] = c @ np.prod(xt ** E, axis=1)
        return out

    def lift(self, x):
        """Map an original state onto the constraint manifold."""
        y = self.lift_map(np.asarray(x, dtype=float))
        return np.r_[np.asarray(x, dtype=float), y]


def _mono_to_poly(variables, exps):
    return Polynomial(variables, {tuple(exps) + (0,) * (len(variables) - len(exps)): 1.0})


def recast(sys: QuasiPolynomialSystem, depth_cap: int = 10) -> PolynomialSystem:
    """Lift every elementary factor into a new state until the dynamics are
    polynomial; returns the lifted system, the manifold constraints that the
    lift satisfies identically, and the incidence matrices splitting
    original from introduced states.
    """
    n = sys.dim
    names = list(sys.state_names)
    # working rhs as (coeff, [factor]) lists over the growing variable list
    work = [list(terms) for terms in sys.rhs]
    lifts: List[ElementaryFactor] = []          # y_m definitions, in order
    lift_index: Dict = {}

    def find_elem():
        for terms in work:
            for _, factors in terms:
                for f in factors:
                    if isinstance(f, ElementaryFactor):
                        return f
        return None

    def ensure_lifted(f: ElementaryFactor):
        """Introduce y = f (and its derivative partner) if not present."""
        if f.key() in lift_index:
            return lift_index[f.key()]
        m = len(lifts)
        lifts.append(f)
        lift_index[f.key()] = n + m
        names.append(f"y{m + 1}")
        work.append([])  # placeholder for ydot, filled after substitution pass
        return n + m

    for _ in range(500):
        f = find_elem()
        if f is None:
            break
        is_new = f.key() not in lift_index
        idx = ensure_lifted(f)
        if len(lifts) > depth_cap * max(1, n):
            raise RecastDepthError("recasting exceeded the lift cap")
        # replace this factor throughout by its variable
        for terms in work:
            for t, (coeff, factors) in enumerate(terms):
                newf = []
                for fac in factors:
                    if isinstance(fac, ElementaryFactor) and fac.key() == f.key():
                        e = [0] * len(names)
                        e[idx] = 1
                        newf.append(tuple(e))
                    else:
                        newf.append(fac)
                terms[t] = (coeff, newf)
        if not is_new:
            continue
        # chain rule for the fresh state: ydot = rule_coeff * f'(arg) * arg_dot,
        # with arg a polynomial in the original states
        rule_c, dname = _DERIVATIVE_RULES[f.fname]
        arg = f.argument
        ydot_terms = []
        for j in range(min(arg.n_vars, len(work))):
            darg = arg.diff(j)
            if darg.is_zero():
                continue
            for coeff, factors in work[j]:
                fct = [ElementaryFactor(dname, arg)] if dname else []
                for e_arg, c_arg in darg.terms.items():
                    ydot_terms.append((rule_c * coeff * c_arg,
                                       fct + [tuple(e_arg)] + list(factors)))
        work[idx] = ydot_terms
    else:
        raise RecastDepthError("recasting did not terminate")

    nv = len(names)

    def pad(exps):
        return tuple(exps) + (0,) * (nv - len(exps))

    rhs_polys = []
    for terms in work:
        p = Polynomial.zero(names)
        for coeff, factors in terms:
            t = Polynomial.constant(names, coeff)
            for fac in factors:
                t = t * Polynomial(names, {pad(fac): 1.0})
            p = p + t
        rhs_polys.append(p.prune(0.0))

    # lift map and equilibrium
    def lift_values(x):
        x = np.asarray(x, dtype=float)
        vals = list(x)
        for f in lifts:
            a = f.argument(np.array(vals[: f.argument.n_vars]))
            vals.append(_EVAL[f.fname](a))
        return np.array(vals[n:])

    x0_lift = np.r_[sys.equilibrium, lift_values(sys.equilibrium)]

    # polynomial identities: sin/cos pairs over the same argument
    constraints = []
    for f in lifts:
        if f.fname != "sin":
            continue
        partner = ElementaryFactor("cos", f.argument)
        if partner.key() in lift_index:
            i_s, i_c = lift_index[f.key()], lift_index[partner.key()]
            ys = Polynomial.variable(names, i_s)
            yc = Polynomial.variable(names, i_c)
            constraints.append((ys * ys + yc * yc - 1.0).prune(0.0))

    e1 = np.zeros((n, nv))
    e1[:, :n] = np.eye(n)
    e2 = np.zeros((nv - n, nv))
    e2[:, n:] = np.eye(nv - n)
    return PolynomialSystem(
        variables=names, rhs=rhs_polys, equilibrium=x0_lift,
        constraints=constraints, lift_names=names[n:], lift_map=lift_values,
        e1=e1, e2=e2)


# ---------------------------------------------------------------------------
# Gram machinery
# ---------------------------------------------------------------------------

def _monomials(n_vars, deg_lo, deg_hi):
    out = []
    for d in range(deg_lo, deg_hi + 1):
        for combo in itertools.combinations_with_replacement(range(n_vars), d):
            e = [0] * n_vars
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    return out


def _gram_coefficient_map(basis):
    """monomial -> list of (i, j, weight) with weight 2 off diagonal."""
    out: Dict[tuple, list] = {}
    m = len(basis)
    for i in range(m):
        for j in range(i, m):
            mono = tuple(a + b for a, b in zip(basis[i], basis[j]))
            out.setdefault(mono, []).append((i, j, 1.0 if i == j else 2.0))
    return out


def _project_exact(Q, basis, target: Polynomial):
    """Least-change symmetric update making the Gram expansion match the
    target coefficients exactly."""
    m = len(Q)
    cmap = _gram_coefficient_map(basis)
    pairs = [(i, j) for i in range(m) for j in range(i, m)]
    index = {p: k for k, p in enumerate(pairs)}
    monos = sorted(set(cmap) | set(target.terms))
    A = np.zeros((len(monos), len(pairs)))
    c = np.zeros(len(monos))
    for r, mono in enumerate(monos):
        for i, j, w in cmap.get(mono, []):
            A[r, index[(i, j)]] = w
        c[r] = target.terms.get(mono, 0.0)
    q = np.array([Q[i, j] for i, j in pairs])
    resid = c - A @ q
    corr, *_ = np.linalg.lstsq(A, resid, rcond=None)
    q = q + corr
    out = np.zeros_like(Q)
    for (i, j), k in index.items():
        out[i, j] = out[j, i] = q[k]
    return out


def _polish_psd_affine(Q, basis, target: Polynomial, rounds: int = 800,
                       floor: float = 0.0):
    """Alternate projections between the PSD cone and the exact coefficient
    match; convergence is slow when the solution touches the cone boundary,
    so the round budget is generous (each round is one small eigensolve)."""
    from .sdp import nearest_psd

    Qk = _project_exact(0.5 * (Q + Q.T), basis, target)
    for _ in range(rounds):
        w = np.linalg.eigvalsh(Qk)
        if w[0] >= -1e-11:
            break
        Qk = _project_exact(nearest_psd(Qk, floor), basis, target)
    return Qk


def gram_expand(Q, basis, variables) -> Polynomial:
    p = Polynomial.zero(variables)
    terms: Dict[tuple, float] = {}
    m = len(basis)
    for i in range(m):
        for j in range(m):
            mono = tuple(a + b for a, b in zip(basis[i], basis[j]))
            terms[mono] = terms.get(mono, 0.0) + Q[i, j]
    return Polynomial(variables, terms)


class SosFailure(RuntimeError):
    pass


def sos_decompose(poly: Polynomial, eig_tol: float = -1e-9,
                  coeff_tol: float = 1e-10):
    """PSD Gram matrix Q with z'Qz matching the polynomial exactly.

    Raises SosFailure when no PSD Gram exists over the pruned monomial
    basis (odd degree, negative values, or solver-certified infeasibility).
    """
    deg = poly.total_degree()
    if deg % 2 != 0 or deg == 0 and not poly.terms:
        if poly.is_zero():
            return np.zeros((0, 0)), []
    if deg % 2 != 0:
        raise SosFailure("odd total degree")
    lo = poly.min_degree()
    if lo % 2 != 0:
        lo -= 1
    caps = [poly.degree_of(i) // 2 + poly.degree_of(i) % 2 for i in range(poly.n_vars)]
    basis = [m for m in _monomials(poly.n_vars, max(lo // 2, 0), deg // 2)
             if all(e <= c for e, c in zip(m, caps))]
    m = len(basis)
    Q = cp.Variable((m, m), symmetric=True)
    t = cp.Variable()
    cmap = _gram_coefficient_map(basis)
    cons = [Q >> t * np.eye(m)]
    for mono in set(cmap) | set(poly.terms):
        entries = cmap.get(mono, [])
        target = poly.terms.get(mono, 0.0)
        if not entries:
            if abs(target) > 1e-14:
                raise SosFailure(f"monomial {mono} outside Gram span")
            continue
        cons.append(cp.sum(cp.hstack([w * Q[i, j] for i, j, w in entries])) == target)
    prob = cp.Problem(cp.Maximize(t), cons)
    try:
        solve_sdp(prob)
    except SdpInfeasibleError as exc:
        raise SosFailure("Gram feasibility solve failed") from exc
    if Q.value is None or t.value is None or t.value < -1e-6:
        raise SosFailure(f"no PSD Gram (best margin {t.value})")
    Qv = _polish_psd_affine(Q.value, basis, poly)
    w = np.linalg.eigvalsh(Qv)
    diff = (gram_expand(Qv, basis, poly.variables) - poly).terms
    resid = max((abs(c) for c in diff.values()), default=0.0)
    if w[0] < eig_tol or resid > coeff_tol:
        raise SosFailure(f"verification failed (eig {w[0]:.2e}, resid {resid:.2e})")
    return Qv, basis


# ---------------------------------------------------------------------------
# SOS-convex Lyapunov search
# ---------------------------------------------------------------------------

@dataclass
class SosCertificate:
    """Polynomial Lyapunov function in deviation coordinates z = xt - xt0."""

    v_poly: Polynomial
    gram: np.ndarray
    gram_basis: list
    convexity_gram: np.ndarray
    multiplier: Polynomial
    decrease_gram: np.ndarray
    equilibrium: np.ndarray
    vdot_poly: Polynomial

    def value(self, xt) -> float:
        return self.v_poly(np.asarray(xt, dtype=float) - self.equilibrium)

    def gradient(self, xt) -> np.ndarray:
        z = np.asarray(xt, dtype=float) - self.equilibrium
        return np.array([self.v_poly.diff(i)(z) for i in range(self.v_poly.n_vars)])

    def hessian_at(self, xt) -> np.ndarray:
        z = np.asarray(xt, dtype=float) - self.equilibrium
        n = self.v_poly.n_vars
        H = np.zeros((n, n))
        for i in range(n):
            di = self.v_poly.diff(i)
            for j in range(i, n):
                H[i, j] = H[j, i] = di.diff(j)(z)
        return H


def find_sos_convex_cllf(psys: PolynomialSystem, degree: int = 2,
                         polytope=None, sigma_degree: Optional[int] = None,
                         eig_tol: float = -1e-9) -> SosCertificate:
    """Joint semidefinite search for a convex polynomial Lyapunov function.

    Feasibility blocks: PSD Gram of V over deviation monomials (degrees
    1..degree/2), PSD Gram of the alpha=1/2 midpoint-convexity expression on
    doubled variables, and PSD Gram of -Vdot - sigma . identities with free
    polynomial multipliers sigma. Normalization: trace of V's Gram equals
    the basis size.
    """
    if degree < 2 or degree % 2:
        raise ValueError("degree must be even and >= 2")
    nv = psys.dim
    names = list(psys.variables)
    x0 = psys.equilibrium
    h = [p.shift(x0).prune(0.0) for p in psys.rhs]          # field in z coords
    for p in h:
        if abs(p.terms.get(tuple([0] * nv), 0.0)) > 1e-9:
            raise ValueError("equilibrium residual in the lifted field")
    idents = [c.shift(x0).prune(0.0) for c in psys.constraints]

    basis_v = _monomials(nv, 1, degree // 2)
    mV = len(basis_v)
    pair_list = [(i, j) for i in range(mV) for j in range(i, mV)]

    # Vdot contribution per Gram entry
    vdot_by_pair = []
    for i, j in pair_list:
        pij = Polynomial(names, {tuple(a + b for a, b in zip(basis_v[i], basis_v[j])): 1.0})
        vd = Polynomial.zero(names)
        for k in range(nv):
            vd = vd + pij.diff(k) * h[k]
        vdot_by_pair.append(vd.prune(0.0))

    deg_vdot = max((p.total_degree() for p in vdot_by_pair), default=2)
    deg_target = deg_vdot + (deg_vdot % 2)

    if sigma_degree is None:
        sigma_degree = max(deg_target - 2, 0)
    sig_basis = _monomials(nv, 0, sigma_degree)

    basis_d = _monomials(nv, 0, deg_target // 2)
    cmap_d = _gram_coefficient_map(basis_d)

    # midpoint-convexity polynomial per Gram entry, over doubled variables
    dbl_names = [f"u{k}" for k in range(nv)] + [f"v{k}" for k in range(nv)]
    conv_by_pair = []
    for i, j in pair_list:
        e = tuple(a + b for a, b in zip(basis_v[i], basis_v[j]))
        u_term = Polynomial(dbl_names, {e + (0,) * nv: 0.5})
        v_term = Polynomial(dbl_names, {(0,) * nv + e: 0.5})
        mid = Polynomial.constant(dbl_names, 1.0)
        for k, p in enumerate(e):
            if p == 0:
                continue
            uv = (Polynomial.variable(dbl_names, k)
                  + Polynomial.variable(dbl_names, nv + k)) * 0.5
            mid = mid * uv ** p
        conv_by_pair.append((u_term + v_term - mid).prune(0.0))
    basis_c = _monomials(2 * nv, 1, degree // 2)
    cmap_c = _gram_coefficient_map(basis_c)

    QV = cp.Variable((mV, mV), symmetric=True)
    QD = cp.Variable((len(basis_d), len(basis_d)), symmetric=True)
    QC = cp.Variable((len(basis_c), len(basis_c)), symmetric=True)
    sig = [cp.Variable(len(sig_basis)) for _ in idents]

    def q_entry(i, j):
        return QV[i, j] * (1.0 if i == j else 2.0)

    # -Vdot - p == Gram(QD)
    all_monos = set(cmap_d)
    for vd in vdot_by_pair:
        all_monos |= set(vd.terms)
    sig_maps = []
    for r in idents:
        smap: Dict[tuple, list] = {}
        for t_idx, beta in enumerate(sig_basis):
            for e_r, c_r in r.terms.items():
                mono = tuple(a + b for a, b in zip(beta, e_r))
                smap.setdefault(mono, []).append((t_idx, c_r))
        sig_maps.append(smap)
        all_monos |= set(smap)

    cons = [QV >> 0, QD >> 0, QC >> 0, cp.trace(QV) == mV]
    for mono in sorted(all_monos):
        expr = 0
        for (i, j), vd in zip(pair_list, vdot_by_pair):
            c = vd.terms.get(mono)
            if c:
                expr = expr - c * q_entry(i, j)
        for smap, s in zip(sig_maps, sig):
            for t_idx, c_r in smap.get(mono, []):
                expr = expr - c_r * s[t_idx]
        gram_terms = cmap_d.get(mono, [])
        gexpr = cp.sum(cp.hstack([w * QD[i, j] for i, j, w in gram_terms])) if gram_terms else 0
        cons.append(expr == gexpr)

    # midpoint convexity == Gram(QC)
    conv_monos = set(cmap_c)
    for p in conv_by_pair:
        conv_monos |= set(p.terms)
    for mono in sorted(conv_monos):
        expr = 0
        for (i, j), p in zip(pair_list, conv_by_pair):
            c = p.terms.get(mono)
            if c:
                expr = expr + c * q_entry(i, j)
        gram_terms = cmap_c.get(mono, [])
        gexpr = cp.sum(cp.hstack([w * QC[i, j] for i, j, w in gram_terms])) if gram_terms else 0
        cons.append(expr == gexpr)

    prob = cp.Problem(cp.Minimize(0), cons)
    try:
        solve_sdp(prob)
    except SdpInfeasibleError as exc:
        raise SdpInfeasibleError(
            f"no SOS-convex certificate at degree {degree}") from exc
    if QV.value is None:
        raise SdpInfeasibleError(f"no SOS-convex certificate at degree {degree}")

    QVv = 0.5 * (QV.value + QV.value.T)
    v_poly = gram_expand(QVv, basis_v, names).prune(1e-11)
    vdot = Polynomial.zero(names)
    for k in range(nv):
        vdot = vdot + v_poly.diff(k) * h[k]
    vdot = vdot.prune(1e-11)
    p_poly = Polynomial.zero(names)
    for s, r in zip(sig, idents):
        s_poly = Polynomial(names, dict(zip(sig_basis, np.asarray(s.value))))
        p_poly = p_poly + s_poly * r
    p_poly = p_poly.prune(1e-11)

    target = (-vdot - p_poly).prune(0.0)
    # the decrease Gram is clipped onto the cone; what matters is that its
    # expansion reproduces -Vdot - p to within the identity tolerance
    from .sdp import nearest_psd
    QDv = nearest_psd(0.5 * (QD.value + QD.value.T), 0.0)
    QCv = 0.5 * (QC.value + QC.value.T)

    for name, M in (("V", QVv), ("convexity", QCv)):
        w = np.linalg.eigvalsh(M) if M.size else np.array([0.0])
        if w[0] < eig_tol:
            raise SdpInfeasibleError(f"{name} Gram not PSD ({w[0]:.2e})")
    resid_poly = gram_expand(QDv, basis_d, names) - target
    resid = max((abs(c) for c in resid_poly.terms.values()), default=0.0)
    if resid > 1e-8:
        raise SdpInfeasibleError(f"decrease identity residual {resid:.2e}")

    return SosCertificate(
        v_poly=v_poly, gram=QVv, gram_basis=basis_v, convexity_gram=QCv,
        multiplier=p_poly, decrease_gram=QDv, equilibrium=x0, vdot_poly=vdot)


# ---------------------------------------------------------------------------
# quadratic certificates for mildly nonlinear polynomial fields
# ---------------------------------------------------------------------------

@dataclass
class BallCertificateResult:
    accepted: bool
    certificate: Optional[QuadraticCertificate]
    gamma: float
    margin: float                 # lambda_min(Q) - 2 gamma ||P||
    region_value: float           # certified sublevel: lambda_min(P) r^2


def ball_certificate(a_matrix, g_map, equilibria, radius: float,
                     q_matrix=None, n_samples: int = 4096,
                     seed: int = 7) -> BallCertificateResult:
    """Quadratic certificate for xdot = [A + G(x - x0)](x - x0) on the ball
    ||x - x0|| <= r.

    Solves the Lyapunov equation P A + A'P = -Q and accepts when
    2 gamma ||P|| <= lambda_min(Q) with gamma the sampled maximum of
    ||G(x - x0)|| over the ball and the supplied equilibria.
    """
    A = np.asarray(a_matrix, dtype=float)
    n = A.shape[0]
    if np.linalg.eigvals(A).real.max() >= -1e-12:
        raise ValueError("A must be Hurwitz")
    if n > 4:
        raise ValueError("dense ball sampling limited to n <= 4")
    Q = np.eye(n) if q_matrix is None else np.asarray(q_matrix, dtype=float)
    P = solve_continuous_lyapunov(A.T, -Q)
    P = 0.5 * (P + P.T)

    rng = np.random.default_rng(seed)
    gamma = 0.0
    for x0 in np.atleast_2d(np.asarray(equilibria, dtype=float)):
        dirs = rng.normal(size=(n_samples, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = radius * rng.uniform(0, 1, n_samples) ** (1.0 / n)
        for d, r in zip(dirs, radii):
            y = r * d
            G = np.atleast_2d(np.asarray(g_map(y, x0), dtype=float))
            gamma = max(gamma, float(np.linalg.norm(G, 2)))
        # boundary shell, where the maximum typically sits
        for d in dirs[:512]:
            G = np.atleast_2d(np.asarray(g_map(radius * d, x0), dtype=float))
            gamma = max(gamma, float(np.linalg.norm(G, 2)))

    lam_q = float(np.linalg.eigvalsh(Q)[0])
    p_norm = float(np.linalg.norm(P, 2))
    margin = lam_q - 2.0 * gamma * p_norm
    accepted = margin >= 0.0
    cert = None
    if accepted:
        x0_rep = np.atleast_2d(np.asarray(equilibria, dtype=float))[0]
        cert = QuadraticCertificate(P, x0_rep)
    region = float(np.linalg.eigvalsh(P)[0] * radius ** 2)
    return BallCertificateResult(accepted=accepted, certificate=cert,
                                 gamma=gamma, margin=margin, region_value=region)
