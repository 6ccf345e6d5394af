"""Independent oracles used by the test suite.

Everything here avoids the library's own code paths on purpose: eigenvalues
come from characteristic-polynomial bisection, QPs from a textbook active-set
method, and integration from a bare RK4 loop.
"""

import numpy as np


def charpoly_eigenvalues(A, tol=1e-12):
    """All eigenvalues of a symmetric matrix by det(A - t I) sign bisection
    inside the Gershgorin bounds."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    radius = max(abs(A[i, i]) + np.abs(A[i]).sum() - abs(A[i, i]) for i in range(n))
    lo, hi = -radius - 1.0, radius + 1.0

    def p(t):
        return np.linalg.det(A - t * np.eye(n))

    # count(t) = number of eigenvalues < t via LDL-like sign counting
    def count_below(t):
        M = A - t * np.eye(n)
        # Sylvester inertia via symmetric elimination with pivots
        M = M.copy()
        neg = 0
        for k in range(n):
            piv = M[k, k]
            if abs(piv) < 1e-300:
                piv = 1e-300
            if piv < 0:
                neg += 1
            M[k + 1:, k + 1:] -= np.outer(M[k + 1:, k], M[k + 1:, k]) / piv
        return neg

    eigs = []
    intervals = [(lo, hi, 0, n)]
    while intervals:
        a, b, ca, cb = intervals.pop()
        if cb - ca == 0:
            continue
        if b - a < tol:
            eigs.extend([(a + b) / 2] * (cb - ca))
            continue
        mid = 0.5 * (a + b)
        cm = count_below(mid)
        intervals.append((a, mid, ca, cm))
        intervals.append((mid, b, cm, cb))
    return np.sort(np.array(eigs))


def active_set_qp(H, c, G=None, h=None, x0=None, max_iter=200):
    """min 1/2 x'Hx + c'x s.t. Gx <= h, textbook primal active set.

    Needs a feasible ``x0``. Returns the optimizer.
    """
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    n = c.size
    if G is None:
        return np.linalg.solve(H, -c)
    G = np.atleast_2d(np.asarray(G, dtype=float))
    h = np.asarray(h, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    W = set(np.where(G @ x - h > -1e-11)[0])
    for _ in range(max_iter):
        act = sorted(W)
        A = G[act] if act else np.zeros((0, n))
        K = np.block([[H, A.T], [A, np.zeros((len(act), len(act)))]])
        rhs = np.r_[-(H @ x + c), np.zeros(len(act))]
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        p, lam = sol[:n], sol[n:]
        if np.linalg.norm(p) < 1e-12:
            if not act or (lam >= -1e-10).all():
                return x
            W.remove(act[int(np.argmin(lam))])
            continue
        alpha, blocker = 1.0, None
        for j in range(G.shape[0]):
            if j in W:
                continue
            d = G[j] @ p
            if d > 1e-14:
                a = (h[j] - G[j] @ x) / d
                if a < alpha:
                    alpha, blocker = a, j
        x = x + alpha * p
        if blocker is not None:
            W.add(blocker)
    return x


def rk4(field, x0, T, h):
    """Bare fixed-step RK4 endpoint, independent of the library integrator."""
    x = np.asarray(x0, dtype=float).copy()
    t = 0.0
    while t < T - 1e-12:
        hh = min(h, T - t)
        k1 = field(x)
        k2 = field(x + hh / 2 * k1)
        k3 = field(x + hh / 2 * k2)
        k4 = field(x + hh * k3)
        x = x + hh / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += hh
    return x


def random_spd(rng, n, cond=100.0, norm=5.0):
    """Random SPD matrix with bounded condition number and spectral norm."""
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    eigs = np.exp(rng.uniform(0, np.log(cond), n))
    eigs = eigs / eigs.max() * norm
    return (Q * eigs) @ Q.T
