"""End-to-end acceptance suite.

One test per criterion; each prints a single PASS/FAIL line with its
runtime so the suite doubles as a report (`pytest -s tests/test_acceptance.py`).
"""

import argparse
import contextlib
import time

import numpy as np
import pytest

from lyasco.core import Polytope, QuadraticCertificate
from lyasco.lure import (convex_relaxation_coeffs, inner_approximation_coeffs,
                         verify_vdot)
from lyasco.nlp import SolverConfig
from lyasco.pendulum import (pendulum_field, pendulum_jvp,
                             pendulum_quasi_polynomial, pulse_scenario)
from lyasco.power import (build_certificate, line_trip_scenario,
                          reduced_swing_field, solve_tscopf, _attach_fields)
from lyasco.sco import DisturbanceScenario, solve_sco, taylor_fault_state
from lyasco.sim import SimConfig, certificate_soundness_trial
from lyasco.sos import (Polynomial, SosFailure, ball_certificate,
                        find_sos_convex_cllf, recast, sos_decompose)
from lyasco.vmin import facet_minimize, v_min, v_min_oracle
from lyasco.lure import facet_vmin_closed_form

from helpers import random_spd, rk4
from test_sco import toy_problem


@contextlib.contextmanager
def criterion(num, budget_s, label):
    t0 = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"[criterion {num:2d}] FAIL ({time.monotonic() - t0:5.1f} s): {label}")
        raise
    elapsed = time.monotonic() - t0
    status = "PASS" if elapsed < budget_s else "FAIL (over budget)"
    print(f"[criterion {num:2d}] {status} ({elapsed:5.1f} s): {label}")
    assert elapsed < budget_s, f"runtime {elapsed:.1f}s exceeds {budget_s}s"


def test_criterion_01_three_bus_flip():
    from lyasco.cli import _demo_three_bus
    with criterion(1, 60.0, "three-bus trip: economic Unstable, constrained "
                            "Stable, gap < 5%"):
        args = argparse.Namespace(out=None, taylor_order=None)
        assert _demo_three_bus(args) == 0


def test_criterion_02_facet_kkt_matches_grid_oracle():
    with criterion(2, 30.0, "boundary minimum: KKT reformulation equals "
                            "facet-grid brute force on 100 instances"):
        rng = np.random.default_rng(101)
        for trial in range(100):
            n = 2 if trial < 70 else 3
            P = random_spd(rng, n, cond=100.0, norm=5.0)
            x0 = rng.uniform(-0.75, 0.75, n)
            cert = QuadraticCertificate(P, x0)
            poly = Polytope.box([-1.0] * n, [1.0] * n)
            got = v_min(cert, poly).v_min
            density = 2000 if n == 2 else 220
            want = v_min_oracle(cert, poly, grid_density=density)
            assert abs(got - want) <= max(1e-4, 1e-4 * got), \
                f"trial {trial}: {got} vs {want}"


def test_criterion_03_closed_form_matches_kkt():
    with criterion(3, 10.0, "parallel-facet closed form equals the generic "
                            "KKT facet solver on 100 instances"):
        rng = np.random.default_rng(103)
        for trial in range(100):
            n = int(rng.integers(2, 5))
            P = random_spd(rng, n, cond=100.0, norm=5.0)
            x0 = np.r_[rng.uniform(-0.6, 0.6), rng.uniform(-3.0, 3.0, n - 1)]
            cert = QuadraticCertificate(P, x0)
            # box wide enough in the free coordinates that the pair under
            # test always has an interior facet minimizer
            lo = np.r_[-1.0, np.full(n - 1, -1e3)]
            hi = np.r_[1.0, np.full(n - 1, 1e3)]
            poly = Polytope.box(lo, hi)
            got = facet_vmin_closed_form(cert, np.eye(n)[0], -1.0, 1.0)
            lo_fm = facet_minimize(cert, poly, 0)
            hi_fm = facet_minimize(cert, poly, n)
            want = min(lo_fm.value, hi_fm.value)
            assert abs(got - want) <= 1e-8, f"trial {trial}"


def test_criterion_04_lmi_validity(pendulum_pack, threebus_grid,
                                   threebus_scenario, threebus_tscopf):
    with criterion(4, 30.0, "accepted LMI certificates: residual <= 1e-8, "
                            "P > 0, sampled decrease on both systems"):
        lmi = pendulum_pack["lmi"]
        assert lmi.residual <= 1e-8
        assert np.linalg.eigvalsh(lmi.p_matrix)[0] >= 1e-8
        worst = verify_vdot(pendulum_pack["system"],
                            pendulum_pack["certificate"],
                            pendulum_pack["polytope"], n_samples=10_000)
        assert worst <= 1e-9

        sys_l, poly, lmi3, cert3 = build_certificate(
            threebus_grid, threebus_tscopf, threebus_scenario)
        assert lmi3.residual <= 1e-8
        assert np.linalg.eigvalsh(lmi3.p_matrix)[0] >= 1e-8
        assert verify_vdot(sys_l, cert3, poly, n_samples=10_000) <= 1e-9


def test_criterion_05_tightness_and_identity_recovery(
        threebus_grid, threebus_opf, threebus_tscopf):
    with criterion(5, 60.0, "facet-bound tightness <= 1e-6 at optima; "
                            "zero-duration fault recovers the economic optimum"):
        rng = np.random.default_rng(105)
        for _ in range(5):
            prob = toy_problem(drift=(rng.uniform(0.3, 0.8), rng.uniform(-0.2, 0.2)),
                               dt=rng.uniform(0.3, 0.6),
                               target=(rng.uniform(0.6, 0.95), 0.0))
            sol = solve_sco(prob, SolverConfig(multistart=3))
            assert sol.status == "Optimal"
            assert sol.tightness_gap <= 1e-6
            assert sol.tightness_gap >= -1e-8
        assert threebus_tscopf.sco.tightness_gap <= 1e-6

        free = solve_sco(toy_problem(
            scenario=DisturbanceScenario(t0=0.0, tc=0.0)), SolverConfig(multistart=2))
        tiny = solve_sco(toy_problem(dt=1e-9), SolverConfig(multistart=2))
        assert abs(tiny.cost_value - free.cost_value) \
            / max(1.0, abs(free.cost_value)) <= 1e-6

        scen0 = line_trip_scenario(threebus_grid, (0, 1), 0.0, 0.0)
        ts0 = solve_tscopf(threebus_grid, scen0)
        assert abs(ts0.objective - threebus_opf.objective) \
            / abs(threebus_opf.objective) <= 1e-6


def test_criterion_06_hull_and_inner_approximation():
    from scipy.spatial import ConvexHull
    with criterion(6, 20.0, "secant pair is the hull of the facet-minimum "
                            "envelope; inner approximation passes the subset "
                            "test on 20 draws"):
        rng = np.random.default_rng(106)
        for trial in range(20):
            d_lo = rng.uniform(-2.0, -0.3)
            d_hi = rng.uniform(0.3, 2.0)
            mid = 0.5 * (d_lo + d_hi)
            x_lo = rng.uniform(d_lo, mid - 0.05)
            x_hi = rng.uniform(mid + 0.05, d_hi)
            a, b, ap, bp = convex_relaxation_coeffs(x_lo, x_hi, d_lo, d_hi)
            X = np.unique(np.r_[np.linspace(x_lo, x_hi, 4001), x_lo, x_hi, mid])
            env = np.minimum((X - d_lo) ** 2, (X - d_hi) ** 2)
            pts = np.vstack([np.c_[X, env], np.c_[X, np.zeros_like(X)]])
            hv = pts[ConvexHull(pts).vertices]
            want = np.array([[x_lo, 0.0], [x_hi, 0.0],
                             [x_lo, (x_lo - d_lo) ** 2],
                             [x_hi, (x_hi - d_hi) ** 2],
                             [mid, ((d_hi - d_lo) / 2) ** 2]])
            d1 = max(min(np.linalg.norm(p - q) for q in want) for p in hv)
            d2 = max(min(np.linalg.norm(p - q) for q in hv) for p in want)
            assert max(d1, d2) <= 1e-4, f"trial {trial}"

            lines = inner_approximation_coeffs(x_lo, x_hi, d_lo, d_hi,
                                               n_samples=10_000)
            Xs = rng.uniform(x_lo, x_hi, 10_000)
            cap = np.minimum(lines[0][0] * Xs + lines[0][1],
                             lines[1][0] * Xs + lines[1][1])
            keep = cap > 0
            V = rng.uniform(0, 1, keep.sum()) * cap[keep]
            Xk = Xs[keep]
            envk = np.minimum((Xk - d_lo) ** 2, (Xk - d_hi) ** 2)
            assert (V <= envk + 1e-9).all(), f"trial {trial}"


def test_criterion_07_taylor_order(threebus_grid, threebus_opf,
                                   threebus_scenario):
    with criterion(7, 10.0, "halving the clearing time shrinks the Taylor "
                            "map error at the expected rate"):
        # pendulum under a pulse
        scen = pulse_scenario(1.5, 0.0, 1.0)
        for order in (1, 2):
            def err(dt, order=order):
                xt = taylor_fault_state(scen.during_field, np.zeros(2), dt,
                                        order=order, jvp=pendulum_jvp)
                xr = rk4(scen.during_field, np.zeros(2), dt, dt / 400.0)
                return np.linalg.norm(xt - xr)
            assert err(0.2) / err(0.1) >= 2 ** (order + 1) * 0.7

        # three-bus line trip around the economic dispatch
        scen3 = _attach_fields(threebus_grid, threebus_scenario,
                               threebus_opf.generation_pu)
        free = [k for k in range(3) if k != threebus_grid.reference]
        x_eq = np.r_[threebus_opf.angles_rad[free], np.zeros(2)]
        jvp = scen3.field_jvp_builder(x_eq, threebus_opf.generation_pu)
        for order in (1, 2):
            def err(dt, order=order):
                xt = taylor_fault_state(scen3.during_field, x_eq, dt,
                                        order=order, jvp=jvp)
                xr = rk4(scen3.during_field, x_eq, dt, dt / 400.0)
                return np.linalg.norm(xt - xr)
            assert err(0.02) / err(0.01) >= 2 ** (order + 1) * 0.7


def test_criterion_08_recast_fidelity():
    with criterion(8, 20.0, "lifted polynomial dynamics match the original "
                            "pendulum over 10 s from 20 states"):
        psys = recast(pendulum_quasi_polynomial())
        rng = np.random.default_rng(108)
        X0 = rng.uniform(-1.2, 1.2, (20, 2))

        def pend_batch(X):
            return np.column_stack([X[:, 1],
                                    -10.0 * np.sin(X[:, 0]) - X[:, 1]])

        def lifted_batch(X):
            # (x1, x2, y1, y2) -> (x2, -10 y1 - x2, y2 x2, -y1 x2)
            return np.column_stack([X[:, 1], -10.0 * X[:, 2] - X[:, 1],
                                    X[:, 3] * X[:, 1], -X[:, 2] * X[:, 1]])

        A = X0.copy()
        B = np.array([psys.lift(x) for x in X0])
        # both trajectories marched in lockstep with the same RK4 tableau
        h = 1e-3
        for _ in range(10_000):
            for arr, fld in ((0, pend_batch), (1, lifted_batch)):
                X = A if arr == 0 else B
                k1 = fld(X)
                k2 = fld(X + h / 2 * k1)
                k3 = fld(X + h / 2 * k2)
                k4 = fld(X + h * k3)
                X += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        assert np.abs(A - B[:, :2]).max() <= 1e-6
        resid = np.abs(B[:, 2] ** 2 + B[:, 3] ** 2 - 1.0)
        assert resid.max() <= 1e-6
        # the hand-coded lifted field above matches the recast output
        probe = rng.uniform(-1.0, 1.0, (5, 2))
        for x in probe:
            xt = psys.lift(x)
            np.testing.assert_allclose(psys.field(xt),
                                       lifted_batch(xt[None, :])[0],
                                       atol=1e-12)


def test_criterion_09_sos_suite():
    with criterion(9, 60.0, "Gram decompositions accept/reject correctly and "
                            "the lifted pendulum gets a convex certificate"):
        x = Polynomial.variable(["x", "y"], 0)
        y = Polynomial.variable(["x", "y"], 1)
        Q, _ = sos_decompose((x - y) ** 2)
        assert np.linalg.eigvalsh(Q)[0] >= -1e-9
        x1 = Polynomial.variable(["x"], 0)
        Q4, _ = sos_decompose(x1 ** 4)
        assert np.linalg.eigvalsh(Q4)[0] >= -1e-9
        with pytest.raises(SosFailure):
            sos_decompose(x1 ** 4 - x1 ** 2)

        psys = recast(pendulum_quasi_polynomial())
        cert = find_sos_convex_cllf(psys, degree=2)
        rng = np.random.default_rng(109)
        vdot_max, hess_min = -np.inf, np.inf
        for _ in range(10_000):
            xt = psys.lift(np.array([rng.uniform(-np.pi / 2, np.pi / 2),
                                     rng.uniform(-8.0, 8.0)]))
            vdot_max = max(vdot_max, cert.vdot_poly(xt - psys.equilibrium))
            hess_min = min(hess_min, np.linalg.eigvalsh(cert.hessian_at(xt))[0])
        assert vdot_max <= 1e-8
        assert hess_min >= -1e-8


def test_criterion_10_ball_certificate():
    with criterion(10, 10.0, "quadratic ball certificate accepts the scalar "
                             "case, threshold monotone, simulation agrees"):
        case = lambda r: ball_certificate(
            a_matrix=np.array([[-1.0]]),
            g_map=lambda yv, x0: np.array([[yv[0]]]),
            equilibria=np.zeros((1, 1)), radius=r)
        res = case(0.25)
        assert res.accepted
        # lambda_min(Q) - 2 gamma ||P|| = 1 - 2 * 0.25 * 0.5
        assert res.margin == pytest.approx(0.75, abs=1e-3)
        assert res.region_value == pytest.approx(0.03125, rel=1e-9)
        margins = [case(r).margin for r in np.linspace(0.05, 2.0, 10)]
        assert all(a >= b - 1e-12 for a, b in zip(margins, margins[1:]))
        # bisect the acceptance threshold in r and simulate inside it
        lo_r, hi_r = 0.05, 2.0
        for _ in range(30):
            mid = 0.5 * (lo_r + hi_r)
            if case(mid).accepted:
                lo_r = mid
            else:
                hi_r = mid
        assert case(lo_r * 0.99).accepted and not case(hi_r * 1.01).accepted
        for r in (0.25, lo_r * 0.9):
            x = rk4(lambda z: -z + z ** 2, np.array([r]), 25.0, 1e-3)
            assert abs(x[0]) <= 1e-3


def test_criterion_11_soundness_sweeps(pendulum_pack, threebus_grid,
                                       threebus_scenario, threebus_tscopf):
    with criterion(11, 120.0, "certificate fires => simulation stays in the "
                              "region and converges (>= 100 scenarios)"):
        rng = np.random.default_rng(111)
        amps = rng.uniform(0.2, 7.0, 75)
        scens = [pulse_scenario(a, 0.5, 0.6) for a in amps]
        cfg = SimConfig(horizon=20.0, step=1e-3, convergence_tol=1e-3,
                        settle_window=2.0)
        rep = certificate_soundness_trial(
            pendulum_field, pendulum_pack["certificate"],
            pendulum_pack["vmin"].v_min, pendulum_pack["polytope"],
            scens, cfg)
        assert rep.n_fired >= 10
        assert not rep.counterexamples

        # three-bus: sweep of clearing times at the constrained dispatch
        sys_l, poly, lmi3, cert3 = build_certificate(
            threebus_grid, threebus_tscopf, threebus_scenario)
        free = [k for k in range(3) if k != threebus_grid.reference]
        x_eq = np.r_[threebus_tscopf.angles_rad[free], np.zeros(2)]
        vm3 = v_min(cert3, poly, x_eq).v_min
        fld, _ = reduced_swing_field(threebus_grid,
                                     threebus_tscopf.generation_pu)
        scens3 = []
        for tc in np.linspace(0.02, 0.14, 25):
            s = line_trip_scenario(threebus_grid, (0, 1), 0.0, float(tc))
            _attach_fields(threebus_grid, s, threebus_tscopf.generation_pu)
            scens3.append(s)
        cfg3 = SimConfig(horizon=10.0, step=1e-3, convergence_tol=2e-3,
                         settle_window=2.0)
        rep3 = certificate_soundness_trial(fld, cert3, vm3, poly, scens3, cfg3)
        assert rep3.n_fired >= 5
        assert not rep3.counterexamples
        assert len(rep.records) + len(rep3.records) >= 100
